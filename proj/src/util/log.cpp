#include "gmq/log.hpp"

#include <fmt/core.h>

#include <atomic>

namespace gmq {

namespace {
std::atomic<bool> g_quiet{false};
}

void set_quiet(bool q) noexcept { g_quiet = q; }
bool quiet() noexcept { return g_quiet; }

void warn(std::string_view message) {
  if (!g_quiet) fmt::print(stderr, "warning: {}\n", message);
}

void info(std::string_view message) {
  if (!g_quiet) fmt::print(stderr, "{}\n", message);
}

}  // namespace gmq
