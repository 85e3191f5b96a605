#pragma once

#include <string_view>

namespace gmq {

// Diagnostics go to stderr. --quiet silences warnings.
void set_quiet(bool quiet) noexcept;
bool quiet() noexcept;
void warn(std::string_view message);
void info(std::string_view message);

}  // namespace gmq
