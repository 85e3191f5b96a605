#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "gmq/cli.hpp"
#include "support/tempdir.hpp"

namespace gmq::testing {

// Runs the command-line entry point in-process.
inline int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gmq");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  return cli::main(static_cast<int>(args.size()), argv.data());
}

// Relative path -> file bytes, for whole-tree comparisons.
inline std::map<std::string, std::string> snapshot(const std::filesystem::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[std::filesystem::relative(e.path(), root).string()] = read_file(e.path());
  return files;
}

}  // namespace gmq::testing
