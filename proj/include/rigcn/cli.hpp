#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rigcn {

/// Exit codes shared by every verb.
enum ExitCode : int {
  exit_success = 0,
  exit_check_failed = 1,
  exit_usage = 2,
  exit_diverged = 3,
};

/// Entry point of the `rigcn` command line tool. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rigcn
