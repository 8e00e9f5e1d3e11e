#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "pvst/config.hpp"

namespace pvst::cli {

// Exit codes of `run`.
inline constexpr int kOk = 0;
inline constexpr int kValidationError = 1;
inline constexpr int kRuntimeFailure = 2;

struct Command {
  // stylize | stylize-video | gradcheck | laplacian | metrics | flow synth | help
  std::string name;
  JobConfig config;                          // defaults < --config/--manifest < flags
  std::map<std::string, std::string> args;   // subcommand-specific flags, by long name
  bool print_config = false;
  bool resume = false;
  std::string help_text;
};

// Thrown for unknown flags, bad values and missing required flags. The
// message carries a usage hint.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

Command parse(const std::vector<std::string>& argv);

// Results go to `out`, diagnostics to `err`.
int run(const Command& cmd, std::ostream& out, std::ostream& err);

// parse + run with the exit-code mapping applied to parse failures.
int main_entry(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace pvst::cli
