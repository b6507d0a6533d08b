#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace mdqa {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

/// The `mdqa` command line. Subcommands: index, search, decompose, answer,
/// run, bootstrap, evaluate, convert. Results go to `out`, diagnostics and
/// progress to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mdqa
