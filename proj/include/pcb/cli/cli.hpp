#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pcb::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// Runs pcbtool with `args` (program name excluded). Output goes to `out`,
/// diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pcb::cli
