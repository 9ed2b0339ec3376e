#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hbayes {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntimeError = 1;
inline constexpr int kExitUsageError = 2;

// Entry point of the `hbayes` tool. `args` excludes the program name.
// Subcommands: generate, train, rank, eval.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hbayes
