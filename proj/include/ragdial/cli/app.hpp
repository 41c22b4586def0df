#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ragdial::cli {

// Exit codes of the ragdial binary.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitStateMismatch = 3;
inline constexpr int kExitRuntime = 4;

// Runs one subcommand. `args` excludes the program name. Errors are
// reported on `err` and mapped to the exit codes above.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

}  // namespace ragdial::cli
