#pragma once

#include <iosfwd>

namespace viewsynth {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitPipeline = 3;

/// Entry point of the `viewsynth` tool: subcommands generate, batch,
/// evaluate and cache. Errors are reported as one line on `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace viewsynth
