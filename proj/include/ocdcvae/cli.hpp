#pragma once

#include <iosfwd>

namespace ocdcvae {

// Exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitIo = 3, kExitTraining = 4, kExitProtocol = 5 };

// Entry point of the `ocdcvae` tool: subcommands synth, train, generate-ocd,
// eval, ablate and sweep. Messages go to `out` and `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ocdcvae
