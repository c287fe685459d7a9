#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace wmft::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

// Default Gaussian action noise of the medium dataset generator. Chosen so
// the noisy scripted controller solves about half of reach2d episodes.
inline constexpr double kMediumNoise = 5.0;

// Runs the command line `args` (without the program name). Normal output goes
// to `out`, diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace wmft::cli
