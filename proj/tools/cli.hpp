#pragma once

#include <string>

namespace pixobj::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitContract = 1;
inline constexpr int kExitIo = 2;
inline constexpr int kExitIncomplete = 3;

// Parses argv and runs one subcommand. Never throws; returns the exit code.
int run(int argc, char** argv);

// "2/3", "0.5" or "1" -> floor(dim * fraction), at least 1.
int scaled_dimension(int dim, const std::string& fraction);

}  // namespace pixobj::cli
