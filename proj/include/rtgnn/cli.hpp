#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rtgnn/gnn.hpp"
#include "rtgnn/parameters.hpp"

namespace rtgnn {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // runtime error or failed check
inline constexpr int kExitUsage = 2;    // bad flags, bad config, missing files

// Environment variable naming the default output directory.
inline constexpr const char* kOutDirEnv = "RTGNN_OUT_DIR";

// Entry point of the command-line tool; args excludes the program name.
// Diagnostics are a single line on `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Central-difference check of the sequence loss on a fixed two-agent,
// two-step window.
GradCheckReport sequence_gradcheck(const GnnConfig& model, const GradCheckOptions& options,
                                   std::uint64_t seed);

}  // namespace rtgnn
