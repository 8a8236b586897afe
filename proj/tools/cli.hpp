#pragma once

// The snfuse command line: prepare, train, eval, ablate, gradcheck, report,
// multiseed and synth. Exit codes: 0 success, 1 runtime or numeric failure,
// 2 input or format failure.

#include <ostream>
#include <string>
#include <vector>

namespace snf::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitInput = 2;

/// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace snf::cli
