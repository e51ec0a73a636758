#pragma once

#include <string>
#include <vector>

namespace conmo::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,    // bad arguments, config or input data
    kNumeric = 3,  // non-finite values, failed gradient check
};

/// Entry point of the conmo tool; returns the process exit code.
int run_cli(int argc, const char* const* argv);
int run_cli(const std::vector<std::string>& args);  // args exclude the program name

}  // namespace conmo::cli
