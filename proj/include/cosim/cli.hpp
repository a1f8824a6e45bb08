#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace cosim::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,       // bad command line
    kValidation = 2,  // bad config or input, incompatible checkpoint, failed property check
    kNumerical = 3,   // non-finite loss or gradient
};

/// Environment variable that overrides the configured output directory.
inline constexpr const char* kOutDirEnv = "COSIM_OUT_DIR";

/// Runs one command. `args` excludes the program name.
///
///   train-teacher | distill | sample | eval | verify-theory | sweep-scale
///
/// Every command accepts `--config FILE`, repeated `--set key=value` and
/// `--out DIR`. Output directory precedence: --out, then COSIM_OUT_DIR, then
/// the config's out_dir. `--explain-defaults` prints where each default comes from.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace cosim::cli
