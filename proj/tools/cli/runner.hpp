#pragma once

#include <filesystem>
#include <iosfwd>

#include "config.hpp"

namespace misanthrope::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kInternalError = 2 };

// Runs a validated experiment and writes its artifacts plus manifest.json
// into out_dir (created if needed). Library errors propagate.
void run(const ExperimentConfig& config, const std::filesystem::path& out_dir, std::size_t threads,
         std::ostream& log);

// Full command line: "<mode> --config path [--out dir] [--seed n] [--threads n]".
int main_entry(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace misanthrope::cli
