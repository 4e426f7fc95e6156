#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "misanthrope/diagnostics.hpp"
#include "misanthrope/meanfield.hpp"

namespace misanthrope::cli {

enum class Mode { Simulate, Meanfield, Stationary, Compare, Coarsen };

const char* to_string(Mode mode) noexcept;
std::optional<Mode> parse_mode(std::string_view name);

struct ExperimentConfig {
  Mode mode = Mode::Simulate;
  std::string kernel;
  std::string initial;
  std::vector<std::size_t> sizes;
  std::size_t replicas = 1;
  double horizon = 0.0;
  std::vector<double> record_times;
  SolverConfig solver;
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> output;
  std::optional<std::size_t> threads;

  // simulate
  std::uint64_t jump_cap = 1'000'000'000;
  bool write_final = true;

  // stationary
  Level n_max = 4096;
  std::vector<double> phis;
  std::vector<double> densities;

  // compare
  double statistics_time = 1.0;
  Level observable_level = 1;
  Level covariance_k = 1;
  Level covariance_l = 1;

  // coarsen
  std::optional<FitWindow> fit_window;

  // Relative paths in kernel/initial specs resolve against this.
  std::filesystem::path base_dir;
  std::string source_text;
};

struct ValidationResult {
  std::optional<ExperimentConfig> config;
  std::vector<std::string> errors;  // "field: message"

  bool ok() const noexcept { return config.has_value(); }
};

// Parses and checks a YAML experiment file. Every problem is collected.
// `mode` comes from the command line; a `mode:` key in the file must agree.
ValidationResult validate(std::string_view text, std::optional<Mode> mode = std::nullopt,
                          const std::filesystem::path& base_dir = {});

}  // namespace misanthrope::cli
