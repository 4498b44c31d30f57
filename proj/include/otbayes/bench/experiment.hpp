#pragma once

#include "otbayes/bench/config.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

namespace otbayes::bench {

struct RunOptions {
  std::filesystem::path out_dir;
  /// Overrides the config's master seed.
  std::optional<std::uint64_t> seed;
  int jobs = 1;
  /// Exact config text hashed into the manifest; the canonical echo is used when empty.
  std::string config_text;
};

/// Runs every (engine, N, n, seed) cell of the experiment and writes results.csv,
/// per-cell files, manifest.json and README.md into out_dir. Returns 0 on success,
/// 1 when a cell fails (the message goes to `log`).
int run_experiment(const ExperimentConfig& cfg, const RunOptions& options, std::ostream& log);

/// Formats a double for CSV output (round-trip precision, "nan" for NaN).
std::string csv_number(double v);

/// Stops glibc from returning freed heap to the OS after every training step
/// (no-op elsewhere). Call once at startup.
void retain_heap();

}  // namespace otbayes::bench
