#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace otbayes::bench {

/// One results.csv row: key columns (everything before "seed"), the seed and metrics.
struct ResultRow {
  std::vector<std::string> keys;
  std::string seed;
  std::vector<double> metrics;
};

struct ResultTable {
  std::vector<std::string> key_names;
  std::vector<std::string> metric_names;
  std::vector<ResultRow> rows;
};

ResultTable read_results(const std::filesystem::path& csv);

struct AggregateRow {
  std::vector<std::string> keys;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single seed
  std::size_t count = 0;
};

/// Mean and sample std over seeds for every key group and metric (NaNs skipped).
std::vector<AggregateRow> aggregate_seeds(const ResultTable& table);

/// Reads a completed run directory, checks that every configured cell is present
/// and writes plotdata/summary.csv (plus plotdata/timeseries.csv for filtering runs).
/// Throws std::runtime_error listing the absent (engine, N, seed) cells.
void emit_plotdata(const std::filesystem::path& run_dir);

}  // namespace otbayes::bench
