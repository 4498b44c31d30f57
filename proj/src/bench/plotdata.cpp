#include "otbayes/bench/plotdata.hpp"

#include "otbayes/bench/config.hpp"
#include "otbayes/bench/experiment.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace otbayes::bench {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_metric(const std::string& s) {
  if (s.empty() || s == "nan") return std::nan("");
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::runtime_error("bad number in results.csv: " + s);
  return v;
}

std::string join(const std::vector<std::string>& parts) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) s += (i ? "," : "") + parts[i];
  return s;
}

// Splits columns into keys / split column / metrics around `split_name`.
ResultTable read_table(std::istream& in, const fs::path& csv, const std::string& split_name) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(csv.string() + " is empty");
  const auto header = split_csv_line(line);
  std::size_t seed_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == split_name) seed_col = i;
  }
  if (seed_col == header.size()) throw std::runtime_error(csv.string() + " has no " + split_name + " column");
  ResultTable t;
  t.key_names.assign(header.begin(), header.begin() + static_cast<std::ptrdiff_t>(seed_col));
  t.metric_names.assign(header.begin() + static_cast<std::ptrdiff_t>(seed_col) + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != header.size()) throw std::runtime_error("ragged row in " + csv.string() + ": " + line);
    ResultRow r;
    r.keys.assign(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(seed_col));
    r.seed = f[seed_col];
    for (std::size_t i = seed_col + 1; i < f.size(); ++i) r.metrics.push_back(parse_metric(f[i]));
    t.rows.push_back(std::move(r));
  }
  return t;
}

}  // namespace

ResultTable read_results(const fs::path& csv) {
  std::ifstream in(csv);
  if (!in) throw std::runtime_error("cannot read " + csv.string());
  return read_table(in, csv, "seed");
}

std::vector<AggregateRow> aggregate_seeds(const ResultTable& table) {
  // Groups keep first-appearance order so the output follows results.csv.
  std::vector<std::vector<std::string>> order;
  std::map<std::vector<std::string>, std::vector<const ResultRow*>> groups;
  for (const auto& r : table.rows) {
    auto [it, inserted] = groups.try_emplace(r.keys);
    if (inserted) order.push_back(r.keys);
    it->second.push_back(&r);
  }
  std::vector<AggregateRow> out;
  for (const auto& keys : order) {
    const auto& rows = groups[keys];
    for (std::size_t m = 0; m < table.metric_names.size(); ++m) {
      AggregateRow a;
      a.keys = keys;
      a.metric = table.metric_names[m];
      double sum = 0.0;
      for (const auto* r : rows) {
        if (!std::isnan(r->metrics[m])) {
          sum += r->metrics[m];
          ++a.count;
        }
      }
      if (a.count == 0) {
        a.mean = a.std = std::nan("");
      } else {
        a.mean = sum / static_cast<double>(a.count);
        double ss = 0.0;
        for (const auto* r : rows) {
          if (!std::isnan(r->metrics[m])) ss += (r->metrics[m] - a.mean) * (r->metrics[m] - a.mean);
        }
        a.std = a.count > 1 ? std::sqrt(ss / static_cast<double>(a.count - 1)) : 0.0;
      }
      out.push_back(std::move(a));
    }
  }
  return out;
}

void emit_plotdata(const fs::path& run_dir) {
  const ExperimentConfig cfg = load_config(run_dir / "config.json");
  const ResultTable table = read_results(run_dir / "results.csv");
  const bool is_static = cfg.experiment == ExperimentKind::static_squared || cfg.experiment == ExperimentKind::cod_sweep;

  // Every configured cell must be present before anything is summarized.
  std::set<std::string> present;
  for (const auto& r : table.rows) present.insert(join(r.keys) + "|" + r.seed);
  std::vector<std::string> missing;
  const std::vector<double> lambdas = is_static ? cfg.lambda_w : std::vector<double>{0.0};
  for (double lam : lambdas) {
    for (FilterKind e : cfg.engines) {
      for (Eigen::Index np : cfg.particles) {
        for (Eigen::Index n : cfg.dims) {
          for (auto s : cfg.seeds) {
            std::vector<std::string> keys;
            if (is_static) keys.push_back(csv_number(lam));
            keys.insert(keys.end(), {to_string(e), std::to_string(np), std::to_string(n)});
            if (!present.count(join(keys) + "|" + std::to_string(s))) {
              std::string cell = "(engine=" + to_string(e) + ", N=" + std::to_string(np) + ", n=" + std::to_string(n) +
                                 ", seed=" + std::to_string(s);
              if (is_static) cell += ", lambda_w=" + csv_number(lam);
              missing.push_back(cell + ")");
            }
          }
        }
      }
    }
  }
  if (!missing.empty()) {
    std::string msg = "run " + run_dir.string() + " is incomplete; missing cells:";
    for (const auto& m : missing) msg += "\n  " + m;
    throw std::runtime_error(msg);
  }

  fs::create_directories(run_dir / "plotdata");
  std::ofstream summary(run_dir / "plotdata" / "summary.csv", std::ios::trunc);
  summary << join(table.key_names) << ",metric,mean,std,count\n";
  for (const auto& a : aggregate_seeds(table)) {
    summary << join(a.keys) << ',' << a.metric << ',' << csv_number(a.mean) << ',' << csv_number(a.std) << ','
            << a.count << '\n';
  }

  if (is_static) return;
  // Per-step mean and std across seeds of the cell time series.
  std::ofstream ts(run_dir / "plotdata" / "timeseries.csv", std::ios::trunc);
  ts << "engine,N,n,step,metric,mean,std,count\n";
  for (FilterKind e : cfg.engines) {
    for (Eigen::Index np : cfg.particles) {
      for (Eigen::Index n : cfg.dims) {
        std::vector<ResultTable> series;
        for (auto s : cfg.seeds) {
          const std::string name = to_string(e) + "_N" + std::to_string(np) + "_n" + std::to_string(n) + "_seed" +
                                   std::to_string(s) + ".csv";
          std::ifstream in(run_dir / "cells" / name);
          if (!in) throw std::runtime_error("missing cell file cells/" + name);
          series.push_back(read_table(in, run_dir / "cells" / name, "step"));
        }
        const auto& base = series.front();
        for (std::size_t row = 0; row < base.rows.size(); ++row) {
          for (std::size_t m = 0; m < base.metric_names.size(); ++m) {
            double sum = 0.0, ss = 0.0;
            std::size_t count = 0;
            for (const auto& t : series) {
              const double v = t.rows.at(row).metrics[m];
              if (!std::isnan(v)) {
                sum += v;
                ++count;
              }
            }
            const double mean = count ? sum / static_cast<double>(count) : std::nan("");
            for (const auto& t : series) {
              const double v = t.rows.at(row).metrics[m];
              if (!std::isnan(v)) ss += (v - mean) * (v - mean);
            }
            const double sd = count > 1 ? std::sqrt(ss / static_cast<double>(count - 1)) : (count ? 0.0 : std::nan(""));
            ts << to_string(e) << ',' << np << ',' << n << ',' << base.rows[row].seed << ',' << base.metric_names[m]
               << ',' << csv_number(mean) << ',' << csv_number(sd) << ',' << count << '\n';
          }
        }
      }
    }
  }
}

}  // namespace otbayes::bench
