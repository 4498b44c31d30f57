#include "otbayes/bench/config.hpp"
#include "otbayes/bench/experiment.hpp"
#include "otbayes/bench/plotdata.hpp"

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace otbayes;
using namespace otbayes::bench;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("otbayes_test_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const char* kLinear = R"({
  "experiment": "linear_gaussian_check",
  "engines": ["kalman", "enkf"],
  "particles": [50, 5000],
  "steps": 5,
  "seeds": [0, 1, 2],
  "model": {"linear": {"a": 0.9, "q": 0.1, "r": 0.5}}
})";

int run_quiet(const ExperimentConfig& cfg, const fs::path& out) {
  RunOptions o;
  o.out_dir = out;
  std::ostringstream log;
  return run_experiment(cfg, o, log);
}

}  // namespace

TEST_CASE("config parsing fills defaults and rejects unknown keys") {
  const ExperimentConfig c = parse_config(R"({"experiment": "static_squared", "engines": ["enkf"], "particles": [10]})");
  CHECK(c.experiment == ExperimentKind::static_squared);
  CHECK(c.dims == std::vector<Eigen::Index>{1});
  CHECK(c.lambda_w == std::vector<double>{0.4});
  CHECK_THROWS_AS(parse_config(R"({"experiment": "static_squared", "engines": ["enkf"], "particles": [10], "bogus": 1})"),
                  std::invalid_argument);
  CHECK_THROWS(parse_config("{not json"));
}

TEST_CASE("config validation errors") {
  CHECK_THROWS(parse_config(R"({"experiment": "static_squared", "engines": [], "particles": [10]})"));
  CHECK_THROWS(parse_config(R"({"experiment": "static_squared", "engines": ["enkf"], "particles": [1]})"));
  CHECK_THROWS(parse_config(R"({"experiment": "dynamic_squared", "engines": ["kalman"], "particles": [10]})"));
  CHECK_THROWS(parse_config(R"({"experiment": "cod_sweep", "engines": ["fpf_static"], "particles": [10]})"));
  CHECK_THROWS(parse_config(R"({"experiment": "warp_drive", "engines": ["enkf"], "particles": [10]})"));
}

TEST_CASE("config echo parses back to the same config") {
  const ExperimentConfig c = parse_config(kLinear);
  const std::string echo = config_to_json(c);
  CHECK(config_to_json(parse_config(echo)) == echo);
}

TEST_CASE("config hash is the git blob id") {
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("seed aggregation") {
  ResultTable t;
  t.key_names = {"engine"};
  t.metric_names = {"m"};
  t.rows = {{{"a"}, "0", {1.0}}, {{"a"}, "1", {2.0}}, {{"a"}, "2", {3.0}}, {{"b"}, "0", {5.0}}};
  const auto agg = aggregate_seeds(t);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].mean == doctest::Approx(2.0));
  CHECK(agg[0].std == doctest::Approx(1.0));
  CHECK(agg[0].count == 3);
  CHECK(agg[1].mean == 5.0);
  CHECK(agg[1].std == 0.0);
}

TEST_CASE("linear check run: EnKF error against Kalman falls with N, outputs are deterministic") {
  const ExperimentConfig cfg = parse_config(kLinear);
  const fs::path a = fresh_dir("linear_a"), b = fresh_dir("linear_b");
  REQUIRE(run_quiet(cfg, a) == 0);
  REQUIRE(run_quiet(cfg, b) == 0);
  CHECK(read_file(a / "results.csv") == read_file(b / "results.csv"));
  CHECK(read_file(a / "cells" / "enkf_N50_n1_seed1.csv") == read_file(b / "cells" / "enkf_N50_n1_seed1.csv"));

  const ResultTable t = read_results(a / "results.csv");
  CHECK(t.metric_names.back() == "err_vs_kalman");
  double small = 0.0, large = 0.0;
  for (const auto& r : t.rows) {
    if (r.keys[0] != "enkf") continue;
    (r.keys[1] == "50" ? small : large) += r.metrics.back();
  }
  CHECK(large < small);

  emit_plotdata(a);
  CHECK(fs::exists(a / "plotdata" / "summary.csv"));
  CHECK(fs::exists(a / "plotdata" / "timeseries.csv"));
  CHECK(fs::exists(a / "manifest.json"));
  CHECK(fs::exists(a / "README.md"));
}

TEST_CASE("a different master seed changes the numbers") {
  ExperimentConfig cfg = parse_config(kLinear);
  const fs::path a = fresh_dir("seed_a"), b = fresh_dir("seed_b");
  REQUIRE(run_quiet(cfg, a) == 0);
  RunOptions o;
  o.out_dir = b;
  o.seed = 99;
  std::ostringstream log;
  REQUIRE(run_experiment(cfg, o, log) == 0);
  CHECK(read_file(a / "results.csv") != read_file(b / "results.csv"));
}

TEST_CASE("plotdata lists missing cells") {
  const ExperimentConfig cfg = parse_config(kLinear);
  const fs::path a = fresh_dir("missing");
  REQUIRE(run_quiet(cfg, a) == 0);
  std::string csv = read_file(a / "results.csv");
  const auto cut = csv.find("\nenkf,50,1,1,");
  REQUIRE(cut != std::string::npos);
  const auto end = csv.find('\n', cut + 1);
  csv.erase(cut, end - cut);
  std::ofstream(a / "results.csv", std::ios::trunc) << csv;
  try {
    emit_plotdata(a);
    FAIL("expected an error");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("engine=enkf, N=50, n=1, seed=1") != std::string::npos);
  }
}

TEST_CASE("static run writes transported samples per engine") {
  const ExperimentConfig cfg = parse_config(R"({
    "experiment": "static_squared", "engines": ["enkf", "sir", "ot"], "particles": [100],
    "model": {"lambda_w": [0.4, 0.04]}, "reference": {"max_points": 300},
    "train": {"outer_iters": 20, "batch_size": 50, "hidden_width": 8}
  })");
  const fs::path a = fresh_dir("static");
  REQUIRE(run_quiet(cfg, a) == 0);
  for (const char* e : {"enkf", "sir", "ot"}) {
    CHECK(fs::exists(a / "samples" / (std::string("lam1_") + e + "_N100_n1_seed0.csv")));
  }
  CHECK(fs::exists(a / "samples" / "lam0_reference_n1_seed0.csv"));
  CHECK(read_results(a / "results.csv").rows.size() == 6);
}

TEST_CASE("command line: run, plotdata and invalid configs") {
  const char* cli = std::getenv("OTBAYES_CLI");
  if (cli == nullptr) {
    MESSAGE("OTBAYES_CLI not set; skipping");
    return;
  }
  const fs::path d = fresh_dir("cli");
  std::ofstream(d / "good.json") << kLinear;
  std::ofstream(d / "bad.json") << R"({"experiment": "lorenz63", "engines": ["kalman"], "particles": [10]})";
  const std::string exe = std::string("\"") + cli + "\"";
  CHECK(std::system((exe + " run --config " + (d / "good.json").string() + " --out " + (d / "out").string() +
                     " --jobs 2 2>/dev/null").c_str()) == 0);
  CHECK(std::system((exe + " plotdata --run " + (d / "out").string() + " 2>/dev/null").c_str()) == 0);
  CHECK(std::system((exe + " run --config " + (d / "bad.json").string() + " --out " + (d / "bad").string() +
                     " 2>/dev/null").c_str()) != 0);
  CHECK(std::system((exe + " run --config " + (d / "nope.json").string() + " --out x 2>/dev/null").c_str()) != 0);
  CHECK(WEXITSTATUS(std::system((exe + " run --config " + (d / "good.json").string() + " 2>/dev/null").c_str())) == 2);

  // Parallel cells produce the same bytes as the sequential run.
  const fs::path seq = fresh_dir("cli_seq");
  REQUIRE(run_quiet(parse_config(kLinear), seq) == 0);
  CHECK(read_file(seq / "results.csv") == read_file(d / "out" / "results.csv"));
}

TEST_CASE("shipped example configs parse and round-trip") {
  int count = 0;
  for (const auto& entry : fs::directory_iterator(OTBAYES_CONFIG_DIR)) {
    if (entry.path().extension() != ".json") continue;
    CAPTURE(entry.path().string());
    const ExperimentConfig cfg = load_config(entry.path());
    CHECK(config_to_json(parse_config(config_to_json(cfg))) == config_to_json(cfg));
    ++count;
  }
  CHECK(count == 5);
}
