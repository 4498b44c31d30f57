#pragma once

#include "otbayes/models.hpp"
#include "otbayes/ot_filter.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace otbayes::bench {

enum class ExperimentKind { static_squared, dynamic_squared, lorenz63, cod_sweep, linear_gaussian_check };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_experiment_kind(const std::string& name);

/// Scalar linear-Gaussian model x' = a x + N(0, q), y = h x + N(0, r), x0 ~ N(m0, s0).
struct LinearParams {
  double a = 1.0;
  double q = 0.0;
  double h = 1.0;
  double r = 1.0;
  double m0 = 0.0;
  double s0 = 1.0;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::static_squared;
  std::vector<FilterKind> engines;
  std::vector<Eigen::Index> particles;
  std::vector<Eigen::Index> dims{1};
  int steps = 1;
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t master_seed = 0;

  // static_squared / cod_sweep
  std::vector<double> lambda_w{0.4};
  double y_value = 1.0;
  /// Static experiments observe y_value in every component unless y is sampled from the model.
  bool sample_y = false;
  // dynamic_squared
  double alpha = 0.1;
  double lambda = 0.31622776601683794;
  Lorenz63Params lorenz;
  LinearParams linear;

  /// Particles of the reference posterior (SIR for filters, exact sampling for static models).
  Eigen::Index reference_particles = 100000;
  /// Reference ensembles are thinned to this many points for MMD.
  Eigen::Index reference_max_points = 2000;
  /// Time averages of MMD / MSE start at this step (1-based).
  int metrics_first_step = 1;
  bool write_samples = true;

  FilterConfig filter;
  /// Used when the command line gives no --out.
  std::string output_dir;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

/// Parses the JSON config. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
/// Canonical JSON echo of the effective configuration.
std::string config_to_json(const ExperimentConfig& cfg);

/// Git blob object id: SHA-1 of "blob <size>\0" followed by the content.
std::string git_blob_sha1(const std::string& content);

}  // namespace otbayes::bench
