#pragma once

#include "otbayes/classical_filters.hpp"
#include "otbayes/ensemble.hpp"
#include "otbayes/fpf.hpp"
#include "otbayes/metrics.hpp"
#include "otbayes/models.hpp"
#include "otbayes/ot_bayes.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace otbayes {

/// Bayes-update engines. open_loop is the no-update baseline (prior propagation only).
enum class FilterKind { kalman, enkf, sir, ot, fpf_static, open_loop };

std::string to_string(FilterKind kind);
/// Throws std::invalid_argument for unknown names.
FilterKind parse_filter_kind(const std::string& name);

struct FilterConfig {
  TrainConfig train;
  std::size_t hidden_width = 64;
  std::size_t num_residual_blocks = 2;
  diffnet::Activation activation = diffnet::Activation::relu;
  /// Start each step's training from the previous step's pair.
  bool warm_start = true;
  /// Warm-started steps train for this fraction of train.outer_iters.
  double warm_start_fraction = 0.25;
  /// Multinomial bootstrap after each OT update.
  bool resample_ot = false;
  ResampleScheme sir_scheme = ResampleScheme::multinomial;
  GainOptions fpf_gain;
  /// Pseudo-time steps of the FPF homotopy from prior to posterior.
  int fpf_steps = 100;
  /// Keep every posterior ensemble in the run (needed for MMD against a reference).
  bool keep_ensembles = true;

  void validate() const;
};

/// One step of the OT filter: propagate, simulate predicted observations,
/// train the pair (warm-started when given), transport with the realized y.
std::pair<Ensemble, MapPair> ot_filter_step(const Ensemble& ens, const Vector& y, const StateSpaceModel& model,
                                            const FilterConfig& cfg, const std::optional<MapPair>& warm, Rng& rng);

/// Bayes update only (no propagation) by the OT method on the given prior ensemble.
std::pair<Ensemble, MapPair> ot_bayes_update(const Ensemble& prior, const Vector& y, const StateSpaceModel& model,
                                             const FilterConfig& cfg, const std::optional<MapPair>& warm, Rng& rng);

/// FPF homotopy update for a scalar additive-Gaussian observation.
Ensemble fpf_bayes_update(const Ensemble& prior, const Vector& y, const StateSpaceModel& model,
                          const FilterConfig& cfg);

struct UpdateResult {
  Ensemble ensemble;
  /// Importance-weight ESS for sir, N otherwise.
  double ess = 0.0;
};

/// Static Bayes update of a prior ensemble by one engine (enkf, sir, ot or fpf_static).
UpdateResult bayes_update(FilterKind kind, const Ensemble& prior, const Vector& y, const StateSpaceModel& model,
                          const FilterConfig& cfg, Rng& rng);

/// Multinomial bootstrap of a uniformly weighted ensemble.
Ensemble resample_stage(const Ensemble& ens, Rng& rng);

struct FilterRun {
  FilterKind kind = FilterKind::enkf;
  std::uint64_t seed = 0;
  Eigen::Index n_particles = 0;
  FilterConfig config;
  std::vector<Vector> means;
  std::vector<Matrix> covariances;
  std::vector<Ensemble> ensembles;        // empty for kalman or when not kept
  std::vector<GaussianBelief> beliefs;    // kalman only
  std::vector<MetricReport> metrics;      // mse filled when truth is given; mmd by attach_mmd
};

/// Runs the filter over Y_1..Y_T from a prior ensemble (or belief) at time 0.
/// With `truth`, the per-step squared error of the posterior mean is recorded.
FilterRun run_filter(const StateSpaceModel& model, const std::vector<Vector>& observations, FilterKind kind,
                     Eigen::Index n_particles, const FilterConfig& cfg, std::uint64_t seed,
                     const std::vector<Vector>* truth = nullptr);

/// Prior-only baseline: propagation without any Bayes update.
FilterRun run_open_loop(const StateSpaceModel& model, int steps, Eigen::Index n_particles, std::uint64_t seed,
                        const std::vector<Vector>* truth = nullptr);

/// Fills metrics[t].mmd against reference ensembles. Both sides are thinned to
/// max_points rows so the quadratic kernel sums stay bounded for large N.
void attach_mmd(FilterRun& run, const std::vector<Ensemble>& reference, Eigen::Index max_points = 2000);

/// One row per step: step, mmd, mse, ess, then the posterior mean components.
void write_filter_csv(const FilterRun& run, const std::filesystem::path& path);

/// Time average of metrics[t].mmd over steps first..last (1-based, inclusive).
double average_mmd(const FilterRun& run, std::size_t first, std::size_t last);
double average_mse(const FilterRun& run, std::size_t first, std::size_t last);

/// Strided subsample of at most max_points rows.
Matrix thin_rows(const Matrix& m, Eigen::Index max_points);

}  // namespace otbayes
