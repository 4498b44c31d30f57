#include "otbayes/ot_filter.hpp"

#include "otbayes/random.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace otbayes {

namespace {

diffnet::ArchitectureSpec arch(const FilterConfig& cfg, std::size_t n, std::size_t m, bool is_map) {
  diffnet::ArchitectureSpec s;
  s.input_dim = n + m;
  s.output_dim = is_map ? n : 1;
  s.hidden_width = cfg.hidden_width;
  s.num_residual_blocks = cfg.num_residual_blocks;
  s.activation = cfg.activation;
  s.has_enkf_block = is_map;
  return s;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string to_string(FilterKind kind) {
  switch (kind) {
    case FilterKind::kalman: return "kalman";
    case FilterKind::enkf: return "enkf";
    case FilterKind::sir: return "sir";
    case FilterKind::ot: return "ot";
    case FilterKind::fpf_static: return "fpf_static";
    case FilterKind::open_loop: return "open_loop";
  }
  return "unknown";
}

FilterKind parse_filter_kind(const std::string& name) {
  for (FilterKind k : {FilterKind::kalman, FilterKind::enkf, FilterKind::sir, FilterKind::ot, FilterKind::fpf_static,
                       FilterKind::open_loop}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown engine '" + name + "'");
}

void FilterConfig::validate() const {
  train.validate();
  if (hidden_width < 1 || num_residual_blocks < 1) throw std::invalid_argument("filter config: bad architecture");
  if (!(warm_start_fraction > 0.0) || warm_start_fraction > 1.0) {
    throw std::invalid_argument("filter config: warm_start_fraction must be in (0, 1]");
  }
  if (fpf_steps < 1) throw std::invalid_argument("filter config: fpf_steps must be >= 1");
}

std::pair<Ensemble, MapPair> ot_bayes_update(const Ensemble& prior, const Vector& y, const StateSpaceModel& model,
                                             const FilterConfig& cfg, const std::optional<MapPair>& warm, Rng& rng) {
  if (prior.has_weights()) throw std::invalid_argument("ot update: ensemble must have uniform weights");
  const Eigen::Index n_particles = prior.size();
  JointSamples samples{prior.particles(), Matrix(n_particles, model.obs_dim())};
  for (Eigen::Index i = 0; i < n_particles; ++i) {
    samples.y.row(i) = model.sample_observation(prior.particle(i).transpose(), rng).transpose();
  }
  TrainConfig tc = cfg.train;
  tc.seed = rng();
  tc.batch_size = std::min<std::size_t>(tc.batch_size, static_cast<std::size_t>(n_particles));
  const auto n = static_cast<std::size_t>(model.state_dim());
  const auto m = static_cast<std::size_t>(model.obs_dim());
  MapPair pair;
  if (warm) {
    tc.outer_iters = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(cfg.warm_start_fraction * static_cast<double>(tc.outer_iters))));
    pair = train_from(*warm, samples, tc);
  } else {
    pair = train(samples, arch(cfg, n, m, false), arch(cfg, n, m, true), tc);
  }
  return {transport(pair, prior, y), std::move(pair)};
}

std::pair<Ensemble, MapPair> ot_filter_step(const Ensemble& ens, const Vector& y, const StateSpaceModel& model,
                                            const FilterConfig& cfg, const std::optional<MapPair>& warm, Rng& rng) {
  return ot_bayes_update(propagate_ensemble(model, ens, rng), y, model, cfg, warm, rng);
}

Ensemble fpf_bayes_update(const Ensemble& prior, const Vector& y, const StateSpaceModel& model,
                          const FilterConfig& cfg) {
  if (!model.has_additive_gaussian_noise() || model.obs_dim() != 1) {
    throw std::invalid_argument("fpf_static: needs a scalar observation with additive Gaussian noise");
  }
  const double sigma = std::sqrt(model.observation_noise_cov()(0, 0));
  if (!(sigma > 0.0)) throw std::invalid_argument("fpf_static: observation noise must be positive");
  // Over pseudo-time [0, 1] the scaled observation path ends at y / sigma, which
  // reproduces the Gaussian likelihood of the static update.
  const double dt = 1.0 / cfg.fpf_steps;
  const std::vector<double> increments(static_cast<std::size_t>(cfg.fpf_steps), y(0) / sigma * dt);
  const ObservationFn h = [&model, sigma](const Vector& x) { return model.observation_mean(x)(0) / sigma; };
  return fpf_static_update(prior, increments, h, dt, cfg.fpf_gain);
}

UpdateResult bayes_update(FilterKind kind, const Ensemble& prior, const Vector& y, const StateSpaceModel& model,
                          const FilterConfig& cfg, Rng& rng) {
  const auto n = static_cast<double>(prior.size());
  switch (kind) {
    case FilterKind::enkf: return {enkf_update(prior, y, model, rng), n};
    case FilterKind::sir: {
      auto res = sir_update_detailed(prior, y, model, rng, cfg.sir_scheme);
      return {std::move(res.ensemble), res.ess};
    }
    case FilterKind::ot: return {ot_bayes_update(prior, y, model, cfg, std::nullopt, rng).first, n};
    case FilterKind::fpf_static: return {fpf_bayes_update(prior, y, model, cfg), n};
    default: break;
  }
  throw std::invalid_argument("bayes_update: engine '" + to_string(kind) + "' has no ensemble Bayes update");
}

Ensemble resample_stage(const Ensemble& ens, Rng& rng) {
  if (ens.has_weights()) throw std::invalid_argument("resample_stage: ensemble must have uniform weights");
  const auto idx = multinomial_resample(ens.weights(), rng);
  Matrix out(ens.size(), ens.dim());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = ens.particle(idx[i]);
  return Ensemble(std::move(out));
}

FilterRun run_filter(const StateSpaceModel& model, const std::vector<Vector>& observations, FilterKind kind,
                     Eigen::Index n_particles, const FilterConfig& cfg, std::uint64_t seed,
                     const std::vector<Vector>* truth) {
  if (observations.empty()) throw std::invalid_argument("run_filter: no observations");
  if (truth && truth->size() != observations.size()) throw std::invalid_argument("run_filter: truth length mismatch");
  cfg.validate();
  if (kind == FilterKind::sir && !model.has_likelihood()) {
    throw std::invalid_argument("run_filter: sir needs a model with an analytic likelihood");
  }
  const auto* lg = dynamic_cast<const LinearGaussianModel*>(&model);
  if (kind == FilterKind::kalman && !lg) throw std::invalid_argument("run_filter: kalman needs a linear Gaussian model");
  if (kind == FilterKind::fpf_static && (!model.has_additive_gaussian_noise() || model.obs_dim() != 1)) {
    throw std::invalid_argument("run_filter: fpf_static needs a scalar additive-Gaussian observation");
  }

  FilterRun run;
  run.kind = kind;
  run.seed = seed;
  run.n_particles = n_particles;
  run.config = cfg;
  Rng rng = make_rng(derive_seed(seed, {tag_of("filter"), tag_of(to_string(kind))}));

  auto record = [&](std::size_t step, const Vector& mean, const Matrix& cov, double ess, double seconds) {
    MetricReport r;
    r.step = step;
    r.ess = ess;
    r.wall_seconds = seconds;
    if (truth) r.mse = (mean - (*truth)[step - 1]).squaredNorm();
    run.means.push_back(mean);
    run.covariances.push_back(cov);
    run.metrics.push_back(r);
  };

  if (kind == FilterKind::kalman) {
    GaussianBelief b{lg->prior_mean(), lg->prior_cov()};
    for (std::size_t t = 0; t < observations.size(); ++t) {
      const auto start = std::chrono::steady_clock::now();
      b = kalman_update(kalman_predict(b, lg->A(), lg->Q()), lg->H(), lg->R(), observations[t]);
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      run.beliefs.push_back(b);
      record(t + 1, b.mean, b.cov, std::numeric_limits<double>::quiet_NaN(), sec);
    }
    return run;
  }

  Ensemble ens = sample_prior_ensemble(model, n_particles, rng);
  std::optional<MapPair> warm;
  for (std::size_t t = 0; t < observations.size(); ++t) {
    const auto start = std::chrono::steady_clock::now();
    const Vector& y = observations[t];
    double ess = static_cast<double>(n_particles);
    switch (kind) {
      case FilterKind::enkf:
        ens = enkf_update(propagate_ensemble(model, ens, rng), y, model, rng);
        break;
      case FilterKind::sir: {
        auto res = sir_update_detailed(propagate_ensemble(model, ens, rng), y, model, rng, cfg.sir_scheme);
        ens = std::move(res.ensemble);
        ess = res.ess;
        break;
      }
      case FilterKind::ot: {
        auto [next, pair] = ot_filter_step(ens, y, model, cfg, warm, rng);
        ens = std::move(next);
        if (cfg.warm_start) warm = std::move(pair);
        if (cfg.resample_ot) ens = resample_stage(ens, rng);
        break;
      }
      case FilterKind::fpf_static:
        ens = fpf_bayes_update(propagate_ensemble(model, ens, rng), y, model, cfg);
        break;
      case FilterKind::open_loop:
        ens = propagate_ensemble(model, ens, rng);
        break;
      case FilterKind::kalman:
        break;
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    record(t + 1, ens.mean(), ens.covariance(), ess, sec);
    if (cfg.keep_ensembles) run.ensembles.push_back(ens);
  }
  return run;
}

FilterRun run_open_loop(const StateSpaceModel& model, int steps, Eigen::Index n_particles, std::uint64_t seed,
                        const std::vector<Vector>* truth) {
  const std::vector<Vector> dummy(static_cast<std::size_t>(std::max(steps, 0)), Vector::Zero(model.obs_dim()));
  return run_filter(model, dummy, FilterKind::open_loop, n_particles, FilterConfig{}, seed, truth);
}

Matrix thin_rows(const Matrix& m, Eigen::Index max_points) {
  if (m.rows() <= max_points) return m;
  Matrix out(max_points, m.cols());
  for (Eigen::Index i = 0; i < max_points; ++i) out.row(i) = m.row(i * m.rows() / max_points);
  return out;
}

void attach_mmd(FilterRun& run, const std::vector<Ensemble>& reference, Eigen::Index max_points) {
  if (run.ensembles.size() != run.metrics.size()) throw std::logic_error("attach_mmd: run kept no ensembles");
  if (reference.size() != run.ensembles.size()) throw std::invalid_argument("attach_mmd: reference length mismatch");
  for (std::size_t t = 0; t < run.ensembles.size(); ++t) {
    run.metrics[t].mmd =
        mmd(thin_rows(run.ensembles[t].particles(), max_points), thin_rows(reference[t].particles(), max_points));
  }
}

void write_filter_csv(const FilterRun& run, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const Eigen::Index n = run.means.empty() ? 0 : run.means.front().size();
  out << "step,mmd,mse,ess";
  for (Eigen::Index k = 0; k < n; ++k) out << ",mean_" << k;
  out << '\n';
  for (std::size_t t = 0; t < run.metrics.size(); ++t) {
    const MetricReport& r = run.metrics[t];
    out << r.step << ',' << fmt(r.mmd) << ',' << fmt(r.mse) << ',' << fmt(r.ess);
    for (Eigen::Index k = 0; k < n; ++k) out << ',' << fmt(run.means[t](k));
    out << '\n';
  }
}

double average_mmd(const FilterRun& run, std::size_t first, std::size_t last) {
  if (first < 1 || last > run.metrics.size() || first > last) throw std::invalid_argument("average_mmd: bad range");
  double s = 0.0;
  for (std::size_t t = first; t <= last; ++t) s += run.metrics[t - 1].mmd;
  return s / static_cast<double>(last - first + 1);
}

double average_mse(const FilterRun& run, std::size_t first, std::size_t last) {
  if (first < 1 || last > run.metrics.size() || first > last) throw std::invalid_argument("average_mse: bad range");
  double s = 0.0;
  for (std::size_t t = first; t <= last; ++t) s += run.metrics[t - 1].mse;
  return s / static_cast<double>(last - first + 1);
}

}  // namespace otbayes
