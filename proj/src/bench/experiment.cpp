#include "otbayes/bench/experiment.hpp"

#include "otbayes/random.hpp"
#include "otbayes/version.hpp"

#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <sstream>
#include <thread>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace otbayes::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using u64 = std::uint64_t;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

u64 U(Eigen::Index v) { return static_cast<u64>(v); }

void run_parallel(std::size_t count, int jobs, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = static_cast<std::size_t>(std::max(1, jobs));
  if (n_threads == 1 || count <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < std::min(n_threads, count); ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void write_matrix_csv(const fs::path& path, const Matrix& m, const std::string& prefix) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (Eigen::Index k = 0; k < m.cols(); ++k) out << (k ? "," : "") << prefix << k;
  out << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index k = 0; k < m.cols(); ++k) out << (k ? "," : "") << csv_number(m(i, k));
    out << '\n';
  }
}

std::string cell_name(FilterKind engine, Eigen::Index n_particles, Eigen::Index dim, u64 seed) {
  return to_string(engine) + "_N" + std::to_string(n_particles) + "_n" + std::to_string(dim) + "_seed" +
         std::to_string(seed);
}

struct CellOutput {
  std::vector<std::string> fields;  // full results.csv row
  json manifest;
};

struct SignSplit {
  double frac_pos = kNaN;
  double mean_pos = kNaN;
  double mean_neg = kNaN;
};

SignSplit sign_split(const Matrix& particles) {
  double sp = 0.0, sn = 0.0;
  Eigen::Index np = 0, nn = 0;
  for (Eigen::Index i = 0; i < particles.rows(); ++i) {
    const double v = particles(i, 0);
    if (v > 0.0) {
      sp += v;
      ++np;
    } else {
      sn += v;
      ++nn;
    }
  }
  SignSplit s;
  s.frac_pos = static_cast<double>(np) / static_cast<double>(particles.rows());
  if (np > 0) s.mean_pos = sp / static_cast<double>(np);
  if (nn > 0) s.mean_neg = sn / static_cast<double>(nn);
  return s;
}

// ---------------------------------------------------------------- static experiments

struct StaticContext {
  std::size_t lambda_index;
  double lambda_w;
  Eigen::Index dim;
  u64 seed;
  Vector y;
  Matrix reference;
};

std::vector<CellOutput> run_static(const ExperimentConfig& cfg, u64 master, const fs::path& out, int jobs) {
  std::vector<StaticContext> contexts;
  for (std::size_t li = 0; li < cfg.lambda_w.size(); ++li) {
    for (Eigen::Index n : cfg.dims) {
      for (u64 s : cfg.seeds) contexts.push_back({li, cfg.lambda_w[li], n, s, Vector(), Matrix()});
    }
  }
  run_parallel(contexts.size(), jobs, [&](std::size_t i) {
    StaticContext& c = contexts[i];
    const auto model = SquaredObservationModel::static_form(c.dim, c.lambda_w);
    if (cfg.sample_y) {
      Rng rng = make_rng(derive_seed(master, {tag_of("truth"), c.lambda_index, U(c.dim), c.seed}));
      c.y = model.sample_observation(model.sample_prior(rng), rng);
    } else {
      c.y = Vector::Constant(c.dim, cfg.y_value);
    }
    Rng ref_rng = make_rng(derive_seed(master, {tag_of("reference"), c.lambda_index, U(c.dim), c.seed}));
    c.reference = sample_static_squared_posterior(model, c.y, cfg.reference_max_points, ref_rng);
  });

  struct Task {
    const StaticContext* ctx;
    Eigen::Index n_particles;
    FilterKind engine;
  };
  std::vector<Task> tasks;
  for (const auto& c : contexts) {
    for (Eigen::Index np : cfg.particles) {
      for (FilterKind e : cfg.engines) tasks.push_back({&c, np, e});
    }
  }
  std::vector<CellOutput> outputs(tasks.size());
  run_parallel(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const StaticContext& c = *t.ctx;
    const auto start = std::chrono::steady_clock::now();
    const auto model = SquaredObservationModel::static_form(c.dim, c.lambda_w);
    Rng prior_rng = make_rng(derive_seed(master, {tag_of("prior"), c.lambda_index, U(c.dim), U(t.n_particles), c.seed}));
    const Ensemble prior = sample_prior_ensemble(model, t.n_particles, prior_rng);
    Rng rng = make_rng(derive_seed(master, {tag_of("update"), tag_of(to_string(t.engine)), c.lambda_index, U(c.dim),
                                            U(t.n_particles), c.seed}));
    const UpdateResult res = bayes_update(t.engine, prior, c.y, model, cfg.filter, rng);
    const double d = mmd(thin_rows(res.ensemble.particles(), cfg.reference_max_points), c.reference);
    const SignSplit split = sign_split(res.ensemble.particles());
    const std::string name = "lam" + std::to_string(c.lambda_index) + "_" + cell_name(t.engine, t.n_particles, c.dim, c.seed);
    if (cfg.write_samples) write_matrix_csv(out / "samples" / (name + ".csv"), res.ensemble.particles(), "x_");
    CellOutput o;
    o.fields = {csv_number(c.lambda_w), to_string(t.engine), std::to_string(t.n_particles), std::to_string(c.dim),
                std::to_string(c.seed), csv_number(d), csv_number(res.ess), csv_number(split.frac_pos),
                csv_number(split.mean_pos), csv_number(split.mean_neg)};
    o.manifest = {{"lambda_w", c.lambda_w}, {"engine", to_string(t.engine)}, {"N", t.n_particles}, {"n", c.dim},
                  {"seed", c.seed}, {"file", cfg.write_samples ? "samples/" + name + ".csv" : ""},
                  {"wall_seconds", seconds_since(start)}};
    outputs[i] = std::move(o);
  });

  // Reference samples, one file per context (the exact-posterior comparison set).
  if (cfg.write_samples) {
    for (const auto& c : contexts) {
      write_matrix_csv(out / "samples" /
                           ("lam" + std::to_string(c.lambda_index) + "_reference_n" + std::to_string(c.dim) + "_seed" +
                            std::to_string(c.seed) + ".csv"),
                       c.reference, "x_");
    }
  }
  return outputs;
}

// ---------------------------------------------------------------- filtering experiments

std::unique_ptr<StateSpaceModel> make_filter_model(const ExperimentConfig& cfg, Eigen::Index dim) {
  switch (cfg.experiment) {
    case ExperimentKind::dynamic_squared:
      return std::make_unique<SquaredObservationModel>(SquaredObservationModel::dynamic_form(dim, cfg.alpha, cfg.lambda));
    case ExperimentKind::lorenz63: return std::make_unique<Lorenz63Model>(cfg.lorenz);
    case ExperimentKind::linear_gaussian_check: {
      const LinearParams& p = cfg.linear;
      return std::make_unique<LinearGaussianModel>(Matrix::Constant(1, 1, p.h), Matrix::Constant(1, 1, p.r),
                                                   Matrix::Constant(1, 1, p.a), Matrix::Constant(1, 1, p.q),
                                                   Vector::Constant(1, p.m0), Matrix::Constant(1, 1, p.s0));
    }
    default: break;
  }
  throw std::invalid_argument("not a filtering experiment");
}

struct FilterContext {
  Eigen::Index dim;
  u64 seed;
  Trajectory truth;
  std::vector<Ensemble> reference;
  std::vector<GaussianBelief> kalman;  // linear_gaussian_check only
};

std::vector<CellOutput> run_filtering(const ExperimentConfig& cfg, u64 master, const fs::path& out, int jobs) {
  std::vector<FilterContext> contexts;
  for (Eigen::Index n : cfg.dims) {
    for (u64 s : cfg.seeds) contexts.push_back({n, s, {}, {}, {}});
  }
  const bool linear = cfg.experiment == ExperimentKind::linear_gaussian_check;
  run_parallel(contexts.size(), jobs, [&](std::size_t i) {
    FilterContext& c = contexts[i];
    const auto model = make_filter_model(cfg, c.dim);
    c.truth = simulate_trajectory(*model, cfg.steps, derive_seed(master, {tag_of("truth"), U(c.dim), c.seed}));
    const u64 ref_seed = derive_seed(master, {tag_of("reference"), U(c.dim), c.seed});
    if (linear) {
      FilterConfig fc = cfg.filter;
      const FilterRun k = run_filter(*model, c.truth.observations, FilterKind::kalman, 2, fc, ref_seed);
      c.kalman = k.beliefs;
      Rng rng = make_rng(ref_seed);
      for (const auto& b : k.beliefs) {
        const Eigen::LLT<Matrix> llt(b.cov);
        Matrix pts(cfg.reference_max_points, b.mean.size());
        for (Eigen::Index r = 0; r < pts.rows(); ++r) {
          pts.row(r) = (b.mean + Matrix(llt.matrixL()) * standard_normal(rng, b.mean.size())).transpose();
        }
        c.reference.emplace_back(std::move(pts));
      }
    } else {
      const FilterRun ref =
          run_filter(*model, c.truth.observations, FilterKind::sir, cfg.reference_particles, cfg.filter, ref_seed);
      for (const auto& e : ref.ensembles) c.reference.emplace_back(thin_rows(e.particles(), cfg.reference_max_points));
    }
  });

  struct Task {
    const FilterContext* ctx;
    Eigen::Index n_particles;
    FilterKind engine;
  };
  std::vector<Task> tasks;
  for (const auto& c : contexts) {
    for (Eigen::Index np : cfg.particles) {
      for (FilterKind e : cfg.engines) tasks.push_back({&c, np, e});
    }
  }
  std::vector<CellOutput> outputs(tasks.size());
  const auto first = static_cast<std::size_t>(cfg.metrics_first_step);
  const auto last = static_cast<std::size_t>(cfg.steps);
  run_parallel(tasks.size(), jobs, [&](std::size_t i) {
    const Task& t = tasks[i];
    const FilterContext& c = *t.ctx;
    const auto start = std::chrono::steady_clock::now();
    const auto model = make_filter_model(cfg, c.dim);
    const u64 seed = derive_seed(master, {tag_of("cell"), tag_of(to_string(t.engine)), U(t.n_particles), U(c.dim), c.seed});
    FilterRun run = run_filter(*model, c.truth.observations, t.engine, t.n_particles, cfg.filter, seed, &c.truth.states);
    double mmd_avg = kNaN;
    if (t.engine != FilterKind::kalman) {
      attach_mmd(run, c.reference, cfg.reference_max_points);
      mmd_avg = average_mmd(run, first, last);
    } else {
      for (auto& m : run.metrics) m.mmd = kNaN;
    }
    double ess = 0.0;
    for (std::size_t s = first; s <= last; ++s) ess += run.metrics[s - 1].ess;
    ess /= static_cast<double>(last - first + 1);
    double err = kNaN;
    if (linear) {
      err = 0.0;
      for (std::size_t s = first; s <= last; ++s) {
        const GaussianBelief& b = c.kalman[s - 1];
        err += std::abs(run.means[s - 1](0) - b.mean(0)) / std::sqrt(b.cov(0, 0));
      }
      err /= static_cast<double>(last - first + 1);
    }
    const std::string name = cell_name(t.engine, t.n_particles, c.dim, c.seed);
    write_filter_csv(run, out / "cells" / (name + ".csv"));
    CellOutput o;
    o.fields = {to_string(t.engine), std::to_string(t.n_particles), std::to_string(c.dim), std::to_string(c.seed),
                csv_number(mmd_avg), csv_number(average_mse(run, first, last)), csv_number(ess), csv_number(err)};
    o.manifest = {{"engine", to_string(t.engine)}, {"N", t.n_particles}, {"n", c.dim}, {"seed", c.seed},
                  {"file", "cells/" + name + ".csv"}, {"wall_seconds", seconds_since(start)}};
    outputs[i] = std::move(o);
  });

  std::ofstream truth_out(out / "truth.csv", std::ios::trunc);
  truth_out << "n,seed,step,component,state,observation_component,observation\n";
  for (const auto& c : contexts) {
    for (std::size_t s = 0; s < c.truth.states.size(); ++s) {
      const Vector& x = c.truth.states[s];
      const Vector& y = c.truth.observations[s];
      for (Eigen::Index k = 0; k < std::max(x.size(), y.size()); ++k) {
        truth_out << c.dim << ',' << c.seed << ',' << s + 1 << ',' << k << ','
                  << (k < x.size() ? csv_number(x(k)) : "") << ',' << k << ','
                  << (k < y.size() ? csv_number(y(k)) : "") << '\n';
      }
    }
  }
  return outputs;
}

std::string run_readme(const ExperimentConfig& cfg) {
  std::ostringstream r;
  r << "# Run: " << to_string(cfg.experiment) << "\n\n"
    << "Generated by otbayes " << kVersion << ". Every CSV here is reproducible byte-for-byte from\n"
    << "`config.json` and the master seed in `manifest.json`; only the wall-clock fields of the\n"
    << "manifest change between runs.\n\n"
    << "## results.csv\n\nOne row per cell. Columns before `seed` identify the cell; the rest are metrics.\n\n";
  const bool is_static = cfg.experiment == ExperimentKind::static_squared || cfg.experiment == ExperimentKind::cod_sweep;
  if (is_static) {
    r << "| column | meaning |\n|---|---|\n"
      << "| lambda_w | observation noise std |\n| engine | Bayes-update engine |\n| N | particles |\n"
      << "| n | state dimension |\n| seed | seed index |\n"
      << "| mmd | unbiased squared MMD to exact posterior samples (Gaussian kernel, median bandwidth) |\n"
      << "| ess | effective sample size of the importance weights (sir), N otherwise |\n"
      << "| frac_pos | fraction of particles with positive first component |\n"
      << "| mean_pos, mean_neg | mean first component of the positive / non-positive particles |\n\n"
      << "`samples/` holds the updated ensembles (`x_k` = component k) and the exact reference samples.\n";
  } else {
    r << "| column | meaning |\n|---|---|\n"
      << "| engine | filter |\n| N | particles |\n| n | state dimension |\n| seed | seed index |\n"
      << "| mmd_avg | time-averaged squared MMD to the reference posterior over steps " << cfg.metrics_first_step << ".."
      << cfg.steps << " |\n"
      << "| mse_avg | time-averaged squared error of the posterior mean against the true state |\n"
      << "| ess_avg | time-averaged effective sample size (sir), N for other ensembles, nan for kalman |\n"
      << "| err_vs_kalman | time-averaged abs(mean - Kalman mean) / Kalman std (linear_gaussian_check only) |\n\n"
      << "`cells/<engine>_N<N>_n<n>_seed<s>.csv`: one row per step with `step,mmd,mse,ess,mean_k`.\n"
      << "`truth.csv`: simulated states and observations.\n";
  }
  r << "\nMMD uses at most " << cfg.reference_max_points << " strided points from each side.\n"
    << "`nan` marks metrics that do not apply to a cell.\n";
  return r.str();
}

}  // namespace

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int run_experiment(const ExperimentConfig& cfg_in, const RunOptions& options, std::ostream& log) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentConfig cfg = cfg_in;
  if (options.seed) cfg.master_seed = *options.seed;
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    log << "invalid config: " << e.what() << '\n';
    return 2;
  }
  fs::path out = options.out_dir.empty() ? fs::path(cfg.output_dir) : options.out_dir;
  if (out.empty()) {
    log << "no output directory given\n";
    return 2;
  }
  try {
    const std::string echo = config_to_json(cfg);
    const bool is_static = cfg.experiment == ExperimentKind::static_squared || cfg.experiment == ExperimentKind::cod_sweep;
    fs::create_directories(out / (is_static ? "samples" : "cells"));
    const std::vector<CellOutput> cells = is_static ? run_static(cfg, cfg.master_seed, out, options.jobs)
                                                    : run_filtering(cfg, cfg.master_seed, out, options.jobs);
    {
      std::ofstream csv(out / "results.csv", std::ios::trunc);
      csv << (is_static ? "lambda_w,engine,N,n,seed,mmd,ess,frac_pos,mean_pos,mean_neg\n"
                        : "engine,N,n,seed,mmd_avg,mse_avg,ess_avg,err_vs_kalman\n");
      for (const auto& c : cells) {
        for (std::size_t k = 0; k < c.fields.size(); ++k) csv << (k ? "," : "") << c.fields[k];
        csv << '\n';
      }
    }
    std::ofstream(out / "config.json", std::ios::trunc) << echo << '\n';
    std::ofstream(out / "README.md", std::ios::trunc) << run_readme(cfg);
    json manifest;
    manifest["library"] = "otbayes";
    manifest["version"] = kVersion;
    manifest["experiment"] = to_string(cfg.experiment);
    manifest["master_seed"] = cfg.master_seed;
    manifest["config_hash"] = git_blob_sha1(options.config_text.empty() ? echo : options.config_text);
    manifest["config"] = json::parse(echo);
    json cell_list = json::array();
    for (const auto& c : cells) cell_list.push_back(c.manifest);
    manifest["cells"] = cell_list;
    manifest["wall_seconds"] = seconds_since(start);
    std::ofstream(out / "manifest.json", std::ios::trunc) << manifest.dump(2) << '\n';
  } catch (const std::exception& e) {
    log << "run failed: " << e.what() << '\n';
    return 1;
  }
  log << "wrote " << out.string() << '\n';
  return 0;
}

void retain_heap() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

}  // namespace otbayes::bench
