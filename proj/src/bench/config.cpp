#include "otbayes/bench/config.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <fstream>
#include <iterator>
#include <set>
#include <sstream>
#include <stdexcept>

namespace otbayes::bench {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  if (!obj.is_object()) throw std::invalid_argument(where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key)) throw std::invalid_argument("unknown config key '" + where + "." + key + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::static_squared: return "static_squared";
    case ExperimentKind::dynamic_squared: return "dynamic_squared";
    case ExperimentKind::lorenz63: return "lorenz63";
    case ExperimentKind::cod_sweep: return "cod_sweep";
    case ExperimentKind::linear_gaussian_check: return "linear_gaussian_check";
  }
  return "unknown";
}

ExperimentKind parse_experiment_kind(const std::string& name) {
  for (ExperimentKind k : {ExperimentKind::static_squared, ExperimentKind::dynamic_squared, ExperimentKind::lorenz63,
                           ExperimentKind::cod_sweep, ExperimentKind::linear_gaussian_check}) {
    if (to_string(k) == name) return k;
  }
  throw std::invalid_argument("unknown experiment '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (engines.empty()) throw std::invalid_argument("engines: list must not be empty");
  if (particles.empty()) throw std::invalid_argument("particles: list must not be empty");
  for (auto n : particles) {
    if (n < 2) throw std::invalid_argument("particles: every N must be >= 2");
  }
  if (dims.empty()) throw std::invalid_argument("dims: list must not be empty");
  for (auto d : dims) {
    if (d < 1) throw std::invalid_argument("dims: every dimension must be >= 1");
  }
  if (seeds.empty()) throw std::invalid_argument("seeds: list must not be empty");
  if (steps < 1) throw std::invalid_argument("steps: must be >= 1");
  if (metrics_first_step < 1 || metrics_first_step > steps) {
    throw std::invalid_argument("metrics.first_step: must be within 1..steps");
  }
  if (reference_particles < 2 || reference_max_points < 2) throw std::invalid_argument("reference: counts must be >= 2");
  for (double l : lambda_w) {
    if (!(l > 0.0)) throw std::invalid_argument("model.lambda_w: values must be > 0");
  }
  if (lambda_w.empty()) throw std::invalid_argument("model.lambda_w: list must not be empty");
  if (!(lambda > 0.0)) throw std::invalid_argument("model.lambda: must be > 0");
  filter.validate();

  const bool is_static = experiment == ExperimentKind::static_squared || experiment == ExperimentKind::cod_sweep;
  for (FilterKind k : engines) {
    if (k == FilterKind::kalman && experiment != ExperimentKind::linear_gaussian_check) {
      throw std::invalid_argument("engine 'kalman' needs the linear_gaussian_check experiment");
    }
    if (k == FilterKind::fpf_static) {
      const bool scalar_obs = experiment == ExperimentKind::linear_gaussian_check ||
                              ((is_static || experiment == ExperimentKind::dynamic_squared) && dims == std::vector<Eigen::Index>{1});
      if (!scalar_obs) throw std::invalid_argument("engine 'fpf_static' needs a scalar observation (dims = [1])");
    }
    if (k == FilterKind::open_loop && is_static) {
      throw std::invalid_argument("engine 'open_loop' is only meaningful for filtering experiments");
    }
  }
  if (is_static && steps != 1) throw std::invalid_argument("steps: static experiments use a single update (steps = 1)");
  if (experiment == ExperimentKind::lorenz63 && dims != std::vector<Eigen::Index>{3}) {
    throw std::invalid_argument("dims: lorenz63 has state dimension 3");
  }
  if (experiment == ExperimentKind::linear_gaussian_check && dims != std::vector<Eigen::Index>{1}) {
    throw std::invalid_argument("dims: linear_gaussian_check is scalar (dims = [1])");
  }
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"experiment", "engines", "particles", "dims", "steps", "seeds", "master_seed", "model", "reference",
                     "metrics", "train", "fpf", "write_samples", "output_dir"},
                 "config");
  ExperimentConfig c;
  if (!j.contains("experiment")) throw std::invalid_argument("config: 'experiment' is required");
  c.experiment = parse_experiment_kind(j.at("experiment").get<std::string>());
  if (c.experiment == ExperimentKind::lorenz63) c.dims = {3};
  if (c.experiment == ExperimentKind::cod_sweep) {
    c.dims = {1, 2, 4, 8};
    c.sample_y = true;
  }
  std::vector<std::string> engines;
  read(j, "engines", engines);
  for (const auto& e : engines) c.engines.push_back(parse_filter_kind(e));
  read(j, "particles", c.particles);
  read(j, "dims", c.dims);
  read(j, "steps", c.steps);
  read(j, "seeds", c.seeds);
  read(j, "master_seed", c.master_seed);
  read(j, "write_samples", c.write_samples);
  read(j, "output_dir", c.output_dir);

  if (j.contains("model")) {
    const json& m = j.at("model");
    reject_unknown(m, {"lambda_w", "y", "sample_y", "alpha", "lambda", "lorenz", "linear"}, "model");
    read(m, "lambda_w", c.lambda_w);
    read(m, "y", c.y_value);
    read(m, "sample_y", c.sample_y);
    read(m, "alpha", c.alpha);
    read(m, "lambda", c.lambda);
    if (m.contains("lorenz")) {
      const json& l = m.at("lorenz");
      reject_unknown(l, {"sigma", "rho", "beta", "dt", "steps_per_observation", "obs_noise_std", "process_noise_std",
                         "prior_mean", "prior_std", "observed_components"},
                     "model.lorenz");
      read(l, "sigma", c.lorenz.sigma);
      read(l, "rho", c.lorenz.rho);
      read(l, "beta", c.lorenz.beta);
      read(l, "dt", c.lorenz.dt_integration);
      read(l, "steps_per_observation", c.lorenz.steps_per_observation);
      read(l, "obs_noise_std", c.lorenz.obs_noise_std);
      read(l, "process_noise_std", c.lorenz.process_noise_std);
      read(l, "prior_std", c.lorenz.prior_std);
      read(l, "observed_components", c.lorenz.observed_components);
      if (l.contains("prior_mean")) {
        const auto v = l.at("prior_mean").get<std::vector<double>>();
        c.lorenz.prior_mean = Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
    }
    if (m.contains("linear")) {
      const json& l = m.at("linear");
      reject_unknown(l, {"a", "q", "h", "r", "m0", "s0"}, "model.linear");
      read(l, "a", c.linear.a);
      read(l, "q", c.linear.q);
      read(l, "h", c.linear.h);
      read(l, "r", c.linear.r);
      read(l, "m0", c.linear.m0);
      read(l, "s0", c.linear.s0);
    }
  }
  if (j.contains("reference")) {
    const json& r = j.at("reference");
    reject_unknown(r, {"particles", "max_points"}, "reference");
    read(r, "particles", c.reference_particles);
    read(r, "max_points", c.reference_max_points);
  }
  if (j.contains("metrics")) {
    const json& r = j.at("metrics");
    reject_unknown(r, {"first_step"}, "metrics");
    read(r, "first_step", c.metrics_first_step);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    reject_unknown(t, {"outer_iters", "inner_steps", "lr_f", "lr_T", "lr_final_fraction", "batch_size", "hidden_width",
                       "num_residual_blocks", "activation", "warm_start", "warm_start_fraction", "resample", "cost_pairing"},
                   "train");
    auto& tc = c.filter.train;
    read(t, "outer_iters", tc.outer_iters);
    read(t, "inner_steps", tc.inner_steps_per_outer);
    read(t, "lr_f", tc.lr_f);
    read(t, "lr_T", tc.lr_T);
    read(t, "lr_final_fraction", tc.lr_final_fraction);
    read(t, "batch_size", tc.batch_size);
    read(t, "hidden_width", c.filter.hidden_width);
    read(t, "num_residual_blocks", c.filter.num_residual_blocks);
    read(t, "warm_start", c.filter.warm_start);
    read(t, "warm_start_fraction", c.filter.warm_start_fraction);
    read(t, "resample", c.filter.resample_ot);
    if (t.contains("activation")) {
      const auto a = t.at("activation").get<std::string>();
      if (a == "relu") c.filter.activation = diffnet::Activation::relu;
      else if (a == "tanh") c.filter.activation = diffnet::Activation::tanh;
      else throw std::invalid_argument("train.activation: expected relu or tanh");
    }
    if (t.contains("cost_pairing")) {
      const auto p = t.at("cost_pairing").get<std::string>();
      if (p == "shuffled") tc.cost_pairing = CostPairing::shuffled;
      else if (p == "displayed") tc.cost_pairing = CostPairing::displayed;
      else throw std::invalid_argument("train.cost_pairing: expected shuffled or displayed");
    }
  }
  if (j.contains("fpf")) {
    const json& f = j.at("fpf");
    reject_unknown(f, {"method", "epsilon", "steps", "max_iters"}, "fpf");
    if (f.contains("method")) {
      const auto m = f.at("method").get<std::string>();
      if (m == "constant") c.filter.fpf_gain.method = GainMethod::constant;
      else if (m == "diffusion_map") c.filter.fpf_gain.method = GainMethod::diffusion_map;
      else throw std::invalid_argument("fpf.method: expected constant or diffusion_map");
    }
    read(f, "epsilon", c.filter.fpf_gain.epsilon);
    read(f, "max_iters", c.filter.fpf_gain.max_iters);
    read(f, "steps", c.filter.fpf_steps);
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot read config " + path.string());
  return parse_config(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment"] = to_string(c.experiment);
  std::vector<std::string> engines;
  for (FilterKind k : c.engines) engines.push_back(to_string(k));
  j["engines"] = engines;
  j["particles"] = c.particles;
  j["dims"] = c.dims;
  j["steps"] = c.steps;
  j["seeds"] = c.seeds;
  j["master_seed"] = c.master_seed;
  j["write_samples"] = c.write_samples;
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir;
  std::vector<double> prior_mean(c.lorenz.prior_mean.data(), c.lorenz.prior_mean.data() + c.lorenz.prior_mean.size());
  j["model"] = {{"lambda_w", c.lambda_w},
                {"y", c.y_value},
                {"sample_y", c.sample_y},
                {"alpha", c.alpha},
                {"lambda", c.lambda},
                {"lorenz",
                 {{"sigma", c.lorenz.sigma},
                  {"rho", c.lorenz.rho},
                  {"beta", c.lorenz.beta},
                  {"dt", c.lorenz.dt_integration},
                  {"steps_per_observation", c.lorenz.steps_per_observation},
                  {"obs_noise_std", c.lorenz.obs_noise_std},
                  {"process_noise_std", c.lorenz.process_noise_std},
                  {"prior_mean", prior_mean},
                  {"prior_std", c.lorenz.prior_std},
                  {"observed_components", c.lorenz.observed_components}}},
                {"linear",
                 {{"a", c.linear.a}, {"q", c.linear.q}, {"h", c.linear.h}, {"r", c.linear.r}, {"m0", c.linear.m0},
                  {"s0", c.linear.s0}}}};
  j["reference"] = {{"particles", c.reference_particles}, {"max_points", c.reference_max_points}};
  j["metrics"] = {{"first_step", c.metrics_first_step}};
  const auto& tc = c.filter.train;
  j["train"] = {{"outer_iters", tc.outer_iters},
                {"inner_steps", tc.inner_steps_per_outer},
                {"lr_f", tc.lr_f},
                {"lr_T", tc.lr_T},
                {"lr_final_fraction", tc.lr_final_fraction},
                {"batch_size", tc.batch_size},
                {"hidden_width", c.filter.hidden_width},
                {"num_residual_blocks", c.filter.num_residual_blocks},
                {"activation", c.filter.activation == diffnet::Activation::relu ? "relu" : "tanh"},
                {"warm_start", c.filter.warm_start},
                {"warm_start_fraction", c.filter.warm_start_fraction},
                {"resample", c.filter.resample_ot},
                {"cost_pairing", tc.cost_pairing == CostPairing::shuffled ? "shuffled" : "displayed"}};
  j["fpf"] = {{"method", c.filter.fpf_gain.method == GainMethod::constant ? "constant" : "diffusion_map"},
              {"epsilon", c.filter.fpf_gain.epsilon},
              {"max_iters", c.filter.fpf_gain.max_iters},
              {"steps", c.filter.fpf_steps}};
  return j.dump(2);
}

std::string git_blob_sha1(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + std::string(1, '\0');
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("sha1: cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("sha1: digest failed");
  std::ostringstream hex;
  static const char* digits = "0123456789abcdef";
  for (unsigned int i = 0; i < len; ++i) hex << digits[digest[i] >> 4] << digits[digest[i] & 0xF];
  return hex.str();
}

}  // namespace otbayes::bench
