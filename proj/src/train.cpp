#include "bnnlv/train.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "bnnlv/kernels.hpp"
#include "bnnlv/metrics.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adam_step: parameter, gradient and state sizes differ");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw DivergenceError("adam_step: non-finite gradient at parameter index " + std::to_string(i));
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * grads[i];
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * grads[i] * grads[i];
    params[i] -= cfg.learning_rate * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + cfg.epsilon);
  }
}

std::string to_string(Method m) {
  switch (m) {
    case Method::BNN: return "bnn";
    case Method::BNNLV_BBB: return "bnnlv_bbb";
    case Method::NCAI: return "ncai";
  }
  return "?";
}

std::string to_string(InitScheme s) {
  switch (s) {
    case InitScheme::Default: return "default";
    case InitScheme::Random: return "random";
    case InitScheme::WarmStart: return "warm_start";
    case InitScheme::GroundTruth: return "ground_truth";
    case InitScheme::Map: return "map";
  }
  return "?";
}

Method parse_method(const std::string& s) {
  for (Method m : {Method::BNN, Method::BNNLV_BBB, Method::NCAI})
    if (s == to_string(m)) return m;
  throw ConfigError("unknown method '" + s + "' (expected bnn, bnnlv_bbb or ncai)");
}

InitScheme parse_init_scheme(const std::string& s) {
  for (InitScheme i :
       {InitScheme::Default, InitScheme::Random, InitScheme::WarmStart, InitScheme::GroundTruth, InitScheme::Map})
    if (s == to_string(i)) return i;
  throw ConfigError("unknown init scheme '" + s + "'");
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("train: epochs must be >= 1");
  if (restarts == 0) throw ConfigError("train: restarts must be >= 1");
  if (n_mc == 0) throw ConfigError("train: n_mc must be >= 1");
  if (!(adam.learning_rate > 0.0)) throw ConfigError("train: learning rate must be positive");
  if (window == 0) throw ConfigError("train: convergence window must be >= 1");
}

double eb_update_sz(const Matrix& mu_z, const Matrix& var_z, double alpha, double beta) {
  if (!mu_z.same_shape(var_z)) throw ShapeError("eb_update_sz: mean and variance shapes differ");
  const double denom = static_cast<double>(mu_z.cols) + 2.0 * alpha - 2.0;
  if (!(denom > 0.0)) throw DomainError("eb_update_sz: K + 2 alpha - 2 must be positive");
  if (mu_z.rows == 0) return 2.0 * beta / denom;
  double q = 0.0;
  for (std::size_t i = 0; i < mu_z.data.size(); ++i) q += var_z.data[i] + square(mu_z.data[i]);
  return (2.0 * beta + q / static_cast<double>(mu_z.rows)) / denom;
}

double eb_update_sw(std::span<const double> mu_w, std::span<const double> var_w, double alpha, double beta) {
  if (mu_w.size() != var_w.size()) throw ShapeError("eb_update_sw: mean and variance lengths differ");
  const double denom = static_cast<double>(mu_w.size()) + 2.0 * alpha - 2.0;
  if (!(denom > 0.0)) throw DomainError("eb_update_sw: H + 2 alpha - 2 must be positive");
  double q = 0.0;
  for (std::size_t i = 0; i < mu_w.size(); ++i) q += var_w[i] + square(mu_w[i]);
  return (2.0 * beta + q) / denom;
}

double eb_hyper_term(double s, double alpha, double beta) { return (alpha - 1.0) * std::log(s) + beta / s; }

double training_objective(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
                          const NcaiConfig& ncai, Method method, const ElboOptions& opts, MeanFieldPosterior* grad,
                          NcaiTerms* terms) {
  NcaiTerms t;
  if (method == Method::NCAI) {
    t = ncai_objective(q, x, y, priors, ncai, opts, grad);
  } else {
    t.elbo = elbo_terms(q, x, y, priors, opts, grad);
  }
  double obj = t.objective();
  if (priors.eb_enabled_w) obj += eb_hyper_term(priors.sigma2_w, priors.ig_alpha, priors.ig_beta);
  if (priors.eb_enabled_z && q.latent_dim() > 0)
    obj += static_cast<double>(x.rows) * eb_hyper_term(priors.sigma2_z, priors.ig_alpha, priors.ig_beta);
  if (terms) *terms = t;
  return obj;
}

namespace {

constexpr std::uint64_t kInitStream = 0x1000;
constexpr std::uint64_t kPhaseStream = 0x2000;
constexpr std::uint64_t kEpochStream = 0x10000;

void randomize(MeanFieldPosterior& q, Rng& rng) {
  q.mu_w = xavier_normal(q.arch, rng);
  q.rho_w = xavier_normal(q.arch, rng);
  const double sd = std::sqrt(2.0 / static_cast<double>(q.mu_z.rows + q.mu_z.cols));
  for (auto& v : q.mu_z.data) v = sd * rng.normal();
  for (auto& v : q.rho_z.data) v = sd * rng.normal();
}

void randomize_scales(MeanFieldPosterior& q, Rng& rng) {
  q.rho_w = xavier_normal(q.arch, rng);
  const double sd = std::sqrt(2.0 / static_cast<double>(q.rho_z.rows + q.rho_z.cols));
  for (auto& v : q.rho_z.data) v = sd * rng.normal();
}

void apply_eb(const MeanFieldPosterior& q, PriorConfig& priors) {
  if (priors.eb_enabled_w)
    priors.sigma2_w = eb_update_sw(q.mu_w, q.weight_variances(), priors.ig_alpha, priors.ig_beta);
  if (priors.eb_enabled_z && q.latent_dim() > 0)
    priors.sigma2_z = eb_update_sz(q.mu_z, q.latent_variances(), priors.ig_alpha, priors.ig_beta);
}

// Mask selecting the rho entries of the packed layout.
std::vector<char> scale_mask(const MeanFieldPosterior& q) {
  std::vector<char> mask(q.parameter_count(), 0);
  const std::size_t p = q.mu_w.size();
  const std::size_t z = q.mu_z.data.size();
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(p), mask.begin() + static_cast<std::ptrdiff_t>(2 * p), 1);
  std::fill(mask.begin() + static_cast<std::ptrdiff_t>(2 * p + z), mask.end(), 1);
  return mask;
}

class Runner {
 public:
  Runner(const Matrix& x, const Matrix& y, const NcaiConfig& ncai, const TrainConfig& cfg, Method method,
         std::uint64_t seed)
      : x_(x), y_(y), ncai_(ncai), cfg_(cfg), method_(method), seed_(seed) {}

  // Runs `epochs` Adam steps; with scales_only the means are frozen. Stops early on convergence when requested.
  void run(MeanFieldPosterior& q, PriorConfig& priors, std::size_t epochs, bool scales_only, bool stop_on_converge,
           TrainHistory* history, std::uint64_t stream) {
    std::vector<double> flat = q.pack();
    AdamState state(flat.size());
    const std::vector<char> mask = scales_only ? scale_mask(q) : std::vector<char>();
    MeanFieldPosterior grad;
    std::vector<double> trace;
    std::vector<std::size_t> batch;
    Rng batch_rng(derive_seed(seed_, stream + 1));
    for (std::size_t e = 0; e < epochs; ++e) {
      ElboOptions opts;
      opts.n_mc = cfg_.n_mc;
      opts.seed = derive_seed(seed_, stream + kEpochStream + e);
      if (cfg_.batch_size > 0 && cfg_.batch_size < x_.rows) {
        batch.resize(x_.rows);
        std::iota(batch.begin(), batch.end(), std::size_t{0});
        std::shuffle(batch.begin(), batch.end(), batch_rng.engine());
        batch.resize(cfg_.batch_size);
        std::sort(batch.begin(), batch.end());
        opts.batch = batch;
      }
      NcaiTerms terms;
      const double obj = training_objective(q, x_, y_, priors, ncai_, method_, opts, &grad, &terms);
      if (history) {
        history->objective.push_back(obj);
        history->elbo.push_back(terms.elbo.elbo());
        history->hz.push_back(terms.hz);
        history->offdiag.push_back(terms.offdiag);
        history->pc_x.push_back(terms.pc_x);
        history->pc_y.push_back(terms.pc_y);
        history->s_w.push_back(priors.sigma2_w);
        history->s_z.push_back(priors.sigma2_z);
      }
      if (!std::isfinite(obj))
        throw TrainingDivergence("train: non-finite objective at epoch " + std::to_string(e),
                                 history ? *history : TrainHistory{});
      std::vector<double> g = grad.pack();
      if (!mask.empty())
        for (std::size_t i = 0; i < g.size(); ++i)
          if (!mask[i]) g[i] = 0.0;
      try {
        adam_step(flat, g, state, cfg_.adam);
      } catch (const DivergenceError& err) {
        throw TrainingDivergence(std::string("train: ") + err.what() + " at epoch " + std::to_string(e),
                                 history ? *history : TrainHistory{});
      }
      q.unpack(flat);
      apply_eb(q, priors);
      if (stop_on_converge) {
        trace.push_back(obj);
        if (trace.size() > cfg_.window) {
          const double prev = trace[trace.size() - 1 - cfg_.window];
          if (std::abs(prev - obj) <= cfg_.tolerance * std::max(1.0, std::abs(obj))) break;
        }
      }
    }
  }

 private:
  const Matrix& x_;
  const Matrix& y_;
  const NcaiConfig& ncai_;
  const TrainConfig& cfg_;
  Method method_;
  std::uint64_t seed_;
};

}  // namespace

TrainResult train(const DataSet& data, const Architecture& arch_in, const PriorConfig& priors_in,
                  const NcaiConfig& ncai, const TrainConfig& cfg, Method method, std::uint64_t seed) {
  cfg.validate();
  priors_in.validate();
  if (method == Method::NCAI) ncai.validate();
  Architecture arch = arch_in;
  if (method == Method::BNN) arch.input_dim_z = 0;
  arch.validate();
  const DataSet tr = data.train_part();
  if (tr.size() == 0) throw PreconditionError("train: empty training split");
  if (tr.input_dim() != arch.input_dim_x || tr.output_dim() != arch.output_dim)
    throw ShapeError("train: data dimensions do not match the architecture");

  PriorConfig priors = priors_in;
  if (arch.input_dim_z == 0) priors.eb_enabled_z = false;
  Rng init_rng(derive_seed(seed, kInitStream));
  if (priors.eb_enabled_w) priors.sigma2_w = 1.0 / init_rng.gamma(priors.ig_alpha, 1.0 / priors.ig_beta);
  if (priors.eb_enabled_z) priors.sigma2_z = 1.0 / init_rng.gamma(priors.ig_alpha, 1.0 / priors.ig_beta);

  InitScheme init = cfg.init;
  if (init == InitScheme::Default) init = method == Method::NCAI ? InitScheme::WarmStart : InitScheme::Random;
  if ((init == InitScheme::GroundTruth || init == InitScheme::Map) && arch.input_dim_z == 0)
    throw ConfigError("train: ground-truth and MAP inits need a latent input");

  MeanFieldPosterior q = MeanFieldPosterior::zeros(arch, tr.size());
  bool variance_phase = false;
  switch (init) {
    case InitScheme::Default:
    case InitScheme::Random:
      randomize(q, init_rng);
      break;
    case InitScheme::WarmStart:
      q = warm_start(tr.x, tr.y, arch, cfg.warm, derive_seed(seed, kInitStream + 1));
      break;
    case InitScheme::GroundTruth:
    case InitScheme::Map: {
      const GroundTruth* truth = tr.truth ? &*tr.truth : nullptr;
      if (!truth || truth->w_true.size() != arch.parameter_count() || truth->z_true.rows != tr.size() ||
          truth->z_true.cols != arch.input_dim_z)
        throw PreconditionError("train: " + to_string(init) + " init needs a distilled ground truth matching arch");
      if (init == InitScheme::GroundTruth) {
        q.mu_w = truth->w_true;
        q.mu_z = truth->z_true;
      } else {
        Matrix z(tr.size(), arch.input_dim_z);
        const double sz = std::sqrt(priors_in.sigma2_z);
        for (auto& v : z.data) v = sz * init_rng.normal();
        const MapResult m = map_refine(tr.x, tr.y, priors_in, arch, truth->w_true, std::move(z), cfg.map);
        q.mu_w = m.w;
        q.mu_z = m.z;
      }
      randomize_scales(q, init_rng);
      variance_phase = true;
      break;
    }
  }

  TrainResult result;
  result.method = method;
  Runner runner(tr.x, tr.y, ncai, cfg, method, seed);
  if (variance_phase && cfg.variance_phase_epochs > 0)
    runner.run(q, priors, cfg.variance_phase_epochs, true, true, nullptr, kPhaseStream);
  runner.run(q, priors, cfg.epochs, false, false, &result.history, 0);
  result.q = std::move(q);
  result.priors = priors;
  return result;
}

std::size_t restart_select(const std::vector<TrainResult>& candidates, const Matrix& x_val, const Matrix& y_val,
                           std::size_t samples, std::uint64_t seed, std::vector<double>* scores) {
  if (candidates.empty()) throw PreconditionError("restart_select: no candidates");
  std::vector<double> s(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const TrainResult& c = candidates[i];
    s[i] = avg_marginal_ll(c.q.arch, c.q.weights(), c.priors, x_val, y_val, samples, seed);
  }
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  bool found = false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i])) continue;
    if (!found || s[i] > best_score) {
      best = i;
      best_score = s[i];
      found = true;
    }
  }
  if (scores) *scores = s;
  return best;
}

RestartOutcome train_restarts(const DataSet& data, const Architecture& arch, const PriorConfig& priors,
                              const NcaiConfig& ncai, const TrainConfig& cfg, Method method, std::uint64_t seed,
                              std::size_t val_samples) {
  cfg.validate();
  const std::size_t r = cfg.restarts;
  RestartOutcome out;
  out.runs.resize(r);
  out.failures.resize(r);
  const int threads = cfg.jobs > 0 ? cfg.jobs : omp_get_max_threads();
  const auto count = static_cast<std::ptrdiff_t>(r);
#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      out.runs[idx] = train(data, arch, priors, ncai, cfg, method, derive_seed(seed, idx));
    } catch (const DivergenceError& e) {
      out.failures[idx] = e.what();
    }
  }
  const DataSet val = data.split.val.empty() ? data.train_part() : data.val_part();
  std::vector<TrainResult> ok;
  std::vector<std::size_t> map;
  for (std::size_t i = 0; i < r; ++i)
    if (out.runs[i]) {
      ok.push_back(*out.runs[i]);
      map.push_back(i);
    }
  if (ok.empty()) throw DivergenceError("train_restarts: every restart diverged; first: " + out.failures[0]);
  std::vector<double> scores;
  const std::size_t best = restart_select(ok, val.x, val.y, val_samples, derive_seed(seed, 0xFFFF), &scores);
  out.val_ll.assign(r, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < ok.size(); ++i) out.val_ll[map[i]] = scores[i];
  out.best = map[best];
  return out;
}

DataSet distill_ground_truth(const DataSet& data, const Architecture& arch, const DistillConfig& cfg,
                             std::uint64_t seed) {
  if (!data.truth || data.truth->z_true.cols == 0)
    throw PreconditionError("distill_ground_truth: data set has no latent ground truth");
  arch.validate();
  if (arch.input_dim_x != data.input_dim() || arch.input_dim_z != data.truth->z_true.cols || arch.output_dim != 1)
    throw ShapeError("distill_ground_truth: architecture does not match the data set");
  const std::string name = data.truth->function;
  const SyntheticInfo info = synthetic_info(name);
  const XSampler sampler = parse_x_sampler(info.x_sampler);
  Rng rng(seed);
  const std::size_t n = data.size();
  const std::size_t m = n + cfg.fresh_points;
  Matrix fx(m, 1), fz(m, 1), fy(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    const bool own = i < n;
    fx(i, 0) = own ? data.x(i, 0) : sampler.draw(rng);
    fz(i, 0) = own ? data.truth->z_true(i, 0) : rng.normal(0.0, std::sqrt(info.sigma2_z));
    fy(i, 0) = synthetic_function(name, fx(i, 0), fz(i, 0));
  }
  std::vector<double> w = xavier_normal(arch, rng);
  std::vector<double> g(w.size());
  AdamState state(w.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    kernels::omp::mlp_sse_grad(arch, w, fx, fz, fy, g, nullptr);
    for (auto& v : g) v /= static_cast<double>(m);
    adam_step(w, g, state, cfg.adam);
  }
  DataSet out = data;
  const Matrix f = kernels::omp::mlp_predict(arch, w, data.x, data.truth->z_true);
  const double se = std::sqrt(info.sigma2_eps);
  for (std::size_t i = 0; i < n; ++i) out.y(i, 0) = f(i, 0) + se * rng.normal();
  out.truth->function = "network";
  out.truth->w_true = std::move(w);
  out.truth->w_arch = arch;
  return out;
}

}  // namespace bnnlv
