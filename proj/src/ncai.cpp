#include "bnnlv/ncai.hpp"

#include <cmath>
#include <limits>

#include "bnnlv/errors.hpp"
#include "bnnlv/kernels.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

void NcaiConfig::validate() const {
  if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0) throw ConfigError("ncai: lambdas must be non-negative");
  if (!(eps_t > 0) || !(eps_x > 0) || !(eps_y > 0)) throw ConfigError("ncai: eps values must be positive");
  if (!(ridge > 0)) throw ConfigError("ncai: covariance ridge must be positive");
  if (!(exp_cap > 0)) throw ConfigError("ncai: exp_cap must be positive");
}

double penalty_exp(double t, double cap) { return t <= cap ? std::exp(t) : std::exp(cap) * (1.0 + t - cap); }
double penalty_exp_derivative(double t, double cap) { return std::exp(std::min(t, cap)); }

double hz_statistic(const Matrix& points, double ridge, Matrix* grad) {
  return kernels::omp::hz_statistic(points, ridge, grad);
}

double offdiag_penalty(const Matrix& points, Matrix* grad) {
  const std::size_t n = points.rows;
  const std::size_t k = points.cols;
  if (n < 2) throw PreconditionError("offdiag_penalty: need at least 2 rows");
  std::vector<double> mean(k, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < k; ++d) mean[d] += points(i, d);
  for (auto& m : mean) m /= static_cast<double>(n);
  Matrix cov(k, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b) cov(a, b) += (points(i, a) - mean[a]) * (points(i, b) - mean[b]);
  double ss = 0.0;
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = a + 1; b < k; ++b) {
      cov(a, b) /= static_cast<double>(n - 1);
      cov(b, a) = cov(a, b);
      ss += 2.0 * square(cov(a, b));
    }
  const double f = std::sqrt(ss);
  if (grad) {
    *grad = Matrix(n, k);
    if (f > 0.0) {
      const double coef = 2.0 / (static_cast<double>(n - 1) * f);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < k; ++a) {
          double g = 0.0;
          for (std::size_t b = 0; b < k; ++b)
            if (b != a) g += cov(a, b) * (points(i, b) - mean[b]);
          (*grad)(i, a) = coef * g;
        }
    }
  }
  return f;
}

double pearson_penalty(const Matrix& a, const Matrix& b, Matrix* grad) {
  const std::size_t n = a.rows;
  if (b.rows != n) throw ShapeError("pearson_penalty: row mismatch");
  if (n < 2) throw PreconditionError("pearson_penalty: need at least 2 rows");
  if (a.cols == 0 || b.cols == 0) throw ShapeError("pearson_penalty: empty column set");
  auto centered = [n](const Matrix& m, std::size_t j, std::vector<double>& out) {
    out.resize(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += m(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      out[i] = m(i, j) - mean;
      ss += out[i] * out[i];
    }
    return ss;
  };
  if (grad) *grad = Matrix(n, b.cols);
  const double pairs = static_cast<double>(a.cols * b.cols);
  std::vector<double> ca, cb;
  double total = 0.0;
  for (std::size_t kb = 0; kb < b.cols; ++kb) {
    const double ssb = centered(b, kb, cb);
    for (std::size_t da = 0; da < a.cols; ++da) {
      const double ssa = centered(a, da, ca);
      if (!(ssa > 0.0) || !(ssb > 0.0)) continue;
      double cross = 0.0;
      for (std::size_t i = 0; i < n; ++i) cross += ca[i] * cb[i];
      const double denom = std::sqrt(ssa * ssb);
      const double r = std::clamp(cross / denom, -1.0, 1.0);
      total += std::abs(r);
      if (grad && r != 0.0) {
        const double sgn = r > 0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < n; ++i)
          (*grad)(i, kb) += sgn / pairs * (ca[i] / denom - r * cb[i] / ssb);
      }
    }
  }
  return total / pairs;
}

NcaiTerms ncai_objective(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
                         const NcaiConfig& cfg, const ElboOptions& opts, MeanFieldPosterior* grad) {
  cfg.validate();
  NcaiTerms t;
  t.elbo = elbo_terms(q, x, y, priors, opts, grad);
  const std::size_t k = q.latent_dim();
  if (k == 0) return t;
  const double n = static_cast<double>(x.rows);
  const Matrix& mu = q.mu_z;
  Matrix g;
  if (cfg.lambda1 > 0.0) {
    t.hz = hz_statistic(mu, cfg.ridge, grad ? &g : nullptr);
    const double arg = t.hz / cfg.eps_t;
    t.hz_term = cfg.lambda1 * n * penalty_exp(arg, cfg.exp_cap);
    if (grad) {
      const double c = cfg.lambda1 * n * penalty_exp_derivative(arg, cfg.exp_cap) / cfg.eps_t;
      for (std::size_t i = 0; i < g.data.size(); ++i) grad->mu_z.data[i] += c * g.data[i];
    }
  }
  if (cfg.lambda2 > 0.0 && k > 1) {
    t.offdiag = offdiag_penalty(mu, grad ? &g : nullptr);
    t.offdiag_term = cfg.lambda2 * n * t.offdiag;
    if (grad)
      for (std::size_t i = 0; i < g.data.size(); ++i) grad->mu_z.data[i] += cfg.lambda2 * n * g.data[i];
  }
  if (cfg.lambda3 > 0.0) {
    Matrix gx, gy;
    t.pc_x = pearson_penalty(x, mu, grad ? &gx : nullptr);
    t.pc_y = pearson_penalty(y, mu, grad ? &gy : nullptr);
    const double arg = t.pc_x / cfg.eps_x + t.pc_y / cfg.eps_y;
    t.pc_term = cfg.lambda3 * n * penalty_exp(arg, cfg.exp_cap);
    if (grad) {
      const double c = cfg.lambda3 * n * penalty_exp_derivative(arg, cfg.exp_cap);
      for (std::size_t i = 0; i < gx.data.size(); ++i)
        grad->mu_z.data[i] += c * (gx.data[i] / cfg.eps_x + gy.data[i] / cfg.eps_y);
    }
  }
  return t;
}

std::vector<double> xavier_normal(const Architecture& arch, Rng& rng) {
  std::vector<double> w(arch.parameter_count());
  for (std::size_t l = 0; l < arch.num_layers(); ++l) {
    const LayerSlice s = arch.layer(l);
    const double sd = std::sqrt(2.0 / static_cast<double>(s.in + s.out));
    for (std::size_t i = 0; i < s.in * s.out; ++i) w[s.weight_offset + i] = sd * rng.normal();
    for (std::size_t o = 0; o < s.out; ++o) w[s.bias_offset + o] = sd * rng.normal();
  }
  return w;
}

MeanFieldPosterior warm_start(const Matrix& x, const Matrix& y, const Architecture& arch,
                              const WarmStartConfig& cfg, std::uint64_t seed) {
  arch.validate();
  const std::size_t n = x.rows;
  if (n == 0) throw PreconditionError("warm_start: empty data");
  Rng rng(seed);
  std::vector<double> w = xavier_normal(arch, rng);
  const Matrix zero_z(n, arch.input_dim_z);
  std::vector<double> g(w.size());
  AdamState state(w.size());
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    kernels::omp::mlp_sse_grad(arch, w, x, zero_z, y, g, nullptr);
    for (auto& v : g) v /= static_cast<double>(n);
    adam_step(w, g, state, cfg.adam);
  }
  MeanFieldPosterior q = MeanFieldPosterior::zeros(arch, n);
  q.mu_w = w;
  const std::vector<double> fresh = xavier_normal(arch, rng);
  for (std::size_t idx : arch.latent_input_weight_indices()) q.mu_w[idx] = fresh[idx];
  q.rho_w = xavier_normal(arch, rng);
  const double sd_z = std::sqrt(2.0 / static_cast<double>(n + arch.input_dim_z));
  for (auto& r : q.rho_z.data) r = sd_z * rng.normal();
  return q;
}

namespace {

// Returns -log_joint and fills its gradient in (w, z) order.
double neg_log_joint_grad(const Matrix& x, const Matrix& y, const PriorConfig& priors, const Architecture& arch,
                          std::span<const double> w, const Matrix& z, std::vector<double>& gw, Matrix& gz) {
  const double sse = kernels::omp::mlp_sse_grad(arch, w, x, z, y, gw, arch.input_dim_z ? &gz : nullptr);
  const double ce = 1.0 / (2.0 * priors.sigma2_eps);
  for (std::size_t i = 0; i < gw.size(); ++i) gw[i] = ce * gw[i] + w[i] / priors.sigma2_w;
  for (std::size_t i = 0; i < gz.data.size(); ++i) gz.data[i] = ce * gz.data[i] + z.data[i] / priors.sigma2_z;
  const double count = static_cast<double>(y.data.size());
  double sw = 0.0, sz = 0.0;
  for (double v : w) sw += v * v;
  for (double v : z.data) sz += v * v;
  const double ll = -0.5 * count * (kLog2Pi + std::log(priors.sigma2_eps)) - ce * sse;
  const double lw = -0.5 * static_cast<double>(w.size()) * (kLog2Pi + std::log(priors.sigma2_w)) -
                    0.5 * sw / priors.sigma2_w;
  const double lz = -0.5 * static_cast<double>(z.data.size()) * (kLog2Pi + std::log(priors.sigma2_z)) -
                    0.5 * sz / priors.sigma2_z;
  return -(ll + lw + lz);
}

}  // namespace

MapResult map_refine(const Matrix& x, const Matrix& y, const PriorConfig& priors, const Architecture& arch,
                     std::vector<double> w, Matrix z, const MapConfig& cfg) {
  priors.validate();
  if (w.size() != arch.parameter_count()) throw ShapeError("map_estimate: weight length mismatch");
  if (z.rows != x.rows || z.cols != arch.input_dim_z) throw ShapeError("map_estimate: latent shape mismatch");
  const std::size_t pw = w.size();
  std::vector<double> params(w);
  params.insert(params.end(), z.data.begin(), z.data.end());
  std::vector<double> grad(params.size()), gw(pw);
  Matrix gz(z.rows, z.cols);
  AdamState state(params.size());
  std::vector<double> trace;
  trace.reserve(cfg.max_epochs + 1);
  MapResult r;
  for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
    std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(pw), w.begin());
    std::copy(params.begin() + static_cast<std::ptrdiff_t>(pw), params.end(), z.data.begin());
    const double obj = neg_log_joint_grad(x, y, priors, arch, w, z, gw, gz);
    if (!std::isfinite(obj))
      throw DivergenceError("map_estimate: non-finite log joint at epoch " + std::to_string(e));
    trace.push_back(obj);
    if (trace.size() > cfg.window) {
      const double prev = trace[trace.size() - 1 - cfg.window];
      if (std::abs(prev - obj) <= cfg.tolerance * std::max(1.0, std::abs(obj))) {
        r.converged = true;
        break;
      }
    }
    std::copy(gw.begin(), gw.end(), grad.begin());
    std::copy(gz.data.begin(), gz.data.end(), grad.begin() + static_cast<std::ptrdiff_t>(pw));
    adam_step(params, grad, state, cfg.adam);
    r.epochs = e + 1;
  }
  std::copy(params.begin(), params.begin() + static_cast<std::ptrdiff_t>(pw), w.begin());
  std::copy(params.begin() + static_cast<std::ptrdiff_t>(pw), params.end(), z.data.begin());
  r.log_joint = log_joint(arch, w, z, x, y, priors);
  if (!std::isfinite(r.log_joint)) throw DivergenceError("map_estimate: non-finite final log joint");
  r.w = std::move(w);
  r.z = std::move(z);
  return r;
}

MapResult map_estimate(const Matrix& x, const Matrix& y, const PriorConfig& priors, const Architecture& arch,
                       MapInit init, const GroundTruth* truth, const MapConfig& cfg, std::uint64_t seed) {
  arch.validate();
  std::vector<double> w;
  Matrix z(x.rows, arch.input_dim_z);
  if (init == MapInit::GroundTruth) {
    if (!truth || truth->w_true.size() != arch.parameter_count() || truth->z_true.rows != x.rows ||
        truth->z_true.cols != arch.input_dim_z)
      throw PreconditionError("map_estimate: ground-truth init needs matching w_true and z_true");
    w = truth->w_true;
    z = truth->z_true;
  } else {
    Rng rng(seed);
    w = xavier_normal(arch, rng);
    const double sz = std::sqrt(priors.sigma2_z);
    for (auto& v : z.data) v = sz * rng.normal();
  }
  return map_refine(x, y, priors, arch, std::move(w), std::move(z), cfg);
}

}  // namespace bnnlv
