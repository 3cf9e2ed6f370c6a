#include "bnnlv/metrics.hpp"

#include <algorithm>
#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "bnnlv/errors.hpp"
#include "bnnlv/kernels.hpp"
#include "bnnlv/ncai.hpp"

namespace bnnlv {

namespace {

using boost::math::digamma;

void check_single_output(const Architecture& arch, const Matrix& x) {
  if (arch.output_dim != 1) throw ShapeError("metrics: single-output models only");
  if (x.cols != arch.input_dim_x) throw ShapeError("metrics: x dimension mismatch");
}

// Calls fn(s, f) with the S x N noise-free outputs of each (W, z) draw.
template <class Fn>
void for_each_draw(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors, const Matrix& x,
                   std::size_t samples, Rng& rng, Fn&& fn) {
  const double sz = std::sqrt(priors.sigma2_z);
  Matrix z(x.rows, arch.input_dim_z);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::vector<double> w = sample_weights(q, rng);
    for (auto& v : z.data) v = sz * rng.normal();
    fn(s, kernels::omp::mlp_predict(arch, w, x, z));
  }
}

double log_gauss(double y, double mean, double var) {
  return -0.5 * (kLog2Pi + std::log(var)) - 0.5 * square(y - mean) / var;
}

double log_add_exp(double a, double b) {
  const double m = std::max(a, b);
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

Matrix jitter_columns(const Matrix& m, Rng& rng, bool unit_variance) {
  Matrix out = m;
  const double n = static_cast<double>(m.rows);
  for (std::size_t j = 0; j < m.cols; ++j) {
    if (unit_variance) {
      double mean = 0.0;
      for (std::size_t i = 0; i < m.rows; ++i) mean += m(i, j);
      mean /= n;
      double ss = 0.0;
      for (std::size_t i = 0; i < m.rows; ++i) ss += square(m(i, j) - mean);
      const double sd = std::sqrt(ss / n);
      if (sd > 0.0)
        for (std::size_t i = 0; i < m.rows; ++i) out(i, j) = m(i, j) / sd;
    }
    double mag = 0.0;
    for (std::size_t i = 0; i < m.rows; ++i) mag += std::abs(out(i, j));
    const double amp = 1e-10 * std::max(1.0, mag / n);
    for (std::size_t i = 0; i < m.rows; ++i) out(i, j) += amp * rng.normal();
  }
  return out;
}

}  // namespace

Matrix predictive_samples(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                          const Matrix& x, std::size_t samples, std::uint64_t seed, bool with_noise) {
  check_single_output(arch, x);
  Rng rng(seed);
  Matrix out(samples, x.rows);
  const double se = std::sqrt(priors.sigma2_eps);
  for_each_draw(arch, q, priors, x, samples, rng, [&](std::size_t s, const Matrix& f) {
    for (std::size_t n = 0; n < x.rows; ++n) out(s, n) = f.data[n] + (with_noise ? se * rng.normal() : 0.0);
  });
  return out;
}

double avg_marginal_ll(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                       const Matrix& x, const Matrix& y, std::size_t samples, std::uint64_t seed) {
  check_single_output(arch, x);
  if (samples == 0) throw PreconditionError("avg_marginal_ll: need at least one sample");
  if (y.rows != x.rows || y.cols != 1) throw ShapeError("avg_marginal_ll: y shape mismatch");
  Rng rng(seed);
  double acc = 0.0;
  for_each_draw(arch, q, priors, x, samples, rng, [&](std::size_t, const Matrix& f) {
    for (std::size_t n = 0; n < x.rows; ++n) acc += log_gauss(y.data[n], f.data[n], priors.sigma2_eps);
  });
  return acc / static_cast<double>(samples * x.rows);
}

double avg_marginal_ll_logmeanexp(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                                  const Matrix& x, const Matrix& y, std::size_t samples, std::uint64_t seed) {
  check_single_output(arch, x);
  if (samples == 0) throw PreconditionError("avg_marginal_ll: need at least one sample");
  if (y.rows != x.rows || y.cols != 1) throw ShapeError("avg_marginal_ll: y shape mismatch");
  Rng rng(seed);
  std::vector<double> lse(x.rows, -std::numeric_limits<double>::infinity());
  for_each_draw(arch, q, priors, x, samples, rng, [&](std::size_t, const Matrix& f) {
    for (std::size_t n = 0; n < x.rows; ++n) lse[n] = log_add_exp(lse[n], log_gauss(y.data[n], f.data[n], priors.sigma2_eps));
  });
  double acc = 0.0;
  for (double v : lse) acc += v - std::log(static_cast<double>(samples));
  return acc / static_cast<double>(x.rows);
}

double predictive_rmse(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                       const Matrix& x, const Matrix& y, std::size_t samples, std::uint64_t seed) {
  check_single_output(arch, x);
  if (samples == 0) throw PreconditionError("predictive_rmse: need at least one sample");
  if (y.rows != x.rows || y.cols != 1) throw ShapeError("predictive_rmse: y shape mismatch");
  Rng rng(seed);
  std::vector<double> mean(x.rows, 0.0);
  for_each_draw(arch, q, priors, x, samples, rng, [&](std::size_t, const Matrix& f) {
    for (std::size_t n = 0; n < x.rows; ++n) mean[n] += f.data[n];
  });
  double sse = 0.0;
  for (std::size_t n = 0; n < x.rows; ++n) sse += square(y.data[n] - mean[n] / static_cast<double>(samples));
  return std::sqrt(sse / static_cast<double>(x.rows));
}

std::optional<double> recon_mse(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, std::size_t samples,
                                std::uint64_t seed) {
  if (q.latent_dim() == 0) return std::nullopt;
  if (q.num_points() != x.rows || y.rows != x.rows) throw ShapeError("recon_mse: posterior rows do not match data");
  if (samples == 0) throw PreconditionError("recon_mse: need at least one sample");
  Rng rng(seed);
  Matrix z(x.rows, q.latent_dim());
  double sse = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    const std::vector<double> w = sample_weights(q.weights(), rng);
    for (std::size_t i = 0; i < z.data.size(); ++i)
      z.data[i] = gaussian_reparam(q.mu_z.data[i], q.rho_z.data[i], rng.normal());
    const Matrix f = kernels::omp::mlp_predict(q.arch, w, x, z);
    for (std::size_t i = 0; i < f.data.size(); ++i) sse += square(y.data[i] - f.data[i]);
  }
  return sse / static_cast<double>(samples * x.rows);
}

double percentile_sorted(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw PreconditionError("percentile: empty sample");
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

IntervalScore picp_mpiw(const Matrix& samples, std::span<const double> y, double level) {
  if (samples.cols != y.size()) throw ShapeError("picp_mpiw: one sample column per target is required");
  if (samples.rows < 100) throw PreconditionError("picp_mpiw: need at least 100 samples per point");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("picp_mpiw: level must lie in (0, 1)");
  const double lo_q = 50.0 * (1.0 - level);
  const double hi_q = 100.0 - lo_q;
  std::vector<double> col;
  std::size_t inside = 0;
  double width = 0.0;
  for (std::size_t n = 0; n < y.size(); ++n) {
    col = samples.column(n);
    std::sort(col.begin(), col.end());
    const double lo = percentile_sorted(col, lo_q);
    const double hi = percentile_sorted(col, hi_q);
    inside += (y[n] >= lo && y[n] <= hi);
    width += hi - lo;
  }
  const double n = static_cast<double>(y.size());
  return {100.0 * static_cast<double>(inside) / n, width / n};
}

double kraskov_mi(const Matrix& x, const Matrix& y, std::size_t k, std::uint64_t seed) {
  if (x.rows != y.rows) throw ShapeError("kraskov_mi: row mismatch");
  if (x.rows <= k) throw PreconditionError("kraskov_mi: need N > k");
  Rng rng(seed);
  const Matrix xj = jitter_columns(x, rng, true);
  const Matrix yj = jitter_columns(y, rng, true);
  const kernels::NeighborCounts c = kernels::omp::ksg_counts(xj, yj, k);
  const std::size_t n = x.rows;
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    acc += digamma(static_cast<double>(c.nx[i] + 1)) + digamma(static_cast<double>(c.ny[i] + 1));
  return digamma(static_cast<double>(k)) + digamma(static_cast<double>(n)) - acc / static_cast<double>(n);
}

double ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw PreconditionError("ks_two_sample: samples must be non-empty");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / static_cast<double>(sa.size()) -
                             static_cast<double>(j) / static_cast<double>(sb.size())));
  }
  return d;
}

double js_divergence_mc(const Density& q, const Density& p, std::size_t samples, std::uint64_t seed) {
  if (samples < 2) throw PreconditionError("js_divergence_mc: need at least 2 samples");
  Rng rng(seed);
  const std::size_t half = samples / 2;
  const double log2 = std::numbers::ln2;
  double from_q = 0.0, from_p = 0.0;
  for (std::size_t s = 0; s < half; ++s) {
    const std::vector<double> v = q.sample(rng);
    const double lq = q.logpdf(v), lp = p.logpdf(v);
    from_q += lq - (log_add_exp(lq, lp) - log2);
  }
  for (std::size_t s = 0; s < half; ++s) {
    const std::vector<double> v = p.sample(rng);
    const double lq = q.logpdf(v), lp = p.logpdf(v);
    from_p += lp - (log_add_exp(lq, lp) - log2);
  }
  return 0.5 * from_q / static_cast<double>(half) + 0.5 * from_p / static_cast<double>(half);
}

double js_divergence_mc(const MeanFieldPosterior& q, double sigma2_z, std::size_t samples, std::uint64_t seed) {
  const std::size_t k = q.latent_dim();
  if (k == 0 || q.num_points() == 0) throw PreconditionError("js_divergence_mc: posterior has no latent block");
  if (!(sigma2_z > 0.0)) throw DomainError("js_divergence_mc: prior variance must be positive");
  const double sz = std::sqrt(sigma2_z);
  Density agg{[&q](std::span<const double> v) { return aggregated_posterior_logpdf(q, v); },
              [&q, k](Rng& rng) {
                const std::size_t n = rng.index(q.num_points());
                std::vector<double> v(k);
                for (std::size_t d = 0; d < k; ++d) v[d] = gaussian_reparam(q.mu_z(n, d), q.rho_z(n, d), rng.normal());
                return v;
              }};
  Density prior{[sigma2_z](std::span<const double> v) {
                  double lp = 0.0;
                  for (double t : v) lp += log_gauss(t, 0.0, sigma2_z);
                  return lp;
                },
                [sz, k](Rng& rng) {
                  std::vector<double> v(k);
                  for (auto& t : v) t = sz * rng.normal();
                  return v;
                }};
  return js_divergence_mc(agg, prior, samples, seed);
}

double knn_entropy(const Matrix& samples, std::size_t k, std::uint64_t seed) {
  if (samples.rows <= k) throw PreconditionError("knn_entropy: need N > k");
  if (samples.cols == 0) throw ShapeError("knn_entropy: samples have no columns");
  std::vector<double> r = kernels::omp::knn_distances(samples, k, kernels::Norm::Euclidean);
  if (std::any_of(r.begin(), r.end(), [](double v) { return !(v > 0.0); })) {
    Rng rng(seed);
    r = kernels::omp::knn_distances(jitter_columns(samples, rng, false), k, kernels::Norm::Euclidean);
  }
  const double n = static_cast<double>(samples.rows);
  const double d = static_cast<double>(samples.cols);
  const double log_ball = 0.5 * d * std::log(std::numbers::pi) - std::lgamma(0.5 * d + 1.0);
  double acc = 0.0;
  for (double v : r) acc += std::log(v);
  return digamma(n) - digamma(static_cast<double>(k)) + log_ball + d * acc / n;
}

UncertaintySplit decompose_uncertainty(const std::function<std::vector<double>(Rng&)>& draw_params,
                                       const std::function<double(const std::vector<double>&, Rng&)>& draw_y,
                                       std::size_t outer, std::size_t inner, std::size_t k, std::uint64_t seed) {
  if (outer <= k || inner <= k) throw PreconditionError("decompose_uncertainty: need more than k draws per level");
  Rng rng(seed);
  Matrix pooled(outer * inner, 1);
  Matrix block(inner, 1);
  double aleatoric = 0.0;
  for (std::size_t o = 0; o < outer; ++o) {
    const std::vector<double> params = draw_params(rng);
    for (std::size_t i = 0; i < inner; ++i) {
      block.data[i] = draw_y(params, rng);
      pooled.data[o * inner + i] = block.data[i];
    }
    aleatoric += knn_entropy(block, k, derive_seed(seed, o));
  }
  UncertaintySplit u;
  u.total = knn_entropy(pooled, k, derive_seed(seed, outer));
  u.aleatoric = aleatoric / static_cast<double>(outer);
  u.epistemic = u.total - u.aleatoric;
  return u;
}

std::vector<UncertaintySplit> uncertainty_decomposition(const Architecture& arch, const WeightPosterior& q,
                                                        const PriorConfig& priors, const Matrix& x_grid,
                                                        std::size_t outer, std::size_t inner, std::size_t k,
                                                        std::uint64_t seed) {
  check_single_output(arch, x_grid);
  const double sz = std::sqrt(priors.sigma2_z);
  const double se = std::sqrt(priors.sigma2_eps);
  std::vector<UncertaintySplit> out(x_grid.rows);
  const auto rows = static_cast<std::ptrdiff_t>(x_grid.rows);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t g = 0; g < rows; ++g) {
    const auto gi = static_cast<std::size_t>(g);
    const std::span<const double> xs = x_grid.row(gi);
    std::vector<double> z(arch.input_dim_z);
    out[gi] = decompose_uncertainty(
        [&q](Rng& rng) { return sample_weights(q, rng); },
        [&](const std::vector<double>& w, Rng& rng) {
          for (auto& v : z) v = sz * rng.normal();
          return mlp_forward(arch, w, xs, z)[0] + se * rng.normal();
        },
        outer, inner, k, derive_seed(seed, gi));
  }
  return out;
}

MetricsReport evaluate(const MeanFieldPosterior& q, const PriorConfig& priors, const DataSet& train,
                       const DataSet& test, const MetricsConfig& cfg) {
  MetricsReport r;
  const Architecture& arch = q.arch;
  const WeightPosterior wq = q.weights();
  const std::uint64_t s = cfg.seed;
  r.test_avg_ll = avg_marginal_ll(arch, wq, priors, test.x, test.y, cfg.ll_samples, derive_seed(s, 1));
  r.train_avg_ll = avg_marginal_ll(arch, wq, priors, train.x, train.y, cfg.ll_samples, derive_seed(s, 2));
  r.test_avg_ll_logmeanexp =
      avg_marginal_ll_logmeanexp(arch, wq, priors, test.x, test.y, cfg.ll_samples, derive_seed(s, 1));
  r.train_avg_ll_logmeanexp =
      avg_marginal_ll_logmeanexp(arch, wq, priors, train.x, train.y, cfg.ll_samples, derive_seed(s, 2));
  r.rmse_test = predictive_rmse(arch, wq, priors, test.x, test.y, cfg.ll_samples, derive_seed(s, 3));
  r.rmse_train = predictive_rmse(arch, wq, priors, train.x, train.y, cfg.ll_samples, derive_seed(s, 4));
  const Matrix draws = predictive_samples(arch, wq, priors, test.x, cfg.interval_samples, derive_seed(s, 5));
  const IntervalScore iv = picp_mpiw(draws, test.y.data);
  r.picp95 = iv.picp;
  r.mpiw95 = iv.mpiw;
  if (test.transform.active()) {
    const double ys = test.transform.y_std[0];
    r.mpiw95_unnorm = iv.mpiw * ys;
    r.rmse_test_unnorm = *r.rmse_test * ys;
    r.rmse_train_unnorm = *r.rmse_train * ys;
  }
  r.s_w_star = priors.sigma2_w;
  if (q.latent_dim() == 0) return r;
  r.s_z_star = priors.sigma2_z;
  r.recon_mse = recon_mse(q, train.x, train.y, 64, derive_seed(s, 6));
  const Matrix& mu = q.mu_z;
  r.mi_x_muz = kraskov_mi(train.x, mu, cfg.k, derive_seed(s, 7));
  Rng rng(derive_seed(s, 8));
  Matrix z(mu.rows, mu.cols);
  for (std::size_t i = 0; i < z.data.size(); ++i) z.data[i] = gaussian_reparam(mu.data[i], q.rho_z.data[i], rng.normal());
  r.mi_x_z = kraskov_mi(train.x, z, cfg.k, derive_seed(s, 9));
  if (mu.rows >= mu.cols + 2) {
    try {
      r.hz_of_means = hz_statistic(mu);
    } catch (const PreconditionError&) {
    }
  }
  if (q.latent_dim() == 1) {
    std::vector<double> prior(mu.rows);
    const double sz = std::sqrt(priors.sigma2_z);
    for (auto& v : prior) v = sz * rng.normal();
    r.ks_stat = ks_two_sample(mu.data, prior);
  }
  r.js_divergence = js_divergence_mc(q, priors.sigma2_z, cfg.js_samples, derive_seed(s, 10));
  r.pc_x_muz = pearson_penalty(train.x, mu);
  r.pc_y_muz = pearson_penalty(train.y, mu);
  return r;
}

}  // namespace bnnlv
