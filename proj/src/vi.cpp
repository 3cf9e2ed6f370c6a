#include "bnnlv/vi.hpp"

#include <cmath>
#include <limits>

#include "bnnlv/errors.hpp"
#include "bnnlv/kernels.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

MeanFieldPosterior MeanFieldPosterior::zeros(const Architecture& arch, std::size_t n) {
  MeanFieldPosterior q;
  q.arch = arch;
  q.mu_w.assign(arch.parameter_count(), 0.0);
  q.rho_w.assign(arch.parameter_count(), 0.0);
  q.mu_z = Matrix(n, arch.input_dim_z);
  q.rho_z = Matrix(n, arch.input_dim_z);
  return q;
}

void MeanFieldPosterior::validate() const {
  const std::size_t p = arch.parameter_count();
  if (mu_w.size() != p || rho_w.size() != p) throw ShapeError("posterior: weight block does not match architecture");
  if (mu_z.cols != arch.input_dim_z || !mu_z.same_shape(rho_z))
    throw ShapeError("posterior: latent block does not match architecture");
}

std::vector<double> MeanFieldPosterior::weight_variances() const {
  std::vector<double> v(rho_w.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = square(softplus(rho_w[i]));
  return v;
}

Matrix MeanFieldPosterior::latent_variances() const {
  Matrix v(rho_z.rows, rho_z.cols);
  for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] = square(softplus(rho_z.data[i]));
  return v;
}

std::vector<double> MeanFieldPosterior::pack() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  flat.insert(flat.end(), mu_w.begin(), mu_w.end());
  flat.insert(flat.end(), rho_w.begin(), rho_w.end());
  flat.insert(flat.end(), mu_z.data.begin(), mu_z.data.end());
  flat.insert(flat.end(), rho_z.data.begin(), rho_z.data.end());
  return flat;
}

void MeanFieldPosterior::unpack(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw ShapeError("posterior: packed length mismatch");
  auto it = flat.begin();
  auto take = [&](std::vector<double>& dst) {
    std::copy(it, it + static_cast<std::ptrdiff_t>(dst.size()), dst.begin());
    it += static_cast<std::ptrdiff_t>(dst.size());
  };
  take(mu_w);
  take(rho_w);
  take(mu_z.data);
  take(rho_z.data);
}

double kl_diag_gaussian(std::span<const double> mu, std::span<const double> var, std::span<const double> mu0,
                        std::span<const double> var0) {
  if (mu.size() != var.size() || mu.size() != mu0.size() || mu.size() != var0.size())
    throw ShapeError("kl_diag_gaussian: length mismatch");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(var[i] > 0.0) || !(var0[i] > 0.0)) throw DomainError("kl_diag_gaussian: variances must be positive");
    kl += 0.5 * (std::log(var0[i] / var[i]) + (var[i] + square(mu[i] - mu0[i])) / var0[i] - 1.0);
  }
  return kl;
}

double kl_diag_gaussian(std::span<const double> mu, std::span<const double> var, double var0) {
  if (mu.size() != var.size()) throw ShapeError("kl_diag_gaussian: length mismatch");
  if (!(var0 > 0.0)) throw DomainError("kl_diag_gaussian: variances must be positive");
  double kl = 0.0;
  for (std::size_t i = 0; i < mu.size(); ++i) {
    if (!(var[i] > 0.0)) throw DomainError("kl_diag_gaussian: variances must be positive");
    kl += 0.5 * (std::log(var0 / var[i]) + (var[i] + mu[i] * mu[i]) / var0 - 1.0);
  }
  return kl;
}

namespace {

// KL(N(mu, softplus(rho)^2) || N(0, var0)) and its (mu, rho) partials.
double kl_term(double mu, double rho, double var0, double* d_mu, double* d_rho) {
  const double s = softplus(rho);
  const double var = s * s;
  if (d_mu) {
    *d_mu = mu / var0;
    *d_rho = (s / var0 - 1.0 / s) * sigmoid(rho);
  }
  return 0.5 * (std::log(var0 / var) + (var + mu * mu) / var0 - 1.0);
}

}  // namespace

ElboTerms elbo_terms(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
                     const ElboOptions& opts, MeanFieldPosterior* grad) {
  q.validate();
  if (opts.n_mc == 0) throw PreconditionError("elbo: n_mc must be >= 1");
  if (!(priors.sigma2_eps > 0.0) || !(priors.sigma2_w > 0.0) || !(priors.sigma2_z > 0.0))
    throw DomainError("elbo: prior variances must be positive");
  const std::size_t n = x.rows;
  const std::size_t k = q.latent_dim();
  if (y.rows != n) throw ShapeError("elbo: x and y rows differ");
  if (k > 0 && q.num_points() != n) throw ShapeError("elbo: latent block rows do not match the data");

  std::vector<std::size_t> all;
  std::span<const std::size_t> rows = opts.batch;
  if (rows.empty()) {
    all.resize(n);
    for (std::size_t i = 0; i < n; ++i) all[i] = i;
    rows = all;
  }
  const std::size_t b = rows.size();
  const double scale = static_cast<double>(n) / static_cast<double>(b);
  const Matrix xb = rows.size() == n && opts.batch.empty() ? x : x.select_rows(rows);
  const Matrix yb = rows.size() == n && opts.batch.empty() ? y : y.select_rows(rows);

  if (grad) *grad = MeanFieldPosterior::zeros(q.arch, q.num_points());

  ElboTerms t;
  const std::size_t p = q.mu_w.size();
  for (std::size_t i = 0; i < p; ++i) {
    double dm = 0.0, dr = 0.0;
    t.kl_w += kl_term(q.mu_w[i], q.rho_w[i], priors.sigma2_w, grad ? &dm : nullptr, &dr);
    if (grad) {
      grad->mu_w[i] = dm;
      grad->rho_w[i] = dr;
    }
  }
  for (std::size_t r : rows)
    for (std::size_t d = 0; d < k; ++d) {
      double dm = 0.0, dr = 0.0;
      t.kl_z += scale * kl_term(q.mu_z(r, d), q.rho_z(r, d), priors.sigma2_z, grad ? &dm : nullptr, &dr);
      if (grad) {
        grad->mu_z(r, d) = scale * dm;
        grad->rho_z(r, d) = scale * dr;
      }
    }

  Rng rng(opts.seed);
  const double count = static_cast<double>(yb.data.size());
  const double inv_mc = 1.0 / static_cast<double>(opts.n_mc);
  const double ll_coef = scale * inv_mc / (2.0 * priors.sigma2_eps);
  std::vector<double> w(p), eps_w(p), gw(p);
  Matrix zb(b, k), eps_z(b, k), gz;
  double ll_acc = 0.0;
  for (std::size_t m = 0; m < opts.n_mc; ++m) {
    for (std::size_t i = 0; i < p; ++i) {
      eps_w[i] = rng.normal();
      w[i] = gaussian_reparam(q.mu_w[i], q.rho_w[i], eps_w[i]);
    }
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t d = 0; d < k; ++d) {
        eps_z(j, d) = rng.normal();
        zb(j, d) = gaussian_reparam(q.mu_z(rows[j], d), q.rho_z(rows[j], d), eps_z(j, d));
      }
    const double sse = kernels::omp::mlp_sse_grad(q.arch, w, xb, zb, yb, gw, grad && k > 0 ? &gz : nullptr);
    ll_acc += -0.5 * count * (kLog2Pi + std::log(priors.sigma2_eps)) - 0.5 * sse / priors.sigma2_eps;
    if (grad) {
      for (std::size_t i = 0; i < p; ++i) {
        const double g = ll_coef * gw[i];
        grad->mu_w[i] += g;
        grad->rho_w[i] += g * eps_w[i] * sigmoid(q.rho_w[i]);
      }
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t d = 0; d < k; ++d) {
          const double g = ll_coef * gz(j, d);
          grad->mu_z(rows[j], d) += g;
          grad->rho_z(rows[j], d) += g * eps_z(j, d) * sigmoid(q.rho_z(rows[j], d));
        }
    }
  }
  t.expected_ll = scale * ll_acc * inv_mc;
  return t;
}

double elbo(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
            std::size_t n_mc, std::uint64_t seed) {
  ElboOptions o;
  o.n_mc = n_mc;
  o.seed = seed;
  return elbo_terms(q, x, y, priors, o).elbo();
}

double aggregated_posterior_logpdf(const MeanFieldPosterior& q, std::span<const double> point) {
  const std::size_t n = q.num_points();
  const std::size_t k = q.latent_dim();
  if (n == 0) throw PreconditionError("aggregated_posterior_logpdf: no components");
  if (point.size() != k) throw ShapeError("aggregated_posterior_logpdf: point dimension mismatch");
  std::vector<double> logs(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double lp = 0.0;
    for (std::size_t d = 0; d < k; ++d) {
      const double var = square(softplus(q.rho_z(i, d)));
      lp += -0.5 * (kLog2Pi + std::log(var)) - 0.5 * square(point[d] - q.mu_z(i, d)) / var;
    }
    logs[i] = lp;
    mx = std::max(mx, lp);
  }
  if (!std::isfinite(mx)) return mx;
  double acc = 0.0;
  for (double lp : logs) acc += std::exp(lp - mx);
  return mx + std::log(acc) - std::log(static_cast<double>(n));
}

}  // namespace bnnlv
