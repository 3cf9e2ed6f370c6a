#include "bnnlv/model.hpp"

#include <cmath>

#include "bnnlv/errors.hpp"
#include "bnnlv/kernels.hpp"
#include "bnnlv/rng.hpp"

namespace bnnlv {

void PriorConfig::validate() const {
  if (!(sigma2_w > 0.0) || !(sigma2_z > 0.0) || !(sigma2_eps > 0.0))
    throw ConfigError("prior variances must be positive");
  if (!(ig_alpha > 1.0)) throw ConfigError("ig_alpha must exceed 1");
  if (!(ig_beta > 0.0)) throw ConfigError("ig_beta must be positive");
}

double log_likelihood(const Architecture& arch, std::span<const double> w, const Matrix& z, const Matrix& x,
                      const Matrix& y, double sigma2_eps) {
  if (!(sigma2_eps > 0.0)) throw DomainError("log_likelihood: sigma2_eps must be positive");
  if (y.rows != x.rows) throw ShapeError("log_likelihood: x and y rows differ");
  if (x.rows == 0) return 0.0;
  const Matrix f = kernels::omp::mlp_predict(arch, w, x, z);
  if (!f.same_shape(y)) throw ShapeError("log_likelihood: y does not match network output shape");
  double sse = 0.0;
  for (std::size_t i = 0; i < y.data.size(); ++i) sse += square(y.data[i] - f.data[i]);
  const double count = static_cast<double>(y.data.size());
  return -0.5 * count * (kLog2Pi + std::log(sigma2_eps)) - 0.5 * sse / sigma2_eps;
}

double log_prior_w(std::span<const double> w, double sigma2_w) {
  if (!(sigma2_w > 0.0)) throw DomainError("log_prior_w: variance must be positive");
  double ss = 0.0;
  for (double v : w) ss += v * v;
  return -0.5 * static_cast<double>(w.size()) * (kLog2Pi + std::log(sigma2_w)) - 0.5 * ss / sigma2_w;
}

double log_prior_z(const Matrix& z, double sigma2_z) {
  return log_prior_w(std::span<const double>(z.data), sigma2_z);
}

double log_joint(const Architecture& arch, std::span<const double> w, const Matrix& z, const Matrix& x,
                 const Matrix& y, const PriorConfig& priors) {
  double total = log_prior_w(w, priors.sigma2_w);
  if (x.rows == 0) return total;
  return total + log_likelihood(arch, w, z, x, y, priors.sigma2_eps) + log_prior_z(z, priors.sigma2_z);
}

DataSet sample_dataset(const ResponseFunction& f, std::size_t latent_dim, const PriorConfig& priors, std::size_t n,
                       const XSampler& x_sampler, std::uint64_t seed) {
  if (n == 0) throw PreconditionError("sample_dataset: n must be >= 1");
  if (priors.sigma2_z < 0.0 || priors.sigma2_eps < 0.0) throw DomainError("sample_dataset: negative variance");
  Rng rng(seed);
  DataSet d;
  d.name = "sampled";
  d.x = Matrix(n, 1);
  d.y = Matrix(n, 1);
  GroundTruth truth;
  truth.function = "custom";
  truth.z_true = Matrix(n, latent_dim);
  const double sz = std::sqrt(priors.sigma2_z);
  const double se = std::sqrt(priors.sigma2_eps);
  for (std::size_t i = 0; i < n; ++i) {
    d.x(i, 0) = x_sampler.draw(rng);
    for (std::size_t k = 0; k < latent_dim; ++k) truth.z_true(i, k) = sz * rng.normal();
    d.y(i, 0) = f(d.x.row(i), truth.z_true.row(i)) + se * rng.normal();
  }
  d.truth = std::move(truth);
  d.sigma2_eps = priors.sigma2_eps;
  d.sigma2_z = priors.sigma2_z;
  return d;
}

DataSet sample_dataset(const ResponseFunction& f, std::size_t latent_dim, const PriorConfig& priors, std::size_t n,
                       const std::string& x_sampler, std::uint64_t seed) {
  return sample_dataset(f, latent_dim, priors, n, parse_x_sampler(x_sampler), seed);
}

std::vector<double> sample_weights(const WeightPosterior& q, Rng& rng) {
  if (q.mu.size() != q.rho.size()) throw ShapeError("sample_weights: mu and rho lengths differ");
  std::vector<double> w(q.mu.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = gaussian_reparam(q.mu[i], q.rho[i], rng.normal());
  return w;
}

Matrix posterior_predictive_samples(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                                    std::span<const double> x_star, std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw PreconditionError("posterior_predictive_samples: need at least one sample");
  if (x_star.size() != arch.input_dim_x) throw ShapeError("posterior_predictive_samples: x* dimension mismatch");
  Rng rng(seed);
  const double sz = std::sqrt(priors.sigma2_z);
  const double se = std::sqrt(priors.sigma2_eps);
  Matrix out(samples, arch.output_dim);
  std::vector<double> z(arch.input_dim_z);
  for (std::size_t s = 0; s < samples; ++s) {
    const std::vector<double> w = sample_weights(q, rng);
    for (auto& v : z) v = sz * rng.normal();
    const std::vector<double> f = mlp_forward(arch, w, x_star, z);
    for (std::size_t l = 0; l < f.size(); ++l) out(s, l) = f[l] + se * rng.normal();
  }
  return out;
}

}  // namespace bnnlv
