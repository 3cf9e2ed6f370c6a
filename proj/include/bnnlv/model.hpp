#pragma once

// The latent-input regression model y = f(x, z; W) + eps with z ~ N(0, s_z I),
// W ~ N(0, s_w I), eps ~ N(0, s_eps I): densities, sampling and prediction.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bnnlv/data.hpp"
#include "bnnlv/diffcore.hpp"
#include "bnnlv/matrix.hpp"

namespace bnnlv {

struct PriorConfig {
  double sigma2_w = 1.0;
  double sigma2_z = 1.0;
  double sigma2_eps = 0.1;
  // Inverse-Gamma hyper-prior on the two prior variances.
  double ig_alpha = 3.0;
  double ig_beta = 0.5;
  bool eb_enabled_w = true;
  bool eb_enabled_z = true;

  void validate() const;
};

constexpr double kLog2Pi = 1.8378770664093454836;

// sum_n log N(y_n; f(x_n, z_n; W), s_eps I)
double log_likelihood(const Architecture& arch, std::span<const double> w, const Matrix& z, const Matrix& x,
                      const Matrix& y, double sigma2_eps);
double log_prior_w(std::span<const double> w, double sigma2_w);
double log_prior_z(const Matrix& z, double sigma2_z);
double log_joint(const Architecture& arch, std::span<const double> w, const Matrix& z, const Matrix& x,
                 const Matrix& y, const PriorConfig& priors);

using ResponseFunction = std::function<double(std::span<const double> x, std::span<const double> z)>;

// Draws x from the sampler, z from the latent prior and eps from the noise
// prior; stores the latent draws as ground truth. All rows land in the training split.
DataSet sample_dataset(const ResponseFunction& f, std::size_t latent_dim, const PriorConfig& priors, std::size_t n,
                       const XSampler& x_sampler, std::uint64_t seed);
DataSet sample_dataset(const ResponseFunction& f, std::size_t latent_dim, const PriorConfig& priors, std::size_t n,
                       const std::string& x_sampler, std::uint64_t seed);

// Gaussian weight posterior: W_i ~ N(mu_i, softplus(rho_i)^2).
struct WeightPosterior {
  std::span<const double> mu;
  std::span<const double> rho;
};

std::vector<double> sample_weights(const WeightPosterior& q, Rng& rng);

// S draws of y* at x*: W ~ q, z* ~ N(0, s_z I) from the prior, eps ~ N(0, s_eps I). Rows are draws.
Matrix posterior_predictive_samples(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                                    std::span<const double> x_star, std::size_t samples, std::uint64_t seed);

}  // namespace bnnlv
