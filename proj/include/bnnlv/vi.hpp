#pragma once

// Fully factorized Gaussian variational family over weights and per-point
// latents, closed-form KL terms and the reparameterized ELBO estimator.

#include <cstdint>
#include <span>
#include <vector>

#include "bnnlv/diffcore.hpp"
#include "bnnlv/matrix.hpp"
#include "bnnlv/model.hpp"

namespace bnnlv {

// Scales are softplus(rho). Also used as the container for gradients with respect to (mu, rho).
struct MeanFieldPosterior {
  Architecture arch;
  std::vector<double> mu_w, rho_w;
  Matrix mu_z, rho_z;  // N x K

  static MeanFieldPosterior zeros(const Architecture& arch, std::size_t n);

  std::size_t num_points() const { return mu_z.rows; }
  std::size_t latent_dim() const { return arch.input_dim_z; }
  std::size_t parameter_count() const { return 2 * mu_w.size() + 2 * mu_z.data.size(); }
  void validate() const;
  WeightPosterior weights() const { return {mu_w, rho_w}; }
  std::vector<double> weight_variances() const;
  Matrix latent_variances() const;

  // Flat order: mu_w, rho_w, mu_z, rho_z.
  std::vector<double> pack() const;
  void unpack(std::span<const double> flat);
};

// sum_i KL(N(mu_i, var_i) || N(mu0_i, var0_i))
double kl_diag_gaussian(std::span<const double> mu, std::span<const double> var, std::span<const double> mu0,
                        std::span<const double> var0);
// KL against the isotropic zero-mean prior N(0, var0 I).
double kl_diag_gaussian(std::span<const double> mu, std::span<const double> var, double var0);

struct ElboOptions {
  std::size_t n_mc = 1;
  std::uint64_t seed = 0;
  // Rows used for the likelihood and latent KL; empty means all rows. Both are scaled by N / |batch|.
  std::span<const std::size_t> batch;
};

struct ElboTerms {
  double expected_ll = 0.0;
  double kl_w = 0.0;
  double kl_z = 0.0;
  double elbo() const { return expected_ll - kl_w - kl_z; }
};

// Noise is drawn per MC sample: weight noise first, then latent noise row by row.
// If grad is non-null it receives d(-ELBO)/d(mu, rho) shaped like q.
ElboTerms elbo_terms(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
                     const ElboOptions& opts, MeanFieldPosterior* grad = nullptr);

double elbo(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
            std::size_t n_mc, std::uint64_t seed);

// log (1/N) sum_n N(point; mu_z[n], diag var_z[n])
double aggregated_posterior_logpdf(const MeanFieldPosterior& q, std::span<const double> point);

}  // namespace bnnlv
