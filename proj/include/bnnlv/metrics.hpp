#pragma once

// Predictive scores, interval calibration, nearest-neighbour information
// estimators, distribution distances and the entropy-based uncertainty split.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bnnlv/data.hpp"
#include "bnnlv/matrix.hpp"
#include "bnnlv/model.hpp"
#include "bnnlv/rng.hpp"
#include "bnnlv/vi.hpp"

namespace bnnlv {

// S x N matrix of predictive draws for single-output models: W ~ q and z ~ p(z)
// per draw, plus output noise when with_noise is set.
Matrix predictive_samples(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                          const Matrix& x, std::size_t samples, std::uint64_t seed, bool with_noise = true);

// (1/N) sum_n E_{p(z) q(W)}[log p(y_n | x_n, W, z)]
double avg_marginal_ll(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                       const Matrix& x, const Matrix& y, std::size_t samples, std::uint64_t seed);
// (1/N) sum_n log (1/S) sum_s p(y_n | x_n, W_s, z_s); diagnostic only.
double avg_marginal_ll_logmeanexp(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                                  const Matrix& x, const Matrix& y, std::size_t samples, std::uint64_t seed);

// RMSE of the Monte Carlo predictive mean E_{p(z) q(W)}[f].
double predictive_rmse(const Architecture& arch, const WeightPosterior& q, const PriorConfig& priors,
                       const Matrix& x, const Matrix& y, std::size_t samples, std::uint64_t seed);

// E_{q(W) q(Z)} (1/N) sum_n ||y_n - f(x_n, z_n; W)||^2; nullopt when the model has no latent input.
std::optional<double> recon_mse(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, std::size_t samples,
                                std::uint64_t seed);

struct IntervalScore {
  double picp = 0.0;  // percent
  double mpiw = 0.0;
};

// samples is S x N (column n holds the draws for y[n]); central interval from linearly interpolated percentiles.
IntervalScore picp_mpiw(const Matrix& samples, std::span<const double> y, double level = 0.95);

// Linearly interpolated percentile (q in [0, 100]) of a sorted sample.
double percentile_sorted(std::span<const double> sorted, double q);

// KSG estimator (first variant), max-norm, in nats. Columns are scaled to unit variance and
// jittered by 1e-10 of their magnitude to break ties.
double kraskov_mi(const Matrix& x, const Matrix& y, std::size_t k = 5, std::uint64_t seed = 0);

double ks_two_sample(std::span<const double> a, std::span<const double> b);

struct Density {
  std::function<double(std::span<const double>)> logpdf;
  std::function<std::vector<double>(Rng&)> sample;
};

// Half of the draws from each side; m is the equal mixture.
double js_divergence_mc(const Density& q, const Density& p, std::size_t samples, std::uint64_t seed);
// Aggregated latent posterior of q against N(0, sigma2_z I).
double js_divergence_mc(const MeanFieldPosterior& q, double sigma2_z, std::size_t samples, std::uint64_t seed);

// Kozachenko-Leonenko estimator, Euclidean norm, in nats. Duplicate points are jittered.
double knn_entropy(const Matrix& samples, std::size_t k = 5, std::uint64_t seed = 0);

struct UncertaintySplit {
  double total = 0.0;
  double aleatoric = 0.0;
  double epistemic = 0.0;
};

// total = H(pooled draws); aleatoric = mean over parameter draws of H(draws given the parameter).
UncertaintySplit decompose_uncertainty(const std::function<std::vector<double>(Rng&)>& draw_params,
                                       const std::function<double(const std::vector<double>&, Rng&)>& draw_y,
                                       std::size_t outer, std::size_t inner, std::size_t k, std::uint64_t seed);

// Per grid row, for the network model with W ~ q, z ~ p(z), eps ~ N(0, s_eps).
std::vector<UncertaintySplit> uncertainty_decomposition(const Architecture& arch, const WeightPosterior& q,
                                                        const PriorConfig& priors, const Matrix& x_grid,
                                                        std::size_t outer, std::size_t inner, std::size_t k = 5,
                                                        std::uint64_t seed = 0);

// Absent fields are not applicable to the model (no latent input, no truth, no transform).
struct MetricsReport {
  std::optional<double> test_avg_ll, train_avg_ll;
  std::optional<double> test_avg_ll_logmeanexp, train_avg_ll_logmeanexp;
  std::optional<double> rmse_test, rmse_train;
  std::optional<double> rmse_test_unnorm, rmse_train_unnorm;
  std::optional<double> recon_mse;
  std::optional<double> picp95, mpiw95, mpiw95_unnorm;
  std::optional<double> mi_x_muz, mi_x_z;
  std::optional<double> hz_of_means;
  std::optional<double> ks_stat;
  std::optional<double> js_divergence;
  std::optional<double> pc_x_muz, pc_y_muz;
  std::optional<double> s_w_star, s_z_star;
};

struct MetricsConfig {
  std::size_t ll_samples = 2000;
  std::size_t interval_samples = 4000;
  std::size_t js_samples = 10000;
  std::size_t k = 5;
  std::uint64_t seed = 0;
};

// train and test are the model's data parts (standardized units when a transform is active).
MetricsReport evaluate(const MeanFieldPosterior& q, const PriorConfig& priors, const DataSet& train,
                       const DataSet& test, const MetricsConfig& cfg);

}  // namespace bnnlv
