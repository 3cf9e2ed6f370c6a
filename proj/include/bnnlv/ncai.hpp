#pragma once

// Dependence penalties on the latent means, the exponentially smoothed
// constrained objective, the model-satisfying warm start and MAP estimation.

#include <cstdint>
#include <optional>
#include <vector>

#include "bnnlv/data.hpp"
#include "bnnlv/matrix.hpp"
#include "bnnlv/model.hpp"
#include "bnnlv/optim.hpp"
#include "bnnlv/vi.hpp"

namespace bnnlv {

struct NcaiConfig {
  double lambda1 = 1.0;   // normality of the latent means
  double lambda2 = 10.0;  // off-diagonal covariance of the latent means
  double lambda3 = 1.0;   // correlation of the latent means with x and y
  double eps_t = 0.01;
  double eps_x = 1.0;
  double eps_y = 0.5;
  double ridge = 1e-6;
  // exp(t) is continued linearly above this exponent so the objective and
  // its gradient stay finite for small eps values.
  double exp_cap = 100.0;

  void validate() const;
};

// exp(t) for t <= cap, exp(cap) * (1 + t - cap) above.
double penalty_exp(double t, double cap);
double penalty_exp_derivative(double t, double cap);

// Henze-Zirkler statistic of the rows. Each covariance diagonal entry S_aa becomes (1 + ridge) S_aa.
double hz_statistic(const Matrix& points, double ridge = 1e-6, Matrix* grad = nullptr);

// Frobenius norm of the off-diagonal part of the sample covariance (N - 1 normalization).
double offdiag_penalty(const Matrix& points, Matrix* grad = nullptr);

// Mean over column pairs (a_d, b_k) of |corr(a_d, b_k)|. A constant column contributes 0.
// grad receives d/dB.
double pearson_penalty(const Matrix& a, const Matrix& b, Matrix* grad = nullptr);

struct NcaiTerms {
  ElboTerms elbo;
  double hz = 0.0;
  double offdiag = 0.0;
  double pc_x = 0.0;
  double pc_y = 0.0;
  double hz_term = 0.0;
  double offdiag_term = 0.0;
  double pc_term = 0.0;

  double penalties() const { return hz_term + offdiag_term + pc_term; }
  double objective() const { return -elbo.elbo() + penalties(); }
};

// -ELBO + l1 N e^(HZ/eps_t) + l2 N ||offdiag||_F + l3 N e^(PC_x/eps_x) e^(PC_y/eps_y),
// penalties evaluated on mu_z over all rows. A penalty whose lambda is 0 is not evaluated.
NcaiTerms ncai_objective(const MeanFieldPosterior& q, const Matrix& x, const Matrix& y, const PriorConfig& priors,
                         const NcaiConfig& cfg, const ElboOptions& opts, MeanFieldPosterior* grad = nullptr);

struct WarmStartConfig {
  std::size_t epochs = 2000;
  AdamConfig adam{};
};

// Deterministic network fitted by MSE with latent inputs fed 0; its weights become mu_w
// except the latent-input weights, which are redrawn. mu_z = 0. All rho are Xavier-normal draws.
MeanFieldPosterior warm_start(const Matrix& x, const Matrix& y, const Architecture& arch,
                              const WarmStartConfig& cfg, std::uint64_t seed);

// Xavier-normal (fan-average, gain 1) draw for every weight of arch.
std::vector<double> xavier_normal(const Architecture& arch, Rng& rng);

enum class MapInit { Random, GroundTruth };

struct MapConfig {
  std::size_t max_epochs = 20000;
  AdamConfig adam{};
  double tolerance = 1e-6;
  std::size_t window = 200;
};

struct MapResult {
  std::vector<double> w;
  Matrix z;
  double log_joint = 0.0;
  std::size_t epochs = 0;
  bool converged = false;
};

// Gradient ascent on log_joint(W, Z). GroundTruth init needs truth with w_true and z_true.
MapResult map_estimate(const Matrix& x, const Matrix& y, const PriorConfig& priors, const Architecture& arch,
                       MapInit init, const GroundTruth* truth, const MapConfig& cfg, std::uint64_t seed);

// Continues gradient ascent from an explicit starting point.
MapResult map_refine(const Matrix& x, const Matrix& y, const PriorConfig& priors, const Architecture& arch,
                     std::vector<double> w, Matrix z, const MapConfig& cfg);

}  // namespace bnnlv
