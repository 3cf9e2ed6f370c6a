#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bnnlv/kernels.hpp"
#include "bnnlv/ncai.hpp"
#include "bnnlv/rng.hpp"
#include "oracles.hpp"

using namespace bnnlv;

namespace {

Matrix normal_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

MeanFieldPosterior random_posterior(const Architecture& a, std::size_t n, Rng& rng) {
  MeanFieldPosterior q = MeanFieldPosterior::zeros(a, n);
  q.mu_w = xavier_normal(a, rng);
  for (auto& v : q.rho_w) v = rng.uniform(-4, -2);
  for (auto& v : q.mu_z.data) v = rng.normal();
  for (auto& v : q.rho_z.data) v = rng.uniform(-3, -1);
  return q;
}

}  // namespace

TEST(PenaltyExp, ContinuousWithLinearTail) {
  EXPECT_DOUBLE_EQ(penalty_exp(1.5, 100), std::exp(1.5));
  EXPECT_DOUBLE_EQ(penalty_exp(100, 100), std::exp(100.0));
  EXPECT_DOUBLE_EQ(penalty_exp(102, 100), std::exp(100.0) * 3);
  EXPECT_DOUBLE_EQ(penalty_exp_derivative(150, 100), std::exp(100.0));
  for (double t : {-3.0, 0.0, 4.0, 99.0, 101.0}) {
    const double h = 1e-6 * std::max(1.0, std::abs(t));
    const double fd = (penalty_exp(t + h, 100) - penalty_exp(t - h, 100)) / (2 * h);
    EXPECT_NEAR(penalty_exp_derivative(t, 100), fd, 1e-5 * fd);
  }
}

TEST(Hz, AffineInvariance) {
  Rng rng(1);
  Matrix x = normal_matrix(150, 3, rng);
  for (auto& v : x.data) v = v * v * v;
  Matrix y = x;
  for (std::size_t i = 0; i < y.rows; ++i) {
    y(i, 0) = 5 * y(i, 0) + 3;
    y(i, 1) = 0.01 * y(i, 1) - 7;
    y(i, 2) = 300 * y(i, 2);
  }
  EXPECT_NEAR(hz_statistic(x), hz_statistic(y), 1e-8);
}

TEST(Hz, GaussianBelowSimulatedNullQuantile) {
  std::vector<double> null;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng r(derive_seed(2, s));
    null.push_back(hz_statistic(normal_matrix(1000, 2, r)));
  }
  std::sort(null.begin(), null.end());
  Rng rng(3);
  const double g = hz_statistic(normal_matrix(1000, 2, rng));
  EXPECT_LT(g, null[98]);

  Matrix tri(1000, 2);
  for (std::size_t i = 0; i < 1000; ++i) {
    double a = rng.uniform(), b = rng.uniform();
    if (a + b > 1) a = 1 - a, b = 1 - b;
    tri(i, 0) = a;
    tri(i, 1) = b;
  }
  EXPECT_GT(hz_statistic(tri), g);
}

TEST(Hz, DegenerateClusterStaysFinite) {
  Matrix p(20, 2, 0.5);
  Matrix g;
  const double v = hz_statistic(p, 1e-6, &g);
  EXPECT_TRUE(std::isfinite(v));
  for (double d : g.data) EXPECT_TRUE(std::isfinite(d));
}

TEST(Offdiag, Constructions) {
  Rng rng(4);
  EXPECT_EQ(offdiag_penalty(normal_matrix(30, 1, rng)), 0.0);
  Matrix two(4, 2);
  const double col[4] = {-1.5, -0.5, 0.5, 1.5};  // sample variance 5/3
  for (std::size_t i = 0; i < 4; ++i) two(i, 0) = two(i, 1) = col[i] / std::sqrt(5.0 / 3.0);
  EXPECT_NEAR(offdiag_penalty(two), std::sqrt(2.0), 1e-15);
  EXPECT_LE(offdiag_penalty(normal_matrix(10000, 2, rng)), 0.05);
  EXPECT_THROW(offdiag_penalty(Matrix(1, 2)), PreconditionError);
}

TEST(Offdiag, GradientMatchesFiniteDifferences) {
  Rng rng(5);
  Matrix p = normal_matrix(12, 3, rng);
  Matrix g;
  offdiag_penalty(p, &g);
  std::vector<std::size_t> coords(p.data.size());
  std::iota(coords.begin(), coords.end(), 0);
  const auto fd = oracle::central_differences(
      [&](std::span<const double> th) {
        Matrix q = p;
        std::copy(th.begin(), th.end(), q.data.begin());
        return offdiag_penalty(q);
      },
      p.data, coords, 1e-6);
  for (std::size_t i = 0; i < coords.size(); ++i) EXPECT_TRUE(oracle::gradient_close(g.data[i], fd[i], 1e-4, 1e-7));
}

TEST(Pearson, ConstructionsAndRange) {
  Rng rng(6);
  const Matrix a = normal_matrix(50, 1, rng);
  Matrix neg = a;
  for (auto& v : neg.data) v = -v;
  EXPECT_NEAR(pearson_penalty(a, a), 1.0, 1e-15);
  EXPECT_NEAR(pearson_penalty(a, neg), 1.0, 1e-15);
  EXPECT_LE(pearson_penalty(normal_matrix(10000, 1, rng), normal_matrix(10000, 1, rng)), 0.03);
  EXPECT_EQ(pearson_penalty(a, Matrix(50, 1)), 0.0);

  const Matrix x = normal_matrix(40, 3, rng), b = normal_matrix(40, 2, rng);
  double ref = 0;
  for (std::size_t d = 0; d < 3; ++d)
    for (std::size_t k = 0; k < 2; ++k) ref += std::abs(oracle::pearson(x.column(d), b.column(k)));
  const double pc = pearson_penalty(x, b);
  EXPECT_NEAR(pc, ref / 6, 1e-14);
  EXPECT_GE(pc, 0.0);
  EXPECT_LE(pc, 1.0);
  Matrix flipped = b;
  for (std::size_t i = 0; i < flipped.rows; ++i) flipped(i, 1) = -flipped(i, 1);
  EXPECT_NEAR(pearson_penalty(x, flipped), pc, 1e-15);
}

TEST(Pearson, GradientMatchesFiniteDifferences) {
  Rng rng(7);
  const Matrix a = normal_matrix(15, 2, rng);
  Matrix b = normal_matrix(15, 2, rng);
  Matrix g;
  pearson_penalty(a, b, &g);
  std::vector<std::size_t> coords(b.data.size());
  std::iota(coords.begin(), coords.end(), 0);
  const auto fd = oracle::central_differences(
      [&](std::span<const double> th) {
        Matrix q = b;
        std::copy(th.begin(), th.end(), q.data.begin());
        return pearson_penalty(a, q);
      },
      b.data, coords, 1e-6);
  for (std::size_t i = 0; i < coords.size(); ++i) EXPECT_TRUE(oracle::gradient_close(g.data[i], fd[i], 1e-4, 1e-7));
}

TEST(NcaiObjective, ZeroLambdasEqualNegativeElbo) {
  Rng rng(8);
  Architecture a{1, 2, {4}, 1, 0.01};
  const MeanFieldPosterior q = random_posterior(a, 20, rng);
  const Matrix x = normal_matrix(20, 1, rng), y = normal_matrix(20, 1, rng);
  NcaiConfig c;
  c.lambda1 = c.lambda2 = c.lambda3 = 0;
  ElboOptions o;
  o.seed = 9;
  o.n_mc = 2;
  EXPECT_EQ(ncai_objective(q, x, y, PriorConfig{}, c, o).objective(), -elbo(q, x, y, PriorConfig{}, 2, 9));
}

TEST(NcaiObjective, TermsRecomposeAndGrowWithHz) {
  Rng rng(9);
  Architecture a{1, 1, {4}, 1, 0.01};
  MeanFieldPosterior q = random_posterior(a, 30, rng);
  const Matrix x = normal_matrix(30, 1, rng), y = normal_matrix(30, 1, rng);
  NcaiConfig c;
  c.eps_t = 0.5;
  ElboOptions o;
  const NcaiTerms t = ncai_objective(q, x, y, PriorConfig{}, c, o);
  EXPECT_DOUBLE_EQ(t.hz_term, c.lambda1 * 30 * std::exp(t.hz / c.eps_t));
  EXPECT_DOUBLE_EQ(t.pc_term, c.lambda3 * 30 * std::exp(t.pc_x / c.eps_x + t.pc_y / c.eps_y));
  EXPECT_EQ(t.offdiag_term, 0.0);
  EXPECT_DOUBLE_EQ(t.objective(), -t.elbo.elbo() + t.hz_term + t.pc_term);
  // A larger HZ with everything else equal: the same latent means moved into a heavy-tailed shape.
  NcaiConfig only_hz = c;
  only_hz.lambda3 = 0;
  const double before = ncai_objective(q, x, y, PriorConfig{}, only_hz, o).penalties();
  MeanFieldPosterior heavy = q;
  for (auto& v : heavy.mu_z.data) v = v * v * v;
  const NcaiTerms th = ncai_objective(heavy, x, y, PriorConfig{}, only_hz, o);
  ASSERT_GT(th.hz, t.hz);
  EXPECT_GT(th.penalties(), before);
}

TEST(NcaiObjective, PenaltiesIgnoreLatentScales) {
  Rng rng(10);
  Architecture a{1, 2, {4}, 1, 0.01};
  const MeanFieldPosterior q = random_posterior(a, 25, rng);
  const Matrix x = normal_matrix(25, 1, rng), y = normal_matrix(25, 1, rng);
  ElboOptions o;
  o.seed = 4;
  MeanFieldPosterior g_full, g_elbo;
  NcaiConfig c;
  c.eps_t = 1.0;
  ncai_objective(q, x, y, PriorConfig{}, c, o, &g_full);
  elbo_terms(q, x, y, PriorConfig{}, o, &g_elbo);
  EXPECT_EQ(g_full.rho_z.data, g_elbo.rho_z.data);
  EXPECT_EQ(g_full.rho_w, g_elbo.rho_w);
  EXPECT_EQ(g_full.mu_w, g_elbo.mu_w);
}

TEST(NcaiObjective, GradientMatchesFiniteDifferences) {
  Rng rng(11);
  Architecture a{1, 2, {5}, 1, 0.01};
  const std::size_t n = 20;
  const MeanFieldPosterior q = random_posterior(a, n, rng);
  const Matrix x = normal_matrix(n, 1, rng), y = normal_matrix(n, 1, rng);
  NcaiConfig c;
  c.eps_t = 1.0;
  ElboOptions o;
  o.seed = 12;
  MeanFieldPosterior g;
  ncai_objective(q, x, y, PriorConfig{}, c, o, &g);
  const auto analytic = g.pack();
  std::vector<std::size_t> coords(analytic.size());
  std::iota(coords.begin(), coords.end(), 0);
  const auto fd = oracle::central_differences(
      [&](std::span<const double> th) {
        MeanFieldPosterior r = q;
        r.unpack(th);
        return ncai_objective(r, x, y, PriorConfig{}, c, o).objective();
      },
      q.pack(), coords, 1e-6);
  std::size_t good = 0;
  for (std::size_t i = 0; i < coords.size(); ++i) good += oracle::gradient_close(analytic[i], fd[i], 1e-4, 1e-7);
  EXPECT_GE(good, coords.size() * 95 / 100);
}

TEST(WarmStart, LatentMeansZeroAndFitMatchesRetrain) {
  Rng rng(13);
  const std::size_t n = 200;
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform();
    y(i, 0) = 2 * std::sin(2 * M_PI * x(i, 0)) + std::sqrt(x(i, 0) + 0.5) * rng.normal();
  }
  Architecture a{1, 1, {20}, 1, 0.01};
  WarmStartConfig cfg;
  cfg.epochs = 1500;
  const MeanFieldPosterior q = warm_start(x, y, a, cfg, 14);
  for (double v : q.mu_z.data) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(pearson_penalty(x, q.mu_z), 0.0);

  // Independent retrain: textbook Adam on the mean squared error with z fed 0.
  Rng r2(15);
  std::vector<double> w = xavier_normal(a, r2), g(w.size());
  oracle::Adam adam;
  const Matrix zero(n, 1);
  for (int e = 0; e < 1500; ++e) {
    kernels::serial::mlp_sse_grad(a, w, x, zero, y, g, nullptr);
    for (auto& v : g) v /= n;
    adam.step(w, g);
  }
  auto rmse = [&](std::span<const double> wt) {
    double s = 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> z0{0.0};
      s += std::pow(y(i, 0) - oracle::mlp(a, wt, x.row(i), z0)[0], 2);
    }
    return std::sqrt(s / n);
  };
  EXPECT_LE(rmse(q.mu_w), 1.1 * rmse(w));
}

TEST(Map, StationaryOnRestartAndNeedsTruthForGroundTruthInit) {
  Rng rng(16);
  const std::size_t n = 40;
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.uniform(-2, 2);
    y(i, 0) = std::sin(x(i, 0)) + 0.2 * rng.normal();
  }
  Architecture a{1, 1, {8}, 1, 0.01};
  PriorConfig p;
  MapConfig cfg;
  cfg.max_epochs = 30000;
  const MapResult m = map_estimate(x, y, p, a, MapInit::Random, nullptr, cfg, 17);
  EXPECT_TRUE(m.converged);
  EXPECT_NEAR(m.log_joint, log_joint(a, m.w, m.z, x, y, p), 1e-9);
  // A slow, long continuation from the optimum finds almost nothing left to gain.
  MapConfig slow = cfg;
  slow.adam.learning_rate = 1e-4;
  slow.max_epochs = 3000;
  slow.tolerance = 0.0;
  const MapResult more = map_refine(x, y, p, a, m.w, m.z, slow);
  EXPECT_LE(more.log_joint - m.log_joint, 1e-4 * std::abs(m.log_joint));
  EXPECT_THROW(map_estimate(x, y, p, a, MapInit::GroundTruth, nullptr, cfg, 17), PreconditionError);
}

TEST(Map, FlatPriorLimitReducesToLikelihood) {
  Rng rng(18);
  Architecture a{1, 1, {3}, 1, 0.01};
  std::vector<double> w(a.parameter_count());
  for (auto& v : w) v = rng.normal();
  Matrix x(10, 1), y(10, 1), z(10, 1);
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = rng.normal();
  for (auto& v : z.data) v = rng.normal();
  PriorConfig p;
  p.sigma2_w = p.sigma2_z = 1e12;
  const double normalizers =
      -0.5 * (w.size() + z.data.size()) * (kLog2Pi + std::log(1e12));
  EXPECT_NEAR(log_joint(a, w, z, x, y, p) - normalizers, log_likelihood(a, w, z, x, y, p.sigma2_eps), 1e-9);
}
