#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numeric>

#include "bnnlv/rng.hpp"
#include "bnnlv/vi.hpp"
#include "oracles.hpp"

using namespace bnnlv;

namespace {

MeanFieldPosterior random_posterior(const Architecture& a, std::size_t n, Rng& rng) {
  MeanFieldPosterior q = MeanFieldPosterior::zeros(a, n);
  for (auto& v : q.mu_w) v = rng.normal(0, 0.7);
  for (auto& v : q.rho_w) v = rng.uniform(-4, -1);
  for (auto& v : q.mu_z.data) v = rng.normal();
  for (auto& v : q.rho_z.data) v = rng.uniform(-3, 0);
  return q;
}

}  // namespace

TEST(Kl, ClosedForms) {
  std::vector<double> m{0.3, -1}, v{0.5, 2};
  EXPECT_EQ(kl_diag_gaussian(m, v, m, v), 0.0);
  std::vector<double> one{1.0}, zero{0.0}, unit{1.0}, two{2.0};
  EXPECT_NEAR(kl_diag_gaussian(one, unit, zero, unit), 0.5, 1e-15);
  EXPECT_NEAR(kl_diag_gaussian(zero, unit, zero, two), 0.5 * (std::log(2.0) + 0.5 - 1), 1e-15);
  EXPECT_NEAR(kl_diag_gaussian(zero, unit, 2.0), 0.0966, 1e-4);
  std::vector<double> bad{0.0};
  EXPECT_THROW(kl_diag_gaussian(zero, bad, zero, unit), DomainError);
}

TEST(Kl, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng(1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> m{rng.normal()}, v{rng.uniform(0.1, 3)}, m0{rng.normal()}, v0{rng.uniform(0.1, 3)};
    const double kl = kl_diag_gaussian(m, v, m0, v0);
    EXPECT_GT(kl, 0.0);
    EXPECT_NEAR(static_cast<double>(oracle::kl_1d(m[0], v[0], m0[0], v0[0])), kl, 1e-12);
    EXPECT_LE(std::abs(kl_diag_gaussian(m, v, m, v)), 1e-12);
  }
}

TEST(Posterior, PackRoundTripAndValidation) {
  Rng rng(2);
  Architecture a{1, 2, {3}, 1, 0.01};
  MeanFieldPosterior q = random_posterior(a, 7, rng);
  MeanFieldPosterior r = MeanFieldPosterior::zeros(a, 7);
  r.unpack(q.pack());
  EXPECT_EQ(r.pack(), q.pack());
  for (double v : q.weight_variances()) EXPECT_GT(v, 0.0);
  q.rho_w.pop_back();
  EXPECT_THROW(q.validate(), ShapeError);
}

TEST(Elbo, KlVanishesWhenPosteriorEqualsPrior) {
  Rng rng(3);
  Architecture a{1, 1, {4}, 1, 0.01};
  PriorConfig p;
  p.sigma2_w = 0.8;
  p.sigma2_z = 1.3;
  MeanFieldPosterior q = MeanFieldPosterior::zeros(a, 10);
  for (auto& v : q.rho_w) v = softplus_inverse(std::sqrt(0.8));
  for (auto& v : q.rho_z.data) v = softplus_inverse(std::sqrt(1.3));
  Matrix x(10, 1), y(10, 1);
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = rng.normal();
  ElboOptions o;
  o.seed = 5;
  const ElboTerms t = elbo_terms(q, x, y, p, o);
  EXPECT_LE(std::abs(t.kl_w), 1e-12);
  EXPECT_LE(std::abs(t.kl_z), 1e-12);
  EXPECT_DOUBLE_EQ(t.elbo(), t.expected_ll - t.kl_w - t.kl_z);
}

TEST(Elbo, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  Architecture a{1, 1, {5}, 1, 0.01};
  const std::size_t n = 15;
  MeanFieldPosterior q = random_posterior(a, n, rng);
  Matrix x(n, 1), y(n, 1);
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = rng.normal();
  PriorConfig p;
  std::vector<std::size_t> batch{1, 4, 5, 9, 13};
  for (bool minibatch : {false, true}) {
    ElboOptions o;
    o.n_mc = 3;
    o.seed = 6;
    if (minibatch) o.batch = batch;
    MeanFieldPosterior g;
    elbo_terms(q, x, y, p, o, &g);
    const auto analytic = g.pack();
    std::vector<std::size_t> coords(analytic.size());
    std::iota(coords.begin(), coords.end(), 0);
    const auto fd = oracle::central_differences(
        [&](std::span<const double> th) {
          MeanFieldPosterior r = q;
          r.unpack(th);
          return -elbo_terms(r, x, y, p, o).elbo();
        },
        q.pack(), coords, 1e-6);
    std::size_t good = 0;
    for (std::size_t i = 0; i < coords.size(); ++i) good += oracle::gradient_close(analytic[i], fd[i], 1e-4, 1e-7);
    EXPECT_GE(good, coords.size() * 95 / 100) << (minibatch ? "mini-batch" : "full batch");
  }
}

TEST(Elbo, ExplicitFullBatchEqualsDefault) {
  Rng rng(5);
  Architecture a{1, 1, {3}, 1, 0.01};
  MeanFieldPosterior q = random_posterior(a, 6, rng);
  Matrix x(6, 1), y(6, 1);
  for (auto& v : x.data) v = rng.normal();
  for (auto& v : y.data) v = rng.normal();
  std::vector<std::size_t> all{0, 1, 2, 3, 4, 5};
  ElboOptions o;
  o.seed = 3;
  const double full = elbo_terms(q, x, y, PriorConfig{}, o).elbo();
  o.batch = all;
  EXPECT_EQ(elbo_terms(q, x, y, PriorConfig{}, o).elbo(), full);
}

TEST(Elbo, MiniBatchScalingIsUnbiasedForTheKlTerm) {
  Rng rng(6);
  Architecture a{1, 1, {3}, 1, 0.01};
  MeanFieldPosterior q = random_posterior(a, 8, rng);
  Matrix x(8, 1), y(8, 1);
  ElboOptions full;
  const double kl_full = elbo_terms(q, x, y, PriorConfig{}, full).kl_z;
  double acc = 0;
  for (std::size_t i = 0; i < 8; i += 2) {
    std::vector<std::size_t> b{i, i + 1};
    ElboOptions o;
    o.batch = b;
    acc += elbo_terms(q, x, y, PriorConfig{}, o).kl_z;
  }
  EXPECT_NEAR(acc / 4, kl_full, 1e-12);
}

// Linear model y = w x + b (no hidden layer, no latent): the ELBO and the evidence have closed forms.
TEST(Elbo, LinearGaussianBoundAndAnalyticValue) {
  Rng rng(7);
  Architecture a{1, 0, {}, 1, 0.01};
  const std::size_t n = 20;
  Matrix x(n, 1), y(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    x(i, 0) = rng.normal();
    y(i, 0) = 1.5 * x(i, 0) - 0.5 + 0.3 * rng.normal();
  }
  PriorConfig p;
  p.sigma2_eps = 0.09;
  MeanFieldPosterior q = MeanFieldPosterior::zeros(a, n);
  q.mu_w = {1.4, -0.45};
  q.rho_w = {softplus_inverse(0.05), softplus_inverse(0.07)};
  const double vw = 0.05 * 0.05, vb = 0.07 * 0.07;
  double expected = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = y(i, 0) - q.mu_w[0] * x(i, 0) - q.mu_w[1];
    expected += -0.5 * std::log(2 * M_PI * 0.09) - (r * r + vw * x(i, 0) * x(i, 0) + vb) / (2 * 0.09);
  }
  const double analytic = expected - static_cast<double>(oracle::kl_1d(1.4, vw, 0, 1) + oracle::kl_1d(-0.45, vb, 0, 1));

  Eigen::MatrixXd cov = 0.09 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd yv(n);
  for (std::size_t i = 0; i < n; ++i) {
    yv(i) = y(i, 0);
    for (std::size_t j = 0; j < n; ++j) cov(i, j) += x(i, 0) * x(j, 0) + 1.0;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double logdet = 2 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double evidence = -0.5 * (n * std::log(2 * M_PI) + logdet + yv.dot(llt.solve(yv)));
  EXPECT_LE(analytic, evidence);

  std::vector<double> draws(400);
  for (std::size_t s = 0; s < draws.size(); ++s) draws[s] = elbo(q, x, y, p, 1, 100 + s);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / draws.size();
  double ss = 0;
  for (double d : draws) ss += (d - mean) * (d - mean);
  const double se = std::sqrt(ss / (draws.size() - 1) / draws.size());
  EXPECT_NEAR(mean, analytic, 3 * se + 1e-9);
  EXPECT_LE(mean, evidence + 3 * se);
}

TEST(AggregatedPosterior, Examples) {
  Architecture a{1, 1, {2}, 1, 0.01};
  MeanFieldPosterior one = MeanFieldPosterior::zeros(a, 1);
  one.mu_z(0, 0) = 0.4;
  one.rho_z(0, 0) = softplus_inverse(0.8);
  std::vector<double> pt{1.1};
  EXPECT_NEAR(aggregated_posterior_logpdf(one, pt), oracle::normal_logpdf(1.1, 0.4, 0.64), 1e-12);

  MeanFieldPosterior two = MeanFieldPosterior::zeros(a, 2);
  two.mu_z(0, 0) = 1.3;
  two.mu_z(1, 0) = -1.3;
  two.rho_z(0, 0) = two.rho_z(1, 0) = softplus_inverse(0.5);
  std::vector<double> origin{0.0};
  EXPECT_NEAR(aggregated_posterior_logpdf(two, origin), oracle::normal_logpdf(1.3, 0, 0.25), 1e-12);
}

TEST(AggregatedPosterior, MatchesNaiveSummation) {
  Rng rng(8);
  Architecture a{1, 2, {2}, 1, 0.01};
  MeanFieldPosterior q = random_posterior(a, 40, rng);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> pt{rng.normal(), rng.normal()};
    long double sum = 0;
    for (std::size_t i = 0; i < 40; ++i) {
      long double lp = 0;
      for (std::size_t d = 0; d < 2; ++d)
        lp += oracle::normal_logpdf(pt[d], q.mu_z(i, d), std::pow(softplus(q.rho_z(i, d)), 2));
      sum += std::exp(lp);
    }
    EXPECT_NEAR(aggregated_posterior_logpdf(q, pt), static_cast<double>(std::log(sum / 40)), 1e-12);
  }
}
