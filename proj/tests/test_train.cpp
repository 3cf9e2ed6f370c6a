#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "bnnlv/metrics.hpp"
#include "bnnlv/train.hpp"
#include "oracles.hpp"

using namespace bnnlv;

namespace {

DataSet sine_data(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  DataSet d;
  d.name = "sine";
  d.x = Matrix(n, 1);
  d.y = Matrix(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    d.x(i, 0) = rng.uniform(-2, 2);
    d.y(i, 0) = std::sin(2 * d.x(i, 0)) + (0.2 + 0.3 * std::abs(d.x(i, 0))) * rng.normal();
  }
  return d;
}

TrainConfig short_config(std::size_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.restarts = 1;
  c.warm.epochs = 200;
  return c;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.5, -2.0, 0.0};
  const std::vector<double> g(3, 0.0);
  AdamState s(3);
  adam_step(p, g, s, AdamConfig{});
  EXPECT_EQ(p, (std::vector<double>{1.5, -2.0, 0.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{3.0, -1e-3};
  AdamState s(2);
  AdamConfig c;
  adam_step(p, g, s, c);
  EXPECT_NEAR(p[0], -c.learning_rate, 1e-9);
  EXPECT_NEAR(p[1], c.learning_rate, 1e-7);
}

TEST(Adam, TrajectoryMatchesOracle) {
  std::vector<double> p{2.0, -0.7};
  std::vector<double> ref = p;
  AdamState s(2);
  oracle::Adam o;
  for (int t = 0; t < 100; ++t) {
    const std::vector<double> g{2 * p[0], 2 * p[1]};
    const std::vector<double> gr{2 * ref[0], 2 * ref[1]};
    adam_step(p, g, s, AdamConfig{});
    o.step(ref, gr);
  }
  EXPECT_NEAR(p[0], ref[0], 1e-10);
  EXPECT_NEAR(p[1], ref[1], 1e-10);
  EXPECT_EQ(s.step, 100u);
}

TEST(Adam, NonFiniteGradientNamesIndexAndKeepsParameters) {
  std::vector<double> p{1.0, 2.0, 3.0};
  const std::vector<double> g{0.1, std::numeric_limits<double>::quiet_NaN(), 0.2};
  AdamState s(3);
  try {
    adam_step(p, g, s, AdamConfig{});
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("index 1"), std::string::npos);
  }
  EXPECT_EQ(p, (std::vector<double>{1.0, 2.0, 3.0}));
  EXPECT_EQ(s.step, 0u);
  std::vector<double> bad(2);
  EXPECT_THROW(adam_step(p, bad, s, AdamConfig{}), ShapeError);
}

TEST(EmpiricalBayes, ClosedFormExamples) {
  const Matrix mu(4, 1, 0.0), var(4, 1, 0.25);
  EXPECT_DOUBLE_EQ(eb_update_sz(mu, var, 3.0, 0.5), 0.25);
  EXPECT_NEAR(eb_update_sz(mu, Matrix(4, 1, 1e-300), 3.0, 0.5), 0.2, 1e-15);
  const std::vector<double> m{0.0}, v{1.0};
  EXPECT_DOUBLE_EQ(eb_update_sw(m, v, 3.0, 0.5), 0.4);

  const std::vector<double> mw{0.3, -1.2, 0.8}, vw{0.1, 0.2, 0.05};
  std::vector<double> scaled = mw;
  for (auto& x : scaled) x *= 3;
  const double denom = 3 + 2 * 3.0 - 2;
  const double base = eb_update_sw(mw, vw, 3.0, 0.5) * denom;
  const double mm = 0.09 + 1.44 + 0.64;
  EXPECT_NEAR(eb_update_sw(scaled, vw, 3.0, 0.5) * denom - base, 8 * mm, 1e-12);

  EXPECT_THROW(eb_update_sz(Matrix(2, 1), Matrix(2, 1), 0.4, 0.5), DomainError);
  EXPECT_THROW(eb_update_sz(Matrix(2, 1), Matrix(3, 1), 3, 0.5), ShapeError);
}

TEST(EmpiricalBayes, MatchesNumericalMinimizer) {
  Rng rng(1);
  const double alpha = 3.0, beta = 0.5;
  Matrix mu(6, 2), var(6, 2);
  for (auto& v : mu.data) v = rng.normal();
  for (auto& v : var.data) v = rng.uniform(0.01, 2);
  auto kl_z = [&](long double s) {
    long double t = 0;
    for (std::size_t i = 0; i < mu.data.size(); ++i) t += oracle::kl_1d(mu.data[i], var.data[i], 0, s);
    return t + 6 * ((alpha - 1) * std::log(s) + beta / s);
  };
  const double num_z = oracle::minimize_positive(kl_z, 1e-4, 1e4);
  EXPECT_NEAR(eb_update_sz(mu, var, alpha, beta), num_z, 1e-6 * num_z);

  auto kl_w = [&](long double s) {
    long double t = 0;
    for (std::size_t i = 0; i < mu.data.size(); ++i) t += oracle::kl_1d(mu.data[i], var.data[i], 0, s);
    return t + (alpha - 1) * std::log(s) + beta / s;
  };
  const double num_w = oracle::minimize_positive(kl_w, 1e-4, 1e4);
  EXPECT_NEAR(eb_update_sw(mu.data, var.data, alpha, beta), num_w, 1e-6 * num_w);
}

TEST(EmpiricalBayes, UpdateNeverIncreasesObjective) {
  const DataSet d = sine_data(40, 2);
  const Architecture a{1, 1, {6}, 1, 0.01};
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    MeanFieldPosterior q = MeanFieldPosterior::zeros(a, d.size());
    q.mu_w = xavier_normal(a, rng);
    for (auto& v : q.rho_w) v = rng.uniform(-3, 1);
    for (auto& v : q.mu_z.data) v = rng.normal();
    for (auto& v : q.rho_z.data) v = rng.uniform(-3, 1);
    PriorConfig p;
    p.sigma2_w = rng.uniform(0.05, 5);
    p.sigma2_z = rng.uniform(0.05, 5);
    ElboOptions o;
    o.seed = 11;
    for (Method m : {Method::BNNLV_BBB, Method::NCAI}) {
      NcaiConfig c;
      c.eps_t = 1.0;
      const double before = training_objective(q, d.x, d.y, p, c, m, o);
      PriorConfig after = p;
      after.sigma2_w = eb_update_sw(q.mu_w, q.weight_variances(), p.ig_alpha, p.ig_beta);
      after.sigma2_z = eb_update_sz(q.mu_z, q.latent_variances(), p.ig_alpha, p.ig_beta);
      EXPECT_LE(training_objective(q, d.x, d.y, after, c, m, o), before + 1e-9 * std::abs(before));
    }
  }
}

TEST(Train, DeterministicForSeed) {
  const DataSet d = sine_data(50, 4);
  const Architecture a{1, 1, {6}, 1, 0.01};
  const TrainConfig c = short_config(60);
  for (Method m : {Method::BNN, Method::BNNLV_BBB, Method::NCAI}) {
    const TrainResult r1 = train(d, a, PriorConfig{}, NcaiConfig{}, c, m, 5);
    const TrainResult r2 = train(d, a, PriorConfig{}, NcaiConfig{}, c, m, 5);
    EXPECT_EQ(r1.history.objective, r2.history.objective);
    EXPECT_EQ(r1.q.pack(), r2.q.pack());
    EXPECT_EQ(r1.history.size(), c.epochs);
    EXPECT_EQ(r1.history.s_w.size(), c.epochs);
  }
}

TEST(Train, BnnAllocatesNoLatents) {
  const DataSet d = sine_data(30, 6);
  const TrainResult r = train(d, Architecture{1, 1, {6}, 1, 0.01}, PriorConfig{}, NcaiConfig{}, short_config(20),
                              Method::BNN, 7);
  EXPECT_EQ(r.q.latent_dim(), 0u);
  EXPECT_EQ(r.q.arch.input_dim_z, 0u);
  EXPECT_EQ(r.q.mu_z.data.size(), 0u);
  EXPECT_EQ(r.q.rho_z.data.size(), 0u);
  EXPECT_FALSE(r.priors.eb_enabled_z);
}

TEST(Train, NcaiWithoutPenaltiesTracksBbb) {
  const DataSet d = sine_data(50, 8);
  const Architecture a{1, 1, {6}, 1, 0.01};
  TrainConfig c = short_config(80);
  c.init = InitScheme::WarmStart;
  NcaiConfig off;
  off.lambda1 = off.lambda2 = off.lambda3 = 0;
  const TrainResult n = train(d, a, PriorConfig{}, off, c, Method::NCAI, 9);
  const TrainResult b = train(d, a, PriorConfig{}, off, c, Method::BNNLV_BBB, 9);
  EXPECT_EQ(n.history.objective, b.history.objective);
  EXPECT_EQ(n.q.pack(), b.q.pack());
}

TEST(Train, RecoversLinearSlope) {
  Rng rng(10);
  DataSet d;
  d.x = Matrix(200, 1);
  d.y = Matrix(200, 1);
  for (std::size_t i = 0; i < 200; ++i) {
    d.x(i, 0) = rng.uniform(-1, 1);
    d.y(i, 0) = 2 * d.x(i, 0) + std::sqrt(0.1) * rng.normal();
  }
  const Architecture a{1, 1, {4}, 1, 0.01};
  TrainConfig c = short_config(2000);
  const TrainResult r = train(d, a, PriorConfig{}, NcaiConfig{}, c, Method::BNNLV_BBB, 11);
  auto mean_at = [&](double x) {
    const std::vector<double> xs{x};
    const Matrix s = posterior_predictive_samples(a, r.q.weights(), r.priors, xs, 4000, 12);
    return std::accumulate(s.data.begin(), s.data.end(), 0.0) / static_cast<double>(s.data.size());
  };
  const double slope = (mean_at(0.5) - mean_at(-0.5)) / 1.0;
  EXPECT_GE(slope, 1.8);
  EXPECT_LE(slope, 2.2);
}

TEST(Train, RejectsBadConfigs) {
  const DataSet d = sine_data(10, 12);
  const Architecture a{1, 1, {3}, 1, 0.01};
  TrainConfig c = short_config(0);
  EXPECT_THROW(train(d, a, PriorConfig{}, NcaiConfig{}, c, Method::NCAI, 1), ConfigError);
  c = short_config(5);
  c.init = InitScheme::GroundTruth;
  EXPECT_THROW(train(d, a, PriorConfig{}, NcaiConfig{}, c, Method::NCAI, 1), PreconditionError);
  EXPECT_THROW(train(d, Architecture{2, 1, {3}, 1, 0.01}, PriorConfig{}, NcaiConfig{}, short_config(5),
                     Method::NCAI, 1),
               ShapeError);
}

TEST(RestartSelect, SingleCandidateAndNonFiniteScores) {
  const DataSet d = sine_data(40, 13);
  const Architecture a{1, 1, {5}, 1, 0.01};
  const TrainResult good = train(d, a, PriorConfig{}, NcaiConfig{}, short_config(300), Method::BNNLV_BBB, 14);
  EXPECT_EQ(restart_select({good}, d.x, d.y, 50, 1), 0u);

  TrainResult broken = good;
  broken.q.mu_w[0] = std::numeric_limits<double>::quiet_NaN();
  TrainResult flat = good;
  for (auto& v : flat.q.mu_w) v = 0.0;
  std::vector<double> scores;
  const std::vector<TrainResult> cands{broken, flat, good};
  const std::size_t best = restart_select(cands, d.x, d.y, 200, 15, &scores);
  ASSERT_EQ(scores.size(), 3u);
  EXPECT_FALSE(std::isfinite(scores[0]));
  // Exhaustive recomputation of every score.
  std::size_t arg = 1;
  for (std::size_t i = 1; i < 3; ++i) {
    const double s = avg_marginal_ll(a, cands[i].q.weights(), cands[i].priors, d.x, d.y, 200, 15);
    EXPECT_EQ(s, scores[i]);
    if (s > scores[arg]) arg = i;
  }
  EXPECT_EQ(best, arg);
  EXPECT_THROW(restart_select({}, d.x, d.y, 10, 1), PreconditionError);
}

TEST(Names, RoundTrip) {
  for (Method m : {Method::BNN, Method::BNNLV_BBB, Method::NCAI}) EXPECT_EQ(parse_method(to_string(m)), m);
  for (InitScheme s :
       {InitScheme::Default, InitScheme::Random, InitScheme::WarmStart, InitScheme::GroundTruth, InitScheme::Map})
    EXPECT_EQ(parse_init_scheme(to_string(s)), s);
  EXPECT_THROW(parse_method("hmc"), ConfigError);
  EXPECT_THROW(parse_init_scheme("zeros"), ConfigError);
}
