#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "bnnlv/kernels.hpp"
#include "bnnlv/rng.hpp"
#include "oracles.hpp"

using namespace bnnlv;
namespace k = bnnlv::kernels;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng) {
  Matrix m(r, c);
  for (auto& v : m.data) v = rng.normal();
  return m;
}

}  // namespace

TEST(MlpKernels, PredictMatchesOracle) {
  Rng rng(1);
  Architecture a{2, 1, {7, 4}, 2, 0.01};
  std::vector<double> w(a.parameter_count());
  for (auto& v : w) v = rng.normal();
  const Matrix x = random_matrix(40, 2, rng), z = random_matrix(40, 1, rng);
  const Matrix ps = k::serial::mlp_predict(a, w, x, z), po = k::omp::mlp_predict(a, w, x, z);
  for (std::size_t n = 0; n < 40; ++n) {
    const auto ref = oracle::mlp(a, w, x.row(n), z.row(n));
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_NEAR(ps(n, j), ref[j], 1e-12);
      EXPECT_EQ(ps(n, j), po(n, j));
    }
  }
}

TEST(MlpKernels, SseGradientMatchesFiniteDifferences) {
  Rng rng(2);
  Architecture a{1, 2, {5}, 1, 0.01};
  std::vector<double> w(a.parameter_count());
  for (auto& v : w) v = rng.normal();
  const Matrix x = random_matrix(25, 1, rng), z = random_matrix(25, 2, rng), y = random_matrix(25, 1, rng);
  std::vector<double> gw(w.size()), gw_omp(w.size());
  Matrix gz, gz_omp;
  const double sse = k::serial::mlp_sse_grad(a, w, x, z, y, gw, &gz);
  const double sse_omp = k::omp::mlp_sse_grad(a, w, x, z, y, gw_omp, &gz_omp);
  EXPECT_NEAR(sse, sse_omp, 1e-12 * sse);
  auto sse_of = [&](std::span<const double> th, const Matrix& zz) {
    double s = 0;
    for (std::size_t n = 0; n < x.rows; ++n) s += std::pow(y(n, 0) - oracle::mlp(a, th, x.row(n), zz.row(n))[0], 2);
    return s;
  };
  std::vector<std::size_t> coords(w.size());
  std::iota(coords.begin(), coords.end(), 0);
  const auto fd = oracle::central_differences([&](std::span<const double> th) { return sse_of(th, z); }, w, coords,
                                              1e-6);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_TRUE(oracle::gradient_close(gw[i], fd[i], 1e-4, 1e-7)) << i;
    EXPECT_NEAR(gw[i], gw_omp[i], 1e-10 * std::max(1.0, std::abs(gw[i])));
  }
  std::vector<std::size_t> zc(z.data.size());
  std::iota(zc.begin(), zc.end(), 0);
  const auto fdz = oracle::central_differences(
      [&](std::span<const double> th) {
        Matrix zz = z;
        std::copy(th.begin(), th.end(), zz.data.begin());
        return sse_of(w, zz);
      },
      z.data, zc, 1e-6);
  for (std::size_t i = 0; i < zc.size(); ++i) {
    EXPECT_TRUE(oracle::gradient_close(gz.data[i], fdz[i], 1e-4, 1e-7));
    EXPECT_EQ(gz.data[i], gz_omp.data[i]);
  }
}

TEST(HzKernel, MatchesDefinitionOracle) {
  Rng rng(3);
  for (std::size_t kdim : {1u, 2u, 3u}) {
    const Matrix p = random_matrix(60, kdim, rng);
    const double ref = oracle::henze_zirkler(p, 1e-6);
    EXPECT_NEAR(k::serial::hz_statistic(p, 1e-6, nullptr), ref, 1e-9 * std::max(1.0, ref));
    EXPECT_NEAR(k::omp::hz_statistic(p, 1e-6, nullptr), ref, 1e-9 * std::max(1.0, ref));
  }
}

TEST(HzKernel, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  for (std::size_t kdim : {1u, 2u}) {
    Matrix p = random_matrix(30, kdim, rng);
    for (auto& v : p.data) v += 0.5 * v * v;  // non-Gaussian so the gradient is not tiny
    Matrix gs, go;
    k::serial::hz_statistic(p, 1e-3, &gs);
    k::omp::hz_statistic(p, 1e-3, &go);
    std::vector<std::size_t> coords(p.data.size());
    std::iota(coords.begin(), coords.end(), 0);
    const auto fd = oracle::central_differences(
        [&](std::span<const double> th) {
          Matrix q = p;
          std::copy(th.begin(), th.end(), q.data.begin());
          return oracle::henze_zirkler(q, 1e-3);
        },
        p.data, coords, 1e-6);
    for (std::size_t i = 0; i < coords.size(); ++i) {
      EXPECT_TRUE(oracle::gradient_close(gs.data[i], fd[i], 1e-4, 1e-7)) << gs.data[i] << " vs " << fd[i];
      EXPECT_NEAR(gs.data[i], go.data[i], 1e-10 * std::max(1.0, std::abs(gs.data[i])));
    }
  }
}

TEST(HzKernel, TooFewPoints) {
  Matrix p(3, 2);
  EXPECT_THROW(k::serial::hz_statistic(p, 1e-6, nullptr), PreconditionError);
  EXPECT_THROW(k::omp::hz_statistic(Matrix(5, 0), 1e-6, nullptr), PreconditionError);
}

TEST(KnnKernel, MatchesBruteForce) {
  Rng rng(5);
  for (std::size_t d : {1u, 3u}) {
    const Matrix p = random_matrix(80, d, rng);
    for (auto norm : {k::Norm::Max, k::Norm::Euclidean}) {
      const auto s = k::serial::knn_distances(p, 4, norm);
      const auto o = k::omp::knn_distances(p, 4, norm);
      for (std::size_t i = 0; i < p.rows; ++i) {
        std::vector<double> ds;
        for (std::size_t j = 0; j < p.rows; ++j) {
          if (j == i) continue;
          double acc = 0;
          for (std::size_t c = 0; c < d; ++c) {
            const double diff = std::abs(p(i, c) - p(j, c));
            acc = norm == k::Norm::Max ? std::max(acc, diff) : acc + diff * diff;
          }
          ds.push_back(norm == k::Norm::Max ? acc : std::sqrt(acc));
        }
        std::sort(ds.begin(), ds.end());
        EXPECT_NEAR(s[i], ds[3], 1e-14);
        EXPECT_EQ(s[i], o[i]);
      }
    }
  }
}

TEST(KsgKernel, CountsMatchBruteForce) {
  Rng rng(6);
  const Matrix x = random_matrix(70, 1, rng), y = random_matrix(70, 2, rng);
  const auto s = k::serial::ksg_counts(x, y, 3);
  const auto o = k::omp::ksg_counts(x, y, 3);
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::vector<double> joint;
    for (std::size_t j = 0; j < x.rows; ++j) {
      if (j == i) continue;
      joint.push_back(std::max({std::abs(x(i, 0) - x(j, 0)), std::abs(y(i, 0) - y(j, 0)), std::abs(y(i, 1) - y(j, 1))}));
    }
    std::sort(joint.begin(), joint.end());
    const double eps = joint[2];
    std::size_t nx = 0, ny = 0;
    for (std::size_t j = 0; j < x.rows; ++j) {
      if (j == i) continue;
      nx += std::abs(x(i, 0) - x(j, 0)) < eps;
      ny += std::max(std::abs(y(i, 0) - y(j, 0)), std::abs(y(i, 1) - y(j, 1))) < eps;
    }
    EXPECT_EQ(s.nx[i], nx);
    EXPECT_EQ(s.ny[i], ny);
    EXPECT_EQ(o.nx[i], nx);
    EXPECT_EQ(o.ny[i], ny);
  }
}
