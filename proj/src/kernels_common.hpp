#pragma once

// Row-level building blocks shared by the serial and OpenMP kernels.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "bnnlv/diffcore.hpp"
#include "bnnlv/errors.hpp"
#include "bnnlv/kernels.hpp"
#include "bnnlv/matrix.hpp"

namespace bnnlv::kernels::detail {

struct MlpWorkspace {
  std::vector<std::vector<double>> act;  // act[0] = [x; z], act[l + 1] = output of layer l
  std::vector<std::vector<double>> pre;  // pre-activations per layer
  std::vector<double> delta;
  std::vector<double> delta_prev;

  explicit MlpWorkspace(const Architecture& arch) {
    act.resize(arch.num_layers() + 1);
    pre.resize(arch.num_layers());
    act[0].resize(arch.input_dim());
    for (std::size_t l = 0; l < arch.num_layers(); ++l) {
      const std::size_t out = arch.layer(l).out;
      act[l + 1].resize(out);
      pre[l].resize(out);
    }
  }
};

inline void check_mlp_inputs(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z) {
  if (w.size() != arch.parameter_count()) throw ShapeError("mlp kernel: weight vector length mismatch");
  if (x.cols != arch.input_dim_x) throw ShapeError("mlp kernel: x has wrong column count");
  if (z.cols != arch.input_dim_z) throw ShapeError("mlp kernel: z has wrong column count");
  if (arch.input_dim_z > 0 && z.rows != x.rows) throw ShapeError("mlp kernel: z rows do not align with x rows");
}

inline void forward_row(const Architecture& arch, std::span<const double> w, std::span<const double> x,
                        std::span<const double> z, MlpWorkspace& ws) {
  std::copy(x.begin(), x.end(), ws.act[0].begin());
  std::copy(z.begin(), z.end(), ws.act[0].begin() + static_cast<std::ptrdiff_t>(x.size()));
  const std::size_t layers = arch.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const LayerSlice s = arch.layer(l);
    const double* wl = w.data() + s.weight_offset;
    const double* bl = w.data() + s.bias_offset;
    const std::vector<double>& in = ws.act[l];
    std::vector<double>& pre = ws.pre[l];
    std::vector<double>& out = ws.act[l + 1];
    const bool hidden = l + 1 < layers;
    for (std::size_t o = 0; o < s.out; ++o) {
      double a = bl[o];
      const double* row = wl + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) a += row[i] * in[i];
      pre[o] = a;
      out[o] = hidden ? leaky_relu(a, arch.leaky_slope) : a;
    }
  }
}

// Accumulates d/dW of ||y - f||^2 into grad_w; writes d/dz into grad_z (if non-empty). Returns ||y - f||^2.
inline double backward_row(const Architecture& arch, std::span<const double> w, std::span<const double> y,
                           MlpWorkspace& ws, double* grad_w, std::span<double> grad_z) {
  const std::size_t layers = arch.num_layers();
  const std::vector<double>& out = ws.act[layers];
  ws.delta.assign(out.size(), 0.0);
  double sse = 0.0;
  for (std::size_t o = 0; o < out.size(); ++o) {
    const double r = out[o] - y[o];
    sse += r * r;
    ws.delta[o] = 2.0 * r;
  }
  for (std::size_t l = layers; l-- > 0;) {
    const LayerSlice s = arch.layer(l);
    const double* wl = w.data() + s.weight_offset;
    double* gw = grad_w + s.weight_offset;
    double* gb = grad_w + s.bias_offset;
    const std::vector<double>& in = ws.act[l];
    const bool need_prev = l > 0 || !grad_z.empty();
    if (need_prev) ws.delta_prev.assign(s.in, 0.0);
    for (std::size_t o = 0; o < s.out; ++o) {
      const double d = ws.delta[o];
      gb[o] += d;
      const double* row = wl + o * s.in;
      double* grow = gw + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) grow[i] += d * in[i];
      if (need_prev)
        for (std::size_t i = 0; i < s.in; ++i) ws.delta_prev[i] += row[i] * d;
    }
    if (l > 0) {
      const std::vector<double>& pre = ws.pre[l - 1];
      for (std::size_t i = 0; i < s.in; ++i) ws.delta_prev[i] *= leaky_relu_derivative(pre[i], arch.leaky_slope);
      ws.delta.swap(ws.delta_prev);
    } else if (!grad_z.empty()) {
      for (std::size_t k = 0; k < grad_z.size(); ++k) grad_z[k] = ws.delta_prev[arch.input_dim_x + k];
    }
  }
  return sse;
}

// Standardization shared by both HZ kernels.
struct HzSetup {
  std::size_t n = 0;
  std::size_t dim = 0;
  double beta2 = 0.0;
  double ridge_coef = 0.0;
  std::vector<bool> ridge_active;  // false where the absolute floor replaced ridge * S_aa
  Eigen::MatrixXd centered;   // n x dim
  Eigen::MatrixXd a;          // (S + ridge diag(S))^-1
  Eigen::MatrixXd u;          // n x dim, rows L^-1 c_i so that D_ij = ||u_i - u_j||^2
};

inline HzSetup hz_setup(const Matrix& points, double ridge) {
  HzSetup h;
  h.n = points.rows;
  h.dim = points.cols;
  h.ridge_coef = ridge;
  if (h.dim == 0) throw PreconditionError("hz_statistic: points have no columns");
  if (h.n < h.dim + 2) throw PreconditionError("hz_statistic: need at least K + 2 points");
  const double nd = static_cast<double>(h.n);
  const double kd = static_cast<double>(h.dim);
  h.beta2 = 0.5 * std::pow((2.0 * kd + 1.0) * nd / 4.0, 2.0 / (kd + 4.0));

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> p(
      points.data.data(), static_cast<Eigen::Index>(h.n), static_cast<Eigen::Index>(h.dim));
  const Eigen::RowVectorXd mean = p.colwise().mean();
  h.centered = p.rowwise() - mean;
  Eigen::MatrixXd s = (h.centered.transpose() * h.centered) / nd;
  // Per-axis ridge proportional to each variance keeps the statistic invariant to axis scaling.
  const double floor = 1e-300;
  h.ridge_active.resize(h.dim);
  for (Eigen::Index a = 0; a < s.rows(); ++a) {
    const double lam = ridge * s(a, a);
    h.ridge_active[static_cast<std::size_t>(a)] = lam > floor;
    s(a, a) += std::max(lam, floor);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) throw PreconditionError("hz_statistic: covariance is singular after ridge");
  h.a = llt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
  h.u = llt.matrixL().solve(h.centered.transpose()).transpose();
  return h;
}

// Given per-row pair sums s_i = sum_j w_ij and v_i = sum_j w_ij c_j (w_ij = dHZ/dD_ij), assemble dHZ/dX.
inline void hz_assemble_gradient(const HzSetup& h, const std::vector<double>& pair_weight_sum,
                                 const Eigen::MatrixXd& pair_weighted_c, const std::vector<double>& point_weight,
                                 Matrix& grad) {
  const std::size_t n = h.n;
  const std::size_t k = h.dim;
  const double nd = static_cast<double>(n);
  const Eigen::MatrixXd ac = h.centered * h.a;  // rows a_i = A c_i (A symmetric)
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
  Eigen::MatrixXd gmat = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k));
  Eigen::RowVectorXd weighted_ac_sum = Eigen::RowVectorXd::Zero(static_cast<Eigen::Index>(k));
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    const Eigen::RowVectorXd ci = h.centered.row(ii);
    const Eigen::RowVectorXd vi = pair_weighted_c.row(ii);
    // Pair term: 4 (s_i a_i - A v_i).
    g.row(ii) = 4.0 * (pair_weight_sum[i] * ac.row(ii) - vi * h.a);
    g.row(ii) += 2.0 * point_weight[i] * ac.row(ii);
    weighted_ac_sum += point_weight[i] * ac.row(ii);
    gmat += 2.0 * pair_weight_sum[i] * ci.transpose() * ci - 2.0 * ci.transpose() * vi;
    gmat += point_weight[i] * ci.transpose() * ci;
  }
  // Dependence of A on the points through the (ridged) covariance.
  const Eigen::MatrixXd gamma = h.a * gmat * h.a;
  Eigen::MatrixXd psi = 0.5 * (gamma + gamma.transpose());
  for (std::size_t a = 0; a < k; ++a) {
    const auto aa = static_cast<Eigen::Index>(a);
    if (h.ridge_active[a]) psi(aa, aa) += h.ridge_coef * gamma(aa, aa);
  }
  const Eigen::MatrixXd through_cov = h.centered * psi * (-2.0 / nd);
  grad = Matrix(n, k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < k; ++d) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto dd = static_cast<Eigen::Index>(d);
      grad(i, d) = g(ii, dd) - (2.0 / nd) * weighted_ac_sum(dd) + through_cov(ii, dd);
    }
}

inline double distance(std::span<const double> a, std::span<const double> b, Norm norm) {
  double acc = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = std::abs(a[d] - b[d]);
    if (norm == Norm::Max)
      acc = std::max(acc, diff);
    else
      acc += diff * diff;
  }
  return norm == Norm::Max ? acc : std::sqrt(acc);
}

// k-th nearest distance in 1-D by expanding a window over sorted values.
inline double kth_distance_sorted(const std::vector<double>& sorted, std::size_t pos, std::size_t k) {
  std::size_t lo = pos;
  std::size_t hi = pos;
  double d = 0.0;
  const double v = sorted[pos];
  for (std::size_t step = 0; step < k; ++step) {
    const double left = lo > 0 ? v - sorted[lo - 1] : std::numeric_limits<double>::infinity();
    const double right = hi + 1 < sorted.size() ? sorted[hi + 1] - v : std::numeric_limits<double>::infinity();
    if (left <= right) {
      d = left;
      --lo;
    } else {
      d = right;
      ++hi;
    }
  }
  return d;
}

inline void check_knn(const Matrix& points, std::size_t k) {
  if (k == 0) throw PreconditionError("knn: k must be >= 1");
  if (points.rows <= k) throw PreconditionError("knn: need more than k points");
}

}  // namespace bnnlv::kernels::detail
