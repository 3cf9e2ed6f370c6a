#include <algorithm>
#include <cmath>

#include "kernels_common.hpp"

namespace bnnlv::kernels::serial {

Matrix mlp_predict(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z) {
  detail::check_mlp_inputs(arch, w, x, z);
  detail::MlpWorkspace ws(arch);
  Matrix out(x.rows, arch.output_dim);
  for (std::size_t n = 0; n < x.rows; ++n) {
    detail::forward_row(arch, w, x.row(n), arch.input_dim_z ? z.row(n) : std::span<const double>{}, ws);
    const auto& f = ws.act.back();
    std::copy(f.begin(), f.end(), out.row(n).begin());
  }
  return out;
}

double mlp_sse_grad(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z,
                    const Matrix& y, std::span<double> grad_w, Matrix* grad_z) {
  detail::check_mlp_inputs(arch, w, x, z);
  if (y.rows != x.rows || y.cols != arch.output_dim) throw ShapeError("mlp_sse_grad: y shape mismatch");
  if (grad_w.size() != w.size()) throw ShapeError("mlp_sse_grad: gradient buffer length mismatch");
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  if (grad_z) *grad_z = Matrix(x.rows, arch.input_dim_z);
  detail::MlpWorkspace ws(arch);
  double sse = 0.0;
  for (std::size_t n = 0; n < x.rows; ++n) {
    detail::forward_row(arch, w, x.row(n), arch.input_dim_z ? z.row(n) : std::span<const double>{}, ws);
    std::span<double> gz = grad_z && arch.input_dim_z ? grad_z->row(n) : std::span<double>{};
    sse += detail::backward_row(arch, w, y.row(n), ws, grad_w.data(), gz);
  }
  return sse;
}

double hz_statistic(const Matrix& points, double ridge, Matrix* grad) {
  const detail::HzSetup h = detail::hz_setup(points, ridge);
  const std::size_t n = h.n;
  const std::size_t k = h.dim;
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  const double half_b2 = 0.5 * h.beta2;
  const double point_rate = h.beta2 / (2.0 * (1.0 + h.beta2));
  const double point_scale = 2.0 * std::pow(1.0 + h.beta2, -kd / 2.0);

  std::vector<double> u(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < k; ++d)
      u[i * k + d] = h.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));

  const bool want_grad = grad != nullptr;
  std::vector<double> s(want_grad ? n : 0, 0.0);
  Eigen::MatrixXd v = want_grad ? Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k))
                                : Eigen::MatrixXd();
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double dist = 0.0;
      for (std::size_t d = 0; d < k; ++d) {
        const double diff = u[i * k + d] - u[j * k + d];
        dist += diff * diff;
      }
      const double e = std::exp(-half_b2 * dist);
      pair_sum += e;
      if (want_grad) {
        const double wij = -half_b2 * e / nd;
        s[i] += wij;
        s[j] += wij;
        const auto ii = static_cast<Eigen::Index>(i);
        const auto jj = static_cast<Eigen::Index>(j);
        v.row(ii) += wij * h.centered.row(jj);
        v.row(jj) += wij * h.centered.row(ii);
      }
    }
  }
  double point_sum = 0.0;
  std::vector<double> point_weight(want_grad ? n : 0);
  for (std::size_t i = 0; i < n; ++i) {
    double di = 0.0;
    for (std::size_t d = 0; d < k; ++d) di += u[i * k + d] * u[i * k + d];
    const double e = std::exp(-point_rate * di);
    point_sum += e;
    if (want_grad) point_weight[i] = point_scale * point_rate * e;
  }
  const double value = (nd + 2.0 * pair_sum) / nd - point_scale * point_sum +
                       nd * std::pow(1.0 + 2.0 * h.beta2, -kd / 2.0);
  if (want_grad) detail::hz_assemble_gradient(h, s, v, point_weight, *grad);
  return value;
}

std::vector<double> knn_distances(const Matrix& points, std::size_t k, Norm norm) {
  detail::check_knn(points, k);
  const std::size_t n = points.rows;
  std::vector<double> out(n);
  if (points.cols == 1) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points(a, 0) < points(b, 0); });
    std::vector<double> sorted(n);
    for (std::size_t r = 0; r < n; ++r) sorted[r] = points(order[r], 0);
    for (std::size_t r = 0; r < n; ++r) out[order[r]] = detail::kth_distance_sorted(sorted, r, k);
    return out;
  }
  std::vector<double> dist(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) dist[m++] = detail::distance(points.row(i), points.row(j), norm);
    std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
    out[i] = dist[k - 1];
  }
  return out;
}

NeighborCounts ksg_counts(const Matrix& x, const Matrix& y, std::size_t k) {
  if (x.rows != y.rows) throw ShapeError("ksg_counts: row mismatch");
  detail::check_knn(x, k);
  const std::size_t n = x.rows;
  NeighborCounts c{std::vector<std::size_t>(n), std::vector<std::size_t>(n)};
  std::vector<double> dx(n), dy(n), joint(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      dx[j] = detail::distance(x.row(i), x.row(j), Norm::Max);
      dy[j] = detail::distance(y.row(i), y.row(j), Norm::Max);
      if (j != i) joint[m++] = std::max(dx[j], dy[j]);
    }
    std::nth_element(joint.begin(), joint.begin() + static_cast<std::ptrdiff_t>(k - 1), joint.end());
    const double eps = joint[k - 1];
    std::size_t nx = 0, ny = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      nx += dx[j] < eps;
      ny += dy[j] < eps;
    }
    c.nx[i] = nx;
    c.ny[i] = ny;
  }
  return c;
}

}  // namespace bnnlv::kernels::serial
