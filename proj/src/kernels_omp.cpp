#include <omp.h>

#include <algorithm>
#include <cmath>

#include "kernels_common.hpp"

namespace bnnlv::kernels {

int max_threads() { return omp_get_max_threads(); }

namespace omp {

Matrix mlp_predict(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z) {
  detail::check_mlp_inputs(arch, w, x, z);
  Matrix out(x.rows, arch.output_dim);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows);
#pragma omp parallel
  {
    detail::MlpWorkspace ws(arch);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < rows; ++n) {
      const auto r = static_cast<std::size_t>(n);
      detail::forward_row(arch, w, x.row(r), arch.input_dim_z ? z.row(r) : std::span<const double>{}, ws);
      const auto& f = ws.act.back();
      std::copy(f.begin(), f.end(), out.row(r).begin());
    }
  }
  return out;
}

double mlp_sse_grad(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z,
                    const Matrix& y, std::span<double> grad_w, Matrix* grad_z) {
  detail::check_mlp_inputs(arch, w, x, z);
  if (y.rows != x.rows || y.cols != arch.output_dim) throw ShapeError("mlp_sse_grad: y shape mismatch");
  if (grad_w.size() != w.size()) throw ShapeError("mlp_sse_grad: gradient buffer length mismatch");
  if (grad_z) *grad_z = Matrix(x.rows, arch.input_dim_z);
  const int threads = omp_in_parallel() ? 1 : omp_get_max_threads();
  const std::size_t p = w.size();
  std::vector<double> partial_grad(static_cast<std::size_t>(threads) * p, 0.0);
  std::vector<double> partial_sse(static_cast<std::size_t>(threads), 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(x.rows);
#pragma omp parallel num_threads(threads)
  {
    const auto t = static_cast<std::size_t>(omp_get_thread_num());
    detail::MlpWorkspace ws(arch);
    double* g = partial_grad.data() + t * p;
    double sse = 0.0;
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < rows; ++n) {
      const auto r = static_cast<std::size_t>(n);
      detail::forward_row(arch, w, x.row(r), arch.input_dim_z ? z.row(r) : std::span<const double>{}, ws);
      std::span<double> gz = grad_z && arch.input_dim_z ? grad_z->row(r) : std::span<double>{};
      sse += detail::backward_row(arch, w, y.row(r), ws, g, gz);
    }
    partial_sse[t] = sse;
  }
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  double sse = 0.0;
  for (std::size_t t = 0; t < static_cast<std::size_t>(threads); ++t) {
    sse += partial_sse[t];
    const double* g = partial_grad.data() + t * p;
    for (std::size_t i = 0; i < p; ++i) grad_w[i] += g[i];
  }
  return sse;
}

// Each row sums over all partners, so no cross-thread accumulation is needed
// and the result does not depend on the thread count.
double hz_statistic(const Matrix& points, double ridge, Matrix* grad) {
  const detail::HzSetup h = detail::hz_setup(points, ridge);
  const std::size_t n = h.n;
  const std::size_t k = h.dim;
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  const double half_b2 = 0.5 * h.beta2;
  const double point_rate = h.beta2 / (2.0 * (1.0 + h.beta2));
  const double point_scale = 2.0 * std::pow(1.0 + h.beta2, -kd / 2.0);

  std::vector<double> u(n * k), c(n * k);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t d = 0; d < k; ++d) {
      u[i * k + d] = h.u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
      c[i * k + d] = h.centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d));
    }

  const bool want_grad = grad != nullptr;
  std::vector<double> row_sum(n, 0.0);
  std::vector<double> s(n, 0.0);
  std::vector<double> v(want_grad ? n * k : 0, 0.0);
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ip = 0; ip < rows; ++ip) {
    const auto i = static_cast<std::size_t>(ip);
    const double* ui = u.data() + i * k;
    double acc = 0.0;
    double si = 0.0;
    double* vi = want_grad ? v.data() + i * k : nullptr;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double* uj = u.data() + j * k;
      double dist = 0.0;
      for (std::size_t d = 0; d < k; ++d) {
        const double diff = ui[d] - uj[d];
        dist += diff * diff;
      }
      const double e = std::exp(-half_b2 * dist);
      acc += e;
      if (want_grad) {
        const double wij = -half_b2 * e / nd;
        si += wij;
        const double* cj = c.data() + j * k;
        for (std::size_t d = 0; d < k; ++d) vi[d] += wij * cj[d];
      }
    }
    row_sum[i] = acc;
    s[i] = si;
  }
  double pair_sum = 0.0;
  for (double r : row_sum) pair_sum += r;
  double point_sum = 0.0;
  std::vector<double> point_weight(n);
  for (std::size_t i = 0; i < n; ++i) {
    double di = 0.0;
    for (std::size_t d = 0; d < k; ++d) di += u[i * k + d] * u[i * k + d];
    const double e = std::exp(-point_rate * di);
    point_sum += e;
    point_weight[i] = point_scale * point_rate * e;
  }
  const double value =
      (nd + pair_sum) / nd - point_scale * point_sum + nd * std::pow(1.0 + 2.0 * h.beta2, -kd / 2.0);
  if (want_grad) {
    Eigen::MatrixXd vm(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(k));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t d = 0; d < k; ++d) vm(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = v[i * k + d];
    detail::hz_assemble_gradient(h, s, vm, point_weight, *grad);
  }
  return value;
}

std::vector<double> knn_distances(const Matrix& points, std::size_t k, Norm norm) {
  detail::check_knn(points, k);
  const std::size_t n = points.rows;
  std::vector<double> out(n);
  const auto rows = static_cast<std::ptrdiff_t>(n);
  if (points.cols == 1) {
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return points(a, 0) < points(b, 0); });
    std::vector<double> sorted(n);
    for (std::size_t r = 0; r < n; ++r) sorted[r] = points(order[r], 0);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r) {
      const auto rr = static_cast<std::size_t>(r);
      out[order[rr]] = detail::kth_distance_sorted(sorted, rr, k);
    }
    return out;
  }
#pragma omp parallel
  {
    std::vector<double> dist(n - 1);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ip = 0; ip < rows; ++ip) {
      const auto i = static_cast<std::size_t>(ip);
      std::size_t m = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) dist[m++] = detail::distance(points.row(i), points.row(j), norm);
      std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k - 1), dist.end());
      out[i] = dist[k - 1];
    }
  }
  return out;
}

NeighborCounts ksg_counts(const Matrix& x, const Matrix& y, std::size_t k) {
  if (x.rows != y.rows) throw ShapeError("ksg_counts: row mismatch");
  detail::check_knn(x, k);
  const std::size_t n = x.rows;
  NeighborCounts c{std::vector<std::size_t>(n), std::vector<std::size_t>(n)};
  const auto rows = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel
  {
    std::vector<double> dx(n), dy(n), joint(n - 1);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ip = 0; ip < rows; ++ip) {
      const auto i = static_cast<std::size_t>(ip);
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
  }
  return c;
}

}  // namespace omp
}  // namespace bnnlv::kernels
