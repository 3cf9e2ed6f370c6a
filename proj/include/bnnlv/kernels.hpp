#pragma once

// Data-parallel inner loops. Every kernel exists twice with the same signature:
// `serial::` is the plain reference used by the tests, `omp::` is the OpenMP
// version the library calls. Reductions in `omp::` are combined in thread order,
// so results are reproducible for a fixed thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "bnnlv/diffcore.hpp"
#include "bnnlv/matrix.hpp"

namespace bnnlv::kernels {

enum class Norm { Euclidean, Max };

struct NeighborCounts {
  std::vector<std::size_t> nx;
  std::vector<std::size_t> ny;
};

namespace serial {

// Outputs f(x_n, z_n; W) as an N x L matrix. z may have zero columns.
Matrix mlp_predict(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z);

// sum_n ||y_n - f(x_n, z_n; W)||^2 and its gradient. grad_w is overwritten;
// grad_z (if non-null) is resized to N x K and overwritten.
double mlp_sse_grad(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z,
                    const Matrix& y, std::span<double> grad_w, Matrix* grad_z);

// Henze-Zirkler statistic of the rows of `points`; grad (if non-null) receives dHZ/dpoints.
double hz_statistic(const Matrix& points, double ridge, Matrix* grad);

// Distance from every row to its k-th nearest other row.
std::vector<double> knn_distances(const Matrix& points, std::size_t k, Norm norm);

// KSG marginal counts: neighbours strictly inside the joint k-NN max-norm radius.
NeighborCounts ksg_counts(const Matrix& x, const Matrix& y, std::size_t k);

}  // namespace serial

namespace omp {

Matrix mlp_predict(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z);
double mlp_sse_grad(const Architecture& arch, std::span<const double> w, const Matrix& x, const Matrix& z,
                    const Matrix& y, std::span<double> grad_w, Matrix* grad_z);
double hz_statistic(const Matrix& points, double ridge, Matrix* grad);
std::vector<double> knn_distances(const Matrix& points, std::size_t k, Norm norm);
NeighborCounts ksg_counts(const Matrix& x, const Matrix& y, std::size_t k);

}  // namespace omp

// Number of OpenMP threads the omp:: kernels will use.
int max_threads();

}  // namespace bnnlv::kernels
