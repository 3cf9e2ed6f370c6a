#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace bnnlv {

// Dense row-major matrix of doubles. Rows are observations throughout the library.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = (*this)(i, j);
    return out;
  }

  bool empty() const { return data.empty(); }
  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  static Matrix from_column(std::span<const double> v) {
    Matrix m(v.size(), 1);
    for (std::size_t i = 0; i < v.size(); ++i) m.data[i] = v[i];
    return m;
  }

  Matrix select_rows(std::span<const std::size_t> idx) const {
    Matrix m(idx.size(), cols);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      auto src = row(idx[i]);
      auto dst = m.row(i);
      for (std::size_t j = 0; j < cols; ++j) dst[j] = src[j];
    }
    return m;
  }
};

}  // namespace bnnlv
