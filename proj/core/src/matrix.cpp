#include "pdls/matrix.hpp"

#include <cmath>
#include <cstdint>
#include <utility>

#include "pdls/errors.hpp"

namespace pdls {

namespace {

// Below this many multiply-adds the parallel fork costs more than it saves.
constexpr std::size_t kParallelGrain = 1u << 16;

} // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_)
    throw ShapeError("Matrix: data length does not match rows*cols");
}

bool Matrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  Matrix c(n, p);
  const bool par = n * m * p >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double* ci = c.row(static_cast<std::size_t>(i));
    const double* ai = a.row(static_cast<std::size_t>(i));
    for (std::size_t k = 0; k < m; ++k) {
      const double aik = ai[k];
      const double* bk = b.row(k);
      for (std::size_t j = 0; j < p; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  const std::size_t n = a.rows(), m = a.cols(), p = b.rows();
  Matrix c(n, p);
  const bool par = n * m * p >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(n); ++i) {
    double* ci = c.row(static_cast<std::size_t>(i));
    const double* ai = a.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < p; ++j) {
      const double* bj = b.row(j);
      double acc = 0.0;
      for (std::size_t k = 0; k < m; ++k) acc += ai[k] * bj[k];
      ci[j] = acc;
    }
  }
  return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  Matrix c(m, p);
  const bool par = n * m * p >= kParallelGrain;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(m); ++r) {
    double* cr = c.row(static_cast<std::size_t>(r));
    for (std::size_t i = 0; i < n; ++i) {
      const double air = a.at(i, static_cast<std::size_t>(r));
      const double* bi = b.row(i);
      for (std::size_t j = 0; j < p; ++j) cr[j] += air * bi[j];
    }
  }
  return c;
}

void add_inplace(Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError("add_inplace: shape mismatch");
  double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < a.size(); ++i) pa[i] += pb[i];
}

void scale_inplace(Matrix& a, double s) {
  for (double& v : a.storage()) v *= s;
}

void add_row_bias(Matrix& a, const std::vector<double>& bias) {
  if (bias.size() != a.cols()) throw ShapeError("add_row_bias: bias length != cols");
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double* r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) r[j] += bias[j];
  }
}

} // namespace pdls
