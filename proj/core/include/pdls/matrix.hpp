#pragma once

#include <cstddef>
#include <vector>

namespace pdls {

/// Dense row-major matrix of 64-bit floats.
///
/// All contractions accumulate over the contraction index in ascending
/// order, one output element per thread, so results are bit-identical
/// across runs and thread counts.
class Matrix {
public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double* row(std::size_t r) { return data_.data() + r * cols_; }
  const double* row(std::size_t r) const { return data_.data() + r * cols_; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  bool all_finite() const;

  bool operator==(const Matrix& other) const = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// C = A (n x m) * B (m x p).
Matrix matmul(const Matrix& a, const Matrix& b);

/// C = A (n x m) * B^T with B (p x m). Layout of choice for dense layers
/// whose weights are stored out x in.
Matrix matmul_nt(const Matrix& a, const Matrix& b);

/// C = A^T (m x n) * B (n x p). Used for weight gradients.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

void add_inplace(Matrix& a, const Matrix& b);
void scale_inplace(Matrix& a, double s);

/// Adds a bias vector to every row.
void add_row_bias(Matrix& a, const std::vector<double>& bias);

} // namespace pdls
