#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace red::nc {

using Real = double;

/// Dense row-major matrix. Vectors are 1 x n, scalars 1 x 1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, Real fill = Real{0});
  Tensor(std::size_t rows, std::size_t cols, std::vector<Real> data);
  Tensor(std::initializer_list<std::initializer_list<Real>> rows);

  static Tensor scalar(Real v) { return Tensor(1, 1, v); }
  static Tensor row(std::span<const Real> values);
  static Tensor identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  std::array<std::size_t, 2> shape() const noexcept { return {rows_, cols_}; }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }
  Real& operator[](std::size_t i) noexcept { return data_[i]; }
  Real operator[](std::size_t i) const noexcept { return data_[i]; }
  Real item() const;

  Real* data() noexcept { return data_.data(); }
  const Real* data() const noexcept { return data_.data(); }
  std::span<Real> span() noexcept { return data_; }
  std::span<const Real> span() const noexcept { return data_; }
  Real* row_ptr(std::size_t r) noexcept { return data_.data() + r * cols_; }
  const Real* row_ptr(std::size_t r) const noexcept { return data_.data() + r * cols_; }

  void fill(Real v);
  bool all_finite() const noexcept;
  Tensor transposed() const;
  Tensor& operator+=(const Tensor& other);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

std::string shape_string(const Tensor& t);
Real max_abs_diff(const Tensor& a, const Tensor& b);

// Raw kernels; all accumulate into `c`.
// c(m x n) += a(m x k) * b(k x n)
void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c);
// c(m x n) += a(m x k) * b(n x k)^T
void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c);
// c(k x n) += a(m x k)^T * b(m x n)
void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c);

}  // namespace red::nc
