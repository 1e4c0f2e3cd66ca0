#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "oilca/num/errors.hpp"
#include "oilca/num/rng.hpp"

namespace oilca::num {

// Dense row-major matrix of doubles. The checked constructors reject
// non-finite entries; internal op kernels fill preallocated buffers.
class Tensor2 {
 public:
  Tensor2() = default;

  Tensor2(int rows, int cols)
      : rows_(rows), cols_(cols),
        data_(checked_len(rows, cols), 0.0) {}

  static Tensor2 from_data(int rows, int cols, std::vector<double> data) {
    Tensor2 t;
    t.rows_ = rows;
    t.cols_ = cols;
    if (data.size() != checked_len(rows, cols))
      throw DimensionError("Tensor2::from_data: size mismatch");
    t.data_ = std::move(data);
    t.require_finite("Tensor2::from_data");
    return t;
  }

  static Tensor2 filled(int rows, int cols, double v) {
    if (!std::isfinite(v)) throw NumericError("Tensor2::filled: non-finite");
    Tensor2 t(rows, cols);
    for (double& x : t.data_) x = v;
    return t;
  }

  static Tensor2 identity(int n) {
    Tensor2 t(n, n);
    for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
    return t;
  }

  static Tensor2 randn(int rows, int cols, Rng& rng, double scale = 1.0) {
    Tensor2 t(rows, cols);
    for (double& x : t.data_) x = scale * rng.normal();
    return t;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& at(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double at(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool same_shape(const Tensor2& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_;
  }

  void require_finite(const char* what) const {
    for (double x : data_)
      if (!std::isfinite(x))
        throw NumericError(std::string(what) + ": non-finite entry");
  }

  bool all_finite() const {
    for (double x : data_)
      if (!std::isfinite(x)) return false;
    return true;
  }

  // FNV over the raw bit patterns; used for checkpoint/freeze checksums.
  std::uint64_t content_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
      for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xff;
        h *= 0x100000001b3ull;
      }
    };
    mix(static_cast<std::uint64_t>(rows_));
    mix(static_cast<std::uint64_t>(cols_));
    for (double x : data_) {
      std::uint64_t bits;
      static_assert(sizeof(bits) == sizeof(x));
      __builtin_memcpy(&bits, &x, sizeof(bits));
      mix(bits);
    }
    return h;
  }

 private:
  static std::size_t checked_len(int rows, int cols) {
    if (rows <= 0 || cols <= 0)
      throw DimensionError("Tensor2: shape must be positive");
    return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  }

  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// C = A * B
inline void gemm(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols())
    throw DimensionError("gemm: shape mismatch");
  const int n = a.rows(), k = a.cols(), m = b.cols();
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (int i = 0; i < n; ++i) {
    double* crow = pc + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) crow[j] = 0.0;
    const double* arow = pa + static_cast<std::size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const double av = arow[p];
      const double* brow = pb + static_cast<std::size_t>(p) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

// C += A * B^T
inline void gemm_nt_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows())
    throw DimensionError("gemm_nt_acc: shape mismatch");
  const int n = a.rows(), k = a.cols(), m = b.rows();
  for (int i = 0; i < n; ++i) {
    const double* arow = a.data().data() + static_cast<std::size_t>(i) * k;
    double* crow = c.data().data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) {
      const double* brow = b.data().data() + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C += A^T * B
inline void gemm_tn_acc(const Tensor2& a, const Tensor2& b, Tensor2& c) {
  if (a.rows() != b.rows() || c.rows() != a.cols() || c.cols() != b.cols())
    throw DimensionError("gemm_tn_acc: shape mismatch");
  const int n = a.cols(), k = a.rows(), m = b.cols();
  for (int p = 0; p < k; ++p) {
    const double* arow = a.data().data() + static_cast<std::size_t>(p) * n;
    const double* brow = b.data().data() + static_cast<std::size_t>(p) * m;
    for (int i = 0; i < n; ++i) {
      const double av = arow[i];
      double* crow = c.data().data() + static_cast<std::size_t>(i) * m;
      for (int j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace oilca::num
