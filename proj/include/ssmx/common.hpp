#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ssmx {

enum class errc {
  // file / format / configuration problems (usage errors at the CLI)
  io_failure,
  malformed_manifest,
  shape_byte_mismatch,
  duplicate_name,
  unknown_dtype,
  entry_overlap,
  bad_config,
  missing_entry,
  // computational contract violations
  shape_mismatch,
  out_of_range,
  non_finite_input,
  missing_cls,
  not_square,
  zero_norm_token,
  unknown_activation,
};

class Error : public std::runtime_error {
 public:
  Error(errc code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
  errc code() const { return code_; }

 private:
  errc code_;
};

// Usage errors map to CLI exit code 2, everything else to 1.
inline bool is_usage_error(errc c) {
  switch (c) {
    case errc::io_failure:
    case errc::malformed_manifest:
    case errc::shape_byte_mismatch:
    case errc::duplicate_name:
    case errc::unknown_dtype:
    case errc::entry_overlap:
    case errc::bad_config:
    case errc::missing_entry:
      return true;
    default:
      return false;
  }
}

// Dense row-major matrix of doubles. Sequences are stored as L x D matrices
// (one row per token).
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  std::size_t size() const { return data.size(); }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

inline bool operator==(const Matrix& a, const Matrix& b) {
  return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

// Dense 3-d array, row-major over (d0, d1, d2).
struct Tensor3 {
  std::size_t d0 = 0, d1 = 0, d2 = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t a, std::size_t b, std::size_t c, double fill = 0.0)
      : d0(a), d1(b), d2(c), data(a * b * c, fill) {}

  double& operator()(std::size_t i, std::size_t j, std::size_t k) {
    return data[(i * d1 + j) * d2 + k];
  }
  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data[(i * d1 + j) * d2 + k];
  }
};

using Sequence = Matrix;  // L tokens x D channels

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) throw Error(errc::shape_mismatch, "matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols; ++j) out(i, j) += aik * b(k, j);
    }
  return out;
}

// Branch form keeps exp() away from overflow for large |x|.
inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double silu(double x) { return x * sigmoid(x); }

inline double silu_grad(double x) {
  double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

// Seeded uniform draws built directly on the mt19937_64 bit stream, so the
// same seed produces the same values on every platform (the standard
// distributions are implementation-defined).
class UniformRng {
 public:
  explicit UniformRng(std::uint64_t seed) : eng_(seed) {}

  double unit() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

  std::uint64_t next_u64() { return eng_(); }

  // integer in [0, n)
  std::uint64_t below(std::uint64_t n) { return eng_() % n; }

 private:
  std::mt19937_64 eng_;
};

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw Error(errc::shape_mismatch, "max_abs_diff: length mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace ssmx
