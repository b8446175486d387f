#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dime {

/// Base class for everything this library throws.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Mismatched dimensions, out-of-range indices, malformed model files.
struct ShapeError : Error {
  using Error::Error;
};

/// Domain violations and non-finite values reaching a guarded point.
struct NumericError : Error {
  using Error::Error;
};

/// A training run whose objective left the finite range; carries the iteration.
struct DivergenceError : NumericError {
  DivergenceError(const std::string& what, long iteration)
      : NumericError(what), iteration(iteration) {}
  long iteration;
};

/// Invalid or unknown configuration input.
struct ConfigError : Error {
  using Error::Error;
};

/// Dense row-major matrix of doubles. Vectors are 1 x n, scalars 1 x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> data)
      : rows(r), cols(c), v(std::move(data)) {
    if (v.size() != rows * cols)
      throw ShapeError("tensor: data length does not match shape");
  }

  static Tensor scalar(double x) { return Tensor(1, 1, {x}); }

  std::size_t size() const { return v.size(); }
  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  double& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }

  bool all_finite() const {
    for (double x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

/// Column-wise concatenation [a | b]; row counts must agree.
inline Tensor hcat(const Tensor& a, const Tensor& b) {
  if (a.rows != b.rows) throw ShapeError("hcat: row counts differ");
  Tensor out(a.rows, a.cols + b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j);
    for (std::size_t j = 0; j < b.cols; ++j) out.at(i, a.cols + j) = b.at(i, j);
  }
  return out;
}

/// Rows of `x` reordered so row i of the result is row perm[i] of x.
inline Tensor take_rows(const Tensor& x, const std::vector<int>& perm) {
  Tensor out(perm.size(), x.cols);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] < 0 || static_cast<std::size_t>(perm[i]) >= x.rows)
      throw ShapeError("take_rows: index out of range");
    for (std::size_t j = 0; j < x.cols; ++j)
      out.at(i, j) = x.at(static_cast<std::size_t>(perm[i]), j);
  }
  return out;
}

}  // namespace dime
