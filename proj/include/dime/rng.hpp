#pragma once

#include <cstdint>
#include <random>

#include "dime/tensor.hpp"

namespace dime {

/// Seeded random stream. One instance per run; sub-tasks derive their own
/// streams additively from the run seed so every result is reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  double normal() { return norm_(gen_); }

  double uniform() { return uni_(gen_); }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uni_(gen_); }

  /// Integer uniform on [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw Error("uniform_int: n must be positive");
    return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(gen_));
  }

  Tensor normal_tensor(std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    for (double& x : t.v) x = normal();
    return t;
  }

 private:
  std::mt19937_64 gen_;
  std::normal_distribution<double> norm_{0.0, 1.0};
  std::uniform_real_distribution<double> uni_{0.0, 1.0};
};

}  // namespace dime
