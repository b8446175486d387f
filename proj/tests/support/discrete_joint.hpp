#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "dime/estimators.hpp"
#include "dime/tensor.hpp"

namespace dime::testing {

/// Finite joint distribution over a small grid, realized as exact multiset
/// batches: the paired batch holds pmf * batch copies of each cell and the
/// unpaired batch holds marginal-product * batch copies, so sample means are
/// exact expectations and estimator values can be checked to 1e-12 against
/// direct sums.
struct DiscreteJoint {
  Tensor pmf;  // nx x ny, sums to one
  std::vector<double> px, py;
  int batch = 0;

  static DiscreteJoint make(Tensor pmf, int batch) {
    DiscreteJoint j;
    j.pmf = std::move(pmf);
    j.batch = batch;
    j.px.assign(j.pmf.rows, 0.0);
    j.py.assign(j.pmf.cols, 0.0);
    double total = 0.0;
    for (std::size_t r = 0; r < j.pmf.rows; ++r)
      for (std::size_t c = 0; c < j.pmf.cols; ++c) {
        double p = j.pmf.at(r, c);
        if (p < 0.0) throw Error("discrete joint: negative mass");
        j.px[r] += p;
        j.py[c] += p;
        total += p;
      }
    if (std::abs(total - 1.0) > 1e-12)
      throw Error("discrete joint: pmf does not sum to one");
    for (std::size_t r = 0; r < j.pmf.rows; ++r)
      for (std::size_t c = 0; c < j.pmf.cols; ++c) {
        double joint_count = j.pmf.at(r, c) * batch;
        double product_count = j.px[r] * j.py[c] * batch;
        if (std::abs(joint_count - std::round(joint_count)) > 1e-9 ||
            std::abs(product_count - std::round(product_count)) > 1e-9)
          throw Error("discrete joint: batch does not realize exact counts");
      }
    return j;
  }

  double ratio(std::size_t r, std::size_t c) const {
    return pmf.at(r, c) / (px[r] * py[c]);
  }

  /// Direct sum of p log(p / (px py)) over all cells with mass.
  double mi_nats() const {
    double mi = 0.0;
    for (std::size_t r = 0; r < pmf.rows; ++r)
      for (std::size_t c = 0; c < pmf.cols; ++c)
        if (pmf.at(r, c) > 0.0) mi += pmf.at(r, c) * std::log(ratio(r, c));
    return mi;
  }

  /// Direct sum of (px py) f(ratio): the f-divergence between joint and
  /// product of marginals.
  double f_divergence(const FGenerator& gen) const {
    double d = 0.0;
    for (std::size_t r = 0; r < pmf.rows; ++r)
      for (std::size_t c = 0; c < pmf.cols; ++c)
        if (pmf.at(r, c) > 0.0) d += px[r] * py[c] * gen.f(ratio(r, c));
    return d;
  }

  /// Cell index per paired-batch sample, pmf-proportional counts.
  std::vector<std::pair<std::size_t, std::size_t>> paired_cells() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t r = 0; r < pmf.rows; ++r)
      for (std::size_t c = 0; c < pmf.cols; ++c) {
        long count = std::lround(pmf.at(r, c) * batch);
        for (long k = 0; k < count; ++k) out.emplace_back(r, c);
      }
    return out;
  }

  /// Cell index per unpaired-batch sample, marginal-product counts.
  std::vector<std::pair<std::size_t, std::size_t>> product_cells() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t r = 0; r < pmf.rows; ++r)
      for (std::size_t c = 0; c < pmf.cols; ++c) {
        long count = std::lround(px[r] * py[c] * batch);
        for (long k = 0; k < count; ++k) out.emplace_back(r, c);
      }
    return out;
  }

  /// The listed cells mapped through a function of the density ratio: this is
  /// how an analytically optimal discriminator's outputs are materialized.
  template <typename Fn>
  std::vector<double> outputs(
      const std::vector<std::pair<std::size_t, std::size_t>>& cells,
      Fn&& of_ratio) const {
    std::vector<double> out;
    out.reserve(cells.size());
    for (const auto& [r, c] : cells) out.push_back(of_ratio(ratio(r, c)));
    return out;
  }
};

/// The fixed joints the exact-oracle checks run on. Ratios all sit inside
/// [2/3, 2], so a smile clip at tau = 1 never activates at the optimum.
inline std::vector<DiscreteJoint> oracle_joints() {
  std::vector<DiscreteJoint> js;
  js.push_back(DiscreteJoint::make(
      Tensor(2, 2, {1.0 / 2, 1.0 / 4, 1.0 / 8, 1.0 / 8}), 32));
  js.push_back(DiscreteJoint::make(
      Tensor(2, 2, {1.0 / 8, 3.0 / 8, 1.0 / 8, 3.0 / 8}), 32));
  js.push_back(DiscreteJoint::make(
      Tensor(2, 2, {5.0 / 16, 3.0 / 16, 3.0 / 16, 5.0 / 16}), 32));
  Tensor four(4, 4);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      four.at(r, c) = r == c ? 1.0 / 8 : 1.0 / 24;
  js.push_back(DiscreteJoint::make(std::move(four), 48));
  return js;
}

}  // namespace dime::testing
