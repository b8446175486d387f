#pragma once

#include <string>
#include <vector>

#include "dime/graph.hpp"
#include "dime/rng.hpp"

namespace dime {

enum class Head { Linear, Softplus, SoftmaxRows };

struct DenseLayer {
  Parameter w;  // in x out
  Parameter b;  // 1 x out
};

/// Fully connected stack with leaky-ReLU hidden activations and a selectable
/// output head. Weights start uniform in +-sqrt(6 / (fan_in + fan_out)),
/// biases at zero.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::vector<int>& widths, Head head, double leaky_slope, Rng& rng,
      const std::string& name);

  /// Forward pass whose parameters receive gradients from backward.
  Var forward(Graph& g, Var x);
  /// Forward pass through the current values only; nothing trains.
  Var forward_frozen(Graph& g, Var x) const;

  std::vector<Parameter*> params();
  const std::vector<DenseLayer>& layers() const { return layers_; }
  Head head() const { return head_; }
  double leaky_slope() const { return slope_; }
  int input_width() const;
  int output_width() const;
  std::vector<int> widths() const;

  /// Flat value stream, layer by layer, each weight matrix row-major then its
  /// bias row. read_values returns the new cursor position.
  void append_values(std::vector<double>& out) const;
  std::size_t read_values(const std::vector<double>& in, std::size_t pos);

 private:
  Var run(Graph& g, Var x, bool frozen) const;

  std::vector<DenseLayer> layers_;
  Head head_ = Head::Linear;
  double slope_ = 0.2;
};

}  // namespace dime
