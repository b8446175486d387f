#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dime/tensor.hpp"

namespace dime {

/// Arguments to log are clamped up to this before evaluation.
constexpr double kLogFloor = 1e-38;
/// Arguments to exp are clamped down to this; each clamped element counts
/// as one clip event on the owning graph.
constexpr double kExpCap = 80.0;

/// First and second moment buffers for Adam, stored with the parameter so
/// state survives across iterations.
struct AdamState {
  Tensor m, v;
  long step = 0;
};

/// Trainable leaf. Gradients accumulate across backward calls until
/// zero_grads; has_grad marks that at least one backward reached it.
class Parameter {
 public:
  Parameter() = default;
  explicit Parameter(Tensor value, std::string name = "")
      : value(std::move(value)), name(std::move(name)) {
    grad = Tensor(this->value.rows, this->value.cols);
  }

  Tensor value;
  Tensor grad;
  std::string name;
  bool has_grad = false;
  AdamState adam;
};

class Graph;

/// Handle to a node inside a Graph; cheap to copy, valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;
};

/// Computation tape. Forward values are computed eagerly as ops are built;
/// backward walks the tape in reverse from a scalar objective and accumulates
/// gradients into the Parameters that fed the graph. One graph per training
/// step; graphs are cheap to create and discard.
class Graph {
 public:
  /// Leaf holding fixed data; receives no gradient of its own.
  Var constant(Tensor t);
  /// Trainable leaf; backward adds into p.grad. The same parameter may feed
  /// a graph through several nodes and the contributions sum.
  Var param(Parameter& p);
  /// The parameter's current value as plain data: no gradient flows back.
  Var frozen(const Parameter& p);

  const Tensor& value(Var v) const;
  /// Value of a 1 x 1 node.
  double scalar(Var v) const;

  /// Reverse pass from a finite 1 x 1 objective. Seeds d(out)/d(out) = 1.
  void backward(Var out);

  /// Elements clamped by the exp guard since this graph was created.
  long clip_events() const { return clip_events_; }

  /// When set, every op validates its output is finite (slower; used by
  /// gradient checking and tests). Off by default: training loops check the
  /// final objective only.
  void set_check_all(bool on) { check_all_ = on; }

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    Constant, Param, MatMul, AddBias, Add, Sub, Mul, Affine, LeakyRelu,
    Softplus, Log, Exp, Pow, Clip, MeanAll, SoftmaxRows, CrossEntropyRows,
    NllRows, PowerNorm, ComplexScale, PermuteRows, ConcatCols, BadIdentity
  };

  struct Node {
    Op op;
    int a = -1;
    int b = -1;
    double c0 = 0.0;
    double c1 = 0.0;
    Tensor value;
    Tensor grad;
    Tensor aux;
    std::vector<int> idx;
    Parameter* parameter = nullptr;
  };

  Var push(Node n);
  Var checked(Var v) const;
  const Node& node(Var v) const;
  void check_owned(Var v, const char* who) const;
  void backward_one(Node& n);
  static const char* op_name(Op op);
  static Var make_unary(Var x, Op op, const char* who, double c0 = 0.0,
                        double c1 = 0.0);
  static Var make_binary(Var a, Var b, Op op, const char* who);
  Tensor& node_value(Var v) { return nodes_[static_cast<std::size_t>(v.id)].value; }

  std::vector<Node> nodes_;
  long clip_events_ = 0;
  bool check_all_ = false;

  friend Var matmul(Var a, Var b);
  friend Var add_bias(Var x, Var bias);
  friend Var add(Var a, Var b);
  friend Var sub(Var a, Var b);
  friend Var mul(Var a, Var b);
  friend Var affine(Var x, double scale, double shift);
  friend Var leaky_relu(Var x, double slope);
  friend Var softplus(Var x);
  friend Var log(Var x);
  friend Var exp(Var x);
  friend Var pow(Var x, double exponent);
  friend Var clip(Var x, double lo, double hi);
  friend Var mean_all(Var x);
  friend Var softmax_rows(Var x);
  friend Var cross_entropy_rows(Var probs, const Tensor& targets);
  friend Var nll_rows(Var probs, const std::vector<int>& labels);
  friend Var power_normalize(Var x);
  friend Var complex_scale(Var x, const Tensor& h);
  friend Var permute_rows(Var x, const std::vector<int>& rows);
  friend Var concat_cols(Var a, Var b);
  friend Var debug_bad_identity(Var x);
};

/// Dense product a @ b; a is r x k, b is k x c.
Var matmul(Var a, Var b);
/// Adds a 1 x c bias row to every row of x.
Var add_bias(Var x, Var bias);
Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise product.
Var mul(Var a, Var b);
/// scale * x + shift, elementwise.
Var affine(Var x, double scale, double shift);
Var leaky_relu(Var x, double slope);
/// Numerically stable log(1 + e^x); strictly positive.
Var softplus(Var x);
/// Elementwise log with the argument floored at kLogFloor.
Var log(Var x);
/// Elementwise exp with the argument capped at kExpCap; caps count as clip
/// events on the graph.
Var exp(Var x);
/// x^exponent with the base floored at kLogFloor (same guard as log), so a
/// discriminator output that underflows to zero cannot poison a power term.
Var pow(Var x, double exponent);
/// Clamp into [lo, hi]; gradient passes only strictly inside the interval.
Var clip(Var x, double lo, double hi);
/// Mean over all elements; result is 1 x 1.
Var mean_all(Var x);
/// Row-wise softmax; rows are positive and sum to one.
Var softmax_rows(Var x);
/// Row-wise cross entropy -sum_j t_ij log p_ij against a fixed target matrix;
/// zero targets contribute exactly nothing. Result is B x 1.
Var cross_entropy_rows(Var probs, const Tensor& targets);
/// -log p[i, labels[i]] per row. Result is B x 1.
Var nll_rows(Var probs, const std::vector<int>& labels);
/// Scales the batch so the average power per complex symbol (consecutive
/// column pairs) is exactly one. Differentiable through the shared scale.
Var power_normalize(Var x);
/// Per-row, per-symbol complex multiplication by fixed coefficients h
/// (same layout as x: re, im interleaved).
Var complex_scale(Var x, const Tensor& h);
/// out[i] = x[rows[i]]; also serves as row slicing. Gradients scatter back.
Var permute_rows(Var x, const std::vector<int>& rows);
/// [a | b] with matching row counts.
Var concat_cols(Var a, Var b);
/// Forward identity whose backward is deliberately wrong (factor 1.25).
/// Exists so gradient checking can be shown to catch a planted fault.
Var debug_bad_identity(Var x);

enum class OptKind { Sgd, Adam };

struct OptimizerConfig {
  OptKind kind = OptKind::Adam;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  void validate() const;
};

/// Clears accumulated gradients and has_grad flags.
void zero_grads(std::span<Parameter* const> params);

/// One update step. Every parameter must have received a gradient.
void optimizer_step(std::span<Parameter* const> params, const OptimizerConfig& cfg);

struct GradCheckEntry {
  std::string where;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  GradCheckEntry worst;
  int checked = 0;
};

/// Central-difference check of every parameter entry against the backward
/// pass. `build` must reconstruct the same scalar objective on a fresh graph
/// each call. Parameters are restored bit-exactly afterwards.
GradCheckReport gradient_check(const std::function<Var(Graph&)>& build,
                               std::span<Parameter* const> params, double step);

}  // namespace dime
