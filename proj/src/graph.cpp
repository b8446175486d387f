#include "dime/graph.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace dime {

namespace {

#if defined(__GLIBC__)
// Training graphs allocate and free the same batch-sized buffers thousands
// of times. Keeping those blocks on the heap (rather than handing them back
// to the kernel and refaulting the pages next iteration) removes all of the
// system time from the training loops.
const bool kRecycleLargeBlocks = [] {
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return true;
}();
#endif

using EMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMatrix>;
using ECMap = Eigen::Map<const EMatrix>;

ECMap map_of(const Tensor& t) {
  return ECMap(t.v.data(), static_cast<Eigen::Index>(t.rows),
               static_cast<Eigen::Index>(t.cols));
}

EMap map_of(Tensor& t) {
  return EMap(t.v.data(), static_cast<Eigen::Index>(t.rows),
              static_cast<Eigen::Index>(t.cols));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

std::string cell_label(const std::string& name, const Tensor& t, std::size_t k) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "[%zu,%zu]", k / t.cols, k % t.cols);
  return name + buf;
}

}  // namespace

const char* Graph::op_name(Op op) {
  switch (op) {
    case Op::Constant: return "constant";
    case Op::Param: return "param";
    case Op::MatMul: return "matmul";
    case Op::AddBias: return "add_bias";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Affine: return "affine";
    case Op::LeakyRelu: return "leaky_relu";
    case Op::Softplus: return "softplus";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Pow: return "pow";
    case Op::Clip: return "clip";
    case Op::MeanAll: return "mean_all";
    case Op::SoftmaxRows: return "softmax_rows";
    case Op::CrossEntropyRows: return "cross_entropy_rows";
    case Op::NllRows: return "nll_rows";
    case Op::PowerNorm: return "power_normalize";
    case Op::ComplexScale: return "complex_scale";
    case Op::PermuteRows: return "permute_rows";
    case Op::ConcatCols: return "concat_cols";
    case Op::BadIdentity: return "debug_bad_identity";
  }
  return "?";
}

Var Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

// Ops that transform values in place call this after the transform so the
// check-everything mode sees the final numbers.
Var Graph::checked(Var v) const {
  if (check_all_) {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (!n.value.all_finite())
      throw NumericError(std::string("non-finite value produced by ") + op_name(n.op));
  }
  return v;
}

const Graph::Node& Graph::node(Var v) const {
  check_owned(v, "graph");
  return nodes_[static_cast<std::size_t>(v.id)];
}

void Graph::check_owned(Var v, const char* who) const {
  if (v.graph != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
    throw Error(std::string(who) + ": variable does not belong to this graph");
}

Var Graph::constant(Tensor t) {
  if (t.size() == 0) throw ShapeError("constant: empty tensor");
  Node n;
  n.op = Op::Constant;
  n.value = std::move(t);
  return checked(push(std::move(n)));
}

Var Graph::param(Parameter& p) {
  if (p.value.size() == 0) throw ShapeError("param: empty parameter");
  Node n;
  n.op = Op::Param;
  n.value = p.value;
  n.parameter = &p;
  return checked(push(std::move(n)));
}

Var Graph::frozen(const Parameter& p) { return constant(p.value); }

const Tensor& Graph::value(Var v) const { return node(v).value; }

double Graph::scalar(Var v) const {
  const Tensor& t = value(v);
  if (t.rows != 1 || t.cols != 1) throw ShapeError("scalar: node is not 1x1");
  return t.v[0];
}

namespace {

// Shared shape checks for the op builders.
Graph* same_graph(Var a, Var b, const char* who) {
  if (a.graph == nullptr || a.graph != b.graph)
    throw Error(std::string(who) + ": operands come from different graphs");
  return a.graph;
}

}  // namespace

#define DIME_VALUE(v) ((v).graph->value(v))

Var matmul(Var a, Var b) {
  Graph* g = same_graph(a, b, "matmul");
  const Tensor& ta = DIME_VALUE(a);
  const Tensor& tb = DIME_VALUE(b);
  if (ta.cols != tb.rows) throw ShapeError("matmul: inner dimensions differ");
  Graph::Node n;
  n.op = Graph::Op::MatMul;
  n.a = a.id;
  n.b = b.id;
  n.value = Tensor(ta.rows, tb.cols);
  map_of(n.value).noalias() = map_of(ta) * map_of(tb);
  return g->checked(g->push(std::move(n)));
}

Var add_bias(Var x, Var bias) {
  Graph* g = same_graph(x, bias, "add_bias");
  const Tensor& tx = DIME_VALUE(x);
  const Tensor& tb = DIME_VALUE(bias);
  if (tb.rows != 1 || tb.cols != tx.cols)
    throw ShapeError("add_bias: bias must be 1 x cols(x)");
  Graph::Node n;
  n.op = Graph::Op::AddBias;
  n.a = x.id;
  n.b = bias.id;
  n.value = tx;
  for (std::size_t i = 0; i < tx.rows; ++i)
    for (std::size_t j = 0; j < tx.cols; ++j) n.value.at(i, j) += tb.v[j];
  return g->checked(g->push(std::move(n)));
}

Var Graph::make_binary(Var a, Var b, Op op, const char* who) {
  Graph* g = same_graph(a, b, who);
  const Tensor& ta = g->value(a);
  const Tensor& tb = g->value(b);
  if (!ta.same_shape(tb)) throw ShapeError(std::string(who) + ": shapes differ");
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.value = ta;
  for (std::size_t k = 0; k < n.value.size(); ++k) {
    if (op == Op::Add) n.value.v[k] += tb.v[k];
    else if (op == Op::Sub) n.value.v[k] -= tb.v[k];
    else n.value.v[k] *= tb.v[k];
  }
  return g->checked(g->push(std::move(n)));
}

Var Graph::make_unary(Var x, Op op, const char* who, double c0, double c1) {
  if (x.graph == nullptr) throw Error(std::string(who) + ": null variable");
  Graph* g = x.graph;
  Node n;
  n.op = op;
  n.a = x.id;
  n.c0 = c0;
  n.c1 = c1;
  n.value = g->value(x);
  return g->push(std::move(n));
}

Var add(Var a, Var b) { return Graph::make_binary(a, b, Graph::Op::Add, "add"); }
Var sub(Var a, Var b) { return Graph::make_binary(a, b, Graph::Op::Sub, "sub"); }
Var mul(Var a, Var b) { return Graph::make_binary(a, b, Graph::Op::Mul, "mul"); }

Var affine(Var x, double scale, double shift) {
  Var v = Graph::make_unary(x, Graph::Op::Affine, "affine", scale, shift);
  for (double& e : x.graph->node_value(v).v) e = scale * e + shift;
  return x.graph->checked(v);
}

Var leaky_relu(Var x, double slope) {
  if (slope < 0.0) throw Error("leaky_relu: negative slope");
  Var v = Graph::make_unary(x, Graph::Op::LeakyRelu, "leaky_relu", slope);
  for (double& e : x.graph->node_value(v).v)
    if (e <= 0.0) e *= slope;
  return x.graph->checked(v);
}

Var softplus(Var x) {
  Var v = Graph::make_unary(x, Graph::Op::Softplus, "softplus");
  for (double& e : x.graph->node_value(v).v)
    e = e > 0.0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
  return x.graph->checked(v);
}

Var log(Var x) {
  Var v = Graph::make_unary(x, Graph::Op::Log, "log");
  for (double& e : x.graph->node_value(v).v)
    if (!std::isnan(e)) e = std::log(e > kLogFloor ? e : kLogFloor);
  return x.graph->checked(v);
}

Var exp(Var x) {
  Var v = Graph::make_unary(x, Graph::Op::Exp, "exp");
  for (double& e : x.graph->node_value(v).v) {
    if (e > kExpCap) {
      e = kExpCap;
      ++x.graph->clip_events_;
    }
    e = std::exp(e);
  }
  return x.graph->checked(v);
}

Var pow(Var x, double exponent) {
  Var v = Graph::make_unary(x, Graph::Op::Pow, "pow", exponent);
  for (double& e : x.graph->node_value(v).v)
    if (!std::isnan(e)) e = std::pow(e > kLogFloor ? e : kLogFloor, exponent);
  return x.graph->checked(v);
}

Var clip(Var x, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clip: lower bound exceeds upper bound");
  Var v = Graph::make_unary(x, Graph::Op::Clip, "clip", lo, hi);
  for (double& e : x.graph->node_value(v).v) e = e < lo ? lo : (e > hi ? hi : e);
  return x.graph->checked(v);
}

Var mean_all(Var x) {
  if (x.graph == nullptr) throw Error("mean_all: null variable");
  const Tensor& tx = DIME_VALUE(x);
  double sum = 0.0;
  for (double e : tx.v) sum += e;
  Graph::Node n;
  n.op = Graph::Op::MeanAll;
  n.a = x.id;
  n.value = Tensor::scalar(sum / static_cast<double>(tx.size()));
  return x.graph->checked(x.graph->push(std::move(n)));
}

Var softmax_rows(Var x) {
  Var v = Graph::make_unary(x, Graph::Op::SoftmaxRows, "softmax_rows");
  Tensor& t = x.graph->node_value(v);
  for (std::size_t i = 0; i < t.rows; ++i) {
    double mx = t.at(i, 0);
    for (std::size_t j = 1; j < t.cols; ++j) mx = std::max(mx, t.at(i, j));
    double sum = 0.0;
    for (std::size_t j = 0; j < t.cols; ++j) {
      double e = std::exp(t.at(i, j) - mx);
      t.at(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < t.cols; ++j) t.at(i, j) /= sum;
  }
  return x.graph->checked(v);
}

Var cross_entropy_rows(Var probs, const Tensor& targets) {
  if (probs.graph == nullptr) throw Error("cross_entropy_rows: null variable");
  const Tensor& tp = DIME_VALUE(probs);
  if (!tp.same_shape(targets))
    throw ShapeError("cross_entropy_rows: target shape differs from probs");
  Graph::Node n;
  n.op = Graph::Op::CrossEntropyRows;
  n.a = probs.id;
  n.aux = targets;
  n.value = Tensor(tp.rows, 1);
  for (std::size_t i = 0; i < tp.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < tp.cols; ++j) {
      double t = targets.at(i, j);
      if (t != 0.0) {
        double p = tp.at(i, j);
        s -= std::isnan(p) ? p : t * std::log(p > kLogFloor ? p : kLogFloor);
      }
    }
    n.value.at(i, 0) = s;
  }
  return probs.graph->checked(probs.graph->push(std::move(n)));
}

Var nll_rows(Var probs, const std::vector<int>& labels) {
  if (probs.graph == nullptr) throw Error("nll_rows: null variable");
  const Tensor& tp = DIME_VALUE(probs);
  if (labels.size() != tp.rows)
    throw ShapeError("nll_rows: one label per row required");
  Graph::Node n;
  n.op = Graph::Op::NllRows;
  n.a = probs.id;
  n.idx = labels;
  n.value = Tensor(tp.rows, 1);
  for (std::size_t i = 0; i < tp.rows; ++i) {
    int c = labels[i];
    if (c < 0 || static_cast<std::size_t>(c) >= tp.cols)
      throw ShapeError("nll_rows: label out of range");
    double p = tp.at(i, static_cast<std::size_t>(c));
    n.value.at(i, 0) = std::isnan(p) ? p : -std::log(p > kLogFloor ? p : kLogFloor);
  }
  return probs.graph->checked(probs.graph->push(std::move(n)));
}

Var power_normalize(Var x) {
  if (x.graph == nullptr) throw Error("power_normalize: null variable");
  const Tensor& tx = DIME_VALUE(x);
  if (tx.cols < 2 || tx.cols % 2 != 0)
    throw ShapeError("power_normalize: columns must pair into complex symbols");
  double sum_sq = 0.0;
  for (double e : tx.v) sum_sq += e * e;
  double symbols = static_cast<double>(tx.rows) * static_cast<double>(tx.cols) / 2.0;
  double s = std::sqrt(sum_sq / symbols);
  if (s == 0.0) throw NumericError("power_normalize: zero-power batch");
  Graph::Node n;
  n.op = Graph::Op::PowerNorm;
  n.a = x.id;
  n.c0 = s;
  n.value = tx;
  for (double& e : n.value.v) e /= s;
  return x.graph->checked(x.graph->push(std::move(n)));
}

Var complex_scale(Var x, const Tensor& h) {
  if (x.graph == nullptr) throw Error("complex_scale: null variable");
  const Tensor& tx = DIME_VALUE(x);
  if (!tx.same_shape(h)) throw ShapeError("complex_scale: coefficient shape differs");
  if (tx.cols % 2 != 0)
    throw ShapeError("complex_scale: columns must pair into complex symbols");
  Graph::Node n;
  n.op = Graph::Op::ComplexScale;
  n.a = x.id;
  n.aux = h;
  n.value = Tensor(tx.rows, tx.cols);
  for (std::size_t i = 0; i < tx.rows; ++i) {
    for (std::size_t j = 0; j + 1 < tx.cols; j += 2) {
      double xr = tx.at(i, j), xi = tx.at(i, j + 1);
      double hr = h.at(i, j), hi = h.at(i, j + 1);
      n.value.at(i, j) = hr * xr - hi * xi;
      n.value.at(i, j + 1) = hr * xi + hi * xr;
    }
  }
  return x.graph->checked(x.graph->push(std::move(n)));
}

Var permute_rows(Var x, const std::vector<int>& rows) {
  if (x.graph == nullptr) throw Error("permute_rows: null variable");
  const Tensor& tx = DIME_VALUE(x);
  if (rows.empty()) throw ShapeError("permute_rows: empty row list");
  Graph::Node n;
  n.op = Graph::Op::PermuteRows;
  n.a = x.id;
  n.idx = rows;
  n.value = take_rows(tx, rows);
  return x.graph->checked(x.graph->push(std::move(n)));
}

Var concat_cols(Var a, Var b) {
  Graph* g = same_graph(a, b, "concat_cols");
  Graph::Node n;
  n.op = Graph::Op::ConcatCols;
  n.a = a.id;
  n.b = b.id;
  n.value = hcat(g->value(a), g->value(b));
  return g->checked(g->push(std::move(n)));
}

Var debug_bad_identity(Var x) {
  return x.graph->checked(
      Graph::make_unary(x, Graph::Op::BadIdentity, "debug_bad_identity"));
}

#undef DIME_VALUE

void Graph::backward(Var out) {
  check_owned(out, "backward");
  Node& last = nodes_[static_cast<std::size_t>(out.id)];
  if (last.value.rows != 1 || last.value.cols != 1)
    throw ShapeError("backward: objective must be a 1x1 scalar");
  if (!std::isfinite(last.value.v[0]))
    throw NumericError("backward: objective value is not finite");
  for (int i = 0; i <= out.id; ++i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    n.grad = Tensor(n.value.rows, n.value.cols);
  }
  last.grad.v[0] = 1.0;
  for (int i = out.id; i >= 0; --i) backward_one(nodes_[static_cast<std::size_t>(i)]);
}

void Graph::backward_one(Node& n) {
  const Tensor& g = n.grad;
  Tensor* ga = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].grad : nullptr;
  const Tensor* va = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)].value : nullptr;
  Tensor* gb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].grad : nullptr;
  const Tensor* vb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)].value : nullptr;

  switch (n.op) {
    case Op::Constant:
      break;
    case Op::Param:
      for (std::size_t k = 0; k < g.size(); ++k) n.parameter->grad.v[k] += g.v[k];
      n.parameter->has_grad = true;
      break;
    case Op::MatMul:
      map_of(*ga).noalias() += map_of(g) * map_of(*vb).transpose();
      map_of(*gb).noalias() += map_of(*va).transpose() * map_of(g);
      break;
    case Op::AddBias:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += g.v[k];
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gb->v[j] += g.at(i, j);
      break;
    case Op::Add:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += g.v[k];
      for (std::size_t k = 0; k < g.size(); ++k) gb->v[k] += g.v[k];
      break;
    case Op::Sub:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += g.v[k];
      for (std::size_t k = 0; k < g.size(); ++k) gb->v[k] -= g.v[k];
      break;
    case Op::Mul:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += g.v[k] * vb->v[k];
      for (std::size_t k = 0; k < g.size(); ++k) gb->v[k] += g.v[k] * va->v[k];
      break;
    case Op::Affine:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += n.c0 * g.v[k];
      break;
    case Op::LeakyRelu:
      for (std::size_t k = 0; k < g.size(); ++k)
        ga->v[k] += va->v[k] > 0.0 ? g.v[k] : n.c0 * g.v[k];
      break;
    case Op::Softplus:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += sigmoid(va->v[k]) * g.v[k];
      break;
    case Op::Log:
      for (std::size_t k = 0; k < g.size(); ++k)
        if (va->v[k] > kLogFloor) ga->v[k] += g.v[k] / va->v[k];
      break;
    case Op::Exp:
      for (std::size_t k = 0; k < g.size(); ++k)
        if (va->v[k] <= kExpCap) ga->v[k] += n.value.v[k] * g.v[k];
      break;
    case Op::Pow:
      for (std::size_t k = 0; k < g.size(); ++k)
        if (va->v[k] > kLogFloor)
          ga->v[k] += n.c0 * n.value.v[k] / va->v[k] * g.v[k];
      break;
    case Op::Clip:
      for (std::size_t k = 0; k < g.size(); ++k)
        if (va->v[k] > n.c0 && va->v[k] < n.c1) ga->v[k] += g.v[k];
      break;
    case Op::MeanAll: {
      double w = g.v[0] / static_cast<double>(va->size());
      for (std::size_t k = 0; k < va->size(); ++k) ga->v[k] += w;
      break;
    }
    case Op::SoftmaxRows:
      for (std::size_t i = 0; i < g.rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < g.cols; ++j) dot += g.at(i, j) * n.value.at(i, j);
        for (std::size_t j = 0; j < g.cols; ++j)
          ga->at(i, j) += n.value.at(i, j) * (g.at(i, j) - dot);
      }
      break;
    case Op::CrossEntropyRows:
      for (std::size_t i = 0; i < va->rows; ++i) {
        double gi = g.at(i, 0);
        for (std::size_t j = 0; j < va->cols; ++j) {
          double t = n.aux.at(i, j);
          if (t != 0.0 && va->at(i, j) > kLogFloor)
            ga->at(i, j) -= t / va->at(i, j) * gi;
        }
      }
      break;
    case Op::NllRows:
      for (std::size_t i = 0; i < va->rows; ++i) {
        std::size_t c = static_cast<std::size_t>(n.idx[i]);
        if (va->at(i, c) > kLogFloor) ga->at(i, c) -= g.at(i, 0) / va->at(i, c);
      }
      break;
    case Op::PowerNorm: {
      double s = n.c0;
      double symbols = static_cast<double>(va->rows) * static_cast<double>(va->cols) / 2.0;
      double dot = 0.0;
      for (std::size_t k = 0; k < g.size(); ++k) dot += g.v[k] * va->v[k];
      double w = dot / (s * s * s * symbols);
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += g.v[k] / s - va->v[k] * w;
      break;
    }
    case Op::ComplexScale:
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j + 1 < g.cols; j += 2) {
          double hr = n.aux.at(i, j), hi = n.aux.at(i, j + 1);
          double gr = g.at(i, j), gi = g.at(i, j + 1);
          ga->at(i, j) += hr * gr + hi * gi;
          ga->at(i, j + 1) += -hi * gr + hr * gi;
        }
      }
      break;
    case Op::PermuteRows:
      for (std::size_t i = 0; i < g.rows; ++i) {
        std::size_t src = static_cast<std::size_t>(n.idx[i]);
        for (std::size_t j = 0; j < g.cols; ++j) ga->at(src, j) += g.at(i, j);
      }
      break;
    case Op::ConcatCols:
      for (std::size_t i = 0; i < g.rows; ++i) {
        for (std::size_t j = 0; j < va->cols; ++j) ga->at(i, j) += g.at(i, j);
        for (std::size_t j = 0; j < vb->cols; ++j)
          gb->at(i, j) += g.at(i, va->cols + j);
      }
      break;
    case Op::BadIdentity:
      for (std::size_t k = 0; k < g.size(); ++k) ga->v[k] += 1.25 * g.v[k];
      break;
  }
}

void OptimizerConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("optimizer: learning_rate must be > 0");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("optimizer: beta1 must be in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("optimizer: beta2 must be in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be > 0");
}

void zero_grads(std::span<Parameter* const> params) {
  for (Parameter* p : params) {
    for (double& x : p->grad.v) x = 0.0;
    p->has_grad = false;
  }
}

void optimizer_step(std::span<Parameter* const> params, const OptimizerConfig& cfg) {
  cfg.validate();
  for (Parameter* p : params)
    if (!p->has_grad)
      throw Error("optimizer_step: parameter " + p->name +
                  " has no gradient; run backward first");
  for (Parameter* p : params) {
    if (cfg.kind == OptKind::Sgd) {
      for (std::size_t k = 0; k < p->value.size(); ++k)
        p->value.v[k] -= cfg.learning_rate * p->grad.v[k];
      continue;
    }
    AdamState& st = p->adam;
    if (st.m.size() == 0) {
      st.m = Tensor(p->value.rows, p->value.cols);
      st.v = Tensor(p->value.rows, p->value.cols);
    }
    st.step += 1;
    double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
    double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      double gk = p->grad.v[k];
      st.m.v[k] = cfg.beta1 * st.m.v[k] + (1.0 - cfg.beta1) * gk;
      st.v.v[k] = cfg.beta2 * st.v.v[k] + (1.0 - cfg.beta2) * gk * gk;
      double mhat = st.m.v[k] / bc1;
      double vhat = st.v.v[k] / bc2;
      p->value.v[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

GradCheckReport gradient_check(const std::function<Var(Graph&)>& build,
                               std::span<Parameter* const> params, double step) {
  if (params.empty()) throw Error("gradient_check: no parameters to check");
  if (!(step > 0.0)) throw Error("gradient_check: step must be > 0");

  zero_grads(params);
  {
    Graph g;
    g.set_check_all(true);
    g.backward(build(g));
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  GradCheckReport report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Parameter* p = params[pi];
    for (std::size_t k = 0; k < p->value.size(); ++k) {
      double orig = p->value.v[k];
      p->value.v[k] = orig + step;
      double hi_x = p->value.v[k];
      double f_hi;
      {
        Graph g;
        g.set_check_all(true);
        f_hi = g.scalar(build(g));
      }
      p->value.v[k] = orig - step;
      double lo_x = p->value.v[k];
      double f_lo;
      {
        Graph g;
        g.set_check_all(true);
        f_lo = g.scalar(build(g));
      }
      p->value.v[k] = orig;
      if (hi_x == lo_x) throw Error("gradient_check: step vanished at this magnitude");
      double numeric = (f_hi - f_lo) / (hi_x - lo_x);
      double a = analytic[pi].v[k];
      double scale = std::max({std::fabs(a), std::fabs(numeric), 1e-6});
      double rel = std::fabs(a - numeric) / scale;
      ++report.checked;
      if (rel >= report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst = GradCheckEntry{cell_label(p->name, p->value, k), a, numeric, rel};
      }
    }
  }
  zero_grads(params);
  return report;
}

}  // namespace dime
