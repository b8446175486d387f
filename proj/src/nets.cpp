#include "dime/nets.hpp"

#include <cmath>

namespace dime {

Mlp::Mlp(const std::vector<int>& widths, Head head, double leaky_slope, Rng& rng,
         const std::string& name)
    : head_(head), slope_(leaky_slope) {
  if (widths.size() < 2) throw ShapeError("mlp: need at least input and output widths");
  for (int w : widths)
    if (w <= 0) throw ShapeError("mlp: widths must be positive");
  if (leaky_slope < 0.0) throw Error("mlp: negative leaky slope");
  layers_.reserve(widths.size() - 1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    std::size_t in = static_cast<std::size_t>(widths[l]);
    std::size_t out = static_cast<std::size_t>(widths[l + 1]);
    Tensor w(in, out);
    double a = std::sqrt(6.0 / static_cast<double>(in + out));
    for (double& e : w.v) e = rng.uniform(-a, a);
    DenseLayer layer;
    layer.w = Parameter(std::move(w), name + ".w" + std::to_string(l));
    layer.b = Parameter(Tensor(1, out), name + ".b" + std::to_string(l));
    layers_.push_back(std::move(layer));
  }
}

Var Mlp::run(Graph& g, Var x, bool frozen) const {
  if (layers_.empty()) throw Error("mlp: forward on an empty network");
  Var h = x;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const DenseLayer& layer = layers_[l];
    Var w = frozen ? g.frozen(layer.w) : g.param(const_cast<Parameter&>(layer.w));
    Var b = frozen ? g.frozen(layer.b) : g.param(const_cast<Parameter&>(layer.b));
    h = add_bias(matmul(h, w), b);
    if (l + 1 < layers_.size()) h = leaky_relu(h, slope_);
  }
  if (head_ == Head::Softplus) h = softplus(h);
  else if (head_ == Head::SoftmaxRows) h = softmax_rows(h);
  return h;
}

Var Mlp::forward(Graph& g, Var x) { return run(g, x, false); }

Var Mlp::forward_frozen(Graph& g, Var x) const { return run(g, x, true); }

std::vector<Parameter*> Mlp::params() {
  std::vector<Parameter*> out;
  out.reserve(layers_.size() * 2);
  for (DenseLayer& l : layers_) {
    out.push_back(&l.w);
    out.push_back(&l.b);
  }
  return out;
}

int Mlp::input_width() const {
  if (layers_.empty()) throw Error("mlp: empty network");
  return static_cast<int>(layers_.front().w.value.rows);
}

int Mlp::output_width() const {
  if (layers_.empty()) throw Error("mlp: empty network");
  return static_cast<int>(layers_.back().w.value.cols);
}

std::vector<int> Mlp::widths() const {
  std::vector<int> out;
  if (layers_.empty()) return out;
  out.push_back(static_cast<int>(layers_.front().w.value.rows));
  for (const DenseLayer& l : layers_) out.push_back(static_cast<int>(l.w.value.cols));
  return out;
}

void Mlp::append_values(std::vector<double>& out) const {
  for (const DenseLayer& l : layers_) {
    out.insert(out.end(), l.w.value.v.begin(), l.w.value.v.end());
    out.insert(out.end(), l.b.value.v.begin(), l.b.value.v.end());
  }
}

std::size_t Mlp::read_values(const std::vector<double>& in, std::size_t pos) {
  for (DenseLayer& l : layers_) {
    for (Parameter* p : {&l.w, &l.b}) {
      if (pos + p->value.size() > in.size())
        throw ShapeError("mlp: parameter stream ends early");
      for (double& e : p->value.v) e = in[pos++];
    }
  }
  return pos;
}

}  // namespace dime
