#include "dime/channel.hpp"

#include <cmath>

namespace dime {

std::string channel_kind_name(ChannelKind kind) {
  return kind == ChannelKind::Awgn ? "awgn" : "rayleigh";
}

ChannelKind channel_kind_from(const std::string& name) {
  if (name == "awgn") return ChannelKind::Awgn;
  if (name == "rayleigh") return ChannelKind::Rayleigh;
  throw ConfigError("channel.kind: unknown value '" + name + "'");
}

double ebn0_to_noise_variance(double ebn0_db, double rate_bits) {
  if (!(rate_bits > 0.0)) throw Error("ebn0_to_noise_variance: rate must be > 0");
  if (!std::isfinite(ebn0_db)) throw Error("ebn0_to_noise_variance: non-finite Eb/N0");
  return 1.0 / (rate_bits * std::pow(10.0, ebn0_db / 10.0));
}

double awgn_capacity_bits(double snr_linear) {
  if (!(snr_linear >= 0.0)) throw Error("awgn_capacity_bits: snr must be >= 0");
  return std::log2(1.0 + snr_linear);
}

ChannelModel ChannelModel::make(ChannelKind kind, double noise_variance) {
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance))
    throw Error("channel: noise variance must be finite and >= 0");
  return ChannelModel{kind, noise_variance};
}

ChannelModel ChannelModel::at_ebn0(ChannelKind kind, double ebn0_db, double rate_bits) {
  return make(kind, ebn0_to_noise_variance(ebn0_db, rate_bits));
}

double batch_symbol_power(const Tensor& batch) {
  if (batch.cols < 2 || batch.cols % 2 != 0)
    throw ShapeError("batch_symbol_power: columns must pair into complex symbols");
  if (batch.rows == 0) throw ShapeError("batch_symbol_power: empty batch");
  double sum = 0.0;
  for (double e : batch.v) sum += e * e;
  return sum / (static_cast<double>(batch.rows) * static_cast<double>(batch.cols) / 2.0);
}

Tensor normalize_power(const Tensor& batch) {
  double p = batch_symbol_power(batch);
  if (p == 0.0) throw NumericError("normalize_power: zero-power batch");
  double s = std::sqrt(p);
  Tensor out = batch;
  for (double& e : out.v) e /= s;
  return out;
}

Tensor normalize_power_per_codeword(const Tensor& batch) {
  if (batch.cols < 2 || batch.cols % 2 != 0)
    throw ShapeError("normalize_power_per_codeword: columns must pair into complex symbols");
  Tensor out = batch;
  double symbols = static_cast<double>(batch.cols) / 2.0;
  for (std::size_t i = 0; i < batch.rows; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < batch.cols; ++j) sum += batch.at(i, j) * batch.at(i, j);
    double s = std::sqrt(sum / symbols);
    if (s == 0.0) throw NumericError("normalize_power_per_codeword: zero-power row");
    for (std::size_t j = 0; j < batch.cols; ++j) out.at(i, j) /= s;
  }
  return out;
}

Tensor complex_product(const Tensor& x, const Tensor& h) {
  if (!x.same_shape(h)) throw ShapeError("complex_product: shapes differ");
  if (x.cols % 2 != 0)
    throw ShapeError("complex_product: columns must pair into complex symbols");
  Tensor y(x.rows, x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) {
    for (std::size_t j = 0; j + 1 < x.cols; j += 2) {
      double xr = x.at(i, j), xi = x.at(i, j + 1);
      double hr = h.at(i, j), hi = h.at(i, j + 1);
      y.at(i, j) = hr * xr - hi * xi;
      y.at(i, j + 1) = hr * xi + hi * xr;
    }
  }
  return y;
}

namespace {

// Fading first, then noise, both row-major: the plain and graph transmit
// paths must consume the stream identically.
Tensor draw_fading(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor h(rows, cols);
  double sd = std::sqrt(0.5);
  for (double& e : h.v) e = sd * rng.normal();
  return h;
}

Tensor draw_noise(std::size_t rows, std::size_t cols, double variance, Rng& rng) {
  Tensor w(rows, cols);
  double sd = std::sqrt(variance / 2.0);
  for (double& e : w.v) e = sd * rng.normal();
  return w;
}

}  // namespace

Tensor transmit(const Tensor& x, const ChannelModel& model, Rng& rng) {
  if (x.size() == 0) throw ShapeError("transmit: empty batch");
  Tensor y = model.kind == ChannelKind::Rayleigh
                 ? complex_product(x, draw_fading(x.rows, x.cols, rng))
                 : x;
  if (model.noise_variance > 0.0) {
    Tensor w = draw_noise(x.rows, x.cols, model.noise_variance, rng);
    for (std::size_t k = 0; k < y.size(); ++k) y.v[k] += w.v[k];
  }
  return y;
}

Var transmit(Graph& g, Var x, const ChannelModel& model, Rng& rng) {
  const Tensor& tx = g.value(x);
  if (tx.size() == 0) throw ShapeError("transmit: empty batch");
  Var y = x;
  if (model.kind == ChannelKind::Rayleigh)
    y = complex_scale(y, draw_fading(tx.rows, tx.cols, rng));
  if (model.noise_variance > 0.0)
    y = add(y, g.constant(draw_noise(tx.rows, tx.cols, model.noise_variance, rng)));
  return y;
}

}  // namespace dime
