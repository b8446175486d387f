#pragma once

#include <string>

#include "dime/graph.hpp"
#include "dime/rng.hpp"
#include "dime/tensor.hpp"

namespace dime {

enum class ChannelKind { Awgn, Rayleigh };

std::string channel_kind_name(ChannelKind kind);
ChannelKind channel_kind_from(const std::string& name);

/// Noise variance per complex symbol for a given Eb/N0 in dB and rate in
/// bits per channel use, assuming unit average symbol power:
/// sigma^2 = 1 / (rate * 10^(db/10)).
double ebn0_to_noise_variance(double ebn0_db, double rate_bits);

/// log2(1 + snr), the complex AWGN capacity in bits per channel use.
double awgn_capacity_bits(double snr_linear);

/// Memoryless channel: AWGN adds circular complex noise of the given
/// variance; Rayleigh additionally multiplies each symbol by an independent
/// unit-variance complex fading coefficient the receiver never observes.
struct ChannelModel {
  ChannelKind kind = ChannelKind::Awgn;
  double noise_variance = 1.0;  // per complex symbol, split evenly re/im

  /// noise_variance = 0 is accepted as the noiseless limit.
  static ChannelModel make(ChannelKind kind, double noise_variance);
  static ChannelModel at_ebn0(ChannelKind kind, double ebn0_db, double rate_bits);
};

/// Average power per complex symbol (consecutive column pairs) over the batch.
double batch_symbol_power(const Tensor& batch);

/// Whole batch scaled to unit average symbol power. A batch already at unit
/// power comes back bit-identical.
Tensor normalize_power(const Tensor& batch);

/// Each row scaled independently to unit average symbol power.
Tensor normalize_power_per_codeword(const Tensor& batch);

/// Row-wise complex product of equally shaped (re, im)-interleaved tensors.
Tensor complex_product(const Tensor& x, const Tensor& h);

/// One channel use per row: y = x + w, or y = h.x + w for Rayleigh.
Tensor transmit(const Tensor& x, const ChannelModel& model, Rng& rng);

/// Graph twin of transmit. Draws the same randomness in the same order;
/// fading and noise enter as constants, so gradients flow through x alone.
Var transmit(Graph& g, Var x, const ChannelModel& model, Rng& rng);

}  // namespace dime
