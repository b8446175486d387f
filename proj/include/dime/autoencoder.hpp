#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dime/channel.hpp"
#include "dime/estimators.hpp"
#include "dime/graph.hpp"
#include "dime/nets.hpp"
#include "dime/rng.hpp"

namespace dime {

/// One-hot rows, one per message.
Tensor one_hot(const std::vector<int>& msgs, int alphabet);

/// Label-smoothed target rows: epsilon/M everywhere plus 1-epsilon on the
/// message class. epsilon = 0 is one-hot, epsilon = 1 uniform.
Tensor smoothed_targets(const std::vector<int>& msgs, double epsilon, int alphabet);

/// Index of the row maximum; ties resolve to the lowest index.
int decode_hard(std::span<const double> row);

/// Fraction of rows whose posterior argmax misses the sent message.
double block_error_rate(const Tensor& posteriors, const std::vector<int>& msgs);

/// Mean cross entropy against smoothed targets minus beta times the
/// mutual-information term. Plain-number twin of the training loss graph.
double ae_loss(const Tensor& posteriors, const Tensor& targets, double mi_term,
               double beta);

/// End-to-end system settings. The estimator regularizes the encoder with
/// beta times its value function; the discriminator trains against the
/// encoder in alternation.
struct AeConfig {
  int alphabet = 64;     // M
  int channel_uses = 3;  // n
  ChannelKind channel = ChannelKind::Awgn;
  double train_ebn0_db = 7.0;
  double beta = 0.2;
  double epsilon = 0.2;
  EstimatorSpec estimator;
  int iterations = 10000;
  int batch = 512;
  OptimizerConfig opt;
  int disc_hidden = 200;
  double leaky_slope = 0.2;
  int trace_every = 10;
  int smooth_window = 500;

  double rate_bits() const;  // log2(M) / n
  void validate() const;
};

struct AeTracePoint {
  long iter = 0;
  double loss = 0.0;
  double ce = 0.0;
  double mi_nats = 0.0;
  double mi_bits = 0.0;
  double bler = 0.0;
  long clip_events = 0;
};

struct AeReport {
  std::vector<AeTracePoint> trace;
  double final_loss = 0.0;
  double final_mi_nats = 0.0;
  double final_train_bler = 0.0;
};

/// Anything that can carry messages over the channel: the evaluation harness
/// measures block error rates against this interface.
class LinkSystem {
 public:
  virtual ~LinkSystem() = default;
  virtual int alphabet_size() const = 0;
  virtual int channel_uses() const = 0;
  /// One codeword row of 2n reals per message, at deployment power scale.
  virtual Tensor encode(const std::vector<int>& msgs) const = 0;
  virtual std::vector<int> decode(const Tensor& received) const = 0;
  double rate_bits() const;
};

/// Trained encoder/decoder pair. Deployment scaling uses the codebook
/// average (every message equally likely), not per-batch statistics.
class NeuralLink final : public LinkSystem {
 public:
  NeuralLink(int alphabet, int channel_uses, ChannelKind trained_channel,
             double train_ebn0_db, Mlp encoder, Mlp decoder);

  int alphabet_size() const override { return alphabet_; }
  int channel_uses() const override { return uses_; }
  Tensor encode(const std::vector<int>& msgs) const override;
  std::vector<int> decode(const Tensor& received) const override;

  /// Decoder softmax outputs for received rows.
  Tensor posteriors(const Tensor& received) const;
  /// M x 2n codeword table at deployment scale; unit average symbol power.
  const Tensor& codebook() const { return codebook_; }
  ChannelKind trained_channel() const { return trained_channel_; }
  double train_ebn0_db() const { return train_ebn0_db_; }

  void save(const std::string& path) const;
  static NeuralLink load(const std::string& path);

 private:
  void rebuild_codebook();

  int alphabet_ = 0;
  int uses_ = 0;
  ChannelKind trained_channel_ = ChannelKind::Awgn;
  double train_ebn0_db_ = 0.0;
  Mlp encoder_, decoder_;
  Tensor codebook_;
};

/// Fixed antipodal reference: message 0 maps to (+1, 0), message 1 to
/// (-1, 0), decoding by the sign of the real part. Its block error rate over
/// AWGN has the closed form Q(sqrt(2 Eb/N0)).
class AntipodalReference final : public LinkSystem {
 public:
  int alphabet_size() const override { return 2; }
  int channel_uses() const override { return 1; }
  Tensor encode(const std::vector<int>& msgs) const override;
  std::vector<int> decode(const Tensor& received) const override;
};

/// Alternating trainer: discriminator steps maximize the estimator objective
/// against the frozen encoder; autoencoder steps minimize cross entropy minus
/// beta times the estimator value with the discriminator frozen.
class AeTrainer {
 public:
  AeTrainer(const AeConfig& cfg, Rng& init_rng);

  void discriminator_step(long iter, Rng& rng);
  void autoencoder_step(long iter, Rng& rng);

  /// Stats recorded by the most recent autoencoder step.
  const AeTracePoint& last() const { return last_; }
  const AeConfig& config() const { return cfg_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  Mlp& discriminator() { return discriminator_; }
  long clip_events() const { return clip_events_; }
  NeuralLink to_link() const;

 private:
  std::vector<int> draw_messages(Rng& rng) const;

  AeConfig cfg_;
  ChannelModel model_;
  Mlp encoder_, decoder_, discriminator_;
  MineEma ema_;
  AeTracePoint last_;
  long clip_events_ = 0;
};

std::pair<NeuralLink, AeReport> train_autoencoder(const AeConfig& cfg, Rng& rng);

}  // namespace dime
