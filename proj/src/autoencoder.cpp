#include "dime/autoencoder.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

namespace dime {

Tensor one_hot(const std::vector<int>& msgs, int alphabet) {
  if (alphabet < 2) throw ShapeError("one_hot: alphabet must be >= 2");
  Tensor t(msgs.size(), static_cast<std::size_t>(alphabet));
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i] < 0 || msgs[i] >= alphabet)
      throw ShapeError("one_hot: message out of range");
    t.at(i, static_cast<std::size_t>(msgs[i])) = 1.0;
  }
  return t;
}

Tensor smoothed_targets(const std::vector<int>& msgs, double epsilon, int alphabet) {
  if (!(epsilon >= 0.0) || epsilon > 1.0)
    throw Error("smoothed_targets: epsilon must be in [0, 1]");
  Tensor t = one_hot(msgs, alphabet);
  if (epsilon == 0.0) return t;
  double fill = epsilon / static_cast<double>(alphabet);
  double peak = 1.0 - epsilon;
  for (std::size_t i = 0; i < t.rows; ++i)
    for (std::size_t j = 0; j < t.cols; ++j)
      t.at(i, j) = fill + peak * t.at(i, j);
  return t;
}

int decode_hard(std::span<const double> row) {
  if (row.empty()) throw ShapeError("decode_hard: empty row");
  int best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = static_cast<int>(j);
  return best;
}

double block_error_rate(const Tensor& posteriors, const std::vector<int>& msgs) {
  if (posteriors.rows != msgs.size())
    throw ShapeError("block_error_rate: row count does not match messages");
  long errors = 0;
  for (std::size_t i = 0; i < posteriors.rows; ++i) {
    std::span<const double> row(posteriors.v.data() + i * posteriors.cols,
                                posteriors.cols);
    if (decode_hard(row) != msgs[i]) ++errors;
  }
  return static_cast<double>(errors) / static_cast<double>(posteriors.rows);
}

double ae_loss(const Tensor& posteriors, const Tensor& targets, double mi_term,
               double beta) {
  if (!posteriors.same_shape(targets)) throw ShapeError("ae_loss: shapes differ");
  if (!(beta >= 0.0)) throw Error("ae_loss: beta must be >= 0");
  double total = 0.0;
  for (std::size_t i = 0; i < posteriors.rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < posteriors.cols; ++j) {
      double t = targets.at(i, j);
      if (t != 0.0) {
        double p = posteriors.at(i, j);
        s -= t * std::log(p > kLogFloor ? p : kLogFloor);
      }
    }
    total += s;
  }
  double ce = total / static_cast<double>(posteriors.rows);
  return beta == 0.0 ? ce : ce - beta * mi_term;
}

double AeConfig::rate_bits() const {
  return std::log2(static_cast<double>(alphabet)) / static_cast<double>(channel_uses);
}

void AeConfig::validate() const {
  if (alphabet < 2) throw ConfigError("system.M: must be >= 2");
  if (channel_uses < 1) throw ConfigError("system.n: must be >= 1");
  if (!std::isfinite(train_ebn0_db))
    throw ConfigError("channel.train_ebn0_db: must be finite");
  if (!(beta >= 0.0)) throw ConfigError("loss.beta: must be >= 0");
  if (!(epsilon >= 0.0) || epsilon >= 1.0)
    throw ConfigError("loss.epsilon: must be in [0, 1)");
  if (iterations < 1) throw ConfigError("training.iterations: must be >= 1");
  if (batch < 2) throw ConfigError("training.batch: must be >= 2");
  if (disc_hidden < 1) throw ConfigError("training.hidden: must be >= 1");
  if (trace_every < 1) throw ConfigError("training.trace_every: must be >= 1");
  if (smooth_window < 1) throw ConfigError("training.smooth_window: must be >= 1");
  estimator.validate();
  opt.validate();
}

double LinkSystem::rate_bits() const {
  return std::log2(static_cast<double>(alphabet_size())) /
         static_cast<double>(channel_uses());
}

NeuralLink::NeuralLink(int alphabet, int channel_uses, ChannelKind trained_channel,
                       double train_ebn0_db, Mlp encoder, Mlp decoder)
    : alphabet_(alphabet),
      uses_(channel_uses),
      trained_channel_(trained_channel),
      train_ebn0_db_(train_ebn0_db),
      encoder_(std::move(encoder)),
      decoder_(std::move(decoder)) {
  if (alphabet_ < 2) throw ShapeError("link: alphabet must be >= 2");
  if (uses_ < 1) throw ShapeError("link: channel uses must be >= 1");
  if (encoder_.input_width() != alphabet_ || encoder_.output_width() != 2 * uses_)
    throw ShapeError("link: encoder shape does not match alphabet and channel uses");
  if (decoder_.input_width() != 2 * uses_ || decoder_.output_width() != alphabet_)
    throw ShapeError("link: decoder shape does not match alphabet and channel uses");
  rebuild_codebook();
}

void NeuralLink::rebuild_codebook() {
  std::vector<int> all(static_cast<std::size_t>(alphabet_));
  for (int m = 0; m < alphabet_; ++m) all[static_cast<std::size_t>(m)] = m;
  Graph g;
  Var raw = encoder_.forward_frozen(g, g.constant(one_hot(all, alphabet_)));
  codebook_ = normalize_power(g.value(raw));
}

Tensor NeuralLink::encode(const std::vector<int>& msgs) const {
  if (msgs.empty()) throw ShapeError("encode: no messages");
  Tensor out(msgs.size(), codebook_.cols);
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i] < 0 || msgs[i] >= alphabet_)
      throw ShapeError("encode: message out of range");
    for (std::size_t j = 0; j < codebook_.cols; ++j)
      out.at(i, j) = codebook_.at(static_cast<std::size_t>(msgs[i]), j);
  }
  return out;
}

Tensor NeuralLink::posteriors(const Tensor& received) const {
  if (received.cols != static_cast<std::size_t>(2 * uses_))
    throw ShapeError("decode: received width does not match channel uses");
  Graph g;
  return g.value(decoder_.forward_frozen(g, g.constant(received)));
}

std::vector<int> NeuralLink::decode(const Tensor& received) const {
  Tensor post = posteriors(received);
  std::vector<int> out(post.rows);
  for (std::size_t i = 0; i < post.rows; ++i) {
    std::span<const double> row(post.v.data() + i * post.cols, post.cols);
    out[i] = decode_hard(row);
  }
  return out;
}

namespace {

std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

void write_widths(std::ostream& os, const char* tag, const std::vector<int>& w) {
  os << tag;
  for (int x : w) os << ' ' << x;
  os << '\n';
}

}  // namespace

void NeuralLink::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("save: cannot open " + path);
  os << "dime-link 1\n";
  os << "M " << alphabet_ << "\n";
  os << "n " << uses_ << "\n";
  os << "channel " << channel_kind_name(trained_channel_) << "\n";
  os << "train_ebn0_db " << fmt17(train_ebn0_db_) << "\n";
  write_widths(os, "encoder", encoder_.widths());
  write_widths(os, "decoder", decoder_.widths());
  std::vector<double> values;
  encoder_.append_values(values);
  decoder_.append_values(values);
  os << "values " << values.size() << "\n";
  for (double v : values) os << fmt17(v) << "\n";
  if (!os) throw Error("save: write failed for " + path);
}

NeuralLink NeuralLink::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("load: cannot open " + path);
  auto fail = [&path](const std::string& why) {
    return ShapeError("load: " + path + ": " + why);
  };

  std::string word;
  int version = 0;
  if (!(is >> word >> version) || word != "dime-link" || version != 1)
    throw fail("not a link parameter file");
  int alphabet = 0, uses = 0;
  std::string channel;
  double ebn0 = 0.0;
  if (!(is >> word >> alphabet) || word != "M") throw fail("missing alphabet");
  if (!(is >> word >> uses) || word != "n") throw fail("missing channel uses");
  if (!(is >> word >> channel) || word != "channel") throw fail("missing channel kind");
  if (!(is >> word >> ebn0) || word != "train_ebn0_db")
    throw fail("missing training Eb/N0");

  auto read_widths = [&](const char* tag) {
    std::string got;
    is >> got;
    if (got != tag) throw fail(std::string("missing ") + tag + " shape");
    std::string line;
    std::getline(is, line);
    std::istringstream ls(line);
    std::vector<int> widths;
    int w;
    while (ls >> w) widths.push_back(w);
    if (widths.size() < 2) throw fail(std::string(tag) + " shape too short");
    return widths;
  };
  std::vector<int> enc_w = read_widths("encoder");
  std::vector<int> dec_w = read_widths("decoder");

  std::size_t count = 0;
  if (!(is >> word >> count) || word != "values") throw fail("missing value count");
  std::vector<double> values(count);
  for (double& v : values)
    if (!(is >> v)) throw fail("parameter stream ends early");

  Rng zero(0);
  Mlp encoder(enc_w, Head::Linear, 0.2, zero, "encoder");
  Mlp decoder(dec_w, Head::SoftmaxRows, 0.2, zero, "decoder");
  std::size_t pos = encoder.read_values(values, 0);
  pos = decoder.read_values(values, pos);
  if (pos != values.size()) throw fail("trailing parameter values");
  return NeuralLink(alphabet, uses, channel_kind_from(channel), ebn0,
                    std::move(encoder), std::move(decoder));
}

Tensor AntipodalReference::encode(const std::vector<int>& msgs) const {
  Tensor out(msgs.size(), 2);
  for (std::size_t i = 0; i < msgs.size(); ++i) {
    if (msgs[i] != 0 && msgs[i] != 1)
      throw ShapeError("encode: message out of range");
    out.at(i, 0) = msgs[i] == 0 ? 1.0 : -1.0;
  }
  return out;
}

std::vector<int> AntipodalReference::decode(const Tensor& received) const {
  if (received.cols != 2) throw ShapeError("decode: received width must be 2");
  std::vector<int> out(received.rows);
  for (std::size_t i = 0; i < received.rows; ++i)
    out[i] = received.at(i, 0) >= 0.0 ? 0 : 1;
  return out;
}

AeTrainer::AeTrainer(const AeConfig& cfg, Rng& init_rng) : cfg_(cfg) {
  cfg_.validate();
  model_ = ChannelModel::at_ebn0(cfg_.channel, cfg_.train_ebn0_db, cfg_.rate_bits());
  int m = cfg_.alphabet;
  int dims = 2 * cfg_.channel_uses;
  encoder_ = Mlp({m, m, dims}, Head::Linear, cfg_.leaky_slope, init_rng, "encoder");
  decoder_ = Mlp({dims, m, m}, Head::SoftmaxRows, cfg_.leaky_slope, init_rng, "decoder");
  discriminator_ = make_discriminator(2 * dims, cfg_.estimator, init_rng,
                                      cfg_.disc_hidden, cfg_.leaky_slope);
  ema_ = MineEma{cfg_.estimator.ema_rate, 0.0, 0};
}

std::vector<int> AeTrainer::draw_messages(Rng& rng) const {
  std::vector<int> msgs(static_cast<std::size_t>(cfg_.batch));
  for (int& m : msgs) m = rng.uniform_int(cfg_.alphabet);
  return msgs;
}

void AeTrainer::discriminator_step(long iter, Rng& rng) {
  std::vector<int> msgs = draw_messages(rng);
  Graph g;
  Var x = power_normalize(encoder_.forward_frozen(g, g.constant(one_hot(msgs, cfg_.alphabet))));
  Var y = transmit(g, x, model_, rng);
  std::vector<int> d = derangement(static_cast<std::size_t>(cfg_.batch), rng);
  Var out_p = discriminator_.forward(g, concat_cols(x, y));
  Var out_u = discriminator_.forward(g, concat_cols(x, permute_rows(y, d)));
  MineEma* emap = cfg_.estimator.kind == EstimatorKind::Mine ? &ema_ : nullptr;
  ObjectiveParts parts = build_objective(g, cfg_.estimator, out_p, out_u, emap);
  if (!std::isfinite(parts.value))
    throw DivergenceError("discriminator objective diverged at iteration " +
                              std::to_string(iter),
                          iter);
  g.backward(affine(parts.objective, -1.0, 0.0));
  std::vector<Parameter*> params = discriminator_.params();
  optimizer_step(params, cfg_.opt);
  zero_grads(params);
  clip_events_ += g.clip_events();
}

void AeTrainer::autoencoder_step(long iter, Rng& rng) {
  std::vector<int> msgs = draw_messages(rng);
  Graph g;
  Var x = power_normalize(encoder_.forward(g, g.constant(one_hot(msgs, cfg_.alphabet))));
  double power = batch_symbol_power(g.value(x));
  if (std::fabs(power - 1.0) > 1e-9)
    throw NumericError("autoencoder: normalized batch power drifted from one");
  Var y = transmit(g, x, model_, rng);
  Var posteriors = decoder_.forward(g, y);
  Tensor targets = smoothed_targets(msgs, cfg_.epsilon, cfg_.alphabet);
  Var ce = mean_all(cross_entropy_rows(posteriors, targets));

  std::vector<int> d = derangement(static_cast<std::size_t>(cfg_.batch), rng);
  Var out_p = discriminator_.forward_frozen(g, concat_cols(x, y));
  Var out_u = discriminator_.forward_frozen(g, concat_cols(x, permute_rows(y, d)));
  ObjectiveParts parts = build_objective(g, cfg_.estimator, out_p, out_u, nullptr);

  Var loss = cfg_.beta == 0.0 ? ce : sub(ce, affine(parts.objective, cfg_.beta, 0.0));
  double loss_value = g.scalar(loss);
  if (!std::isfinite(loss_value) || !std::isfinite(parts.value))
    throw DivergenceError("autoencoder loss diverged at iteration " +
                              std::to_string(iter),
                          iter);
  g.backward(loss);
  std::vector<Parameter*> params = encoder_.params();
  for (Parameter* p : decoder_.params()) params.push_back(p);
  optimizer_step(params, cfg_.opt);
  zero_grads(params);
  clip_events_ += g.clip_events();

  last_ = AeTracePoint{iter,
                       loss_value,
                       g.scalar(ce),
                       parts.mi_nats,
                       parts.mi_nats / std::numbers::ln2,
                       block_error_rate(g.value(posteriors), msgs),
                       clip_events_};
}

NeuralLink AeTrainer::to_link() const {
  return NeuralLink(cfg_.alphabet, cfg_.channel_uses, cfg_.channel,
                    cfg_.train_ebn0_db, encoder_, decoder_);
}

std::pair<NeuralLink, AeReport> train_autoencoder(const AeConfig& cfg, Rng& rng) {
  AeTrainer trainer(cfg, rng);
  AeReport report;
  for (long it = 1; it <= cfg.iterations; ++it) {
    trainer.discriminator_step(it, rng);
    trainer.autoencoder_step(it, rng);
    if (it % cfg.trace_every == 0 || it == cfg.iterations)
      report.trace.push_back(trainer.last());
  }
  long cutoff = report.trace.back().iter - cfg.smooth_window;
  double loss = 0.0, mi = 0.0, bler = 0.0;
  int count = 0;
  for (const AeTracePoint& t : report.trace) {
    if (t.iter > cutoff) {
      loss += t.loss;
      mi += t.mi_nats;
      bler += t.bler;
      ++count;
    }
  }
  report.final_loss = loss / count;
  report.final_mi_nats = mi / count;
  report.final_train_bler = bler / count;
  return {trainer.to_link(), std::move(report)};
}

}  // namespace dime
