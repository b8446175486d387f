#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "dime/graph.hpp"
#include "dime/nets.hpp"
#include "dime/rng.hpp"

namespace dime {

/// Fixed-point-free permutation of [0, n): Sattolo's single-cycle shuffle,
/// so element i never stays in place. Needs n >= 2.
std::vector<int> derangement(std::size_t n, Rng& rng);

/// ys with its rows deranged: every x keeps its draw index, every y moves,
/// which turns a joint batch into a product-of-marginals batch.
Tensor make_unpaired(const Tensor& ys, Rng& rng);

/// One training batch: paired rows follow the joint; the derangement gives
/// the unpaired counterpart without drawing fresh samples.
struct SampleBatch {
  Tensor xs, ys;
  std::vector<int> unpaired;
  Tensor unpaired_ys() const { return take_rows(ys, unpaired); }
  std::size_t batch() const { return xs.rows; }
};

/// x ~ N(0, I_d), y = rho x + sqrt(1 - rho^2) z with independent z: a
/// correlated-Gaussian pair whose true mutual information is known.
std::function<SampleBatch(int, Rng&)> gaussian_sampler(int dim, double rho);

/// Exact mutual information of the gaussian_sampler pair, in nats.
double gaussian_mi_nats(double rho, int dim);

/// Convex generator bundle: f on u > 0 with f(1) = 0, its Fenchel conjugate
/// f*, the derivative f', and the inverse of f'. The Var builders mirror the
/// scalar maps inside objectives; conj_lo/conj_hi bound the open interval
/// where f* is finite.
struct FGenerator {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> conjugate;
  std::function<double(double)> deriv;
  std::function<double(double)> inv_deriv;
  std::function<Var(Var)> conjugate_var;
  std::function<Var(Var)> deriv_var;
  double conj_lo = -std::numeric_limits<double>::infinity();
  double conj_hi = std::numeric_limits<double>::infinity();
};

/// f(u) = u log u.
FGenerator kl_generator();
/// f(u) = u log u - (u+1) log(u+1) + log 4; f* finite on t < 0 only.
FGenerator gan_generator();
/// f(u) = (u / gamma) log u with f*(t) = e^(gamma t - 1) / gamma.
FGenerator scaled_kl_generator(double gamma);

// Value functions: each maps discriminator outputs on paired and unpaired
// rows to the bound the family maximizes. The mi_* companions recover the
// mutual-information estimate the family reports.

/// mean(tp) - log mean(exp tu). Donsker-Varadhan; exp is capped at kExpCap.
double value_mine(std::span<const double> tp, std::span<const double> tu);
/// mean(tp) - mean(exp(tu - 1)).
double value_nwj(std::span<const double> tp, std::span<const double> tu);
/// mean(tp) - log mean(clip(exp tu, e^-tau, e^tau)); tau >= 0.
double value_smile(std::span<const double> tp, std::span<const double> tu, double tau);
/// alpha mean(log dp) - mean(du); discriminator outputs must be positive.
double value_ddime(std::span<const double> dp, std::span<const double> du, double alpha);
/// mean(tp) - mean(f*(tu)); tu must stay inside the conjugate's domain.
double value_fdime(std::span<const double> tp, std::span<const double> tu,
                   const FGenerator& gen);
/// gamma mean(log dp) - mean(du^gamma); outputs must be positive.
double value_gdime(std::span<const double> dp, std::span<const double> du, double gamma);

double mi_from_ddime(double value, double alpha);
double mi_from_gdime(double value);
/// mean(log (f')^{-1}(tp)): the direct estimate from paired outputs alone.
double mi_fdime(std::span<const double> tp, const FGenerator& gen);
/// mean(gamma log dp): the direct form using the optimal D = R^(1/gamma).
double mi_gdime_direct(std::span<const double> dp, double gamma);

enum class EstimatorKind { Mine, Nwj, Smile, Ddime, Fdime, Gdime };
enum class FdimeGen { Kl, Gan, ScaledKl };

/// One estimator configuration: the kind plus the hyperparameters the kind
/// reads. label() is the canonical CSV/report token, e.g. "gdime:1".
struct EstimatorSpec {
  EstimatorKind kind = EstimatorKind::Gdime;
  double gamma = 1.0;     // gdime exponent; also the scaled-KL parameter
  double alpha = 1.0;     // ddime weight
  double tau = 1.0;       // smile clip half-width, in nats
  double ema_rate = 0.99; // mine gradient-denominator smoothing
  FdimeGen fdime_gen = FdimeGen::Kl;

  void validate() const;
  std::string label() const;
  /// Softplus-head families read D > 0; the rest read an unbounded T.
  bool wants_positive_output() const;
  FGenerator generator() const;
};

/// Parse "gdime:0.5", "smile:5", "fdime_skl:2", "mine", ... back into a spec.
EstimatorSpec estimator_from_token(const std::string& token);

/// Biased moving average of the exp-mean denominator used by the MINE
/// gradient surrogate, with the usual 1/(1 - rate^t) correction.
struct MineEma {
  double rate = 0.99;
  double mean = 0.0;
  long steps = 0;
  double update(double batch_mean);
};

/// A value function realized as graph nodes over discriminator outputs.
/// `objective` is what training maximizes; `value_node` is the value function
/// itself, with `value` and `mi_nats` read from the same forward pass. The
/// objective differs from the value in two places: MINE swaps the log-mean
/// term for the EMA surrogate when an ema is supplied, and SMILE ascends the
/// logistic discriminator bound, because ascending the clipped bound directly
/// loses its restoring gradient once every unpaired ratio saturates the clip
/// and the paired term then grows without limit.
struct ObjectiveParts {
  Var objective;
  Var value_node;
  double value = 0.0;
  double mi_nats = 0.0;
};
ObjectiveParts build_objective(Graph& g, const EstimatorSpec& est, Var out_paired,
                               Var out_unpaired, MineEma* ema);

/// Discriminator over concatenated (x, y) rows: two leaky-ReLU hidden layers,
/// head chosen by the estimator family.
Mlp make_discriminator(int in_width, const EstimatorSpec& est, Rng& rng,
                       int hidden = 200, double leaky_slope = 0.2);

struct TracePoint {
  long iter = 0;
  double value = 0.0;
  double mi_nats = 0.0;
  double mi_bits = 0.0;
  long clip_events = 0;
};

struct TrainOptions {
  int iterations = 10000;
  int batch = 512;
  OptimizerConfig opt;
  int hidden = 200;
  double leaky_slope = 0.2;
  int trace_every = 10;
  int smooth_window = 500;  // trailing iterations averaged into the report
  void validate() const;
};

struct TrainResult {
  Mlp discriminator;
  std::vector<TracePoint> trace;
  double final_value = 0.0;
  double final_mi_nats = 0.0;
  long clip_events = 0;
};

using BatchSampler = std::function<SampleBatch(int, Rng&)>;

/// Maximizes the estimator's objective over fresh sampler batches. Throws
/// DivergenceError the moment the objective or estimate stops being finite.
TrainResult train_estimator(const EstimatorSpec& est, const TrainOptions& opt,
                            const BatchSampler& sampler, Rng& rng);

/// Mean of the trace entries from the trailing `window` iterations.
double trailing_mean(const std::vector<TracePoint>& trace, int window,
                     double TracePoint::*field);

}  // namespace dime
