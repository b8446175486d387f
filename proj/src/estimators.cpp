#include "dime/estimators.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace dime {

namespace {

double guarded_exp(double t) { return std::exp(t > kExpCap ? kExpCap : t); }

double guarded_log(double x) {
  if (std::isnan(x)) return x;
  return std::log(x > kLogFloor ? x : kLogFloor);
}

double mean_of(std::span<const double> xs, const char* who) {
  if (xs.empty()) throw Error(std::string(who) + ": empty batch");
  double sum = 0.0;
  for (double x : xs) sum += x;
  return sum / static_cast<double>(xs.size());
}

void require_positive(std::span<const double> xs, const char* who) {
  for (double x : xs)
    if (!(x > 0.0))
      throw NumericError(std::string(who) + ": discriminator outputs must be positive");
}

std::string fmt_param(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", x);
  return buf;
}

}  // namespace

std::vector<int> derangement(std::size_t n, Rng& rng) {
  if (n < 2) throw Error("derangement: need at least two rows");
  std::vector<int> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<int>(i);
  for (std::size_t i = n - 1; i >= 1; --i)
    std::swap(p[i], p[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  return p;
}

Tensor make_unpaired(const Tensor& ys, Rng& rng) {
  return take_rows(ys, derangement(ys.rows, rng));
}

std::function<SampleBatch(int, Rng&)> gaussian_sampler(int dim, double rho) {
  if (dim < 1) throw Error("gaussian_sampler: dim must be >= 1");
  if (!(std::fabs(rho) < 1.0)) throw Error("gaussian_sampler: |rho| must be < 1");
  double c = std::sqrt(1.0 - rho * rho);
  return [dim, rho, c](int batch, Rng& rng) {
    if (batch < 2) throw Error("gaussian_sampler: batch must be >= 2");
    SampleBatch sb;
    sb.xs = rng.normal_tensor(static_cast<std::size_t>(batch),
                              static_cast<std::size_t>(dim));
    sb.ys = Tensor(sb.xs.rows, sb.xs.cols);
    for (std::size_t k = 0; k < sb.ys.size(); ++k)
      sb.ys.v[k] = rho * sb.xs.v[k] + c * rng.normal();
    sb.unpaired = derangement(sb.xs.rows, rng);
    return sb;
  };
}

double gaussian_mi_nats(double rho, int dim) {
  if (dim < 1) throw Error("gaussian_mi_nats: dim must be >= 1");
  if (!(std::fabs(rho) < 1.0)) throw Error("gaussian_mi_nats: |rho| must be < 1");
  return -0.5 * static_cast<double>(dim) * std::log1p(-rho * rho);
}

FGenerator kl_generator() {
  FGenerator g;
  g.name = "kl";
  g.f = [](double u) { return u * std::log(u); };
  g.conjugate = [](double t) { return std::exp(t - 1.0); };
  g.deriv = [](double u) { return std::log(u) + 1.0; };
  g.inv_deriv = [](double t) { return std::exp(t - 1.0); };
  g.conjugate_var = [](Var t) { return exp(affine(t, 1.0, -1.0)); };
  g.deriv_var = [](Var u) { return affine(log(u), 1.0, 1.0); };
  return g;
}

FGenerator gan_generator() {
  FGenerator g;
  g.name = "gan";
  double log4 = std::log(4.0);
  g.f = [log4](double u) {
    return u * std::log(u) - (u + 1.0) * std::log(u + 1.0) + log4;
  };
  g.conjugate = [log4](double t) { return -std::log1p(-std::exp(t)) - log4; };
  g.deriv = [](double u) { return std::log(u) - std::log1p(u); };
  g.inv_deriv = [](double t) {
    double e = std::exp(t);
    return e / (1.0 - e);
  };
  g.conjugate_var = [log4](Var t) {
    Graph& g = *t.graph;
    const Tensor& shape = g.value(t);
    Tensor ones(shape.rows, shape.cols);
    for (double& e : ones.v) e = 1.0;
    return affine(log(sub(g.constant(std::move(ones)), exp(t))), -1.0, -log4);
  };
  g.deriv_var = [](Var u) { return sub(log(u), log(affine(u, 1.0, 1.0))); };
  g.conj_hi = 0.0;
  return g;
}

FGenerator scaled_kl_generator(double gamma) {
  if (!(gamma > 0.0)) throw Error("scaled_kl_generator: gamma must be > 0");
  FGenerator g;
  g.name = "skl:" + fmt_param(gamma);
  g.f = [gamma](double u) { return u / gamma * std::log(u); };
  g.conjugate = [gamma](double t) { return std::exp(gamma * t - 1.0) / gamma; };
  g.deriv = [gamma](double u) { return (std::log(u) + 1.0) / gamma; };
  g.inv_deriv = [gamma](double t) { return std::exp(gamma * t - 1.0); };
  g.conjugate_var = [gamma](Var t) {
    return affine(exp(affine(t, gamma, -1.0)), 1.0 / gamma, 0.0);
  };
  g.deriv_var = [gamma](Var u) { return affine(log(u), 1.0 / gamma, 1.0 / gamma); };
  return g;
}

double value_mine(std::span<const double> tp, std::span<const double> tu) {
  double m = mean_of(tp, "value_mine");
  double sum = 0.0;
  for (double t : tu) sum += guarded_exp(t);
  if (tu.empty()) throw Error("value_mine: empty batch");
  return m - guarded_log(sum / static_cast<double>(tu.size()));
}

double value_nwj(std::span<const double> tp, std::span<const double> tu) {
  double m = mean_of(tp, "value_nwj");
  double sum = 0.0;
  for (double t : tu) sum += guarded_exp(t - 1.0);
  if (tu.empty()) throw Error("value_nwj: empty batch");
  return m - sum / static_cast<double>(tu.size());
}

double value_smile(std::span<const double> tp, std::span<const double> tu, double tau) {
  if (!(tau >= 0.0)) throw Error("value_smile: tau must be >= 0");
  double m = mean_of(tp, "value_smile");
  double lo = std::exp(-tau), hi = std::exp(tau);
  double sum = 0.0;
  for (double t : tu) {
    double e = guarded_exp(t);
    sum += e < lo ? lo : (e > hi ? hi : e);
  }
  if (tu.empty()) throw Error("value_smile: empty batch");
  return m - guarded_log(sum / static_cast<double>(tu.size()));
}

double value_ddime(std::span<const double> dp, std::span<const double> du, double alpha) {
  if (!(alpha > 0.0)) throw Error("value_ddime: alpha must be > 0");
  require_positive(dp, "value_ddime");
  require_positive(du, "value_ddime");
  double sum_log = 0.0;
  for (double d : dp) sum_log += std::log(d);
  return alpha * sum_log / static_cast<double>(dp.size()) - mean_of(du, "value_ddime");
}

double value_fdime(std::span<const double> tp, std::span<const double> tu,
                   const FGenerator& gen) {
  double m = mean_of(tp, "value_fdime");
  double sum = 0.0;
  for (double t : tu) {
    if (!(t > gen.conj_lo) || !(t < gen.conj_hi))
      throw NumericError("value_fdime: T outside the conjugate domain of " + gen.name);
    sum += gen.conjugate(t);
  }
  if (tu.empty()) throw Error("value_fdime: empty batch");
  return m - sum / static_cast<double>(tu.size());
}

double value_gdime(std::span<const double> dp, std::span<const double> du, double gamma) {
  if (!(gamma > 0.0)) throw Error("value_gdime: gamma must be > 0");
  require_positive(dp, "value_gdime");
  require_positive(du, "value_gdime");
  double sum_log = 0.0;
  for (double d : dp) sum_log += std::log(d);
  double sum_pow = 0.0;
  for (double d : du) sum_pow += std::pow(d, gamma);
  return gamma * sum_log / static_cast<double>(dp.size()) -
         sum_pow / static_cast<double>(du.size());
}

double mi_from_ddime(double value, double alpha) {
  if (!(alpha > 0.0)) throw Error("mi_from_ddime: alpha must be > 0");
  return value / alpha + 1.0 - std::log(alpha);
}

double mi_from_gdime(double value) { return value + 1.0; }

double mi_fdime(std::span<const double> tp, const FGenerator& gen) {
  if (tp.empty()) throw Error("mi_fdime: empty batch");
  double sum = 0.0;
  for (double t : tp) sum += guarded_log(gen.inv_deriv(t));
  return sum / static_cast<double>(tp.size());
}

double mi_gdime_direct(std::span<const double> dp, double gamma) {
  if (!(gamma > 0.0)) throw Error("mi_gdime_direct: gamma must be > 0");
  require_positive(dp, "mi_gdime_direct");
  double sum = 0.0;
  for (double d : dp) sum += std::log(d);
  return gamma * sum / static_cast<double>(dp.size());
}

void EstimatorSpec::validate() const {
  if (!(gamma > 0.0)) throw ConfigError("estimator.gamma: must be > 0");
  if (!(alpha > 0.0)) throw ConfigError("estimator.alpha: must be > 0");
  if (!(tau >= 0.0)) throw ConfigError("estimator.tau: must be >= 0");
  if (!(ema_rate >= 0.0) || ema_rate >= 1.0)
    throw ConfigError("estimator.ema_rate: must be in [0, 1)");
}

std::string EstimatorSpec::label() const {
  switch (kind) {
    case EstimatorKind::Mine: return "mine";
    case EstimatorKind::Nwj: return "nwj";
    case EstimatorKind::Smile: return "smile:" + fmt_param(tau);
    case EstimatorKind::Ddime: return "ddime:" + fmt_param(alpha);
    case EstimatorKind::Gdime: return "gdime:" + fmt_param(gamma);
    case EstimatorKind::Fdime:
      if (fdime_gen == FdimeGen::Kl) return "fdime_kl";
      if (fdime_gen == FdimeGen::Gan) return "fdime_gan";
      return "fdime_skl:" + fmt_param(gamma);
  }
  return "?";
}

bool EstimatorSpec::wants_positive_output() const {
  return kind == EstimatorKind::Ddime || kind == EstimatorKind::Fdime ||
         kind == EstimatorKind::Gdime;
}

FGenerator EstimatorSpec::generator() const {
  switch (fdime_gen) {
    case FdimeGen::Kl: return kl_generator();
    case FdimeGen::Gan: return gan_generator();
    case FdimeGen::ScaledKl: return scaled_kl_generator(gamma);
  }
  throw Error("estimator: unknown generator");
}

EstimatorSpec estimator_from_token(const std::string& token) {
  std::string kind = token;
  std::string param;
  if (auto colon = token.find(':'); colon != std::string::npos) {
    kind = token.substr(0, colon);
    param = token.substr(colon + 1);
  }
  double value = 0.0;
  bool has_param = !param.empty();
  if (has_param) {
    char* end = nullptr;
    value = std::strtod(param.c_str(), &end);
    if (end == nullptr || *end != '\0')
      throw ConfigError("estimator: bad parameter in token '" + token + "'");
  }
  EstimatorSpec spec;
  if (kind == "mine") spec.kind = EstimatorKind::Mine;
  else if (kind == "nwj") spec.kind = EstimatorKind::Nwj;
  else if (kind == "smile") {
    spec.kind = EstimatorKind::Smile;
    if (has_param) spec.tau = value;
  } else if (kind == "ddime") {
    spec.kind = EstimatorKind::Ddime;
    if (has_param) spec.alpha = value;
  } else if (kind == "gdime") {
    spec.kind = EstimatorKind::Gdime;
    if (has_param) spec.gamma = value;
  } else if (kind == "fdime_kl" || kind == "fdime_gan" || kind == "fdime_skl") {
    spec.kind = EstimatorKind::Fdime;
    spec.fdime_gen = kind == "fdime_kl" ? FdimeGen::Kl
                     : kind == "fdime_gan" ? FdimeGen::Gan
                                           : FdimeGen::ScaledKl;
    if (has_param) spec.gamma = value;
  } else {
    throw ConfigError("estimator: unknown kind '" + kind + "'");
  }
  spec.validate();
  return spec;
}

double MineEma::update(double batch_mean) {
  steps += 1;
  mean = rate * mean + (1.0 - rate) * batch_mean;
  return mean / (1.0 - std::pow(rate, static_cast<double>(steps)));
}

ObjectiveParts build_objective(Graph& g, const EstimatorSpec& est, Var out_paired,
                               Var out_unpaired, MineEma* ema) {
  ObjectiveParts parts;
  switch (est.kind) {
    case EstimatorKind::Mine: {
      Var m_tp = mean_all(out_paired);
      Var m_eu = mean_all(exp(out_unpaired));
      Var value_node = sub(m_tp, log(m_eu));
      parts.value_node = value_node;
      parts.value = g.scalar(value_node);
      parts.mi_nats = parts.value;
      parts.objective = value_node;
      if (ema != nullptr) {
        double denom = ema->update(g.scalar(m_eu));
        parts.objective = sub(m_tp, affine(m_eu, 1.0 / denom, 0.0));
      }
      break;
    }
    case EstimatorKind::Nwj: {
      Var value_node =
          sub(mean_all(out_paired), mean_all(exp(affine(out_unpaired, 1.0, -1.0))));
      parts.value_node = value_node;
      parts.value = g.scalar(value_node);
      parts.mi_nats = parts.value;
      parts.objective = value_node;
      break;
    }
    case EstimatorKind::Smile: {
      Var inner = clip(exp(out_unpaired), std::exp(-est.tau), std::exp(est.tau));
      Var value_node = sub(mean_all(out_paired), log(mean_all(inner)));
      parts.value_node = value_node;
      parts.value = g.scalar(value_node);
      parts.mi_nats = parts.value;
      // The clipped bound is reported but not ascended: once every unpaired
      // ratio saturates the clip its gradient dies while the paired mean keeps
      // climbing, so training runs away on weak dependence. The logistic bound
      // below has the same optimal T = log ratio and stays bounded.
      Var sp_paired = mean_all(softplus(affine(out_paired, -1.0, 0.0)));
      Var sp_unpaired = mean_all(softplus(out_unpaired));
      parts.objective = affine(add(sp_paired, sp_unpaired), -1.0, 0.0);
      break;
    }
    case EstimatorKind::Ddime: {
      Var value_node = sub(affine(mean_all(log(out_paired)), est.alpha, 0.0),
                           mean_all(out_unpaired));
      parts.value_node = value_node;
      parts.value = g.scalar(value_node);
      parts.mi_nats = mi_from_ddime(parts.value, est.alpha);
      parts.objective = value_node;
      break;
    }
    case EstimatorKind::Fdime: {
      FGenerator gen = est.generator();
      Var tp = gen.deriv_var(out_paired);
      Var tu = gen.deriv_var(out_unpaired);
      Var value_node = sub(mean_all(tp), mean_all(gen.conjugate_var(tu)));
      parts.value_node = value_node;
      parts.value = g.scalar(value_node);
      // The positive head output is (f')^{-1}(T) by construction, so the
      // direct estimate is just the mean log of the paired outputs.
      parts.mi_nats = g.scalar(mean_all(log(out_paired)));
      parts.objective = value_node;
      break;
    }
    case EstimatorKind::Gdime: {
      Var value_node = sub(affine(mean_all(log(out_paired)), est.gamma, 0.0),
                           mean_all(pow(out_unpaired, est.gamma)));
      parts.value_node = value_node;
      parts.value = g.scalar(value_node);
      parts.mi_nats = mi_from_gdime(parts.value);
      parts.objective = value_node;
      break;
    }
  }
  return parts;
}

Mlp make_discriminator(int in_width, const EstimatorSpec& est, Rng& rng, int hidden,
                       double leaky_slope) {
  if (in_width < 1) throw ShapeError("make_discriminator: input width must be >= 1");
  if (hidden < 1) throw ShapeError("make_discriminator: hidden width must be >= 1");
  Head head = est.wants_positive_output() ? Head::Softplus : Head::Linear;
  return Mlp({in_width, hidden, hidden, 1}, head, leaky_slope, rng, "disc");
}

void TrainOptions::validate() const {
  if (iterations < 1) throw ConfigError("training.iterations: must be >= 1");
  if (batch < 2) throw ConfigError("training.batch: must be >= 2");
  if (hidden < 1) throw ConfigError("training.hidden: must be >= 1");
  if (trace_every < 1) throw ConfigError("training.trace_every: must be >= 1");
  if (smooth_window < 1) throw ConfigError("training.smooth_window: must be >= 1");
  opt.validate();
}

double trailing_mean(const std::vector<TracePoint>& trace, int window,
                     double TracePoint::*field) {
  if (trace.empty()) throw Error("trailing_mean: empty trace");
  long cutoff = trace.back().iter - window;
  double sum = 0.0;
  int count = 0;
  for (const TracePoint& t : trace) {
    if (t.iter > cutoff) {
      sum += t.*field;
      ++count;
    }
  }
  return sum / count;
}

TrainResult train_estimator(const EstimatorSpec& est, const TrainOptions& opt,
                            const BatchSampler& sampler, Rng& rng) {
  est.validate();
  opt.validate();

  SampleBatch first = sampler(opt.batch, rng);
  if (first.xs.rows != first.ys.rows || first.xs.rows < 2)
    throw ShapeError("train_estimator: sampler produced a malformed batch");
  int in_width = static_cast<int>(first.xs.cols + first.ys.cols);

  TrainResult result;
  result.discriminator = make_discriminator(in_width, est, rng, opt.hidden,
                                            opt.leaky_slope);
  std::vector<Parameter*> params = result.discriminator.params();
  MineEma ema{est.ema_rate, 0.0, 0};
  MineEma* emap = est.kind == EstimatorKind::Mine ? &ema : nullptr;

  for (long it = 1; it <= opt.iterations; ++it) {
    SampleBatch sb = it == 1 ? std::move(first) : sampler(opt.batch, rng);
    Graph g;
    Var in_p = g.constant(hcat(sb.xs, sb.ys));
    Var in_u = g.constant(hcat(sb.xs, sb.unpaired_ys()));
    Var out_p = result.discriminator.forward(g, in_p);
    Var out_u = result.discriminator.forward(g, in_u);
    ObjectiveParts parts = build_objective(g, est, out_p, out_u, emap);
    if (!std::isfinite(parts.value) || !std::isfinite(parts.mi_nats))
      throw DivergenceError(est.label() + ": objective diverged at iteration " +
                                std::to_string(it),
                            it);
    g.backward(affine(parts.objective, -1.0, 0.0));
    optimizer_step(params, opt.opt);
    zero_grads(params);
    result.clip_events += g.clip_events();
    if (it % opt.trace_every == 0 || it == opt.iterations)
      result.trace.push_back({it, parts.value, parts.mi_nats,
                              parts.mi_nats / std::numbers::ln2, result.clip_events});
  }
  result.final_value = trailing_mean(result.trace, opt.smooth_window, &TracePoint::value);
  result.final_mi_nats =
      trailing_mean(result.trace, opt.smooth_window, &TracePoint::mi_nats);
  return result;
}

}  // namespace dime
