#include "dime/evalharness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <tuple>
#include <utility>

namespace dime {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

struct CsvFile {
  std::FILE* f = nullptr;

  explicit CsvFile(const std::string& path) {
    f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("cannot open for writing: " + path);
  }
  ~CsvFile() {
    if (f) std::fclose(f);
  }
  CsvFile(const CsvFile&) = delete;
  CsvFile& operator=(const CsvFile&) = delete;

  void line(const std::string& s) {
    std::fputs(s.c_str(), f);
    std::fputc('\n', f);
  }
};

std::string join(std::initializer_list<std::string> cells) {
  std::string out;
  bool first = true;
  for (const std::string& c : cells) {
    if (!first) out += ',';
    out += c;
    first = false;
  }
  return out;
}

std::string format_long(long x) { return std::to_string(x); }
std::string format_seed(std::uint64_t x) { return std::to_string(x); }

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void BlerOptions::validate() const {
  if (min_errors < 1) throw ConfigError("eval.min_errors: must be >= 1");
  if (max_blocks < 1) throw ConfigError("eval.max_blocks: must be >= 1");
  if (batch < 1) throw ConfigError("bler batch must be >= 1");
}

std::vector<BlerPoint> simulate_bler(const LinkSystem& system, ChannelKind kind,
                                     std::span<const double> ebn0_grid,
                                     const BlerOptions& opt, std::uint64_t seed) {
  opt.validate();
  if (ebn0_grid.empty()) throw ConfigError("eval.ebn0_grid: must not be empty");
  const int alphabet = system.alphabet_size();
  const double rate = system.rate_bits();

  std::vector<BlerPoint> out;
  out.reserve(ebn0_grid.size());
  for (std::size_t i = 0; i < ebn0_grid.size(); ++i) {
    BlerPoint p;
    p.ebn0_db = ebn0_grid[i];
    p.seed = seed + i;
    Rng rng(p.seed);
    ChannelModel model = ChannelModel::at_ebn0(kind, p.ebn0_db, rate);

    while (p.errors < opt.min_errors && p.blocks < opt.max_blocks) {
      long want = std::min<long>(opt.batch, opt.max_blocks - p.blocks);
      std::vector<int> msgs(static_cast<std::size_t>(want));
      for (int& m : msgs) m = rng.uniform_int(alphabet);
      Tensor sent = system.encode(msgs);
      Tensor received = transmit(sent, model, rng);
      std::vector<int> decoded = system.decode(received);
      for (std::size_t k = 0; k < msgs.size(); ++k)
        if (decoded[k] != msgs[k]) ++p.errors;
      p.blocks += want;
    }
    p.bler = static_cast<double>(p.errors) / static_cast<double>(p.blocks);
    out.push_back(p);
  }
  return out;
}

std::vector<MiSweepPoint> sweep_mi(const NeuralLink& system,
                                   std::span<const EstimatorSpec> estimators,
                                   std::span<const double> ebn0_grid,
                                   ChannelKind kind, const TrainOptions& train,
                                   std::uint64_t seed) {
  train.validate();
  if (estimators.empty()) throw ConfigError("eval.estimators: must not be empty");
  if (ebn0_grid.empty()) throw ConfigError("eval.ebn0_grid: must not be empty");
  for (const EstimatorSpec& est : estimators) est.validate();

  std::vector<EstimatorSpec> specs(estimators.begin(), estimators.end());
  std::stable_sort(specs.begin(), specs.end(),
                   [](const EstimatorSpec& a, const EstimatorSpec& b) {
                     return a.label() < b.label();
                   });
  std::vector<double> grid(ebn0_grid.begin(), ebn0_grid.end());
  std::sort(grid.begin(), grid.end());

  const double rate = system.rate_bits();
  const int uses = system.channel_uses();
  const int alphabet = system.alphabet_size();

  std::vector<MiSweepPoint> out;
  out.reserve(specs.size() * grid.size());
  for (std::size_t e = 0; e < specs.size(); ++e) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      MiSweepPoint p;
      p.estimator = specs[e].label();
      p.ebn0_db = grid[i];
      p.rate_bits = rate;
      p.seed = seed + 1000 * e + i;

      const double sigma2 = ebn0_to_noise_variance(p.ebn0_db, rate);
      p.capacity_bits = awgn_capacity_bits(1.0 / sigma2);
      ChannelModel model = ChannelModel::make(kind, sigma2);

      BatchSampler sampler = [&system, model, alphabet](int batch, Rng& rng) {
        std::vector<int> msgs(static_cast<std::size_t>(batch));
        for (int& m : msgs) m = rng.uniform_int(alphabet);
        SampleBatch sb;
        sb.xs = system.encode(msgs);
        sb.ys = transmit(sb.xs, model, rng);
        sb.unpaired = derangement(msgs.size(), rng);
        return sb;
      };

      Rng rng(p.seed);
      try {
        TrainResult result = train_estimator(specs[e], train, sampler, rng);
        double block_nats =
            trailing_mean(result.trace, train.smooth_window, &TracePoint::mi_nats);
        p.mi_nats = block_nats / uses;
        p.mi_bits = p.mi_nats / std::log(2.0);
      } catch (const DivergenceError&) {
        p.mi_nats = kNan;
        p.mi_bits = kNan;
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

double gaussian_mi_oracle(double rho, int dim) {
  if (dim < 1) throw ConfigError("gaussian oracle: dim must be >= 1");
  if (!(std::abs(rho) < 1.0))
    throw ConfigError("gaussian oracle: |rho| must be < 1");
  return gaussian_mi_nats(rho, dim);
}

std::vector<BenchPoint> bench_estimators(std::span<const EstimatorSpec> estimators,
                                         std::span<const int> dims,
                                         std::span<const double> rhos,
                                         const TrainOptions& train,
                                         std::uint64_t seed) {
  train.validate();
  if (estimators.empty() || dims.empty() || rhos.empty())
    throw ConfigError("bench: estimators, dims, and rhos must not be empty");
  for (const EstimatorSpec& est : estimators) est.validate();
  for (int d : dims)
    if (d < 1) throw ConfigError("bench: dim must be >= 1");
  for (double r : rhos)
    if (!(std::abs(r) < 1.0)) throw ConfigError("bench: |rho| must be < 1");

  std::vector<EstimatorSpec> specs(estimators.begin(), estimators.end());
  std::stable_sort(specs.begin(), specs.end(),
                   [](const EstimatorSpec& a, const EstimatorSpec& b) {
                     return a.label() < b.label();
                   });
  std::vector<int> ds(dims.begin(), dims.end());
  std::sort(ds.begin(), ds.end());
  std::vector<double> rs(rhos.begin(), rhos.end());
  std::sort(rs.begin(), rs.end());

  std::vector<BenchPoint> out;
  out.reserve(specs.size() * ds.size() * rs.size());
  std::uint64_t row = 0;
  for (const EstimatorSpec& est : specs) {
    for (int d : ds) {
      for (double rho : rs) {
        BenchPoint p;
        p.estimator = est.label();
        p.dim = d;
        p.rho = rho;
        p.oracle_nats = gaussian_mi_oracle(rho, d);
        p.seed = seed + row;

        Rng rng(p.seed);
        try {
          TrainResult result =
              train_estimator(est, train, gaussian_sampler(d, rho), rng);
          p.mi_nats =
              trailing_mean(result.trace, train.smooth_window, &TracePoint::mi_nats);
          p.abs_error = std::abs(p.mi_nats - p.oracle_nats);
        } catch (const DivergenceError&) {
          p.mi_nats = kNan;
          p.abs_error = kNan;
        }
        out.push_back(std::move(p));
        ++row;
      }
    }
  }
  return out;
}

namespace {

void check_landscape_args(std::span<const double> gammas, double ratio) {
  if (gammas.empty()) throw ConfigError("landscape: gamma list must not be empty");
  for (double g : gammas)
    if (!(g > 0.0) || !std::isfinite(g))
      throw ConfigError("landscape: gamma must be > 0");
  if (!(ratio > 0.0) || !std::isfinite(ratio))
    throw ConfigError("landscape: ratio must be > 0");
}

}  // namespace

std::vector<LandscapeCurve> value_landscape(std::span<const double> gammas,
                                            double ratio,
                                            std::span<const double> d_grid) {
  check_landscape_args(gammas, ratio);
  if (d_grid.empty()) throw ConfigError("landscape: d grid must not be empty");
  for (double d : d_grid)
    if (!(d > 0.0)) throw ConfigError("landscape: grid values must be > 0");

  std::vector<LandscapeCurve> out;
  out.reserve(gammas.size());
  for (double gamma : gammas) {
    LandscapeCurve curve;
    curve.gamma = gamma;
    curve.d.assign(d_grid.begin(), d_grid.end());
    curve.value.resize(curve.d.size());
    std::size_t best = 0;
    for (std::size_t i = 0; i < curve.d.size(); ++i) {
      double d = curve.d[i];
      curve.value[i] = ratio * std::log(d) - std::pow(d, gamma) / gamma;
      if (curve.value[i] > curve.value[best]) best = i;
    }
    curve.maximizer = curve.d[best];
    out.push_back(std::move(curve));
  }
  return out;
}

std::vector<double> landscape_grid(std::span<const double> gammas, double ratio) {
  check_landscape_args(gammas, ratio);

  double peak = 0.0;
  for (double gamma : gammas)
    peak = std::max(peak, std::pow(ratio, 1.0 / gamma));

  std::vector<double> grid;
  if (peak <= 3.0) {
    grid.reserve(300);
    for (int k = 1; k <= 300; ++k) grid.push_back(0.01 * k);
    return grid;
  }

  const std::size_t points = 2048;
  const double lo = 0.01;
  const double hi = 2.0 * peak;
  const double span = std::log(hi / lo);
  grid.reserve(points);
  for (std::size_t k = 0; k < points; ++k) {
    double t = static_cast<double>(k) / static_cast<double>(points - 1);
    grid.push_back(lo * std::exp(t * span));
  }
  return grid;
}

void export_bler_csv(std::span<const BlerPoint> rows, const std::string& path) {
  CsvFile f(path);
  f.line("ebn0_db,blocks,errors,bler,seed");
  for (const BlerPoint& p : rows)
    f.line(join({format_double(p.ebn0_db), format_long(p.blocks),
                 format_long(p.errors), format_double(p.bler),
                 format_seed(p.seed)}));
}

void export_mi_csv(std::span<const MiSweepPoint> rows, const std::string& path) {
  std::vector<MiSweepPoint> sorted(rows.begin(), rows.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const MiSweepPoint& a, const MiSweepPoint& b) {
                     return std::tie(a.estimator, a.ebn0_db) <
                            std::tie(b.estimator, b.ebn0_db);
                   });
  CsvFile f(path);
  f.line("estimator,ebn0_db,mi_nats,mi_bits,capacity_bits,rate_bits,seed");
  for (const MiSweepPoint& p : sorted)
    f.line(join({p.estimator, format_double(p.ebn0_db), format_double(p.mi_nats),
                 format_double(p.mi_bits), format_double(p.capacity_bits),
                 format_double(p.rate_bits), format_seed(p.seed)}));
}

void export_landscape_csv(std::span<const LandscapeCurve> curves,
                          const std::string& path) {
  CsvFile f(path);
  f.line("gamma,d,value");
  for (const LandscapeCurve& c : curves)
    for (std::size_t i = 0; i < c.d.size(); ++i)
      f.line(join({format_double(c.gamma), format_double(c.d[i]),
                   format_double(c.value[i])}));
}

void export_trace_csv(std::span<const TracePoint> rows, const std::string& path) {
  CsvFile f(path);
  f.line("iter,value,mi_nats,mi_bits,clip_events");
  for (const TracePoint& p : rows)
    f.line(join({format_long(p.iter), format_double(p.value),
                 format_double(p.mi_nats), format_double(p.mi_bits),
                 format_long(p.clip_events)}));
}

void export_ae_trace_csv(std::span<const AeTracePoint> rows,
                         const std::string& path) {
  CsvFile f(path);
  f.line("iter,value,mi_nats,mi_bits,clip_events");
  for (const AeTracePoint& p : rows)
    f.line(join({format_long(p.iter), format_double(p.loss),
                 format_double(p.mi_nats), format_double(p.mi_bits),
                 format_long(p.clip_events)}));
}

void export_bench_csv(std::span<const BenchPoint> rows, const std::string& path) {
  CsvFile f(path);
  f.line("estimator,dim,rho,mi_nats,oracle_nats,abs_error,seed");
  for (const BenchPoint& p : rows)
    f.line(join({p.estimator, std::to_string(p.dim), format_double(p.rho),
                 format_double(p.mi_nats), format_double(p.oracle_nats),
                 format_double(p.abs_error), format_seed(p.seed)}));
}

namespace {

/// Shifts every element at least `margin` away from each listed kink so
/// central differences never straddle a non-smooth point.
Tensor away_from(Tensor t, std::initializer_list<double> kinks, double margin) {
  for (double& x : t.v)
    for (double k : kinks)
      if (std::abs(x - k) < margin) x = k + (x >= k ? margin : -margin) * 2.0;
  return t;
}

using CaseList = std::vector<GradCheckCase>;

void run_case(CaseList& out, const std::string& name,
              const std::vector<Parameter*>& params,
              const std::function<Var(Graph&)>& build) {
  GradCheckReport report = gradient_check(build, params, 1e-5);
  // A central difference that straddles a leaky_relu kink reports an error
  // that shrinks with the step, while a wrong gradient keeps its mismatch at
  // any step. Retry finer so only step-independent errors survive.
  for (double step : {1e-6, 1e-7}) {
    if (report.max_rel_error < 1e-4) break;
    GradCheckReport finer = gradient_check(build, params, step);
    if (finer.max_rel_error < report.max_rel_error) report = finer;
  }
  out.push_back({name, report});
}

/// mean(all elements of x * w): a generic scalar objective that keeps every
/// entry of x in play with its own weight.
Var weighted_mean(Graph& g, Var x, const Tensor& w) {
  return mean_all(mul(x, g.constant(w)));
}

void op_cases(CaseList& out, Rng& rng) {
  {
    Parameter a(rng.normal_tensor(2, 3), "a");
    Parameter b(rng.normal_tensor(3, 2), "b");
    Tensor w = rng.normal_tensor(2, 2);
    run_case(out, "op:matmul", {&a, &b}, [&](Graph& g) {
      return weighted_mean(g, matmul(g.param(a), g.param(b)), w);
    });
  }
  {
    Parameter x(rng.normal_tensor(3, 4), "x");
    Parameter bias(rng.normal_tensor(1, 4), "bias");
    Tensor w = rng.normal_tensor(3, 4);
    run_case(out, "op:add_bias", {&x, &bias}, [&](Graph& g) {
      return weighted_mean(g, add_bias(g.param(x), g.param(bias)), w);
    });
  }
  {
    Parameter a(rng.normal_tensor(3, 3), "a");
    Parameter b(rng.normal_tensor(3, 3), "b");
    Tensor w = rng.normal_tensor(3, 3);
    run_case(out, "op:add", {&a, &b}, [&](Graph& g) {
      return weighted_mean(g, add(g.param(a), g.param(b)), w);
    });
    run_case(out, "op:sub", {&a, &b}, [&](Graph& g) {
      return weighted_mean(g, sub(g.param(a), g.param(b)), w);
    });
    run_case(out, "op:mul", {&a, &b}, [&](Graph& g) {
      return weighted_mean(g, mul(g.param(a), g.param(b)), w);
    });
  }
  {
    Parameter x(rng.normal_tensor(3, 3), "x");
    Tensor w = rng.normal_tensor(3, 3);
    run_case(out, "op:affine", {&x}, [&](Graph& g) {
      return weighted_mean(g, affine(g.param(x), 1.7, -0.3), w);
    });
  }
  {
    Parameter x(away_from(rng.normal_tensor(3, 4), {0.0}, 0.05), "x");
    Tensor w = rng.normal_tensor(3, 4);
    run_case(out, "op:leaky_relu", {&x}, [&](Graph& g) {
      return weighted_mean(g, leaky_relu(g.param(x), 0.2), w);
    });
  }
  {
    Parameter x(rng.normal_tensor(3, 4), "x");
    Tensor w = rng.normal_tensor(3, 4);
    run_case(out, "op:softplus", {&x}, [&](Graph& g) {
      return weighted_mean(g, softplus(g.param(x)), w);
    });
    run_case(out, "op:exp", {&x}, [&](Graph& g) {
      return weighted_mean(g, exp(g.param(x)), w);
    });
  }
  {
    Tensor pos = rng.normal_tensor(3, 4);
    for (double& v : pos.v) v = 0.5 + std::abs(v);
    Parameter x(pos, "x");
    Tensor w = rng.normal_tensor(3, 4);
    run_case(out, "op:log", {&x}, [&](Graph& g) {
      return weighted_mean(g, log(g.param(x)), w);
    });
    run_case(out, "op:pow", {&x}, [&](Graph& g) {
      return weighted_mean(g, pow(g.param(x), 0.7), w);
    });
  }
  {
    Parameter x(away_from(rng.normal_tensor(3, 4), {-0.5, 0.5}, 0.05), "x");
    Tensor w = rng.normal_tensor(3, 4);
    run_case(out, "op:clip", {&x}, [&](Graph& g) {
      return weighted_mean(g, clip(g.param(x), -0.5, 0.5), w);
    });
  }
  {
    Parameter x(rng.normal_tensor(4, 5), "x");
    run_case(out, "op:mean_all", {&x},
             [&](Graph& g) { return mean_all(g.param(x)); });
    Tensor w = rng.normal_tensor(4, 5);
    run_case(out, "op:softmax_rows", {&x}, [&](Graph& g) {
      return weighted_mean(g, softmax_rows(g.param(x)), w);
    });
    Tensor targets = smoothed_targets({1, 0, 3, 2}, 0.2, 5);
    run_case(out, "op:cross_entropy_rows", {&x}, [&](Graph& g) {
      return mean_all(cross_entropy_rows(softmax_rows(g.param(x)), targets));
    });
    std::vector<int> labels{2, 4, 0, 1};
    run_case(out, "op:nll_rows", {&x}, [&](Graph& g) {
      return mean_all(nll_rows(softmax_rows(g.param(x)), labels));
    });
  }
  {
    Parameter x(rng.normal_tensor(3, 4), "x");
    Tensor w = rng.normal_tensor(3, 4);
    run_case(out, "op:power_norm", {&x}, [&](Graph& g) {
      return weighted_mean(g, power_normalize(g.param(x)), w);
    });
    Tensor h = rng.normal_tensor(3, 4);
    run_case(out, "op:complex_scale", {&x}, [&](Graph& g) {
      return weighted_mean(g, complex_scale(g.param(x), h), w);
    });
  }
  {
    Parameter x(rng.normal_tensor(5, 3), "x");
    Rng perm_rng(rng.uniform_int(1 << 20));
    std::vector<int> perm = derangement(5, perm_rng);
    Tensor w = rng.normal_tensor(5, 3);
    run_case(out, "op:permute_rows", {&x}, [&](Graph& g) {
      return weighted_mean(g, permute_rows(g.param(x), perm), w);
    });
  }
  {
    Parameter a(rng.normal_tensor(3, 2), "a");
    Parameter b(rng.normal_tensor(3, 3), "b");
    Tensor w = rng.normal_tensor(3, 5);
    run_case(out, "op:concat_cols", {&a, &b}, [&](Graph& g) {
      return weighted_mean(g, concat_cols(g.param(a), g.param(b)), w);
    });
  }
  for (ChannelKind kind : {ChannelKind::Awgn, ChannelKind::Rayleigh}) {
    Parameter x(rng.normal_tensor(4, 6), "x");
    Tensor w = rng.normal_tensor(4, 6);
    ChannelModel model = ChannelModel::make(kind, 0.3);
    Rng draws(rng.uniform_int(1 << 20));
    std::string name =
        std::string("op:transmit_") + channel_kind_name(kind);
    run_case(out, name, {&x}, [&](Graph& g) {
      Rng r = draws;
      return weighted_mean(g, transmit(g, g.param(x), model, r), w);
    });
  }
  {
    Rng net_rng(rng.uniform_int(1 << 20));
    Mlp net({3, 5, 4, 2}, Head::Linear, 0.2, net_rng, "net");
    Tensor x = rng.normal_tensor(6, 3);
    Tensor w = rng.normal_tensor(6, 2);
    run_case(out, "net:mlp", net.params(), [&](Graph& g) {
      return weighted_mean(g, net.forward(g, g.constant(x)), w);
    });
  }
}

void value_cases(CaseList& out, Rng& rng) {
  const std::vector<std::string> tokens = {
      "mine",      "nwj",       "smile:1",     "smile:5",   "ddime:0.5",
      "ddime:1",   "ddime:2",   "fdime_kl",    "fdime_gan", "fdime_skl:2",
      "gdime:0.5", "gdime:1",   "gdime:2"};
  const int batch = 8;
  const int dim = 2;

  for (const std::string& token : tokens) {
    EstimatorSpec est = estimator_from_token(token);
    Rng init_rng(rng.uniform_int(1 << 20));
    Mlp disc = make_discriminator(2 * dim, est, init_rng, 8, 0.2);
    Tensor xs = rng.normal_tensor(batch, dim);
    Tensor ys = rng.normal_tensor(batch, dim);
    Rng perm_rng(rng.uniform_int(1 << 20));
    std::vector<int> perm = derangement(batch, perm_rng);
    run_case(out, "value:" + est.label(), disc.params(), [&](Graph& g) {
      Var x = g.constant(xs);
      Var y = g.constant(ys);
      Var tp = disc.forward(g, concat_cols(x, y));
      Var tu = disc.forward(g, concat_cols(x, permute_rows(y, perm)));
      return build_objective(g, est, tp, tu, nullptr).value_node;
    });
  }

  {
    EstimatorSpec est = estimator_from_token("mine");
    Rng init_rng(rng.uniform_int(1 << 20));
    Mlp disc = make_discriminator(2 * dim, est, init_rng, 8, 0.2);
    Tensor xs = rng.normal_tensor(batch, dim);
    Tensor ys = rng.normal_tensor(batch, dim);
    Rng perm_rng(rng.uniform_int(1 << 20));
    std::vector<int> perm = derangement(batch, perm_rng);
    run_case(out, "value:mine_surrogate", disc.params(), [&](Graph& g) {
      Var x = g.constant(xs);
      Var y = g.constant(ys);
      Var tp = disc.forward(g, concat_cols(x, y));
      Var tu = disc.forward(g, concat_cols(x, permute_rows(y, perm)));
      Var denom_term = affine(mean_all(exp(tu)), 1.0 / 1.37, 0.0);
      return sub(mean_all(tp), denom_term);
    });
  }

  {
    EstimatorSpec est = estimator_from_token("smile:1");
    Rng init_rng(rng.uniform_int(1 << 20));
    Mlp disc = make_discriminator(2 * dim, est, init_rng, 8, 0.2);
    Tensor xs = rng.normal_tensor(batch, dim);
    Tensor ys = rng.normal_tensor(batch, dim);
    Rng perm_rng(rng.uniform_int(1 << 20));
    std::vector<int> perm = derangement(batch, perm_rng);
    run_case(out, "value:smile_objective", disc.params(), [&](Graph& g) {
      Var x = g.constant(xs);
      Var y = g.constant(ys);
      Var tp = disc.forward(g, concat_cols(x, y));
      Var tu = disc.forward(g, concat_cols(x, permute_rows(y, perm)));
      return build_objective(g, est, tp, tu, nullptr).objective;
    });
  }
}

}  // namespace

std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed) {
  CaseList out;
  Rng rng(seed);
  op_cases(out, rng);
  value_cases(out, rng);
  return out;
}

GradCheckCase gradcheck_fault_case(std::uint64_t seed) {
  Rng rng(seed);
  Parameter x(rng.normal_tensor(3, 3), "x");
  Tensor w = rng.normal_tensor(3, 3);
  CaseList out;
  run_case(out, "op:debug_bad_identity", {&x}, [&](Graph& g) {
    return weighted_mean(g, debug_bad_identity(g.param(x)), w);
  });
  return out.front();
}

}  // namespace dime
