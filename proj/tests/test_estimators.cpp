#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <string>
#include <vector>

#include "dime/estimators.hpp"
#include "dime/graph.hpp"
#include "dime/rng.hpp"
#include "dime/tensor.hpp"
#include "discrete_joint.hpp"

using namespace dime;
using dime::testing::DiscreteJoint;
using dime::testing::oracle_joints;

// Absolute-difference check that still reports both sides on failure.
#define CHECK_NEAR(a, b, tol)                 \
  do {                                        \
    const double lhs_ = (a);                  \
    const double rhs_ = (b);                  \
    CAPTURE(lhs_);                            \
    CAPTURE(rhs_);                            \
    CHECK(std::abs(lhs_ - rhs_) <= (tol));    \
  } while (0)

namespace {

const char* kAllTokens[] = {"mine",      "nwj",        "smile:1",   "smile:5",
                            "ddime:0.5", "ddime:1",    "ddime:2",   "fdime_kl",
                            "fdime_gan", "fdime_skl:2", "gdime:0.5", "gdime:1",
                            "gdime:2"};

std::vector<double> column(const Tensor& t) {
  return t.v;
}

// Numeric Fenchel conjugate sup_u (t u - f(u)) by ternary search on a wide
// positive interval; the generators must reproduce this within float noise.
double conjugate_oracle(const FGenerator& gen, double t) {
  double lo = 1e-9, hi = 1e9;
  for (int i = 0; i < 300; ++i) {
    double m1 = lo + (hi - lo) / 3.0;
    double m2 = hi - (hi - lo) / 3.0;
    double g1 = t * m1 - gen.f(m1);
    double g2 = t * m2 - gen.f(m2);
    if (g1 < g2)
      lo = m1;
    else
      hi = m2;
  }
  double u = (lo + hi) / 2.0;
  return t * u - gen.f(u);
}

}  // namespace

TEST_CASE("derangement never leaves an element in place") {
  Rng rng(1);
  std::vector<int> two = derangement(2, rng);
  CHECK(two == std::vector<int>{1, 0});

  for (std::size_t n : {3u, 4u, 7u, 64u}) {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> p = derangement(n, rng);
      REQUIRE(p.size() == n);
      std::set<int> seen(p.begin(), p.end());
      CHECK(seen.size() == n);  // a permutation
      for (std::size_t i = 0; i < n; ++i) CHECK(p[i] != int(i));
    }
  }

  // Single-cycle property: following the permutation visits every element.
  std::vector<int> p = derangement(12, rng);
  int at = 0, steps = 0;
  do {
    at = p[std::size_t(at)];
    ++steps;
  } while (at != 0 && steps <= 12);
  CHECK(steps == 12);

  CHECK_THROWS_AS(derangement(1, rng), Error);
}

TEST_CASE("unpairing keeps the rows and moves every one of them") {
  Rng rng(5);
  Tensor ys(6, 2);
  for (std::size_t i = 0; i < ys.rows; ++i) {
    ys.at(i, 0) = double(i);
    ys.at(i, 1) = 10.0 + double(i);
  }
  Tensor moved = make_unpaired(ys, rng);
  REQUIRE(moved.rows == ys.rows);
  std::multiset<double> a(ys.v.begin(), ys.v.end());
  std::multiset<double> b(moved.v.begin(), moved.v.end());
  CHECK(a == b);
  for (std::size_t i = 0; i < ys.rows; ++i) CHECK(moved.at(i, 0) != ys.at(i, 0));
}

TEST_CASE("gaussian sampler produces the advertised correlation") {
  auto sampler = gaussian_sampler(2, 0.8);
  Rng rng(11);
  SampleBatch batch = sampler(20000, rng);
  REQUIRE(batch.xs.rows == 20000);
  REQUIRE(batch.xs.cols == 2);
  REQUIRE(batch.ys.cols == 2);
  REQUIRE(batch.unpaired.size() == 20000);

  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < batch.xs.rows; ++i) {
    sxy += batch.xs.at(i, 0) * batch.ys.at(i, 0);
    sxx += batch.xs.at(i, 0) * batch.xs.at(i, 0);
    syy += batch.ys.at(i, 0) * batch.ys.at(i, 0);
  }
  CHECK(sxy / std::sqrt(sxx * syy) == doctest::Approx(0.8).epsilon(0.02));
  CHECK(sxx / double(batch.xs.rows) == doctest::Approx(1.0).epsilon(0.05));
  CHECK(syy / double(batch.xs.rows) == doctest::Approx(1.0).epsilon(0.05));

  // Deranged ys decorrelate from their xs.
  Tensor u = batch.unpaired_ys();
  double sxu = 0.0;
  for (std::size_t i = 0; i < u.rows; ++i) sxu += batch.xs.at(i, 0) * u.at(i, 0);
  CHECK(std::abs(sxu / std::sqrt(sxx * syy)) < 0.05);

  CHECK_THROWS_AS(gaussian_sampler(0, 0.5), Error);
  CHECK_THROWS_AS(gaussian_sampler(1, 1.0), Error);
}

TEST_CASE("gaussian mutual information oracle values") {
  CHECK(gaussian_mi_nats(0.0, 1) == 0.0);
  CHECK(gaussian_mi_nats(0.0, 10) == 0.0);
  CHECK(gaussian_mi_nats(0.5, 1) ==
        doctest::Approx(0.14384103622589045).epsilon(1e-14));
  CHECK(gaussian_mi_nats(0.8, 1) ==
        doctest::Approx(0.5108256237659907).epsilon(1e-14));
  CHECK(gaussian_mi_nats(0.5, 10) ==
        doctest::Approx(1.4384103622589045).epsilon(1e-14));
  CHECK(gaussian_mi_nats(-0.5, 1) == gaussian_mi_nats(0.5, 1));
  CHECK_THROWS_AS(gaussian_mi_nats(1.0, 1), Error);
  CHECK_THROWS_AS(gaussian_mi_nats(0.5, 0), Error);
}

TEST_CASE("generators satisfy their defining relations") {
  std::vector<FGenerator> gens = {kl_generator(), gan_generator(),
                                  scaled_kl_generator(0.5),
                                  scaled_kl_generator(2.0)};
  for (const FGenerator& gen : gens) {
    CAPTURE(gen.name);
    CHECK(gen.f(1.0) == doctest::Approx(0.0).epsilon(1e-15));
    for (double u : {0.1, 0.5, 1.0, 2.0, 7.5}) {
      double t = gen.deriv(u);
      CHECK(t > gen.conj_lo);
      CHECK(t < gen.conj_hi);
      CHECK(gen.inv_deriv(t) == doctest::Approx(u).epsilon(1e-10));
      // Fenchel equality at the optimum: f*(f'(u)) = u f'(u) - f(u).
      CHECK(gen.conjugate(t) == doctest::Approx(u * t - gen.f(u)).epsilon(1e-10));
      // And against a blind numeric sup over u.
      CHECK(gen.conjugate(t) ==
            doctest::Approx(conjugate_oracle(gen, t)).epsilon(1e-6));
    }

    // Graph builders mirror the scalar maps.
    Graph g;
    Tensor d(1, 3, {0.4, 1.0, 3.0});
    Tensor tv = g.value(gen.deriv_var(g.constant(d)));
    for (std::size_t k = 0; k < d.size(); ++k)
      CHECK(tv.v[k] == doctest::Approx(gen.deriv(d.v[k])).epsilon(1e-12));
    Tensor cv = g.value(gen.conjugate_var(g.constant(tv)));
    for (std::size_t k = 0; k < d.size(); ++k)
      CHECK(cv.v[k] == doctest::Approx(gen.conjugate(tv.v[k])).epsilon(1e-12));
  }

  CHECK(kl_generator().name == "kl");
  CHECK(gan_generator().name == "gan");
  CHECK(scaled_kl_generator(2.0).name == "skl:2");
  CHECK(gan_generator().conj_hi == 0.0);
  CHECK_THROWS_AS(scaled_kl_generator(0.0), Error);
}

TEST_CASE("value functions on constant discriminators") {
  std::vector<double> zeros(8, 0.0);
  std::vector<double> ones(8, 1.0);

  CHECK(value_mine(zeros, zeros) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(value_nwj(ones, ones) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(value_nwj(zeros, zeros) == doctest::Approx(-std::exp(-1.0)).epsilon(1e-15));
  CHECK(value_ddime(ones, ones, 1.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(mi_from_ddime(-1.0, 1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(value_gdime(ones, ones, 2.0) == doctest::Approx(-1.0).epsilon(1e-15));
  CHECK(mi_from_gdime(-1.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mi_gdime_direct(ones, 3.0) == doctest::Approx(0.0).epsilon(1e-15));

  // tau = 0 pins the unpaired term at log 1 = 0.
  std::vector<double> wild = {3.0, -2.0, 0.5, 1.0, 0.0, -1.0, 2.0, -0.5};
  CHECK(value_smile(ones, wild, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  // A huge clip width leaves moderate outputs untouched: smile equals mine.
  CHECK(value_smile(ones, wild, 50.0) ==
        doctest::Approx(value_mine(ones, wild)).epsilon(1e-15));
  // A spike in the unpaired outputs is capped at e^tau.
  std::vector<double> spike = {100.0, 0.0};
  std::vector<double> tp2 = {0.0, 0.0};
  double capped = value_smile(tp2, spike, 5.0);
  CHECK(std::isfinite(capped));
  CHECK(capped == doctest::Approx(-std::log((std::exp(5.0) + 1.0) / 2.0))
                      .epsilon(1e-12));

  FGenerator kl = kl_generator();
  CHECK(value_fdime(ones, ones, kl) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(mi_fdime(ones, kl) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("value functions reject bad inputs") {
  std::vector<double> ones(4, 1.0);
  std::vector<double> with_zero = {1.0, 0.0, 1.0, 1.0};

  CHECK_THROWS_AS(value_ddime(with_zero, ones, 1.0), NumericError);
  CHECK_THROWS_AS(value_gdime(ones, with_zero, 1.0), NumericError);
  CHECK_THROWS_AS(value_gdime(ones, ones, 0.0), Error);
  CHECK_THROWS_AS(value_ddime(ones, ones, -1.0), Error);
  CHECK_THROWS_AS(value_smile(ones, ones, -0.1), Error);
  CHECK_THROWS_AS(value_mine({}, {}), Error);

  // The GAN conjugate is only finite below zero.
  std::vector<double> nonneg = {0.5, -1.0, -2.0, -0.5};
  CHECK_THROWS_AS(value_fdime(ones, nonneg, gan_generator()), NumericError);
}

TEST_CASE("optimal discriminators reproduce the exact mutual information") {
  // On a finite joint realized as exact multiset batches, every family's
  // value at its analytically optimal discriminator recovers the direct-sum
  // mutual information to near machine precision.
  for (const DiscreteJoint& j : oracle_joints()) {
    const double mi = j.mi_nats();
    auto paired = j.paired_cells();
    auto product = j.product_cells();

    auto log_r = [](double r) { return std::log(r); };
    std::vector<double> tp = j.outputs(paired, log_r);
    std::vector<double> tu = j.outputs(product, log_r);
    CHECK_NEAR(value_mine(tp, tu), mi, 1e-12);
    CHECK_NEAR(value_smile(tp, tu, 1.0), value_mine(tp, tu), 1e-12);

    std::vector<double> tp1 =
        j.outputs(paired, [](double r) { return 1.0 + std::log(r); });
    std::vector<double> tu1 =
        j.outputs(product, [](double r) { return 1.0 + std::log(r); });
    CHECK_NEAR(value_nwj(tp1, tu1), mi, 1e-12);

    for (double alpha : {0.5, 1.0, 2.0}) {
      auto d_opt = [alpha](double r) { return alpha * r; };
      std::vector<double> dp = j.outputs(paired, d_opt);
      std::vector<double> du = j.outputs(product, d_opt);
      double v = value_ddime(dp, du, alpha);
      CHECK_NEAR(mi_from_ddime(v, alpha), mi, 1e-12);
    }

    for (double gamma : {0.5, 1.0, 2.0}) {
      auto d_opt = [gamma](double r) { return std::pow(r, 1.0 / gamma); };
      std::vector<double> dp = j.outputs(paired, d_opt);
      std::vector<double> du = j.outputs(product, d_opt);
      double v = value_gdime(dp, du, gamma);
      CHECK_NEAR(mi_from_gdime(v), mi, 1e-12);
      CHECK_NEAR(mi_gdime_direct(dp, gamma), mi, 1e-12);
    }

    for (const FGenerator& gen :
         {kl_generator(), gan_generator(), scaled_kl_generator(2.0)}) {
      auto t_opt = [&gen](double r) { return gen.deriv(r); };
      std::vector<double> fp = j.outputs(paired, t_opt);
      std::vector<double> fu = j.outputs(product, t_opt);
      // At the optimum the variational value equals the f-divergence itself,
      // and the direct readout equals the mutual information.
      CHECK_NEAR(value_fdime(fp, fu, gen), j.f_divergence(gen), 1e-12);
      CHECK_NEAR(mi_fdime(fp, gen), mi, 1e-12);
    }

    // KL's f-divergence between joint and marginal product is the mutual
    // information itself; the scaled variant divides by gamma.
    CHECK_NEAR(j.f_divergence(kl_generator()), mi, 1e-12);
    CHECK_NEAR(j.f_divergence(scaled_kl_generator(2.0)), mi / 2.0, 1e-12);
  }
}

TEST_CASE("algebraic relations hold for arbitrary discriminators") {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t n = 2 + std::size_t(rng.uniform_int(14));
    std::vector<double> t_p(n), t_u(n), d_p(n), d_u(n);
    for (std::size_t i = 0; i < n; ++i) {
      t_p[i] = 2.0 * rng.normal();
      t_u[i] = 2.0 * rng.normal();
      d_p[i] = std::exp(rng.normal());
      d_u[i] = std::exp(rng.normal());
    }

    // log mean(e^T) >= mean(e^(T-1)) - ... : the nwj bound never beats mine.
    CHECK(value_nwj(t_p, t_u) <= value_mine(t_p, t_u) + 1e-12);

    // gamma = 1 and alpha = 1 are the same objective.
    double vg = value_gdime(d_p, d_u, 1.0);
    double vd = value_ddime(d_p, d_u, 1.0);
    CHECK_NEAR(vg, vd, 1e-12);
    CHECK_NEAR(mi_from_gdime(vg), mi_from_ddime(vd, 1.0), 1e-12);

    // T = log D + 1 turns the KL variational value into the same objective
    // shifted by one.
    std::vector<double> kp(n), ku(n);
    for (std::size_t i = 0; i < n; ++i) {
      kp[i] = std::log(d_p[i]) + 1.0;
      ku[i] = std::log(d_u[i]) + 1.0;
    }
    CHECK_NEAR(value_fdime(kp, ku, kl_generator()), vd + 1.0, 1e-12);

    // T = log D + 1/gamma does the same for the scaled-KL generator, up to
    // the factor gamma.
    for (double gamma : {0.5, 2.0}) {
      std::vector<double> sp(n), su(n);
      for (std::size_t i = 0; i < n; ++i) {
        sp[i] = std::log(d_p[i]) + 1.0 / gamma;
        su[i] = std::log(d_u[i]) + 1.0 / gamma;
      }
      double lhs = gamma * value_fdime(sp, su, scaled_kl_generator(gamma));
      double rhs = value_gdime(d_p, d_u, gamma) + 1.0;
      CHECK_NEAR(lhs, rhs, 1e-10);
    }
  }
}

TEST_CASE("estimator tokens parse, validate, and round-trip") {
  EstimatorSpec s = estimator_from_token("gdime:0.5");
  CHECK(s.kind == EstimatorKind::Gdime);
  CHECK(s.gamma == 0.5);
  CHECK(s.label() == "gdime:0.5");
  CHECK(s.wants_positive_output());

  s = estimator_from_token("smile:5");
  CHECK(s.kind == EstimatorKind::Smile);
  CHECK(s.tau == 5.0);
  CHECK_FALSE(s.wants_positive_output());

  s = estimator_from_token("ddime:2");
  CHECK(s.alpha == 2.0);

  s = estimator_from_token("fdime_skl:2");
  CHECK(s.kind == EstimatorKind::Fdime);
  CHECK(s.fdime_gen == FdimeGen::ScaledKl);
  CHECK(s.gamma == 2.0);
  CHECK(s.wants_positive_output());

  CHECK(estimator_from_token("mine").label() == "mine");
  CHECK(estimator_from_token("fdime_gan").generator().name == "gan");
  for (const char* token : kAllTokens)
    CHECK(estimator_from_token(token).label() == token);

  CHECK_THROWS_AS(estimator_from_token("vine"), ConfigError);
  CHECK_THROWS_AS(estimator_from_token("gdime:abc"), ConfigError);
  CHECK_THROWS_AS(estimator_from_token("gdime:-1"), ConfigError);
  try {
    estimator_from_token("gdime:0");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("estimator.gamma") != std::string::npos);
  }

  EstimatorSpec bad;
  bad.kind = EstimatorKind::Smile;
  bad.tau = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("mine ema corrects its startup bias") {
  MineEma ema;
  ema.rate = 0.9;
  CHECK(ema.update(1.0) == doctest::Approx(1.0).epsilon(1e-12));
  // Second step: ((0.9)(0.1) + (0.1)(2)) / (1 - 0.81).
  CHECK(ema.update(2.0) == doctest::Approx((0.9 + 2.0) / 1.9).epsilon(1e-12));

  // Over a constant stream the corrected mean is that constant from step one.
  MineEma flat;
  for (int i = 0; i < 50; ++i)
    CHECK(flat.update(3.5) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("graph objectives agree with the plain value functions") {
  Rng rng(47);
  const int batch = 16;
  Tensor xs = rng.normal_tensor(batch, 2);
  Tensor ys = rng.normal_tensor(batch, 2);
  Rng perm(3);
  std::vector<int> unpaired = derangement(batch, perm);

  for (const char* token : kAllTokens) {
    CAPTURE(token);
    EstimatorSpec est = estimator_from_token(token);
    Rng init(7);
    Mlp disc = make_discriminator(4, est, init, 16, 0.2);

    Graph g;
    Var joint = g.constant(hcat(xs, ys));
    Var product = g.constant(hcat(xs, take_rows(ys, unpaired)));
    Var out_p = disc.forward(g, joint);
    Var out_u = disc.forward(g, product);
    ObjectiveParts parts = build_objective(g, est, out_p, out_u, nullptr);

    std::vector<double> dp = column(g.value(out_p));
    std::vector<double> du = column(g.value(out_u));
    double expect_value = 0.0, expect_mi = 0.0;
    bool objective_is_value = est.kind != EstimatorKind::Smile;
    switch (est.kind) {
      case EstimatorKind::Mine:
        expect_value = value_mine(dp, du);
        expect_mi = expect_value;
        break;
      case EstimatorKind::Nwj:
        expect_value = value_nwj(dp, du);
        expect_mi = expect_value;
        break;
      case EstimatorKind::Smile:
        expect_value = value_smile(dp, du, est.tau);
        expect_mi = expect_value;
        break;
      case EstimatorKind::Ddime:
        expect_value = value_ddime(dp, du, est.alpha);
        expect_mi = mi_from_ddime(expect_value, est.alpha);
        break;
      case EstimatorKind::Fdime: {
        FGenerator gen = est.generator();
        std::vector<double> tp(dp.size()), tu(du.size());
        std::transform(dp.begin(), dp.end(), tp.begin(), gen.deriv);
        std::transform(du.begin(), du.end(), tu.begin(), gen.deriv);
        expect_value = value_fdime(tp, tu, gen);
        expect_mi = mi_fdime(tp, gen);
        break;
      }
      case EstimatorKind::Gdime:
        expect_value = value_gdime(dp, du, est.gamma);
        expect_mi = mi_from_gdime(expect_value);
        break;
    }
    CHECK_NEAR(parts.value, expect_value, 1e-12);
    CHECK_NEAR(parts.mi_nats, expect_mi, 1e-12);
    CHECK_NEAR(g.scalar(parts.value_node), parts.value, 1e-12);
    if (objective_is_value) {
      CHECK_NEAR(g.scalar(parts.objective), parts.value, 1e-12);
    } else {
      auto softplus_stable = [](double t) {
        return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
      };
      double logistic = 0.0;
      for (double d : dp) logistic -= softplus_stable(-d);
      for (double d : du) logistic -= softplus_stable(d);
      logistic /= static_cast<double>(batch);
      CHECK_NEAR(g.scalar(parts.objective), logistic, 1e-12);
    }

    // Positive-output families must actually get positive outputs from the
    // softplus head.
    if (est.wants_positive_output())
      for (double d : dp) CHECK(d > 0.0);
  }
}

TEST_CASE("mine surrogate objective uses the smoothed denominator") {
  Rng rng(13);
  Tensor tp = rng.normal_tensor(8, 1);
  Tensor tu = rng.normal_tensor(8, 1);
  EstimatorSpec est = estimator_from_token("mine");
  MineEma ema;
  ema.rate = 0.9;

  Graph g;
  ObjectiveParts parts =
      build_objective(g, est, g.constant(tp), g.constant(tu), &ema);

  double m_tp = 0.0, m_eu = 0.0;
  for (double x : tp.v) m_tp += x;
  for (double x : tu.v) m_eu += std::exp(x);
  m_tp /= 8.0;
  m_eu /= 8.0;

  // First step: the corrected ema equals the batch mean, so the surrogate
  // objective evaluates to mean(tp) - 1 while the reported value is the
  // true mine bound.
  CHECK(parts.value == doctest::Approx(m_tp - std::log(m_eu)).epsilon(1e-12));
  CHECK(g.scalar(parts.objective) == doctest::Approx(m_tp - 1.0).epsilon(1e-12));
  CHECK(ema.steps == 1);
}

TEST_CASE("smile holds its ground on independent data") {
  // Regression guard for the runaway mode of ascending the clipped bound:
  // with tau = 1 every unpaired ratio saturates within a few hundred
  // iterations and the reported value then climbs past 1e6.
  TrainOptions opt;
  opt.iterations = 400;
  opt.batch = 256;
  opt.hidden = 64;
  opt.smooth_window = 200;
  Rng rng(62);
  TrainResult r =
      train_estimator(estimator_from_token("smile:1"), opt, gaussian_sampler(1, 0.0), rng);
  CHECK(std::abs(r.final_mi_nats) < 0.05);
}

TEST_CASE("a short training run tracks a known gaussian") {
  EstimatorSpec est = estimator_from_token("gdime:1");
  TrainOptions opt;
  opt.iterations = 1500;
  opt.batch = 256;
  opt.hidden = 64;
  opt.smooth_window = 300;
  Rng rng(2024);
  TrainResult result = train_estimator(est, opt, gaussian_sampler(1, 0.8), rng);

  double truth = gaussian_mi_nats(0.8, 1);
  CHECK_NEAR(result.final_mi_nats, truth, 0.1);
  CHECK_FALSE(result.trace.empty());
  CHECK(result.trace.back().iter == opt.iterations);
  CHECK(result.trace.back().mi_bits ==
        doctest::Approx(result.trace.back().mi_nats / std::log(2.0))
            .epsilon(1e-12));
}

TEST_CASE("training with the same seed is fully reproducible") {
  EstimatorSpec est = estimator_from_token("nwj");
  TrainOptions opt;
  opt.iterations = 60;
  opt.batch = 32;
  opt.hidden = 16;
  opt.smooth_window = 20;

  Rng r1(99), r2(99);
  TrainResult a = train_estimator(est, opt, gaussian_sampler(1, 0.5), r1);
  TrainResult b = train_estimator(est, opt, gaussian_sampler(1, 0.5), r2);
  REQUIRE(a.trace.size() == b.trace.size());
  for (std::size_t i = 0; i < a.trace.size(); ++i) {
    CHECK(a.trace[i].value == b.trace[i].value);
    CHECK(a.trace[i].mi_nats == b.trace[i].mi_nats);
  }
  CHECK(a.final_value == b.final_value);

  Rng r3(100);
  TrainResult c = train_estimator(est, opt, gaussian_sampler(1, 0.5), r3);
  CHECK(c.final_value != a.final_value);
}

TEST_CASE("a sampler that emits non-finite data raises divergence") {
  EstimatorSpec est = estimator_from_token("gdime:1");
  TrainOptions opt;
  opt.iterations = 10;
  opt.batch = 8;
  opt.hidden = 8;
  opt.smooth_window = 5;
  BatchSampler poisoned = [](int batch, Rng& rng) {
    SampleBatch s;
    s.xs = Tensor(std::size_t(batch), 1);
    s.ys = Tensor(std::size_t(batch), 1);
    for (std::size_t i = 0; i < s.xs.rows; ++i) {
      s.xs.at(i, 0) = rng.normal();
      s.ys.at(i, 0) = HUGE_VAL;
    }
    s.unpaired = derangement(std::size_t(batch), rng);
    return s;
  };
  Rng rng(4);
  CHECK_THROWS_AS(train_estimator(est, opt, poisoned, rng), DivergenceError);
}

TEST_CASE("trailing mean averages the requested window") {
  std::vector<TracePoint> trace;
  for (long i = 1; i <= 10; ++i) {
    TracePoint p;
    p.iter = i * 10;
    p.mi_nats = double(i);
    trace.push_back(p);
  }
  // Window of 30 iterations past the last entry (iter 100) covers 80, 90, 100.
  CHECK(trailing_mean(trace, 30, &TracePoint::mi_nats) ==
        doctest::Approx(9.0).epsilon(1e-12));
  // A window wider than the trace averages everything.
  CHECK(trailing_mean(trace, 100000, &TracePoint::mi_nats) ==
        doctest::Approx(5.5).epsilon(1e-12));
  CHECK_THROWS_AS(trailing_mean({}, 10, &TracePoint::mi_nats), Error);
}
