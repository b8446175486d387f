#include "dime/cli.hpp"

#include <cstdio>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "dime/config.hpp"
#include "dime/evalharness.hpp"

namespace dime {

namespace {

struct SeedFlag {
  std::uint64_t value = 0;
  bool set = false;
};

RunConfig load_run_config(const std::string& path, const SeedFlag& seed) {
  RunConfig cfg = load_config(path);
  if (seed.set) cfg.seed = seed.value;
  cfg.validate();
  return cfg;
}

int cmd_train_ae(const std::string& config_path, const std::string& out_path,
                 const SeedFlag& seed) {
  RunConfig cfg = load_run_config(config_path, seed);
  Rng rng(cfg.seed);
  AeConfig ae = cfg.ae_config();
  auto [link, report] = train_autoencoder(ae, rng);

  link.save(out_path);
  std::string trace_path = out_path + ".trace.csv";
  export_ae_trace_csv(report.trace, trace_path);

  std::printf("trained M=%d n=%d channel=%s rate_bits=%.4g\n", ae.alphabet,
              ae.channel_uses, channel_kind_name(ae.channel).c_str(),
              ae.rate_bits());
  std::printf("final_loss=%.6g final_mi_nats=%.6g final_mi_bits=%.6g "
              "final_train_bler=%.6g\n",
              report.final_loss, report.final_mi_nats,
              report.final_mi_nats / std::log(2.0), report.final_train_bler);
  std::printf("saved model: %s\n", out_path.c_str());
  std::printf("saved trace: %s\n", trace_path.c_str());
  return 0;
}

int cmd_eval(const std::string& model_path, const std::string& config_path,
             const std::string& mode, const std::string& out_path,
             const SeedFlag& seed) {
  RunConfig cfg = load_run_config(config_path, seed);
  NeuralLink link = NeuralLink::load(model_path);
  if (link.alphabet_size() != cfg.alphabet ||
      link.channel_uses() != cfg.channel_uses)
    throw ShapeError("model/config mismatch: model has M=" +
                     std::to_string(link.alphabet_size()) +
                     " n=" + std::to_string(link.channel_uses()) +
                     ", config asks M=" + std::to_string(cfg.alphabet) +
                     " n=" + std::to_string(cfg.channel_uses));

  std::size_t rows = 0;
  if (mode == "bler") {
    std::vector<BlerPoint> points = simulate_bler(
        link, cfg.channel, cfg.ebn0_grid, cfg.bler_options(), cfg.seed);
    export_bler_csv(points, out_path);
    rows = points.size();
  } else {
    std::vector<EstimatorSpec> specs = cfg.sweep_estimators();
    std::vector<MiSweepPoint> points = sweep_mi(
        link, specs, cfg.ebn0_grid, cfg.channel, cfg.sweep_options(), cfg.seed);
    export_mi_csv(points, out_path);
    rows = points.size();
  }
  std::printf("wrote %s (%zu rows)\n", out_path.c_str(), rows);
  return 0;
}

std::vector<EstimatorSpec> default_bench_estimators() {
  std::vector<EstimatorSpec> specs;
  for (const char* token : {"mine", "nwj", "smile:1", "ddime:1", "fdime_kl",
                            "gdime:0.5", "gdime:1", "gdime:2"})
    specs.push_back(estimator_from_token(token));
  return specs;
}

double mean_abs_error(const std::vector<BenchPoint>& rows,
                      const std::string& label, bool& found) {
  double sum = 0.0;
  int n = 0;
  for (const BenchPoint& p : rows) {
    if (p.estimator != label || p.dim != 10 || p.rho <= 0.0) continue;
    sum += p.abs_error;
    ++n;
  }
  found = n > 0;
  return found ? sum / n : 0.0;
}

int cmd_bench(const std::string& config_path, const std::string& out_path,
              const SeedFlag& seed) {
  RunConfig cfg = load_run_config(config_path, seed);
  std::vector<EstimatorSpec> specs = cfg.eval_estimators;
  if (specs.empty()) specs = default_bench_estimators();
  const std::vector<int> dims{1, 5, 10};
  const std::vector<double> rhos{0.0, 0.5, 0.8};

  std::vector<BenchPoint> rows =
      bench_estimators(specs, dims, rhos, cfg.sweep_options(), cfg.seed);
  export_bench_csv(rows, out_path);

  bool have_g = false, have_m = false;
  double mae_g = mean_abs_error(rows, "gdime:1", have_g);
  double mae_m = mean_abs_error(rows, "mine", have_m);
  if (have_g && have_m)
    std::printf("soft check (d=10, rho>0): gdime:1 mae=%.4g vs mine mae=%.4g%s\n",
                mae_g, mae_m,
                mae_g <= mae_m ? "" : " [mine ahead on this seed]");

  std::printf("wrote %s (%zu rows)\n", out_path.c_str(), rows.size());
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  const double tol = 1e-4;
  std::vector<GradCheckCase> cases = run_gradcheck_suite(seed);
  bool ok = true;
  double suite_max = 0.0;
  for (const GradCheckCase& c : cases) {
    bool pass = c.report.max_rel_error < tol;
    ok = ok && pass;
    suite_max = std::max(suite_max, c.report.max_rel_error);
    std::printf("[%s] %-26s max_rel_error=%.3e (entries %d)\n",
                pass ? "ok " : "BAD", c.name.c_str(), c.report.max_rel_error,
                c.report.checked);
    if (!pass)
      std::printf("      worst %s: analytic=%.17g numeric=%.17g\n",
                  c.report.worst.where.c_str(), c.report.worst.analytic,
                  c.report.worst.numeric);
  }

  GradCheckCase fault = gradcheck_fault_case(seed);
  bool detected = fault.report.max_rel_error >= tol;
  ok = ok && detected;
  std::printf("[%s] %-26s max_rel_error=%.3e (planted fault %s)\n",
              detected ? "ok " : "BAD", fault.name.c_str(),
              fault.report.max_rel_error,
              detected ? "detected" : "missed");

  std::printf("suite max rel error %.3e over %zu cases, threshold %.0e\n",
              suite_max, cases.size(), tol);
  if (!ok) {
    std::printf("gradient check FAILED\n");
    return 2;
  }
  std::printf("gradient check passed\n");
  return 0;
}

int cmd_landscape(const std::vector<double>& gammas, double ratio,
                  const std::string& out_path) {
  std::vector<double> grid = landscape_grid(gammas, ratio);
  std::vector<LandscapeCurve> curves = value_landscape(gammas, ratio, grid);
  export_landscape_csv(curves, out_path);
  for (const LandscapeCurve& c : curves)
    std::printf("gamma=%s maximizer=%s\n", format_double(c.gamma).c_str(),
                format_double(c.maximizer).c_str());
  std::printf("wrote %s (%zu curves over %zu grid points)\n", out_path.c_str(),
              curves.size(), grid.size());
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Discriminative mutual-information estimators and "
               "capacity-driven autoencoder links"};
  app.require_subcommand(1);

  std::string config_path, out_path, model_path, mode;
  std::uint64_t seed_value = 0;
  std::vector<double> gammas;
  double ratio = 1.0;
  std::uint64_t gradcheck_seed = 1;

  CLI::App* train = app.add_subcommand(
      "train-ae", "Train an end-to-end link and save model plus trace");
  train->add_option("--config", config_path, "Run configuration file")
      ->required();
  train->add_option("--out", out_path, "Model output path")->required();
  train->add_option("--seed", seed_value, "Override the config seed");

  CLI::App* eval = app.add_subcommand(
      "eval", "Measure a trained link: BLER grid or MI sweep");
  eval->add_option("--model", model_path, "Trained model file")->required();
  eval->add_option("--config", config_path, "Run configuration file")
      ->required();
  eval->add_option("--mode", mode, "bler or mi")
      ->required()
      ->check(CLI::IsMember({"bler", "mi"}));
  eval->add_option("--out", out_path, "CSV output path")->required();
  eval->add_option("--seed", seed_value, "Override the config seed");

  CLI::App* bench = app.add_subcommand(
      "bench-estimators", "Correlated-Gaussian accuracy benchmark");
  bench->add_option("--config", config_path, "Run configuration file")
      ->required();
  bench->add_option("--out", out_path, "CSV output path")->required();
  bench->add_option("--seed", seed_value, "Override the config seed");

  CLI::App* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference audit of every op and value function");
  gradcheck->add_option("--seed", gradcheck_seed, "Suite seed");

  CLI::App* landscape = app.add_subcommand(
      "landscape", "Per-sample value curves over a density-ratio grid");
  landscape->add_option("--gamma", gammas, "Comma-separated gamma list")
      ->required()
      ->delimiter(',');
  landscape->add_option("--ratio", ratio, "Density ratio at the sample")
      ->required();
  landscape->add_option("--out", out_path, "CSV output path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*train)
      return cmd_train_ae(config_path, out_path,
                          {seed_value, train->count("--seed") > 0});
    if (*eval)
      return cmd_eval(model_path, config_path, mode, out_path,
                      {seed_value, eval->count("--seed") > 0});
    if (*bench)
      return cmd_bench(config_path, out_path,
                       {seed_value, bench->count("--seed") > 0});
    if (*gradcheck) return cmd_gradcheck(gradcheck_seed);
    if (*landscape) return cmd_landscape(gammas, ratio, out_path);
  } catch (const DivergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

}  // namespace dime
