#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <string>

#include "dime/config.hpp"
#include "dime/tensor.hpp"
#include "run_command.hpp"

using namespace dime;
using dime::testing::CommandResult;
using dime::testing::read_file;
using dime::testing::run_command;
using dime::testing::scratch_dir;
using dime::testing::write_file;

namespace {

const std::string kBin = DIME_BIN;
const std::filesystem::path kConfigs = DIME_CONFIG_DIR;

std::string q(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("config files parse with defaults and validation") {
  RunConfig cfg = load_config((kConfigs / "smoke.cfg").string());
  CHECK(cfg.alphabet == 4);
  CHECK(cfg.channel_uses == 1);
  CHECK(cfg.seed == 7);
  CHECK(cfg.beta == 0.2);
  CHECK(cfg.iterations == 80);
  CHECK(cfg.ebn0_grid == std::vector<double>{0.0, 4.0, 8.0});
  CHECK(cfg.eval_estimators.size() == 2);
  CHECK(cfg.eval_estimators[0].label() == "gdime:1");
  CHECK(cfg.sweep_options().iterations == 60);
  CHECK(cfg.bler_options().min_errors == 20);
  CHECK_NOTHROW(cfg.validate());

  RunConfig fresh;
  CHECK(fresh.alphabet == 64);
  CHECK(fresh.channel_uses == 3);
  CHECK(fresh.ebn0_grid.front() == -4.0);
  CHECK(fresh.ebn0_grid.back() == 20.0);
  CHECK(fresh.ebn0_grid.size() == 13);
  CHECK_NOTHROW(fresh.validate());
}

TEST_CASE("config errors name the exact dotted key") {
  auto dir = scratch_dir("dime_cfg_errors");

  write_file(dir / "unknown.cfg", "[training]\nmomentum = 0.9\n");
  try {
    load_config((dir / "unknown.cfg").string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("unknown key: training.momentum") !=
          std::string::npos);
  }

  write_file(dir / "dup.cfg", "[training]\niterations = 5\niterations = 6\n");
  try {
    load_config((dir / "dup.cfg").string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("duplicate key: training.iterations") !=
          std::string::npos);
  }

  write_file(dir / "badsec.cfg", "[tuning]\nx = 1\n");
  CHECK_THROWS_AS(load_config((dir / "badsec.cfg").string()), ConfigError);

  write_file(dir / "neg.cfg",
             "[estimator]\nkind = gdime\ngamma = -1\n");
  try {
    load_config((dir / "neg.cfg").string());
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("estimator.gamma") != std::string::npos);
  }

  write_file(dir / "badnum.cfg", "[system]\nM = sixty\n");
  CHECK_THROWS_AS(load_config((dir / "badnum.cfg").string()), ConfigError);
  write_file(dir / "frac.cfg", "[system]\nM = 4.5\n");
  CHECK_THROWS_AS(load_config((dir / "frac.cfg").string()), ConfigError);
  write_file(dir / "badgrid.cfg", "[eval]\nebn0_grid = 0:0:8\n");
  CHECK_THROWS_AS(load_config((dir / "badgrid.cfg").string()), ConfigError);
  write_file(dir / "revgrid.cfg", "[eval]\nebn0_grid = 8:2:0\n");
  CHECK_THROWS_AS(load_config((dir / "revgrid.cfg").string()), ConfigError);
  write_file(dir / "negseed.cfg", "seed = -3\n");
  CHECK_THROWS_AS(load_config((dir / "negseed.cfg").string()), ConfigError);

  CHECK_THROWS_AS(load_config((dir / "missing.cfg").string()), Error);
}

TEST_CASE("grid strings expand inclusively and as lists") {
  CHECK(parse_grid("0:4:8") == std::vector<double>{0.0, 4.0, 8.0});
  CHECK(parse_grid("-4:2:0") == std::vector<double>{-4.0, -2.0, 0.0});
  CHECK(parse_grid("1,2.5,7") == std::vector<double>{1.0, 2.5, 7.0});
  CHECK(parse_grid("5") == std::vector<double>{5.0});
  // The endpoint lands on the grid even with a non-representable step.
  std::vector<double> g = parse_grid("0:0.1:0.3");
  REQUIRE(g.size() == 4);
  CHECK(g.back() == doctest::Approx(0.3).epsilon(1e-12));
  CHECK_THROWS_AS(parse_grid(""), ConfigError);
  CHECK_THROWS_AS(parse_grid("0:1:x"), ConfigError);
}

TEST_CASE("help and bad invocations use the right exit codes") {
  auto dir = scratch_dir("dime_cli_basic");
  CommandResult help = run_command(kBin + " --help", dir);
  CHECK(help.exit_code == 0);
  CHECK(help.output.find("train-ae") != std::string::npos);
  CHECK(help.output.find("gradcheck") != std::string::npos);

  CHECK(run_command(kBin, dir).exit_code == 1);
  CHECK(run_command(kBin + " frobnicate", dir).exit_code == 1);
  CHECK(run_command(kBin + " eval --model x --config y --mode nonsense --out z",
                    dir)
            .exit_code == 1);
  CHECK(run_command(kBin + " train-ae --config " + q(dir / "absent.cfg") +
                        " --out " + q(dir / "m"),
                    dir)
            .exit_code == 1);
}

TEST_CASE("gradcheck command passes and repeats identically") {
  auto dir = scratch_dir("dime_cli_gradcheck");
  CommandResult a = run_command(kBin + " gradcheck --seed 11", dir);
  CHECK(a.exit_code == 0);
  CHECK(a.output.find("gradient check passed") != std::string::npos);
  CHECK(a.output.find("planted fault detected") != std::string::npos);
  CHECK(a.output.find("BAD") == std::string::npos);

  CommandResult b = run_command(kBin + " gradcheck --seed 11", dir);
  CHECK(b.output == a.output);
}

TEST_CASE("landscape command writes curves and prints maximizers") {
  auto dir = scratch_dir("dime_cli_landscape");
  auto out = dir / "landscape.csv";
  CommandResult r = run_command(
      kBin + " landscape --gamma 0.5,1,2 --ratio 4 --out " + q(out), dir);
  CHECK(r.exit_code == 0);
  CHECK(r.output.find("gamma=1 maximizer=") != std::string::npos);
  CHECK(std::filesystem::exists(out));
  std::string csv = read_file(out);
  CHECK(csv.rfind("gamma,d,value\n", 0) == 0);

  // Same invocation, byte-identical csv.
  auto out2 = dir / "landscape2.csv";
  run_command(kBin + " landscape --gamma 0.5,1,2 --ratio 4 --out " + q(out2), dir);
  CHECK(read_file(out2) == csv);

  CHECK(run_command(kBin + " landscape --gamma \"\" --ratio 1 --out " +
                        q(dir / "x.csv"),
                    dir)
            .exit_code == 1);
  CHECK(run_command(kBin + " landscape --gamma -1 --ratio 1 --out " +
                        q(dir / "x.csv"),
                    dir)
            .exit_code == 1);
}

TEST_CASE("train eval and bench round-trip through the file system") {
  auto dir = scratch_dir("dime_cli_roundtrip");
  auto cfg = kConfigs / "smoke.cfg";
  auto model = dir / "smoke.model";

  CommandResult train =
      run_command(kBin + " train-ae --config " + q(cfg) + " --out " + q(model), dir);
  CHECK(train.exit_code == 0);
  CHECK(train.output.find("trained M=4 n=1 channel=awgn rate_bits=2") !=
        std::string::npos);
  CHECK(train.output.find("final_train_bler=") != std::string::npos);
  REQUIRE(std::filesystem::exists(model));
  REQUIRE(std::filesystem::exists(dir / "smoke.model.trace.csv"));
  std::string trace = read_file(dir / "smoke.model.trace.csv");
  CHECK(trace.rfind("iter,value,mi_nats,mi_bits,clip_events\n", 0) == 0);

  // Retraining with the same seed reproduces the model byte for byte.
  auto model2 = dir / "smoke2.model";
  run_command(kBin + " train-ae --config " + q(cfg) + " --out " + q(model2), dir);
  CHECK(read_file(model2) == read_file(model));

  // A different seed gives a different model.
  auto model3 = dir / "smoke3.model";
  run_command(kBin + " train-ae --config " + q(cfg) + " --seed 8 --out " +
                  q(model3),
              dir);
  CHECK(read_file(model3) != read_file(model));

  // BLER evaluation.
  auto bler_csv = dir / "bler.csv";
  CommandResult ev = run_command(kBin + " eval --model " + q(model) +
                                     " --config " + q(cfg) + " --mode bler --out " +
                                     q(bler_csv),
                                 dir);
  CHECK(ev.exit_code == 0);
  CHECK(ev.output.find("wrote") != std::string::npos);
  std::string bler = read_file(bler_csv);
  CHECK(bler.rfind("ebn0_db,blocks,errors,bler,seed\n", 0) == 0);
  CHECK(std::count(bler.begin(), bler.end(), '\n') == 4);  // header + 3 points

  // MI sweep with the estimators listed in the config.
  auto mi_csv = dir / "mi.csv";
  CommandResult mi = run_command(kBin + " eval --model " + q(model) +
                                     " --config " + q(cfg) + " --mode mi --out " +
                                     q(mi_csv),
                                 dir);
  CHECK(mi.exit_code == 0);
  std::string mi_text = read_file(mi_csv);
  CHECK(mi_text.rfind("estimator,ebn0_db,mi_nats,mi_bits,capacity_bits,rate_bits,seed\n",
                      0) == 0);
  CHECK(std::count(mi_text.begin(), mi_text.end(), '\n') == 7);  // 2 est x 3 + header
  CHECK(mi_text.find("gdime:1,") != std::string::npos);
  CHECK(mi_text.find("mine,") != std::string::npos);

  // Repeat runs are byte-identical.
  auto bler2 = dir / "bler2.csv";
  run_command(kBin + " eval --model " + q(model) + " --config " + q(cfg) +
                  " --mode bler --out " + q(bler2),
              dir);
  CHECK(read_file(bler2) == bler);
  auto mi2 = dir / "mi2.csv";
  run_command(kBin + " eval --model " + q(model) + " --config " + q(cfg) +
                  " --mode mi --out " + q(mi2),
              dir);
  CHECK(read_file(mi2) == mi_text);

  // Model/config shape mismatch is a validation failure.
  std::string mismatched = read_file(cfg);
  auto pos = mismatched.find("M = 4");
  REQUIRE(pos != std::string::npos);
  mismatched.replace(pos, 5, "M = 8");
  write_file(dir / "mismatch.cfg", mismatched);
  CommandResult bad = run_command(kBin + " eval --model " + q(model) +
                                      " --config " + q(dir / "mismatch.cfg") +
                                      " --mode bler --out " + q(dir / "x.csv"),
                                  dir);
  CHECK(bad.exit_code == 1);
  CHECK(bad.output.find("model/config mismatch") != std::string::npos);

  // Gaussian benchmark over the config's estimator list.
  auto bench_csv = dir / "bench.csv";
  CommandResult bench = run_command(
      kBin + " bench-estimators --config " + q(cfg) + " --out " + q(bench_csv), dir);
  CHECK(bench.exit_code == 0);
  std::string bench_text = read_file(bench_csv);
  CHECK(bench_text.rfind("estimator,dim,rho,mi_nats,oracle_nats,abs_error,seed\n",
                         0) == 0);
  // 2 estimators x 3 dims x 3 rhos.
  CHECK(std::count(bench_text.begin(), bench_text.end(), '\n') == 19);
}

TEST_CASE("divergent training reports exit code 2") {
  auto dir = scratch_dir("dime_cli_diverge");
  CommandResult r = run_command(kBin + " train-ae --config " +
                                    q(kConfigs / "diverge.cfg") + " --out " +
                                    q(dir / "m"),
                                dir);
  CHECK(r.exit_code == 2);
  CHECK(r.output.find("diverged") != std::string::npos);
  CHECK_FALSE(std::filesystem::exists(dir / "m"));
}
