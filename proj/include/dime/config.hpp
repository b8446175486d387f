#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dime/autoencoder.hpp"
#include "dime/channel.hpp"
#include "dime/estimators.hpp"
#include "dime/evalharness.hpp"

namespace dime {

/// Everything a run needs, read from a sectioned key = value file. Sections
/// and keys:
///
///   seed                      top level, before any section header
///   [system]    M, n
///   [channel]   kind, train_ebn0_db
///   [loss]      beta, epsilon
///   [estimator] kind, gamma, alpha, tau, ema_rate
///   [training]  iterations, batch, learning_rate, optimizer
///   [eval]      ebn0_grid, min_errors, max_blocks, estimators,
///               sweep_iterations
///
/// '#' and ';' start comments; keys may appear once; unknown sections and
/// keys are rejected by their dotted name.
struct RunConfig {
  int alphabet = 64;
  int channel_uses = 3;
  ChannelKind channel = ChannelKind::Awgn;
  double train_ebn0_db = 7.0;
  double beta = 0.2;
  double epsilon = 0.2;
  EstimatorSpec estimator;
  int iterations = 10000;
  int batch = 512;
  OptimizerConfig opt;
  std::vector<double> ebn0_grid;           // default -4:2:20
  long min_errors = 100;
  long max_blocks = 1000000;
  std::vector<EstimatorSpec> eval_estimators;  // empty: fall back per command
  int sweep_iterations = 0;                // 0: reuse training.iterations
  std::uint64_t seed = 1;

  RunConfig();

  AeConfig ae_config() const;
  TrainOptions train_options() const;
  /// Training options for MI sweeps and benchmarks; eval.sweep_iterations
  /// shortens runs independently of the autoencoder budget when set.
  TrainOptions sweep_options() const;
  BlerOptions bler_options() const;
  /// eval.estimators if given, else the single training estimator.
  std::vector<EstimatorSpec> sweep_estimators() const;

  void validate() const;
};

/// "a:step:b" inclusive arithmetic grid, or a comma-separated list.
std::vector<double> parse_grid(const std::string& text);

RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

}  // namespace dime
