#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dime/autoencoder.hpp"
#include "dime/channel.hpp"
#include "dime/estimators.hpp"

namespace dime {

struct BlerPoint {
  double ebn0_db = 0.0;
  long blocks = 0;
  long errors = 0;
  double bler = 0.0;
  std::uint64_t seed = 0;
};

struct BlerOptions {
  long min_errors = 100;
  long max_blocks = 1000000;
  int batch = 4096;
  void validate() const;
};

/// Monte-Carlo block error rate per grid point: batches run until min_errors
/// block errors or max_blocks blocks, whichever first. Point i uses its own
/// stream seeded seed + i, so grid points are order-independent.
std::vector<BlerPoint> simulate_bler(const LinkSystem& system, ChannelKind kind,
                                     std::span<const double> ebn0_grid,
                                     const BlerOptions& opt, std::uint64_t seed);

struct MiSweepPoint {
  std::string estimator;
  double ebn0_db = 0.0;
  double mi_nats = 0.0;      // per channel use
  double mi_bits = 0.0;
  double capacity_bits = 0.0;  // log2(1 + 1/sigma^2), unit signal power
  double rate_bits = 0.0;
  std::uint64_t seed = 0;
};

/// Trains a fresh discriminator per (estimator, grid point) on codewords from
/// the frozen encoder plus channel draws at that SNR, and reports the smoothed
/// estimate per channel use. Rows come out sorted by (estimator, ebn0_db);
/// the stream for row (e, i) in that canonical order is seeded
/// seed + 1000 e + i regardless of input order.
std::vector<MiSweepPoint> sweep_mi(const NeuralLink& system,
                                   std::span<const EstimatorSpec> estimators,
                                   std::span<const double> ebn0_grid,
                                   ChannelKind kind, const TrainOptions& train,
                                   std::uint64_t seed);

/// Exact mutual information of the correlated-Gaussian benchmark pair.
double gaussian_mi_oracle(double rho, int dim);

struct BenchPoint {
  std::string estimator;
  int dim = 0;
  double rho = 0.0;
  double mi_nats = 0.0;
  double oracle_nats = 0.0;
  double abs_error = 0.0;
  std::uint64_t seed = 0;
};

/// Correlated-Gaussian accuracy table. Rows sorted by (estimator, dim, rho);
/// row r in that order trains with stream seed + r.
std::vector<BenchPoint> bench_estimators(std::span<const EstimatorSpec> estimators,
                                         std::span<const int> dims,
                                         std::span<const double> rhos,
                                         const TrainOptions& train,
                                         std::uint64_t seed);

struct LandscapeCurve {
  double gamma = 0.0;
  std::vector<double> d;
  std::vector<double> value;
  double maximizer = 0.0;
};

/// j(d) = ratio log d - d^gamma / gamma sampled over the grid, one curve per
/// gamma; maximizer is the grid argmax (analytically ratio^(1/gamma)).
std::vector<LandscapeCurve> value_landscape(std::span<const double> gammas,
                                            double ratio,
                                            std::span<const double> d_grid);

/// Default sampling grid: 0.01 steps over (0, 3]. When some ratio^(1/gamma)
/// lies beyond 3 the grid switches to log spacing wide enough to bracket
/// every maximizer.
std::vector<double> landscape_grid(std::span<const double> gammas, double ratio);

/// All doubles in CSV files go through this: snprintf %.17g, which round-trips
/// exactly and never localizes the decimal separator.
std::string format_double(double x);

void export_bler_csv(std::span<const BlerPoint> rows, const std::string& path);
void export_mi_csv(std::span<const MiSweepPoint> rows, const std::string& path);
void export_landscape_csv(std::span<const LandscapeCurve> curves,
                          const std::string& path);
void export_trace_csv(std::span<const TracePoint> rows, const std::string& path);
void export_ae_trace_csv(std::span<const AeTracePoint> rows, const std::string& path);
void export_bench_csv(std::span<const BenchPoint> rows, const std::string& path);

struct GradCheckCase {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference audit of every graph op and every estimator value
/// function, deterministic in the seed. Everything here is expected to pass;
/// the planted-fault case lives in gradcheck_fault_case.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed);

/// debug_bad_identity audited the same way: its report must fail, proving the
/// checker catches a wrong gradient.
GradCheckCase gradcheck_fault_case(std::uint64_t seed);

}  // namespace dime
