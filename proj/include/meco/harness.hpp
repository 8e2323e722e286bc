#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/objectives.hpp"
#include "meco/optim.hpp"
#include "meco/synth_data.hpp"

namespace meco {

// Noise construction spec (config key "noise"). Kinds:
//   fitted_gaussian  - mean/cov fitted on the training set (+ jitter)
//   empirical_conv   - training points + isotropic Gaussian kernel
//   mixture          - 50/50 mixture of the two above
//   gaussian         - explicit mean/cov (the theta_q baseline noise)
struct NoiseSpec {
  std::string kind = "fitted_gaussian";
  double jitter = 1e-6;
  double kernel_std = 0.05;
  std::size_t batch_size = 64;
  bool minibatch_density = false;
  std::vector<double> mean;               // kind == gaussian
  std::vector<std::vector<double>> cov;   // kind == gaussian
};

struct OptimizerSpec {
  std::string kind = "sgd";  // sgd | ngd | adam
  StepSchedule eta = StepSchedule::constant(0.01);
  double norm_floor = 1e-12;  // ngd
  AdamConfig adam;
};

struct MethodSpec {
  std::string method = "meco";
  // meco
  double gamma = 0.1;
  double beta = 0.9;
  double u_min = 1e-8;
  bool gb_from_eta = false;
  double gb_const = 1.0;
  // batching and sampler settings shared with the baselines
  BaselineConfig baseline;
  bool persistent = true;
  double init_sigma = 3.0;
  // per-method overrides of the experiment-wide specs
  std::optional<OptimizerSpec> optimizer;
  std::optional<NoiseSpec> noise;
};

struct BudgetSpec {
  long max_steps = 2000;
  double wall_secs = 0.0;  // 0 = step budget only (deterministic traces)
};

struct EvalSpec {
  std::size_t n_points = 10000;    // generated-vs-held-out sample count
  std::size_t grid = 200;          // density grid resolution per axis
  long langevin_steps = 100;
  double langevin_eps = 0.02;
  double init_sigma = 3.0;
};

struct GridSpec {
  double lo = -4.0, hi = 36.0;
  std::size_t points = 400;
  std::size_t n_mc = 100000;
  double theta_q = 0.0;
};

struct VarianceSpec {
  double theta_ref = 1.0;
  std::size_t n_mc = 100000;
  std::vector<double> deltas = {0.0, 1.0, 2.0, 5.0};
  double target_mse = 0.01;
};

struct ExperimentConfig {
  std::string experiment;  // gaussian1d | landscape | variance | density2d
  std::vector<MethodSpec> methods;
  DatasetSpec dataset;
  NoiseSpec noise;
  OptimizerSpec optimizer;
  BudgetSpec budget;
  EvalSpec eval;
  GridSpec grid;
  VarianceSpec variance;
  std::vector<std::uint64_t> seeds = {0};
  std::string output_dir = "out";
  long trace_every = 1;
  int workers = 0;  // 0 = hardware concurrency

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string canonical_json() const;
  // FNV-1a over the canonical JSON; recorded in every output file.
  std::string config_hash() const;
};

struct TraceRow {
  long step = 0;
  double wall_ms = 0.0;
  double metric = 0.0;     // mse (gaussian1d) or loss proxy (density2d)
  double grad_norm = 0.0;
  double log_u = 0.0;      // nan for non-meco methods
  long clip_events = 0;
};

// Per-cell training trace plus final metrics. Rows are monotone in step and
// the summary mirrors the last row.
struct RunRecord {
  std::string cell;  // "<label>_<dataset>_s<seed>"
  std::size_t method_index = 0;  // position in ExperimentConfig::methods
  std::string method;
  std::string dataset;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string fail_reason;
  long steps = 0;
  double final_metric = 0.0;
  double final_mmd = 0.0;      // density2d
  double final_frechet = 0.0;  // density2d
  std::vector<TraceRow> rows;
};

struct ExperimentResult {
  std::string config_hash;
  std::vector<RunRecord> records;
};

// The four experiments. Each writes trace_<cell>.csv files plus summary.json
// into output_dir (created if needed) and returns the records.
ExperimentResult run_gaussian1d(const ExperimentConfig& config);
ExperimentResult run_landscape(const ExperimentConfig& config);  // also grid_landscape.csv
ExperimentResult run_density2d(const ExperimentConfig& config);  // + grid/sample CSVs, checkpoints
ExperimentResult run_variance(const ExperimentConfig& config);   // + variance_report.json

ExperimentResult run_experiment(const ExperimentConfig& config);

// Landscape rows (exposed for tests): theta, closed-form MLE objective, and
// Monte-Carlo NCE / eNCE objectives at tau(theta) = (theta, theta^2/2 + log sqrt(2pi)).
struct LandscapeRow {
  double theta;
  double l_mle;
  double j_nce;
  double j_ence;
};
std::vector<LandscapeRow> landscape_rows(const GridSpec& grid, double theta_star,
                                         std::uint64_t seed);

// Variance sweep entry (exposed for tests).
struct VarianceSweepEntry {
  double delta;
  double sigma_g_sq;
  double zeta_g_sq;
  double zeta_h_sq;
  double minibatch_logq_gap;  // NaN unless the configured noise is empirical_conv
  std::vector<long> steps_to_target;  // per seed; -1 when not reached in budget
};
std::vector<VarianceSweepEntry> variance_sweep(const ExperimentConfig& config);

std::uint64_t fnv1a64(std::string_view text);

}  // namespace meco
