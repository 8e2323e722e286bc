#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "meco/harness.hpp"
#include "meco/synth_data.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::string out;
  long seed = -1;
  long max_steps = -1;
  double budget_secs = -1.0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config JSON")->required();
  cmd->add_option("--seed", args.seed, "run a single seed, overriding the config list");
  cmd->add_option("--out", args.out, "output directory override");
  cmd->add_option("--max-steps", args.max_steps, "step budget override");
  cmd->add_option("--budget-secs", args.budget_secs, "wall-clock budget override (seconds)");
}

int run(const std::string& experiment, const CommonArgs& args) {
  auto config = meco::ExperimentConfig::from_json_file(args.config_path);
  config.experiment = experiment;
  if (args.seed >= 0) config.seeds = {static_cast<std::uint64_t>(args.seed)};
  if (!args.out.empty()) config.output_dir = args.out;
  if (args.max_steps >= 0) config.budget.max_steps = args.max_steps;
  if (args.budget_secs >= 0) config.budget.wall_secs = args.budget_secs;
  auto result = meco::run_experiment(config);
  std::size_t failed = 0;
  for (const auto& r : result.records) {
    if (r.failed) {
      ++failed;
      std::fprintf(stderr, "[failed] %s: %s\n", r.cell.c_str(), r.fail_reason.c_str());
    } else {
      std::printf("%-40s steps=%-8ld metric=%.6g\n", r.cell.c_str(), r.steps, r.final_metric);
    }
  }
  std::printf("config_hash=%s outputs in %s (%zu/%zu cells ok)\n", result.config_hash.c_str(),
              config.output_dir.c_str(), result.records.size() - failed, result.records.size());
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unnormalized-model training experiments (MECO and baselines)"};
  app.require_subcommand(1);

  CommonArgs args;
  auto* g1 = app.add_subcommand("gaussian1d", "1-D Gaussian mean estimation race");
  add_common(g1, args);
  auto* ls = app.add_subcommand("landscape", "objective landscape grid sweep");
  add_common(ls, args);
  auto* d2 = app.add_subcommand("density2d", "2-D synthetic density estimation benchmark");
  add_common(d2, args);
  auto* va = app.add_subcommand("variance", "noise-variance diagnostics sweep");
  add_common(va, args);

  auto* gen = app.add_subcommand("generate-data", "write a synthetic dataset to CSV");
  meco::DatasetSpec spec;
  std::string gen_out = "data.csv";
  gen->add_option("--name", spec.name, "dataset name")->required();
  gen->add_option("--n", spec.n, "sample count")->required();
  gen->add_option("--seed", spec.seed, "generator seed");
  gen->add_option("--scale", spec.scale, "global scale multiplier");
  gen->add_option("--noise", spec.noise, "jitter override (<0 uses the documented default)");
  gen->add_option("--theta-star", spec.theta_star, "gaussian1d mean");
  gen->add_option("--out", gen_out, "output CSV path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      meco::write_points_csv(gen_out, meco::generate(spec));
      std::printf("wrote %ld points to %s\n", spec.n, gen_out.c_str());
      return 0;
    }
    for (auto* cmd : {g1, ls, d2, va})
      if (cmd->parsed()) return run(cmd->get_name(), args);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
