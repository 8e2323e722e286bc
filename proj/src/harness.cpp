#include "meco/harness.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <memory>
#include <thread>

#include <json.hpp>

#include "meco/errors.hpp"
#include "meco/metrics.hpp"
#include "meco/models.hpp"
#include "meco/noise.hpp"
#include "meco/numerics.hpp"
#include "meco/objectives.hpp"
#include "meco/sampling.hpp"

namespace meco {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

namespace {

StepSchedule schedule_from_json(const json& j, double default_eta) {
  if (j.is_number()) return StepSchedule::constant(j.get<double>());
  if (j.is_null()) return StepSchedule::constant(default_eta);
  std::string kind = j.value("kind", "constant");
  if (kind == "constant") return StepSchedule::constant(j.value("eta0", default_eta));
  if (kind == "pl") return StepSchedule::pl(j.value("mu", 1.0), j.value("eta0", 0.5));
  throw config_error("unknown schedule kind: " + kind);
}

json schedule_to_json(const StepSchedule& s) {
  if (s.kind == StepSchedule::Kind::Constant) return {{"kind", "constant"}, {"eta0", s.eta0}};
  return {{"kind", "pl"}, {"eta0", s.eta0}, {"mu", s.mu}};
}

OptimizerSpec optimizer_from_json(const json& j) {
  OptimizerSpec o;
  if (j.is_null()) return o;
  o.kind = j.value("kind", o.kind);
  if (j.contains("schedule"))
    o.eta = schedule_from_json(j.at("schedule"), 0.01);
  else if (j.contains("eta"))
    o.eta = StepSchedule::constant(j.at("eta").get<double>());
  o.norm_floor = j.value("norm_floor", o.norm_floor);
  o.adam.beta1 = j.value("beta1", o.adam.beta1);
  o.adam.beta2 = j.value("beta2", o.adam.beta2);
  o.adam.eps = j.value("eps", o.adam.eps);
  if (o.kind != "sgd" && o.kind != "ngd" && o.kind != "adam")
    throw config_error("unknown optimizer kind: " + o.kind);
  return o;
}

json optimizer_to_json(const OptimizerSpec& o) {
  return {{"kind", o.kind},       {"schedule", schedule_to_json(o.eta)},
          {"norm_floor", o.norm_floor}, {"beta1", o.adam.beta1},
          {"beta2", o.adam.beta2},      {"eps", o.adam.eps}};
}

NoiseSpec noise_from_json(const json& j) {
  NoiseSpec n;
  if (j.is_null()) return n;
  n.kind = j.value("kind", n.kind);
  n.jitter = j.value("jitter", n.jitter);
  n.kernel_std = j.value("kernel_std", n.kernel_std);
  n.batch_size = j.value("batch_size", n.batch_size);
  n.minibatch_density = j.value("minibatch_density", n.minibatch_density);
  if (j.contains("mean")) n.mean = j.at("mean").get<std::vector<double>>();
  if (j.contains("cov")) n.cov = j.at("cov").get<std::vector<std::vector<double>>>();
  return n;
}

json noise_to_json(const NoiseSpec& n) {
  json j = {{"kind", n.kind},
            {"jitter", n.jitter},
            {"kernel_std", n.kernel_std},
            {"batch_size", n.batch_size},
            {"minibatch_density", n.minibatch_density}};
  if (!n.mean.empty()) j["mean"] = n.mean;
  if (!n.cov.empty()) j["cov"] = n.cov;
  return j;
}

MethodSpec method_from_json(const json& j) {
  MethodSpec m;
  if (j.is_string()) {
    m.method = j.get<std::string>();
    return m;
  }
  m.method = j.value("method", m.method);
  m.gamma = j.value("gamma", m.gamma);
  m.beta = j.value("beta", m.beta);
  m.u_min = j.value("u_min", m.u_min);
  m.gb_from_eta = j.value("gb_from_eta", m.gb_from_eta);
  m.gb_const = j.value("gb_const", m.gb_const);
  m.baseline.batch_size = j.value("batch_data", m.baseline.batch_size);
  m.baseline.noise_ratio = j.value("noise_ratio", m.baseline.noise_ratio);
  m.baseline.langevin_steps = j.value("langevin_steps", m.baseline.langevin_steps);
  m.baseline.langevin_step_size = j.value("langevin_step_size", m.baseline.langevin_step_size);
  m.persistent = j.value("persistent", m.persistent);
  m.init_sigma = j.value("init_sigma", m.init_sigma);
  if (j.contains("optimizer")) m.optimizer = optimizer_from_json(j.at("optimizer"));
  if (j.contains("noise")) m.noise = noise_from_json(j.at("noise"));
  return m;
}

json method_to_json(const MethodSpec& m) {
  json j = {{"method", m.method},
            {"gamma", m.gamma},
            {"beta", m.beta},
            {"u_min", m.u_min},
            {"gb_from_eta", m.gb_from_eta},
            {"gb_const", m.gb_const},
            {"batch_data", m.baseline.batch_size},
            {"noise_ratio", m.baseline.noise_ratio},
            {"langevin_steps", m.baseline.langevin_steps},
            {"langevin_step_size", m.baseline.langevin_step_size},
            {"persistent", m.persistent},
            {"init_sigma", m.init_sigma}};
  if (m.optimizer) j["optimizer"] = optimizer_to_json(*m.optimizer);
  if (m.noise) j["noise"] = noise_to_json(*m.noise);
  return j;
}

DatasetSpec dataset_from_json(const json& j) {
  DatasetSpec d;
  if (j.is_null()) return d;
  d.name = j.value("name", d.name);
  d.n = j.value("n", d.n);
  d.seed = j.value("seed", d.seed);
  d.scale = j.value("scale", d.scale);
  d.noise = j.value("noise", d.noise);
  d.theta_star = j.value("theta_star", d.theta_star);
  return d;
}

json dataset_to_json(const DatasetSpec& d) {
  return {{"name", d.name},   {"n", d.n},         {"seed", d.seed},
          {"scale", d.scale}, {"noise", d.noise}, {"theta_star", d.theta_star}};
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j = json::parse(text);
  ExperimentConfig c;
  c.experiment = j.value("experiment", "");
  if (j.contains("methods"))
    for (const auto& mj : j.at("methods")) c.methods.push_back(method_from_json(mj));
  else if (j.contains("method"))
    c.methods.push_back(method_from_json(j.at("method")));
  c.dataset = dataset_from_json(j.value("dataset", json()));
  c.noise = noise_from_json(j.value("noise", json()));
  c.optimizer = optimizer_from_json(j.value("optimizer", json()));
  if (j.contains("budget")) {
    c.budget.max_steps = j.at("budget").value("max_steps", c.budget.max_steps);
    c.budget.wall_secs = j.at("budget").value("wall_secs", c.budget.wall_secs);
  }
  if (j.contains("eval")) {
    const auto& e = j.at("eval");
    c.eval.n_points = e.value("n_points", c.eval.n_points);
    c.eval.grid = e.value("grid", c.eval.grid);
    c.eval.langevin_steps = e.value("langevin_steps", c.eval.langevin_steps);
    c.eval.langevin_eps = e.value("langevin_eps", c.eval.langevin_eps);
    c.eval.init_sigma = e.value("init_sigma", c.eval.init_sigma);
  }
  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    c.grid.lo = g.value("lo", c.grid.lo);
    c.grid.hi = g.value("hi", c.grid.hi);
    c.grid.points = g.value("points", c.grid.points);
    c.grid.n_mc = g.value("n_mc", c.grid.n_mc);
    c.grid.theta_q = g.value("theta_q", c.grid.theta_q);
  }
  if (j.contains("variance")) {
    const auto& v = j.at("variance");
    c.variance.theta_ref = v.value("theta_ref", c.variance.theta_ref);
    c.variance.n_mc = v.value("n_mc", c.variance.n_mc);
    if (v.contains("deltas")) c.variance.deltas = v.at("deltas").get<std::vector<double>>();
    c.variance.target_mse = v.value("target_mse", c.variance.target_mse);
  }
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  c.output_dir = j.value("output_dir", c.output_dir);
  c.trace_every = j.value("trace_every", c.trace_every);
  c.workers = j.value("workers", c.workers);
  if (c.experiment.empty()) throw config_error("config: missing experiment");
  if (c.methods.empty() && c.experiment != "landscape" && c.experiment != "variance")
    throw config_error("config: missing method");
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string ExperimentConfig::canonical_json() const {
  json j;
  j["experiment"] = experiment;
  auto& ms = j["methods"] = json::array();
  for (const auto& m : methods) ms.push_back(method_to_json(m));
  j["dataset"] = dataset_to_json(dataset);
  j["noise"] = noise_to_json(noise);
  j["optimizer"] = optimizer_to_json(optimizer);
  j["budget"] = {{"max_steps", budget.max_steps}, {"wall_secs", budget.wall_secs}};
  j["eval"] = {{"n_points", eval.n_points},
               {"grid", eval.grid},
               {"langevin_steps", eval.langevin_steps},
               {"langevin_eps", eval.langevin_eps},
               {"init_sigma", eval.init_sigma}};
  j["grid"] = {{"lo", grid.lo},
               {"hi", grid.hi},
               {"points", grid.points},
               {"n_mc", grid.n_mc},
               {"theta_q", grid.theta_q}};
  j["variance"] = {{"theta_ref", variance.theta_ref},
                   {"n_mc", variance.n_mc},
                   {"deltas", variance.deltas},
                   {"target_mse", variance.target_mse}};
  j["seeds"] = seeds;
  j["trace_every"] = trace_every;
  return j.dump();
}

std::string ExperimentConfig::config_hash() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(canonical_json())));
  return buf;
}

// ---------------------------------------------------------------------------
// shared cell machinery
// ---------------------------------------------------------------------------

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

std::string format_g(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_trace_csv(const fs::path& dir, const RunRecord& rec, const std::string& hash) {
  std::ofstream f(dir / ("trace_" + rec.cell + ".csv"));
  f << "# config_hash=" << hash << " cell=" << rec.cell << "\n";
  f << "step,wall_ms,metric,grad_norm,log_u,clip_events\n";
  for (const auto& r : rec.rows)
    f << r.step << ',' << format_g(r.wall_ms) << ',' << format_g(r.metric) << ','
      << format_g(r.grad_norm) << ',' << format_g(r.log_u) << ',' << r.clip_events << "\n";
}

void write_summary(const ExperimentConfig& config, const ExperimentResult& result) {
  json cells = json::array();
  std::size_t failures = 0;
  for (const auto& r : result.records) {
    cells.push_back({{"cell", r.cell},
                     {"method", r.method},
                     {"dataset", r.dataset},
                     {"seed", r.seed},
                     {"status", r.failed ? "failed" : "ok"},
                     {"fail_reason", r.fail_reason},
                     {"steps", r.steps},
                     {"final_metric", r.final_metric},
                     {"mmd", r.final_mmd},
                     {"frechet", r.final_frechet}});
    failures += r.failed ? 1 : 0;
  }
  json j = {{"config_hash", result.config_hash},
            {"experiment", config.experiment},
            {"n_cells", result.records.size()},
            {"n_effective", result.records.size() - failures},
            {"cells", cells}};
  std::ofstream f(fs::path(config.output_dir) / "summary.json");
  f << j.dump(2) << "\n";
}

// max_steps < 0 means unlimited (wall-clock only); 0 is a valid zero-step
// budget. At least one bound must be active.
struct Budget {
  long max_steps;
  double wall_secs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  Budget(long steps, double secs) : max_steps(steps), wall_secs(secs) {
    require(max_steps >= 0 || wall_secs > 0.0, "budget: no active bound");
  }
  bool timed() const { return wall_secs > 0.0; }
  double elapsed_ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
  }
  // checked once per step at identical granularity for every method
  bool exhausted(long next_step) const {
    if (max_steps >= 0 && next_step > max_steps) return true;
    if (timed() && elapsed_ms() >= wall_secs * 1000.0) return true;
    return false;
  }
};

std::shared_ptr<const NoiseDistribution> build_noise(const NoiseSpec& spec,
                                                     std::shared_ptr<const DenseArray> train) {
  if (spec.kind == "gaussian") {
    require(!spec.mean.empty(), "noise: explicit gaussian needs mean");
    std::size_t d = spec.mean.size();
    DenseArray cov({d, d});
    if (spec.cov.empty()) {
      for (std::size_t i = 0; i < d; ++i) cov.at(i, i) = 1.0;
    } else {
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) cov.at(i, j) = spec.cov[i][j];
    }
    return std::make_shared<FittedGaussian>(spec.mean, std::move(cov));
  }
  require(train != nullptr, "noise: data-based noise needs a training set");
  if (spec.kind == "fitted_gaussian")
    return std::make_shared<FittedGaussian>(fit_gaussian(*train, spec.jitter));
  if (spec.kind == "empirical_conv")
    return std::make_shared<EmpiricalConvolution>(train, spec.kernel_std, spec.batch_size,
                                                  spec.minibatch_density);
  if (spec.kind == "mixture") {
    auto a = std::make_shared<EmpiricalConvolution>(train, spec.kernel_std, spec.batch_size,
                                                    spec.minibatch_density);
    auto b = std::make_shared<FittedGaussian>(fit_gaussian(*train, spec.jitter));
    return std::make_shared<MixtureNoise>(a, b, 0.5);
  }
  throw config_error("unknown noise kind: " + spec.kind);
}

DenseArray draw_batch(const DenseArray& train, std::size_t batch, RngStream& rng) {
  DenseArray out({batch, train.cols()});
  for (std::size_t i = 0; i < batch; ++i) {
    auto row = train.row(rng.uniform_index(train.rows()));
    std::copy(row.begin(), row.end(), out.row(i).begin());
  }
  return out;
}

// Generic single-parameter-vector optimizer step (sgd / ngd / adam).
struct ThetaOptimizer {
  OptimizerSpec spec;
  AdamState adam;
  double eta_t;
  explicit ThetaOptimizer(const OptimizerSpec& s) : spec(s), eta_t(s.eta.eta0) {}
  void step(ParamVector& theta, const ParamVector& grad) {
    if (spec.kind == "sgd")
      sgd_step(theta, grad, eta_t);
    else if (spec.kind == "ngd")
      ngd_step(theta, grad, eta_t, spec.norm_floor);
    else
      adam_step(adam, theta, grad, eta_t, spec.adam);
    if (spec.eta.kind == StepSchedule::Kind::Pl) eta_t = pl_next_eta(eta_t, spec.eta.mu);
  }
};

// tau = (theta, alpha) update for the NCE-family baselines.
struct TauOptimizer {
  OptimizerSpec spec;
  AdamState adam;
  double alpha_m = 0.0, alpha_v = 0.0;
  double eta_t;
  explicit TauOptimizer(const OptimizerSpec& s) : spec(s), eta_t(s.eta.eta0) {}
  void step(NceParams& tau, const TauGrad& grad) {
    if (spec.kind == "sgd") {
      sgd_step(tau.theta, grad.theta, eta_t);
      tau.alpha -= eta_t * grad.alpha;
    } else if (spec.kind == "ngd") {
      double n = std::max(grad.norm(), spec.norm_floor);
      tau.theta.axpy(-eta_t / n, grad.theta);
      tau.alpha -= eta_t / n * grad.alpha;
    } else {
      adam_step(adam, tau.theta, grad.theta, eta_t, spec.adam);
      // scalar alpha follows the same adaptive rule
      if (adam.t == 1) alpha_m = alpha_v = 0.0;
      alpha_m = spec.adam.beta1 * alpha_m + (1 - spec.adam.beta1) * grad.alpha;
      alpha_v = spec.adam.beta2 * alpha_v + (1 - spec.adam.beta2) * grad.alpha * grad.alpha;
      double t = static_cast<double>(adam.t);
      double mhat = alpha_m / (1 - std::pow(spec.adam.beta1, t));
      double vhat = alpha_v / (1 - std::pow(spec.adam.beta2, t));
      tau.alpha -= eta_t * mhat / (std::sqrt(vhat) + spec.adam.eps);
    }
    if (spec.eta.kind == StepSchedule::Kind::Pl) eta_t = pl_next_eta(eta_t, spec.eta.mu);
  }
};

// Run cells on a small worker pool; each cell is internally single-threaded.
void run_cells(std::vector<RunRecord>& records, int workers,
               const std::function<void(RunRecord&)>& body) {
  unsigned n = workers > 0 ? static_cast<unsigned>(workers)
                           : std::max(1u, std::thread::hardware_concurrency());
  n = std::min<unsigned>(n, records.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= records.size()) return;
      RunRecord& rec = records[i];
      try {
        body(rec);
      } catch (const std::exception& e) {
        rec.failed = true;
        rec.fail_reason = e.what();
      }
    }
  };
  if (n <= 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

// Cell labels: the method name, extended by the optimizer kind (and finally a
// position index) whenever one config lists the same method several times.
std::vector<std::string> method_labels(const ExperimentConfig& config) {
  std::map<std::string, int> name_count;
  for (const auto& m : config.methods) name_count[m.method]++;
  std::vector<std::string> labels;
  std::map<std::string, int> used;
  for (const auto& m : config.methods) {
    std::string label = m.method;
    if (name_count[m.method] > 1 && m.optimizer) label += "_" + m.optimizer->kind;
    int n = ++used[label];
    if (n > 1) label += "_" + std::to_string(n);
    labels.push_back(label);
  }
  return labels;
}

std::vector<RunRecord> make_cells(const ExperimentConfig& config) {
  auto labels = method_labels(config);
  std::vector<RunRecord> cells;
  for (std::size_t i = 0; i < config.methods.size(); ++i)
    for (auto seed : config.seeds) {
      RunRecord r;
      r.method_index = i;
      r.method = config.methods[i].method;
      r.dataset = config.dataset.name;
      r.seed = seed;
      r.cell = labels[i] + "_" + config.dataset.name + "_s" + std::to_string(seed);
      cells.push_back(std::move(r));
    }
  return cells;
}



}  // namespace

// ---------------------------------------------------------------------------
// gaussian1d
// ---------------------------------------------------------------------------

namespace {

void gaussian1d_cell(const ExperimentConfig& config, RunRecord& rec) {
  const MethodSpec& method = config.methods.at(rec.method_index);
  const OptimizerSpec& opt = method.optimizer ? *method.optimizer : config.optimizer;
  const NoiseSpec& noise_spec = method.noise ? *method.noise : config.noise;
  const double theta_star = config.dataset.theta_star;
  const bool timed = config.budget.wall_secs > 0.0;

  const std::string& m = rec.method;
  if (m != "meco" && m != "nce_sgd" && m != "nce_ngd" && m != "ence_ngd" && m != "mcmc" &&
      m != "mle_closed_form")
    throw config_error("gaussian1d: invalid method " + m);

  // training set drawn per seed; batches index into it
  DatasetSpec dspec = config.dataset;
  dspec.name = "gaussian1d";
  if (dspec.n <= 0) dspec.n = 100000;
  dspec.seed = RngStream(rec.seed, fnv1a64("gaussian1d-data")).next_u64();
  auto train = std::make_shared<const DenseArray>(generate(dspec));

  RngStream rng(rec.seed, fnv1a64(rec.cell));
  GaussianMeanModel model;
  ParamVector theta = ParamVector::scalar(0.0);
  ParamVector theta_ref = ParamVector::scalar(theta_star);

  Budget budget{config.budget.max_steps, config.budget.wall_secs};
  auto log_row = [&](long step, double grad_norm, double log_u, long clips) {
    if (step % config.trace_every != 0 && !budget.exhausted(step + 1)) return;
    rec.rows.push_back({step, timed ? budget.elapsed_ms() : 0.0,
                        mse_theta(theta.flat(), theta_ref.flat()), grad_norm, log_u, clips});
  };
  rec.rows.push_back(
      {0, 0.0, mse_theta(theta.flat(), theta_ref.flat()), 0.0, kNan, 0});

  const std::size_t nb = method.baseline.batch_size;
  if (m == "meco") {
    auto q = build_noise(noise_spec, train);
    MecoConfig mc;
    mc.gamma = method.gamma;
    mc.beta = method.beta;
    mc.eta = opt.eta;
    mc.u_min_log = std::log(method.u_min);
    mc.gb_from_eta = method.gb_from_eta;
    mc.gb_const = method.gb_const;
    const std::size_t mb = nb * static_cast<std::size_t>(method.baseline.noise_ratio);
    DenseArray noise({mb, 1});
    std::vector<double> log_q(mb);
    MecoState state;
    MecoStepInfo info;
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      q->sample_with_log_density(rng, noise, log_q);
      if (step == 1) {
        state = meco_init(model, theta, data, noise, log_q, mc, &info);
        meco_apply_update(state, mc, theta);
      } else {
        meco_step(state, model, theta, data, noise, log_q, mc, &info);
      }
      rec.steps = step;
      log_row(step, info.grad_norm, state.log_u, state.clip_events);
    }
  } else if (m == "nce_sgd" || m == "nce_ngd" || m == "ence_ngd") {
    auto q = build_noise(noise_spec, train);
    NceParams tau{ParamVector::scalar(0.0), 0.0};
    TauOptimizer topt(opt);
    const std::size_t mb = nb * static_cast<std::size_t>(method.baseline.noise_ratio);
    DenseArray noise({mb, 1});
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      q->sample(rng, noise);
      auto res = m == "ence_ngd" ? ence_loss_and_grad(model, tau, *q, data, noise)
                                 : nce_loss_and_grad(model, tau, *q, data, noise);
      topt.step(tau, res.grad);
      theta[0] = tau.theta[0];
      rec.steps = step;
      log_row(step, res.grad.norm(), kNan, res.clip_events);
    }
  } else if (m == "mcmc") {
    LangevinConfig lc;
    lc.steps = method.baseline.langevin_steps;
    lc.step_size = method.baseline.langevin_step_size;
    ThetaOptimizer topt(opt);
    PersistentPool pool;
    std::unique_ptr<FittedGaussian> init_dist;
    if (method.persistent) {
      pool = PersistentPool::broad_init(10 * nb, 1, method.init_sigma, rng);
    } else {
      DenseArray cov({1, 1});
      cov.at(0, 0) = method.init_sigma * method.init_sigma;
      init_dist = std::make_unique<FittedGaussian>(std::vector<double>{0.0}, std::move(cov));
    }
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      auto res = mcmc_mle_grad(model, theta, data, lc, method.persistent ? &pool : nullptr,
                               init_dist.get(), rng);
      topt.step(theta, res.grad);
      rec.steps = step;
      log_row(step, res.grad.norm(), kNan, res.reinit_count);
    }
  } else {  // mle_closed_form: running sample mean as the reference curve
    double sum = 0.0;
    std::size_t count = 0;
    for (long step = 1; !budget.exhausted(step); ++step) {
      for (std::size_t i = 0; i < nb && count < train->rows(); ++i, ++count)
        sum += (*train)[count];
      theta[0] = count ? sum / static_cast<double>(count) : 0.0;
      rec.steps = step;
      log_row(step, 0.0, kNan, 0);
    }
  }
  rec.final_metric = mse_theta(theta.flat(), theta_ref.flat());
}

}  // namespace

ExperimentResult run_gaussian1d(const ExperimentConfig& config) {
  ExperimentResult result;
  result.config_hash = config.config_hash();
  fs::create_directories(config.output_dir);
  result.records = make_cells(config);
  run_cells(result.records, config.workers,
            [&](RunRecord& rec) { gaussian1d_cell(config, rec); });
  for (const auto& rec : result.records)
    write_trace_csv(config.output_dir, rec, result.config_hash);
  write_summary(config, result);
  return result;
}

// ---------------------------------------------------------------------------
// landscape
// ---------------------------------------------------------------------------

std::vector<LandscapeRow> landscape_rows(const GridSpec& grid, double theta_star,
                                         std::uint64_t seed) {
  GaussianMeanModel model;
  // common random numbers across the grid: one data batch, one noise batch
  RngStream rng(seed, fnv1a64("landscape"));
  DenseArray data({grid.n_mc, 1}), noise({grid.n_mc, 1});
  for (auto& v : data.flat()) v = theta_star + rng.normal();
  DenseArray cov({1, 1});
  cov.at(0, 0) = 1.0;
  FittedGaussian q({grid.theta_q}, std::move(cov));
  q.sample(rng, noise);

  std::vector<LandscapeRow> rows;
  rows.reserve(grid.points);
  const double ex2 = theta_star * theta_star + 1.0;
  for (std::size_t i = 0; i < grid.points; ++i) {
    double theta = grid.points == 1
                       ? grid.lo
                       : grid.lo + (grid.hi - grid.lo) * static_cast<double>(i) /
                                       static_cast<double>(grid.points - 1);
    NceParams tau{ParamVector::scalar(theta), 0.5 * theta * theta + kLogSqrt2Pi};
    LandscapeRow row;
    row.theta = theta;
    row.l_mle = -theta * theta_star + 0.5 * ex2 + log_partition_gaussian(theta);
    row.j_nce = nce_loss_and_grad(model, tau, q, data, noise).loss;
    row.j_ence = ence_loss_and_grad(model, tau, q, data, noise).loss;
    rows.push_back(row);
  }
  return rows;
}

ExperimentResult run_landscape(const ExperimentConfig& config) {
  ExperimentResult result;
  result.config_hash = config.config_hash();
  fs::create_directories(config.output_dir);
  auto rows = landscape_rows(config.grid, config.dataset.theta_star,
                             config.seeds.empty() ? 0 : config.seeds[0]);
  std::ofstream f(fs::path(config.output_dir) / "grid_landscape.csv");
  f << "# config_hash=" << result.config_hash << "\n";
  f << "theta,l_mle,j_nce,j_ence\n";
  for (const auto& r : rows)
    f << format_g(r.theta) << ',' << format_g(r.l_mle) << ',' << format_g(r.j_nce) << ','
      << format_g(r.j_ence) << "\n";
  RunRecord rec;
  rec.cell = "landscape";
  rec.method = "landscape";
  rec.dataset = "gaussian1d";
  rec.steps = static_cast<long>(rows.size());
  result.records.push_back(std::move(rec));
  write_summary(config, result);
  return result;
}

// ---------------------------------------------------------------------------
// variance diagnostics
// ---------------------------------------------------------------------------

std::vector<VarianceSweepEntry> variance_sweep(const ExperimentConfig& config) {
  GaussianMeanModel model;
  const double theta_star = config.dataset.theta_star;
  std::vector<VarianceSweepEntry> entries;

  DatasetSpec dspec = config.dataset;
  dspec.name = "gaussian1d";
  if (dspec.n <= 0) dspec.n = 10000;
  auto train = std::make_shared<const DenseArray>(generate(dspec));

  for (double delta : config.variance.deltas) {
    VarianceSweepEntry e;
    e.delta = delta;
    ParamVector theta_ref = ParamVector::scalar(config.variance.theta_ref);
    TrackedGaussianNoise q(config.variance.theta_ref, delta);
    RngStream rng(config.seeds.empty() ? 0 : config.seeds[0],
                  fnv1a64("variance-" + std::to_string(delta)));
    auto rep = variance_diagnostic(model, theta_ref, q, config.variance.n_mc, rng, train.get());
    e.sigma_g_sq = rep.sigma_g_sq;
    e.zeta_g_sq = rep.zeta_g_sq;
    e.zeta_h_sq = rep.zeta_h_sq;
    e.minibatch_logq_gap = kNan;
    if (config.noise.kind == "empirical_conv") {
      EmpiricalConvolution ec(train, config.noise.kernel_std, config.noise.batch_size, true);
      e.minibatch_logq_gap = ec.minibatch_density_gap(rng, 256);
    }

    // convergence race with the tracked noise at this offset
    const MethodSpec* meco_spec = nullptr;
    for (const auto& m : config.methods)
      if (m.method == "meco") meco_spec = &m;
    MethodSpec fallback;
    fallback.gamma = 0.2;
    fallback.baseline.batch_size = 1;
    if (!meco_spec) meco_spec = &fallback;
    MecoConfig mc;
    mc.gamma = meco_spec->gamma;
    mc.beta = meco_spec->beta;
    mc.eta = meco_spec->optimizer ? meco_spec->optimizer->eta : config.optimizer.eta;
    mc.u_min_log = std::log(meco_spec->u_min);
    const std::size_t nb = meco_spec->baseline.batch_size;
    const std::size_t mb = nb * static_cast<std::size_t>(meco_spec->baseline.noise_ratio);

    for (auto seed : config.seeds) {
      RngStream race_rng(seed, fnv1a64("variance-race-" + std::to_string(delta)));
      DatasetSpec ds = dspec;
      ds.seed = RngStream(seed, fnv1a64("variance-data")).next_u64();
      DenseArray data_set = generate(ds);
      ParamVector theta = ParamVector::scalar(0.0);
      ParamVector star = ParamVector::scalar(theta_star);
      MecoState state;
      long reached = -1;
      DenseArray noise({mb, 1});
      std::vector<double> log_q(mb);
      for (long step = 1; step <= config.budget.max_steps; ++step) {
        TrackedGaussianNoise qt(theta[0], delta);
        qt.sample(race_rng, noise);
        for (std::size_t j = 0; j < mb; ++j) log_q[j] = qt.log_density(noise.row(j));
        DenseArray data = draw_batch(data_set, nb, race_rng);
        if (step == 1) {
          state = meco_init(model, theta, data, noise, log_q, mc);
          meco_apply_update(state, mc, theta);
        } else {
          meco_step(state, model, theta, data, noise, log_q, mc);
        }
        if (mse_theta(theta.flat(), star.flat()) <= config.variance.target_mse) {
          reached = step;
          break;
        }
      }
      e.steps_to_target.push_back(reached);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

ExperimentResult run_variance(const ExperimentConfig& config) {
  ExperimentResult result;
  result.config_hash = config.config_hash();
  fs::create_directories(config.output_dir);
  auto entries = variance_sweep(config);
  json report = json::array();
  for (const auto& e : entries) {
    report.push_back({{"delta", e.delta},
                      {"sigma_g_sq", e.sigma_g_sq},
                      {"zeta_g_sq", e.zeta_g_sq},
                      {"zeta_h_sq", e.zeta_h_sq},
                      {"minibatch_logq_gap",
                       std::isnan(e.minibatch_logq_gap) ? json() : json(e.minibatch_logq_gap)},
                      {"steps_to_target", e.steps_to_target}});
  }
  json j = {{"config_hash", result.config_hash}, {"sweep", report}};
  std::ofstream f(fs::path(config.output_dir) / "variance_report.json");
  f << j.dump(2) << "\n";
  RunRecord rec;
  rec.cell = "variance";
  rec.method = "variance";
  rec.dataset = "gaussian1d";
  rec.steps = static_cast<long>(entries.size());
  result.records.push_back(std::move(rec));
  write_summary(config, result);
  return result;
}

// ---------------------------------------------------------------------------
// density2d
// ---------------------------------------------------------------------------

namespace {

void density2d_cell(const ExperimentConfig& config, RunRecord& rec) {
  const MethodSpec& method = config.methods.at(rec.method_index);
  const OptimizerSpec& opt = method.optimizer ? *method.optimizer : config.optimizer;
  const NoiseSpec& noise_spec = method.noise ? *method.noise : config.noise;
  const bool timed = config.budget.wall_secs > 0.0;

  const std::string& m = rec.method;
  if (m != "meco" && m != "nce" && m != "ence" && m != "score_matching" && m != "cd" &&
      m != "mcmc")
    throw config_error("density2d: invalid method " + m);

  DatasetSpec dspec = config.dataset;
  if (dspec.n <= 0) dspec.n = 10000;
  auto train = std::make_shared<const DenseArray>(generate(dspec));
  DatasetSpec held = dspec;
  held.seed = dspec.seed + 1;
  held.n = static_cast<long>(config.eval.n_points);
  DenseArray heldout = generate(held);

  RngStream rng(rec.seed, fnv1a64(rec.cell));
  MlpEnergyModel model(2, {300, 300, 300});
  RngStream init_rng(rec.seed, fnv1a64("mlp-init"));
  ParamVector theta = model.init_params(init_rng);

  Budget budget{config.budget.max_steps, config.budget.wall_secs};
  auto log_row = [&](long step, double metric, double grad_norm, double log_u, long clips) {
    if (step % config.trace_every != 0 && !budget.exhausted(step + 1)) return;
    rec.rows.push_back({step, timed ? budget.elapsed_ms() : 0.0, metric, grad_norm, log_u, clips});
  };

  const std::size_t nb = method.baseline.batch_size;
  const std::size_t mb = nb * static_cast<std::size_t>(method.baseline.noise_ratio);
  if (m == "meco") {
    auto q = build_noise(noise_spec, train);
    MecoConfig mc;
    mc.gamma = method.gamma;
    mc.beta = method.beta;
    mc.eta = opt.eta;
    mc.u_min_log = std::log(method.u_min);
    mc.gb_from_eta = method.gb_from_eta;
    mc.gb_const = method.gb_const;
    DenseArray noise({mb, 2});
    std::vector<double> log_q(mb);
    MecoState state;
    MecoStepInfo info;
    // adam-style variant applies the adaptive rule to the tracked gradient v
    AdamState adam;
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      q->sample_with_log_density(rng, noise, log_q);
      if (step == 1) {
        state = meco_init(model, theta, data, noise, log_q, mc, &info);
        if (opt.kind == "adam")
          adam_step(adam, theta, state.v, opt.eta.eta0, opt.adam);
        else
          meco_apply_update(state, mc, theta);
      } else if (opt.kind == "adam") {
        meco_update_estimators(state, model, theta, data, noise, log_q, mc, &info);
        adam_step(adam, theta, state.v, opt.eta.eta0, opt.adam);
      } else {
        meco_step(state, model, theta, data, noise, log_q, mc, &info);
      }
      rec.steps = step;
      log_row(step, info.loss_proxy, info.grad_norm, state.log_u, state.clip_events);
    }
  } else if (m == "nce" || m == "ence") {
    auto q = build_noise(noise_spec, train);
    NceParams tau{theta, 0.0};
    TauOptimizer topt(opt);
    DenseArray noise({mb, 2});
    long clips = 0;
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      q->sample(rng, noise);
      auto res = m == "ence" ? ence_loss_and_grad(model, tau, *q, data, noise)
                             : nce_loss_and_grad(model, tau, *q, data, noise);
      clips += res.clip_events;
      topt.step(tau, res.grad);
      rec.steps = step;
      log_row(step, res.loss, res.grad.norm(), kNan, clips);
    }
    theta = tau.theta;
  } else if (m == "score_matching") {
    ThetaOptimizer topt(opt);
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      auto res = score_matching_loss_and_grad(model, theta, data);
      topt.step(theta, res.grad);
      rec.steps = step;
      log_row(step, res.loss, res.grad.norm(), kNan, 0);
    }
  } else if (m == "cd") {
    ThetaOptimizer topt(opt);
    long reinits = 0;
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      auto res = cd_grad(model, theta, data, method.baseline.langevin_steps,
                         method.baseline.langevin_step_size, rng);
      reinits += res.reinit_count;
      topt.step(theta, res.grad);
      rec.steps = step;
      log_row(step, kNan, res.grad.norm(), kNan, reinits);
    }
  } else {  // mcmc
    LangevinConfig lc;
    lc.steps = method.baseline.langevin_steps;
    lc.step_size = method.baseline.langevin_step_size;
    ThetaOptimizer topt(opt);
    PersistentPool pool = PersistentPool::broad_init(10 * nb, 2, method.init_sigma, rng);
    long reinits = 0;
    for (long step = 1; !budget.exhausted(step); ++step) {
      DenseArray data = draw_batch(*train, nb, rng);
      auto res = mcmc_mle_grad(model, theta, data, lc, &pool, nullptr, rng);
      reinits += res.reinit_count;
      topt.step(theta, res.grad);
      rec.steps = step;
      log_row(step, kNan, res.grad.norm(), kNan, reinits);
    }
  }

  // generation: langevin from a broad gaussian, clamped to the data box
  LangevinConfig gen;
  gen.steps = config.eval.langevin_steps;
  gen.step_size = config.eval.langevin_eps;
  gen.clamp_box = {{-4.0, 4.0}, {-4.0, 4.0}};
  DenseArray x0({config.eval.n_points, 2});
  for (auto& v : x0.flat()) v = config.eval.init_sigma * rng.normal();
  DenseArray samples = langevin_chain(model, theta, x0, gen, rng);

  rec.final_mmd = mmd2(samples, heldout, MmdConfig{});
  rec.final_frechet = frechet2(fit_summary(samples), fit_summary(heldout));
  rec.final_metric = rec.final_mmd;

  // outputs: density grid, samples, checkpoint
  const fs::path dir(config.output_dir);
  const std::string hash = config.config_hash();
  {
    std::ofstream f(dir / ("grid_" + rec.cell + ".csv"));
    f << "# config_hash=" << hash << " cell=" << rec.cell << "\n";
    f << "x,y,f\n";
    const std::size_t g = config.eval.grid;
    auto eval = model.make_batch_eval(g);
    DenseArray pts({g, 2});
    for (std::size_t iy = 0; iy < g; ++iy) {
      double y = -4.0 + 8.0 * (static_cast<double>(iy) + 0.5) / static_cast<double>(g);
      for (std::size_t ix = 0; ix < g; ++ix) {
        pts.at(ix, 0) = -4.0 + 8.0 * (static_cast<double>(ix) + 0.5) / static_cast<double>(g);
        pts.at(ix, 1) = y;
      }
      auto vals = eval->forward(pts, theta);
      for (std::size_t ix = 0; ix < g; ++ix)
        f << format_g(pts.at(ix, 0)) << ',' << format_g(y) << ',' << format_g(vals[ix]) << "\n";
    }
  }
  write_points_csv((dir / ("samples_" + rec.cell + ".csv")).string(), samples,
                   "config_hash=" + hash + " cell=" + rec.cell);
  save_checkpoint((dir / (rec.cell + ".ckpt")).string(), theta, "config_hash=" + hash);
}

}  // namespace

ExperimentResult run_density2d(const ExperimentConfig& config) {
  ExperimentResult result;
  result.config_hash = config.config_hash();
  fs::create_directories(config.output_dir);
  result.records = make_cells(config);
  run_cells(result.records, config.workers,
            [&](RunRecord& rec) { density2d_cell(config, rec); });
  for (const auto& rec : result.records)
    write_trace_csv(config.output_dir, rec, result.config_hash);
  write_summary(config, result);
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.experiment == "gaussian1d") return run_gaussian1d(config);
  if (config.experiment == "landscape") return run_landscape(config);
  if (config.experiment == "density2d") return run_density2d(config);
  if (config.experiment == "variance") return run_variance(config);
  throw config_error("unknown experiment: " + config.experiment);
}

}  // namespace meco
