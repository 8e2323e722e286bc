#include "meco/models.hpp"

#include <cmath>

#include "meco/errors.hpp"
#include "meco/tape.hpp"

namespace meco {

namespace {

// Generic fallback evaluator built on the per-point virtuals.
class LoopBatchEval : public BatchEval {
 public:
  explicit LoopBatchEval(const UnnormalizedModel& m) : model_(m), theta_(m.layout()) {}

  std::span<const double> forward(const DenseArray& x, const ParamVector& theta) override {
    x_ = x;
    std::copy(theta.flat().begin(), theta.flat().end(), theta_.flat().begin());
    values_.resize(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) values_[i] = model_.log_unnorm(x.row(i), theta_);
    return values_;
  }
  void weighted_grad_theta(std::span<const double> w, ParamVector& out) override {
    ParamVector g(model_.layout());
    for (std::size_t i = 0; i < x_.rows(); ++i) {
      model_.grad_theta(x_.row(i), theta_, g);
      out.axpy(w[i], g);
    }
  }
  void grad_x(DenseArray& out) override {
    for (std::size_t i = 0; i < x_.rows(); ++i) model_.grad_x(x_.row(i), theta_, out.row(i));
  }

 private:
  const UnnormalizedModel& model_;
  ParamVector theta_;
  DenseArray x_;
  std::vector<double> values_;
};

}  // namespace

std::unique_ptr<BatchEval> UnnormalizedModel::make_batch_eval(std::size_t) const {
  return std::make_unique<LoopBatchEval>(*this);
}

double UnnormalizedModel::score_matching_point(std::span<const double>, const ParamVector&,
                                               ParamVector*, double) const {
  throw contract_error("model does not provide second-order input derivatives");
}

// ---------------------------------------------------------------------------
// Gaussian mean family
// ---------------------------------------------------------------------------

GaussianMeanModel::GaussianMeanModel() { layout_.add("theta", 1); }

double GaussianMeanModel::log_unnorm(std::span<const double> x, const ParamVector& theta) const {
  return theta[0] * x[0] - 0.5 * x[0] * x[0];
}

void GaussianMeanModel::grad_theta(std::span<const double> x, const ParamVector&,
                                   ParamVector& out) const {
  out[0] = x[0];
}

void GaussianMeanModel::grad_x(std::span<const double> x, const ParamVector& theta,
                               std::span<double> out) const {
  out[0] = theta[0] - x[0];
}

namespace {
class GaussianBatchEval : public BatchEval {
 public:
  std::span<const double> forward(const DenseArray& x, const ParamVector& theta) override {
    theta_v_ = theta[0];
    xs_.assign(x.flat().begin(), x.flat().end());
    values_.resize(xs_.size());
    for (std::size_t i = 0; i < xs_.size(); ++i)
      values_[i] = theta_v_ * xs_[i] - 0.5 * xs_[i] * xs_[i];
    return values_;
  }
  void weighted_grad_theta(std::span<const double> w, ParamVector& out) override {
    double s = 0.0;
    for (std::size_t i = 0; i < xs_.size(); ++i) s += w[i] * xs_[i];
    out[0] += s;
  }
  void grad_x(DenseArray& out) override {
    for (std::size_t i = 0; i < xs_.size(); ++i) out[i] = theta_v_ - xs_[i];
  }

 private:
  double theta_v_ = 0.0;
  std::vector<double> xs_;
  std::vector<double> values_;
};
}  // namespace

std::unique_ptr<BatchEval> GaussianMeanModel::make_batch_eval(std::size_t) const {
  return std::make_unique<GaussianBatchEval>();
}

double GaussianMeanModel::score_matching_point(std::span<const double> x, const ParamVector& theta,
                                               ParamVector* grad_accum, double weight) const {
  double s = theta[0] - x[0];
  if (grad_accum) (*grad_accum)[0] += weight * s;
  return 0.5 * s * s - 1.0;
}

double log_partition_gaussian(double theta) { return kLogSqrt2Pi + 0.5 * theta * theta; }

double mle_gap_gaussian(double theta, double theta_star) {
  // Population objective: L(t) = -t*E[x] + E[x^2]/2 + log Z(t), data ~ N(theta_star, 1).
  const double ex = theta_star;
  const double ex2 = theta_star * theta_star + 1.0;
  const double l_theta = -theta * ex + 0.5 * ex2 + log_partition_gaussian(theta);
  const double l_star = -theta_star * ex + 0.5 * ex2 + log_partition_gaussian(theta_star);
  return l_theta - l_star;
}

// ---------------------------------------------------------------------------
// MLP energy model
// ---------------------------------------------------------------------------

namespace {

// Feedforward graph for a batch: Z_l = act(Z_{l-1} W_l + b_l), scalar column out.
template <class S>
struct MlpGraph {
  Tape<S> tape;
  NodeId x = -1;
  std::vector<NodeId> params;  // in layout order: w1, b1, w2, b2, ...
  NodeId out = -1;

  MlpGraph(std::size_t dim, const std::vector<std::size_t>& hidden, Activation act,
           std::size_t batch) {
    x = tape.input(batch, dim);
    NodeId h = x;
    std::size_t in = dim;
    std::vector<std::size_t> outs = hidden;
    outs.push_back(1);
    for (std::size_t l = 0; l < outs.size(); ++l) {
      NodeId w = tape.input(in, outs[l]);
      NodeId b = tape.input(1, outs[l]);
      params.push_back(w);
      params.push_back(b);
      h = tape.add(tape.matmul(h, w), b);
      if (l + 1 < outs.size()) {
        switch (act) {
          case Activation::Tanh: h = tape.tanh(h); break;
          case Activation::Softplus: h = tape.softplus(h); break;
          case Activation::Swish: h = tape.swish(h); break;
        }
      }
      in = outs[l];
    }
    out = h;  // batch x 1
  }

  void set_params(const ParamVector& theta) {
    const auto& slices = theta.layout().slices();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto src = theta.flat().subspan(slices[i].offset, slices[i].len);
      tape.set_value(params[i], src);
    }
  }

  void collect_param_adjoints(double weight, ParamVector& out) const
    requires std::is_same_v<S, double>
  {
    const auto& slices = out.layout().slices();
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto adj = tape.adjoint(params[i]);
      auto dst = out.flat().subspan(slices[i].offset, slices[i].len);
      for (std::size_t j = 0; j < adj.size(); ++j) dst[j] += weight * adj[j];
    }
  }
};

class MlpBatchEval : public BatchEval {
 public:
  MlpBatchEval(const MlpEnergyModel& m, std::size_t batch)
      : graph_(m.dim(), m.hidden(), m.activation(), batch), batch_(batch) {}

  std::span<const double> forward(const DenseArray& x, const ParamVector& theta) override {
    require(x.rows() == batch_ && x.cols() == graph_.tape.cols(graph_.x),
            "MlpBatchEval: batch shape mismatch");
    graph_.set_params(theta);
    graph_.tape.set_value(graph_.x, x.flat());
    graph_.tape.forward();
    return graph_.tape.value(graph_.out);
  }
  void weighted_grad_theta(std::span<const double> w, ParamVector& out) override {
    graph_.tape.backward_seeded(graph_.out, w, graph_.params);
    graph_.collect_param_adjoints(1.0, out);
  }
  void grad_x(DenseArray& out) override {
    std::vector<double> ones(batch_, 1.0);
    NodeId wrt[1] = {graph_.x};
    graph_.tape.backward_seeded(graph_.out, ones, wrt);
    auto adj = graph_.tape.adjoint(graph_.x);
    std::copy(adj.begin(), adj.end(), out.flat().begin());
  }

 private:
  MlpGraph<double> graph_;
  std::size_t batch_;
};

}  // namespace

MlpEnergyModel::MlpEnergyModel(std::size_t dim, std::vector<std::size_t> hidden, Activation act)
    : dim_(dim), hidden_(std::move(hidden)), act_(act) {
  require(!hidden_.empty(), "MlpEnergyModel: at least one hidden layer");
  std::size_t in = dim_;
  std::vector<std::size_t> outs = hidden_;
  outs.push_back(1);
  for (std::size_t l = 0; l < outs.size(); ++l) {
    layout_.add("w" + std::to_string(l + 1), in * outs[l], in, outs[l]);
    layout_.add("b" + std::to_string(l + 1), outs[l], 1, outs[l]);
    in = outs[l];
  }
}

ParamVector MlpEnergyModel::init_params(RngStream& rng) const {
  ParamVector p(layout_);
  for (const auto& s : layout_.slices()) {
    auto dst = p.flat().subspan(s.offset, s.len);
    if (s.name[0] == 'b') {
      for (auto& v : dst) v = 0.0;
    } else {
      double a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
      for (auto& v : dst) v = a * (2.0 * rng.uniform() - 1.0);
    }
  }
  return p;
}

double MlpEnergyModel::log_unnorm(std::span<const double> x, const ParamVector& theta) const {
  require(x.size() == dim_, "MlpEnergyModel: input dimension mismatch");
  MlpGraph<double> g(dim_, hidden_, act_, 1);
  g.set_params(theta);
  g.tape.set_value(g.x, x);
  g.tape.forward();
  return g.tape.value(g.out)[0];
}

void MlpEnergyModel::grad_theta(std::span<const double> x, const ParamVector& theta,
                                ParamVector& out) const {
  require(x.size() == dim_, "MlpEnergyModel: input dimension mismatch");
  MlpGraph<double> g(dim_, hidden_, act_, 1);
  g.set_params(theta);
  g.tape.set_value(g.x, x);
  g.tape.forward();
  g.tape.backward(g.out, g.params);
  out.fill(0.0);
  g.collect_param_adjoints(1.0, out);
}

void MlpEnergyModel::grad_x(std::span<const double> x, const ParamVector& theta,
                            std::span<double> out) const {
  require(x.size() == dim_, "MlpEnergyModel: input dimension mismatch");
  MlpGraph<double> g(dim_, hidden_, act_, 1);
  g.set_params(theta);
  g.tape.set_value(g.x, x);
  g.tape.forward();
  NodeId wrt[1] = {g.x};
  g.tape.backward(g.out, wrt);
  auto adj = g.tape.adjoint(g.x);
  std::copy(adj.begin(), adj.end(), out.begin());
}

std::unique_ptr<BatchEval> MlpEnergyModel::make_batch_eval(std::size_t batch) const {
  return std::make_unique<MlpBatchEval>(*this, batch);
}

double MlpEnergyModel::score_matching_point(std::span<const double> x, const ParamVector& theta,
                                            ParamVector* grad_accum, double weight) const {
  require(x.size() == dim_, "MlpEnergyModel: input dimension mismatch");
  // One degree-2 Taylor sweep per coordinate: the forward pass carries the
  // directional first/second derivatives of f, the backward pass the same for
  // every parameter gradient entry.
  MlpGraph<Taylor2> g(dim_, hidden_, act_, 1);
  g.set_params(theta);
  double loss = 0.0;
  std::vector<Taylor2> xin(dim_);
  const Taylor2 seed(1.0, 0.0, 0.0);
  const auto& slices = layout_.slices();
  for (std::size_t k = 0; k < dim_; ++k) {
    for (std::size_t j = 0; j < dim_; ++j) xin[j] = Taylor2(x[j], j == k ? 1.0 : 0.0, 0.0);
    g.tape.set_value(g.x, std::span<const Taylor2>(xin));
    g.tape.forward();
    Taylor2 f = g.tape.value(g.out)[0];
    const double sk = f.v1;        // d f / d x_k
    const double hkk = 2.0 * f.v2; // d^2 f / d x_k^2
    loss += 0.5 * sk * sk + hkk;
    if (grad_accum) {
      g.tape.backward_seeded(g.out, std::span<const Taylor2>(&seed, 1), g.params);
      for (std::size_t i = 0; i < g.params.size(); ++i) {
        auto adj = g.tape.adjoint(g.params[i]);
        auto dst = grad_accum->flat().subspan(slices[i].offset, slices[i].len);
        for (std::size_t j = 0; j < adj.size(); ++j)
          dst[j] += weight * (sk * adj[j].v1 + 2.0 * adj[j].v2);
      }
    }
  }
  return loss;
}

}  // namespace meco
