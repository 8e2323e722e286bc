#pragma once

#include <cstddef>
#include <span>
#include <type_traits>
#include <unordered_map>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/errors.hpp"
#include "meco/taylor2.hpp"

namespace meco {

using NodeId = int;

enum class Op { Input, Constant, Add, Mul, MatMul, Tanh, Softplus, Swish, Exp, Log, Sum };

// Reverse-mode tape over a closed primitive set (add, mul, matmul,
// tanh/softplus/swish, exp, log, sum). Values live in row-major buffers of the
// scalar type S; instantiating with Taylor2 turns one forward+backward pass
// into a forward-over-reverse sweep. A tape is built once, leaves are re-set,
// and forward()/backward() may be re-run any number of times; backward zeroes
// all adjoint buffers on entry and leaves values untouched.
template <class S>
class Tape {
 public:
  NodeId input(std::size_t rows, std::size_t cols) { return push_(Op::Input, -1, -1, rows, cols); }
  NodeId constant(std::size_t rows, std::size_t cols) {
    return push_(Op::Constant, -1, -1, rows, cols);
  }

  // Elementwise a+b; b may also be a 1 x cols row that broadcasts over a's rows.
  NodeId add(NodeId a, NodeId b) {
    bool same = rows(a) == rows(b) && cols(a) == cols(b);
    bool bcast = rows(b) == 1 && cols(a) == cols(b);
    require(same || bcast, "tape add: shape mismatch");
    return push_(Op::Add, a, b, rows(a), cols(a));
  }
  NodeId mul(NodeId a, NodeId b) {
    require(rows(a) == rows(b) && cols(a) == cols(b), "tape mul: shape mismatch");
    return push_(Op::Mul, a, b, rows(a), cols(a));
  }
  NodeId matmul(NodeId a, NodeId b) {
    require(cols(a) == rows(b), "tape matmul: inner dimension mismatch");
    return push_(Op::MatMul, a, b, rows(a), cols(b));
  }
  NodeId tanh(NodeId a) { return push_(Op::Tanh, a, -1, rows(a), cols(a)); }
  NodeId softplus(NodeId a) { return push_(Op::Softplus, a, -1, rows(a), cols(a)); }
  NodeId swish(NodeId a) { return push_(Op::Swish, a, -1, rows(a), cols(a)); }
  NodeId exp(NodeId a) { return push_(Op::Exp, a, -1, rows(a), cols(a)); }
  NodeId log(NodeId a) { return push_(Op::Log, a, -1, rows(a), cols(a)); }
  NodeId sum(NodeId a) { return push_(Op::Sum, a, -1, 1, 1); }

  std::size_t rows(NodeId n) const { return rows_[n]; }
  std::size_t cols(NodeId n) const { return cols_[n]; }
  std::size_t size(NodeId n) const { return rows_[n] * cols_[n]; }
  Op op(NodeId n) const { return ops_[n]; }
  std::size_t node_count() const { return ops_.size(); }

  std::span<S> value(NodeId n) { return {values_[n].data(), values_[n].size()}; }
  std::span<const S> value(NodeId n) const { return {values_[n].data(), values_[n].size()}; }
  std::span<const S> adjoint(NodeId n) const { return {adjoints_[n].data(), adjoints_[n].size()}; }

  void set_value(NodeId n, std::span<const S> v) {
    require(v.size() == values_[n].size(), "tape set_value: size mismatch");
    std::copy(v.begin(), v.end(), values_[n].begin());
  }
  void set_value(NodeId n, std::span<const double> v)
    requires(!std::is_same_v<S, double>)
  {
    require(v.size() == values_[n].size(), "tape set_value: size mismatch");
    for (std::size_t i = 0; i < v.size(); ++i) values_[n][i] = S(v[i]);
  }

  // Recompute every non-leaf value in topological (insertion) order.
  void forward() {
    for (NodeId n = 0; n < static_cast<NodeId>(ops_.size()); ++n) {
      auto* y = values_[n].data();
      const std::size_t count = values_[n].size();
      const NodeId a = srcs_a_[n], b = srcs_b_[n];
      switch (ops_[n]) {
        case Op::Input:
        case Op::Constant:
          break;
        case Op::Add: {
          const auto* xa = values_[a].data();
          const auto* xb = values_[b].data();
          if (rows_[a] == rows_[b]) {
            for (std::size_t i = 0; i < count; ++i) y[i] = xa[i] + xb[i];
          } else {
            const std::size_t c = cols_[n];
            for (std::size_t r = 0; r < rows_[n]; ++r)
              for (std::size_t j = 0; j < c; ++j) y[r * c + j] = xa[r * c + j] + xb[j];
          }
          break;
        }
        case Op::Mul: {
          const auto* xa = values_[a].data();
          const auto* xb = values_[b].data();
          for (std::size_t i = 0; i < count; ++i) y[i] = xa[i] * xb[i];
          break;
        }
        case Op::MatMul:
          matmul_(values_[a].data(), rows_[a], cols_[a], values_[b].data(), cols_[b], y, false);
          break;
        case Op::Tanh: {
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < count; ++i) y[i] = scalar::tanh(xa[i]);
          break;
        }
        case Op::Softplus: {
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < count; ++i) y[i] = scalar::softplus(xa[i]);
          break;
        }
        case Op::Swish: {
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < count; ++i) y[i] = scalar::swish(xa[i]);
          break;
        }
        case Op::Exp: {
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < count; ++i) y[i] = scalar::exp(xa[i]);
          break;
        }
        case Op::Log: {
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < count; ++i) y[i] = scalar::log(xa[i]);
          break;
        }
        case Op::Sum: {
          const auto* xa = values_[a].data();
          S acc{};
          for (std::size_t i = 0; i < values_[a].size(); ++i) acc += xa[i];
          y[0] = acc;
          break;
        }
      }
    }
  }

  // Reverse pass from a scalar output, seeding with 1.
  void backward(NodeId output, std::span<const NodeId> wrt = {}) {
    require(size(output) == 1, "tape backward: output must be scalar");
    const S one(1.0);
    backward_seeded(output, std::span<const S>(&one, 1), wrt);
  }

  // Reverse pass with an arbitrary seed adjoint on `output` (used for
  // per-example weighted batch gradients). When `wrt` is non-empty only
  // adjoints feeding those nodes are propagated; otherwise all Input leaves
  // count as targets.
  void backward_seeded(NodeId output, std::span<const S> seed, std::span<const NodeId> wrt = {}) {
    require(seed.size() == size(output), "tape backward: seed size mismatch");
    live_.assign(ops_.size(), 0);
    if (wrt.empty()) {
      for (NodeId n = 0; n < static_cast<NodeId>(ops_.size()); ++n)
        if (ops_[n] == Op::Input) live_[n] = 1;
    } else {
      for (NodeId n : wrt) live_[n] = 1;
    }
    for (NodeId n = 0; n < static_cast<NodeId>(ops_.size()); ++n) {
      if (srcs_a_[n] >= 0 && live_[srcs_a_[n]]) live_[n] = 1;
      if (srcs_b_[n] >= 0 && live_[srcs_b_[n]]) live_[n] = 1;
    }
    for (auto& adj : adjoints_) std::fill(adj.begin(), adj.end(), S{});
    std::copy(seed.begin(), seed.end(), adjoints_[output].begin());

    for (NodeId n = output; n >= 0; --n) {
      if (!live_[n]) continue;
      const NodeId a = srcs_a_[n], b = srcs_b_[n];
      const auto* gy = adjoints_[n].data();
      switch (ops_[n]) {
        case Op::Input:
        case Op::Constant:
          break;
        case Op::Add: {
          if (a >= 0 && live_[a]) {
            auto* ga = adjoints_[a].data();
            for (std::size_t i = 0; i < size(n); ++i) ga[i] += gy[i];
          }
          if (b >= 0 && live_[b]) {
            auto* gb = adjoints_[b].data();
            if (rows_[a] == rows_[b]) {
              for (std::size_t i = 0; i < size(n); ++i) gb[i] += gy[i];
            } else {
              const std::size_t c = cols_[n];
              for (std::size_t r = 0; r < rows_[n]; ++r)
                for (std::size_t j = 0; j < c; ++j) gb[j] += gy[r * c + j];
            }
          }
          break;
        }
        case Op::Mul: {
          if (live_[a]) {
            auto* ga = adjoints_[a].data();
            const auto* xb = values_[b].data();
            for (std::size_t i = 0; i < size(n); ++i) ga[i] += gy[i] * xb[i];
          }
          if (live_[b]) {
            auto* gb = adjoints_[b].data();
            const auto* xa = values_[a].data();
            for (std::size_t i = 0; i < size(n); ++i) gb[i] += gy[i] * xa[i];
          }
          break;
        }
        case Op::MatMul: {
          // y = A(nr x kk) * B(kk x mc)
          if (live_[a])
            matmul_abt_(gy, rows_[n], cols_[n], values_[b].data(), rows_[b], adjoints_[a].data());
          if (live_[b])
            matmul_atb_(values_[a].data(), rows_[a], cols_[a], gy, cols_[n], adjoints_[b].data());
          break;
        }
        case Op::Tanh: {
          auto* ga = adjoints_[a].data();
          const auto* y = values_[n].data();
          for (std::size_t i = 0; i < size(n); ++i) ga[i] += gy[i] * (S(1.0) - y[i] * y[i]);
          break;
        }
        case Op::Softplus: {
          auto* ga = adjoints_[a].data();
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < size(n); ++i) ga[i] += gy[i] * scalar::sigmoid(xa[i]);
          break;
        }
        case Op::Swish: {
          auto* ga = adjoints_[a].data();
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < size(n); ++i) {
            S s = scalar::sigmoid(xa[i]);
            ga[i] += gy[i] * (s + xa[i] * s * (S(1.0) - s));
          }
          break;
        }
        case Op::Exp: {
          auto* ga = adjoints_[a].data();
          const auto* y = values_[n].data();
          for (std::size_t i = 0; i < size(n); ++i) ga[i] += gy[i] * y[i];
          break;
        }
        case Op::Log: {
          auto* ga = adjoints_[a].data();
          const auto* xa = values_[a].data();
          for (std::size_t i = 0; i < size(n); ++i) ga[i] += gy[i] / xa[i];
          break;
        }
        case Op::Sum: {
          auto* ga = adjoints_[a].data();
          for (std::size_t i = 0; i < values_[a].size(); ++i) ga[i] += gy[0];
          break;
        }
      }
    }
  }

 private:
  NodeId push_(Op op, NodeId a, NodeId b, std::size_t r, std::size_t c) {
    ops_.push_back(op);
    srcs_a_.push_back(a);
    srcs_b_.push_back(b);
    rows_.push_back(r);
    cols_.push_back(c);
    values_.emplace_back(r * c, S{});
    adjoints_.emplace_back(r * c, S{});
    return static_cast<NodeId>(ops_.size() - 1);
  }

  // C = A*B (or +=), dispatching to the Eigen-backed kernel for doubles.
  void matmul_(const S* a, std::size_t n, std::size_t k, const S* b, std::size_t m, S* c,
               bool acc) {
    if constexpr (std::is_same_v<S, double>) {
      gemm(a, n, k, b, m, c, acc);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          S s = acc ? c[i * m + j] : S{};
          for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * m + j];
          c[i * m + j] = s;
        }
    }
  }
  // C += A * B^T, A: n x k, B: m x k
  void matmul_abt_(const S* a, std::size_t n, std::size_t k, const S* b, std::size_t m, S* c) {
    if constexpr (std::is_same_v<S, double>) {
      gemm_a_bt(a, n, k, b, m, c);
    } else {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          S s = c[i * m + j];
          for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[j * k + t];
          c[i * m + j] = s;
        }
    }
  }
  // C += A^T * B, A: n x k, B: n x m
  void matmul_atb_(const S* a, std::size_t n, std::size_t k, const S* b, std::size_t m, S* c) {
    if constexpr (std::is_same_v<S, double>) {
      gemm_at_b(a, n, k, b, m, c);
    } else {
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < m; ++j) {
          S s = c[i * m + j];
          for (std::size_t t = 0; t < n; ++t) s += a[t * k + i] * b[t * m + j];
          c[i * m + j] = s;
        }
    }
  }

  std::vector<Op> ops_;
  std::vector<NodeId> srcs_a_, srcs_b_;
  std::vector<std::size_t> rows_, cols_;
  std::vector<std::vector<S>> values_;
  std::vector<std::vector<S>> adjoints_;
  std::vector<char> live_;
};

// d(output)/d(node) for each requested node; the tape is left reusable.
// Nodes unreachable from the output get zero gradients.
inline std::unordered_map<NodeId, DenseArray> grad(Tape<double>& tape, NodeId output,
                                                   std::span<const NodeId> wrt) {
  tape.backward(output, wrt);
  std::unordered_map<NodeId, DenseArray> out;
  for (NodeId n : wrt) {
    auto adj = tape.adjoint(n);
    DenseArray g({tape.rows(n), tape.cols(n)});
    std::copy(adj.begin(), adj.end(), g.flat().begin());
    out.emplace(n, std::move(g));
  }
  return out;
}

// Gradient of a scalar output w.r.t. a registered differentiable input node.
inline DenseArray input_grad(Tape<double>& tape, NodeId output, NodeId x) {
  require(tape.op(x) == Op::Input, "input_grad: node was not registered as an input");
  NodeId wrt[1] = {x};
  auto m = grad(tape, output, wrt);
  return std::move(m.at(x));
}

}  // namespace meco
