#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/errors.hpp"

namespace meco {

// One named slice of a flat parameter vector, optionally carrying a 2-D shape.
struct ParamSlice {
  std::string name;
  std::size_t offset = 0;
  std::size_t len = 0;
  std::size_t rows = 0, cols = 0;  // 0x0 for unshaped slices
};

class ParamLayout {
 public:
  ParamLayout() = default;

  void add(std::string name, std::size_t len, std::size_t rows = 0, std::size_t cols = 0) {
    if (rows && cols) require(rows * cols == len, "ParamLayout: shape/len mismatch");
    slices_.push_back({std::move(name), total_, len, rows, cols});
    total_ += len;
  }

  std::size_t total() const { return total_; }
  const std::vector<ParamSlice>& slices() const { return slices_; }

  const ParamSlice& slice(const std::string& name) const {
    for (const auto& s : slices_)
      if (s.name == name) return s;
    throw contract_error("ParamLayout: unknown slice " + name);
  }

  bool operator==(const ParamLayout& o) const {
    if (total_ != o.total_ || slices_.size() != o.slices_.size()) return false;
    for (std::size_t i = 0; i < slices_.size(); ++i) {
      const auto &a = slices_[i], &b = o.slices_[i];
      if (a.name != b.name || a.offset != b.offset || a.len != b.len || a.rows != b.rows ||
          a.cols != b.cols)
        return false;
    }
    return true;
  }

 private:
  std::vector<ParamSlice> slices_;
  std::size_t total_ = 0;
};

// Flat vector of model parameters with a named-slice layout covering the
// buffer exactly once.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamLayout layout)
      : layout_(std::move(layout)), values_({layout_.total()}) {}
  ParamVector(ParamLayout layout, std::vector<double> values)
      : layout_(std::move(layout)), values_({layout_.total()}, std::move(values)) {}

  // Scalar convenience for one-parameter models.
  static ParamVector scalar(double value) {
    ParamLayout l;
    l.add("theta", 1);
    ParamVector p(std::move(l));
    p[0] = value;
    return p;
  }

  const ParamLayout& layout() const { return layout_; }
  std::size_t size() const { return values_.size(); }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<double> flat() { return values_.flat(); }
  std::span<const double> flat() const { return values_.flat(); }
  DenseArray& values() { return values_; }
  const DenseArray& values() const { return values_; }

  std::span<double> slice(const std::string& name) {
    const auto& s = layout_.slice(name);
    return values_.flat().subspan(s.offset, s.len);
  }
  std::span<const double> slice(const std::string& name) const {
    const auto& s = layout_.slice(name);
    return values_.flat().subspan(s.offset, s.len);
  }

  void fill(double v) { values_.fill(v); }

  bool all_finite() const {
    for (double v : values_.flat())
      if (!std::isfinite(v)) return false;
    return true;
  }

  // y += a * x over the flat buffer.
  void axpy(double a, const ParamVector& x) {
    require(x.size() == size(), "ParamVector axpy: size mismatch");
    for (std::size_t i = 0; i < size(); ++i) values_[i] += a * x[i];
  }
  void scale(double a) {
    for (std::size_t i = 0; i < size(); ++i) values_[i] *= a;
  }
  double norm() const {
    double s = 0.0;
    for (double v : values_.flat()) s += v * v;
    return std::sqrt(s);
  }

 private:
  ParamLayout layout_;
  DenseArray values_;
};

// Checkpoint format: one line of JSON describing the layout (plus an optional
// provenance note such as the config hash), a newline, then the raw
// little-endian 64-bit floats.
void save_checkpoint(const std::string& path, const ParamVector& params,
                     const std::string& note = "");
ParamVector load_checkpoint(const std::string& path);

}  // namespace meco
