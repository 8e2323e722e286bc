#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <vector>

#include "meco/errors.hpp"

namespace meco {

// Row-major dense array of 64-bit floats. Shapes are kept general but the
// library only ever exercises rank <= 2 (vectors, point batches, weight
// matrices).
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(std::vector<std::size_t> shape)
      : shape_(std::move(shape)), data_(count_(shape_), 0.0) {}
  DenseArray(std::vector<std::size_t> shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == count_(shape_), "DenseArray: shape/data size mismatch");
  }
  static DenseArray vector(std::vector<double> data) {
    std::size_t n = data.size();
    return DenseArray({n}, std::move(data));
  }
  static DenseArray matrix(std::size_t rows, std::size_t cols) {
    return DenseArray({rows, cols});
  }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  std::size_t rank() const { return shape_.size(); }

  // Rank <= 2 conventions: a rank-1 array is a single row.
  std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : (shape_.empty() ? 0 : 1); }
  std::size_t cols() const {
    if (shape_.size() == 2) return shape_[1];
    return shape_.empty() ? 0 : shape_[0];
  }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> flat() { return {data_.data(), data_.size()}; }
  std::span<const double> flat() const { return {data_.data(), data_.size()}; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool same_shape(const DenseArray& o) const { return shape_ == o.shape_; }

 private:
  static std::size_t count_(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (auto e : s) n *= e;
    return s.empty() ? 0 : n;
  }
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

// C = A * B for row-major buffers, A: n x k, B: k x m. accumulate=true adds
// into C instead of overwriting. Backed by Eigen in the implementation file.
void gemm(const double* a, std::size_t n, std::size_t k, const double* b, std::size_t m,
          double* c, bool accumulate);
// C += A^T * B, A: n x k, B: n x m, C: k x m.
void gemm_at_b(const double* a, std::size_t n, std::size_t k, const double* b, std::size_t m,
               double* c);
// C += A * B^T, A: n x k, B: m x k, C: n x m.
void gemm_a_bt(const double* a, std::size_t n, std::size_t k, const double* b, std::size_t m,
               double* c);

}  // namespace meco
