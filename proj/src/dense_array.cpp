#include "meco/dense_array.hpp"

#include <Eigen/Dense>

namespace meco {

namespace {
using MatMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using MutMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
}  // namespace

void gemm(const double* a, std::size_t n, std::size_t k, const double* b, std::size_t m, double* c,
          bool accumulate) {
  MatMap A(a, n, k), B(b, k, m);
  MutMap C(c, n, m);
  if (accumulate)
    C.noalias() += A * B;
  else
    C.noalias() = A * B;
}

void gemm_at_b(const double* a, std::size_t n, std::size_t k, const double* b, std::size_t m,
               double* c) {
  MatMap A(a, n, k), B(b, n, m);
  MutMap C(c, k, m);
  C.noalias() += A.transpose() * B;
}

void gemm_a_bt(const double* a, std::size_t n, std::size_t k, const double* b, std::size_t m,
               double* c) {
  MatMap A(a, n, k), B(b, m, k);
  MutMap C(c, n, m);
  C.noalias() += A * B.transpose();
}

}  // namespace meco
