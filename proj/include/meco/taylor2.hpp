#pragma once

#include <cmath>

namespace meco {

// Degree-2 truncated Taylor scalar: value v0 + v1*t + v2*t^2 along one probe
// direction. Running the tape on Taylor2 values (forward and backward) yields,
// in the adjoints, the directional first and second derivatives of every
// gradient entry; score matching uses one such sweep per input coordinate.
// Coefficient convention: d/dt = v1, d^2/dt^2 = 2*v2.
struct Taylor2 {
  double v0 = 0.0, v1 = 0.0, v2 = 0.0;

  Taylor2() = default;
  Taylor2(double a) : v0(a) {}  // NOLINT: implicit by design, mirrors double
  Taylor2(double a, double b, double c) : v0(a), v1(b), v2(c) {}

  Taylor2 operator-() const { return {-v0, -v1, -v2}; }
  Taylor2& operator+=(const Taylor2& o) {
    v0 += o.v0;
    v1 += o.v1;
    v2 += o.v2;
    return *this;
  }
  Taylor2& operator-=(const Taylor2& o) {
    v0 -= o.v0;
    v1 -= o.v1;
    v2 -= o.v2;
    return *this;
  }
  Taylor2& operator*=(const Taylor2& o) {
    double a0 = v0, a1 = v1;
    v2 = a0 * o.v2 + a1 * o.v1 + v2 * o.v0;
    v1 = a0 * o.v1 + a1 * o.v0;
    v0 = a0 * o.v0;
    return *this;
  }
};

inline Taylor2 operator+(Taylor2 a, const Taylor2& b) { return a += b; }
inline Taylor2 operator-(Taylor2 a, const Taylor2& b) { return a -= b; }
inline Taylor2 operator*(Taylor2 a, const Taylor2& b) { return a *= b; }

inline Taylor2 operator/(const Taylor2& a, const Taylor2& b) {
  double q0 = a.v0 / b.v0;
  double q1 = (a.v1 - q0 * b.v1) / b.v0;
  double q2 = (a.v2 - q1 * b.v1 - q0 * b.v2) / b.v0;
  return {q0, q1, q2};
}

inline Taylor2 exp(const Taylor2& u) {
  double e = std::exp(u.v0);
  return {e, e * u.v1, e * (u.v2 + 0.5 * u.v1 * u.v1)};
}

inline Taylor2 log(const Taylor2& u) {
  double c1 = u.v1 / u.v0;
  return {std::log(u.v0), c1, u.v2 / u.v0 - 0.5 * c1 * c1};
}

inline Taylor2 tanh(const Taylor2& u) {
  double y = std::tanh(u.v0);
  double d1 = 1.0 - y * y;          // tanh'
  double d2 = -2.0 * y * d1;        // tanh''
  return {y, d1 * u.v1, d1 * u.v2 + 0.5 * d2 * u.v1 * u.v1};
}

inline Taylor2 sigmoid(const Taylor2& u) {
  double s = u.v0 >= 0 ? 1.0 / (1.0 + std::exp(-u.v0)) : std::exp(u.v0) / (1.0 + std::exp(u.v0));
  double d1 = s * (1.0 - s);
  double d2 = d1 * (1.0 - 2.0 * s);
  return {s, d1 * u.v1, d1 * u.v2 + 0.5 * d2 * u.v1 * u.v1};
}

inline Taylor2 softplus(const Taylor2& u) {
  double y = u.v0 > 0 ? u.v0 + std::log1p(std::exp(-u.v0)) : std::log1p(std::exp(u.v0));
  double s = u.v0 >= 0 ? 1.0 / (1.0 + std::exp(-u.v0)) : std::exp(u.v0) / (1.0 + std::exp(u.v0));
  double d2 = s * (1.0 - s);
  return {y, s * u.v1, s * u.v2 + 0.5 * d2 * u.v1 * u.v1};
}

// swish(x) = x * sigmoid(x)
inline Taylor2 swish(const Taylor2& u) { return u * sigmoid(u); }

// Scalar shims so templated tape code reads identically for double and Taylor2.
namespace scalar {
inline double value(double x) { return x; }
inline double value(const Taylor2& x) { return x.v0; }
using std::exp;
using std::log;
using std::tanh;
inline double sigmoid(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}
inline double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
inline double swish(double x) { return x * sigmoid(x); }
inline Taylor2 exp(const Taylor2& x) { return meco::exp(x); }
inline Taylor2 log(const Taylor2& x) { return meco::log(x); }
inline Taylor2 tanh(const Taylor2& x) { return meco::tanh(x); }
inline Taylor2 sigmoid(const Taylor2& x) { return meco::sigmoid(x); }
inline Taylor2 softplus(const Taylor2& x) { return meco::softplus(x); }
inline Taylor2 swish(const Taylor2& x) { return meco::swish(x); }
}  // namespace scalar

}  // namespace meco
