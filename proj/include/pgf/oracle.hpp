// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used to check the library:
//   fd_jvp         central difference of an arbitrary sequence map
//   unrolled_jvp   dual-number forward mode that stores every intermediate
//   fd_hvp         central difference of unrolled_jvp
//   fd_param_grad  central difference of a scalar loss over one parameter tensor
//   dense_rtrl_time  wall time of dense N x N sensitivity propagation
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>

#include "pgf/glr.hpp"
#include "pgf/meter.hpp"
#include "pgf/param_grad.hpp"

namespace pgf::oracle {

/// Forward-mode dual number v + d*eps.
template <Real T>
struct Dual {
  T v{};
  T d{};

  friend Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
  friend Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
  friend Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
  friend Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }
  friend Dual operator*(T s, Dual a) { return {s * a.v, s * a.d}; }
};

template <Real T>
Dual<T> exp(Dual<T> x) {
  const T e = std::exp(x.v);
  return {e, e * x.d};
}

template <Real T>
Dual<T> expm1(Dual<T> x) {
  return {std::expm1(x.v), std::exp(x.v) * x.d};
}

template <Real T>
Dual<T> log1p(Dual<T> x) {
  return {std::log1p(x.v), x.d / (T(1) + x.v)};
}

template <Real T>
Dual<T> logistic(Dual<T> x) {
  const T s = x.v >= T(0) ? T(1) / (T(1) + std::exp(-x.v)) : std::exp(x.v) / (T(1) + std::exp(x.v));
  return {s, s * (T(1) - s) * x.d};
}

/// log(1 + e^x), split on the sign of x.
template <Real T>
Dual<T> softplus(Dual<T> x) {
  if (x.v > T(0)) return x + log1p(exp(Dual<T>{-x.v, -x.d}));
  return log1p(exp(x));
}

using SequenceMap = std::function<Tensor<double>(const Tensor<double>&)>;

/// (F(u + eps v) - F(u - eps v)) / (2 eps).
Tensor<double> fd_jvp(const SequenceMap& f, const Tensor<double>& u, const Tensor<double>& v, double eps);

struct UnrolledResult {
  Tensor<double> y;   // [L x D]
  Tensor<double> dy;  // [L x D]
};

/// Dual-number evaluation of the selective recurrence, retaining the per-step
/// Delta, Abar, bbar and h duals (all O(L D N)) under the meter's graph class.
UnrolledResult unrolled_jvp(const GlrParams<double>& p, const Tensor<double>& u, const Tensor<double>& du,
                            MemoryMeter* meter = nullptr);

/// (dy_v(u + eps w) - dy_v(u - eps w)) / (2 eps) with dy from unrolled_jvp.
Tensor<double> fd_hvp(const GlrParams<double>& p, const Tensor<double>& u, const Tensor<double>& v,
                      const Tensor<double>& w, double eps);

enum class ParamSlot { c_weight, a_log, b_weight, b_fixed };

Tensor<double>& param_tensor(GlrParams<double>& p, ParamSlot slot);

/// Central difference of loss(forward(p, u)) with respect to every entry of one
/// parameter tensor. Step per entry: eps * max(|theta|, 1).
Tensor<double> fd_param_grad(const GlrParams<double>& p, const Tensor<double>& u, LossKind loss, ParamSlot slot,
                             double eps);

/// Seconds for L steps of S_t = W S_{t-1} + diag(h_{t-1}) with dense N x N W and S
/// plus the primal h_t = W h_{t-1} + x_t. Single-threaded; minimum over `repeats`.
double dense_rtrl_time(std::size_t n, std::size_t len, std::uint64_t seed, int repeats = 3);

}  // namespace pgf::oracle
