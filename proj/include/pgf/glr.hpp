// SPDX-License-Identifier: Apache-2.0
//
// General linear recurrence h_t = A_t h_{t-1} + b_t with the selective (Mamba-style)
// diagonal instantiation:
//
//   Delta_t[d]   = softplus(delta_weight[d] * u_t[d] + delta_bias[d])
//   A[d,n]       = -exp(a_log[d,n])
//   Abar_t[d,n]  = exp(Delta_t[d] * A[d,n])
//   B_t[n]       = sum_e b_weight[n,e] u_t[e]        (selective)   or  b_fixed[d,n]
//   bbar_t[d,n]  = f_t[d,n] * B_t * u_t[d],  f = expm1(Delta A)/A (zoh)  or  Delta (euler)
//   y_hat_t[d]   = sum_n C[d,n] h_t[d,n] + D_res[d] u_t[d],   y_t = sigma(y_hat_t)
//
// Lane layout everywhere is row-major [t][d][n].
#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "pgf/common.hpp"
#include "pgf/tensor.hpp"

namespace pgf {

template <Real T>
struct GlrParams {
  std::size_t channels = 0;  // D
  std::size_t states = 0;    // N
  Tensor<T> a_log;           // [D x N]
  Tensor<T> b_weight;        // [N x D]
  Tensor<T> b_fixed;         // [D x N], used when selective_b is false
  Tensor<T> c_weight;        // [D x N]
  Tensor<T> d_res;           // [D]
  Tensor<T> delta_weight;    // [D]
  Tensor<T> delta_bias;      // [D]
  Activation activation = Activation::silu;
  Discretization discretization = Discretization::zoh;
  bool selective_b = true;

  static GlrParams zeros(std::size_t d, std::size_t n);

  std::size_t lanes() const { return channels * states; }
  /// Throws ShapeError / NonFiniteError.
  void validate() const;
  /// A = -exp(a_log), [D x N].
  Tensor<T> continuous_a() const;

  template <Real U>
  GlrParams<U> cast() const {
    GlrParams<U> p;
    p.channels = channels;
    p.states = states;
    p.a_log = a_log.template cast<U>();
    p.b_weight = b_weight.template cast<U>();
    p.b_fixed = b_fixed.template cast<U>();
    p.c_weight = c_weight.template cast<U>();
    p.d_res = d_res.template cast<U>();
    p.delta_weight = delta_weight.template cast<U>();
    p.delta_bias = delta_bias.template cast<U>();
    p.activation = activation;
    p.discretization = discretization;
    p.selective_b = selective_b;
    return p;
  }
};

/// Discretized per-step coefficients for L steps.
template <Real T>
struct StepOperator {
  Tensor<T> a_bar;  // [L x D x N], 0 < a_bar < 1
  Tensor<T> b_bar;  // [L x D x N]
  Tensor<T> delta;  // [L x D]

  StepOperator() = default;
  StepOperator(std::size_t len, std::size_t d, std::size_t n, MemTag tag = {})
      : a_bar({len, d, n}, tag), b_bar({len, d, n}, tag), delta({len, d}, tag) {}
  std::size_t length() const { return a_bar.dim(0); }
};

enum class TrajectoryKind { dense, streaming };

template <Real T>
struct StateTrajectory {
  TrajectoryKind kind = TrajectoryKind::dense;
  Tensor<T> h;  // dense: [L x D x N]; streaming: [D x N] (last state only)

  std::size_t stored_states() const { return kind == TrajectoryKind::dense ? h.dim(0) : 1; }
  std::span<const T> last() const {
    return kind == TrajectoryKind::dense ? h.row(h.dim(0) - 1) : h.span();
  }
};

// Scalar helpers shared by every module.

template <Real T>
T softplus(T z) {
  return z > T(0) ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

template <Real T>
T sigmoid(T z) {
  if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
  const T e = std::exp(z);
  return e / (T(1) + e);
}

template <Real T>
T activate(Activation act, T x) {
  return act == Activation::identity ? x : x * sigmoid(x);
}

/// sigma'(x)
template <Real T>
T activation_slope(Activation act, T x) {
  if (act == Activation::identity) return T(1);
  const T s = sigmoid(x);
  return s * (T(1) + x * (T(1) - s));
}

/// sigma''(x)
template <Real T>
T activation_curvature(Activation act, T x) {
  if (act == Activation::identity) return T(0);
  const T s = sigmoid(x);
  return s * (T(1) - s) * (T(2) + x * (T(1) - T(2) * s));
}

/// B_t[n] for the selective input projection: out[n] = sum_e b_weight[n,e] u_row[e].
template <Real T>
void selective_b_row(const GlrParams<T>& p, std::span<const T> u_row, std::span<T> out);

/// Discretizes rows [0, count) of u_rows (count x D, row-major) into `out` rows
/// [0, count). `a_cont` is continuous_a(). `t_offset` is only used for diagnostics.
template <Real T>
void discretize_into(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_rows,
                     std::size_t count, std::size_t t_offset, StepOperator<T>& out);

template <Real T>
StepOperator<T> discretize(const GlrParams<T>& p, const Tensor<T>& u, MemTag tag = {});

template <Real T>
StateTrajectory<T> scan_sequential(const StepOperator<T>& ops, std::span<const T> h0,
                                   TrajectoryKind kind = TrajectoryKind::dense, MemTag tag = {});

/// Same result as scan_sequential. Each chunk is solved by an inclusive
/// associative prefix scan over affine pairs; only the state crosses chunks.
template <Real T>
StateTrajectory<T> scan_chunked(const StepOperator<T>& ops, std::span<const T> h0, std::size_t chunk,
                                TrajectoryKind kind = TrajectoryKind::dense, MemTag tag = {});

/// y_t and pre-activation y_hat_t for one step.
template <Real T>
void output_map(const GlrParams<T>& p, std::span<const T> h_t, std::span<const T> u_t, std::span<T> y,
                std::span<T> y_hat);

/// Primal sequence map u -> y, [L x D]. h0 defaults to zero.
template <Real T>
Tensor<T> forward(const GlrParams<T>& p, const Tensor<T>& u, std::span<const T> h0 = {});

/// Throws NonFiniteError naming the first non-finite entry of a [L x D] tensor.
template <Real T>
void require_finite(const Tensor<T>& x, const char* name, std::size_t t_offset = 0);

}  // namespace pgf
