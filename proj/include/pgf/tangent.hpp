// SPDX-License-Identifier: Apache-2.0
//
// First-order forward sensitivity of the selective recurrence.
//
// Per lane the joint primal/tangent update is the 3x3 lower-triangular operator
//
//   [h ]     [a 0 b] [h ]
//   [dh]  =  [k a j] [dh]
//   [1 ]     [0 0 1] [1 ]
//
// with a = Abar_t, b = bbar_t, k = (dAbar_t/du_t) du_t, j = (dbbar_t/du_t) du_t.
// Only the four scalars (a, k, b, j) are stored; the product of two such operators
// is again of this form, which is what makes the joint system associative.
#pragma once

#include <cstddef>
#include <span>

#include "pgf/glr.hpp"
#include "pgf/kernels.hpp"

namespace pgf {

template <Real T>
struct AugmentedOperator {
  Tensor<T> a, k, b, j;  // each [L x D x N]

  AugmentedOperator() = default;
  AugmentedOperator(std::size_t len, std::size_t d, std::size_t n, MemTag tag = {})
      : a({len, d, n}, tag), k({len, d, n}, tag), b({len, d, n}, tag), j({len, d, n}, tag) {}

  /// (1, 0, 0, 0) in every lane.
  static AugmentedOperator identity(std::size_t len, std::size_t d, std::size_t n, MemTag tag = {});

  std::size_t length() const { return a.dim(0); }
  std::size_t lanes() const { return a.dim(1) * a.dim(2); }
  kernels::AugIn<T> row(std::size_t t) const {
    return {a.row(t).data(), k.row(t).data(), b.row(t).data(), j.row(t).data()};
  }
  kernels::AugOut<T> row(std::size_t t) {
    return {a.row(t).data(), k.row(t).data(), b.row(t).data(), j.row(t).data()};
  }
};

template <Real T>
struct DualState {
  Tensor<T> h;   // [D x N]
  Tensor<T> dh;  // [D x N]

  static DualState zeros(std::size_t d, std::size_t n, MemTag tag = {}) {
    return {Tensor<T>({d, n}, tag), Tensor<T>({d, n}, tag)};
  }
};

/// K_t and j_t for one step. `a_cont` is params.continuous_a(); `a_bar_t` and
/// `delta_t` are the step's rows from discretize.
template <Real T>
void selectivity_jacobian(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_t,
                          std::span<const T> du_t, std::span<const T> a_bar_t, std::span<const T> delta_t,
                          std::span<T> k_t, std::span<T> j_t);

/// K, j for every step of a discretized sequence.
template <Real T>
void selectivity_jacobian_rows(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_rows,
                               std::span<const T> du_rows, const StepOperator<T>& step, Tensor<T>& k, Tensor<T>& j);

/// Packs (step.a_bar, K, step.b_bar, j) into an augmented operator. Consumes its inputs.
template <Real T>
AugmentedOperator<T> augment(StepOperator<T> step, Tensor<T> k, Tensor<T> j);

template <Real T>
struct UnpackedOperator {
  Tensor<T> a_bar, k, b_bar, j;
};

template <Real T>
UnpackedOperator<T> unpack(const AugmentedOperator<T>& m);

/// Row-wise block product m2 o m1 (m2 applied after m1).
template <Real T>
AugmentedOperator<T> compose(const AugmentedOperator<T>& m2, const AugmentedOperator<T>& m1);

/// Applies row t of m to a dual state: h' = a h + b, dh' = k h + a dh + j.
template <Real T>
DualState<T> apply(const AugmentedOperator<T>& m, std::size_t t, const DualState<T>& s);

/// Applies rows 0..L-1 in order.
template <Real T>
DualState<T> fold(const AugmentedOperator<T>& m, DualState<T> s);

/// In-place inclusive associative scan: row t becomes M_t o ... o M_0.
template <Real T>
void prefix_scan(AugmentedOperator<T>& m);

/// dy_t[d] = sigma'(y_hat_t[d]) * (sum_n C[d,n] dh_t[d,n] + D_res[d] du_t[d]).
template <Real T>
void tangent_output(const GlrParams<T>& p, std::span<const T> dh_t, std::span<const T> du_t,
                    std::span<const T> y_hat_t, std::span<T> dy_t);

enum class ScanMode { fold, associative };

/// Evolves `state` through `count` steps of (u_rows, du_rows), writing y and dy
/// rows. Every per-step intermediate is allocated under `tag` and released on
/// return; only `state` survives. Shared by the dense entry point and TOSE.
template <Real T>
void jvp_block(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_rows,
               std::span<const T> du_rows, std::size_t count, std::size_t t_offset, DualState<T>& state,
               std::span<T> y_rows, std::span<T> dy_rows, ScanMode mode = ScanMode::fold, MemTag tag = {});

template <Real T>
struct JvpResult {
  Tensor<T> y;   // [L x D]
  Tensor<T> dy;  // [L x D]
  DualState<T> final_state;
};

/// Full-sequence primal + tangent evaluation holding all L operators at once.
template <Real T>
JvpResult<T> pgf_jvp_dense(const GlrParams<T>& p, const Tensor<T>& u, const Tensor<T>& du,
                           const DualState<T>* initial = nullptr, ScanMode mode = ScanMode::fold, MemTag tag = {});

}  // namespace pgf
