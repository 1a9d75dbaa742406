// SPDX-License-Identifier: Apache-2.0
//
// Other members of the general linear recurrence family, differentiated with the
// same machinery.
//
// Linear attention (features already mapped to positive values):
//   h_t = h_{t-1} + k_t v_t^T,  z_t = z_{t-1} + k_t,  y_t = q_t^T h_t / q_t^T z_t
//
// Decaying recurrence with a scalar per-step decay alpha_t in (0, 1]:
//   h_t = alpha_t h_{t-1} + k_t v_t^T
// mapped onto the augmented operator with a = alpha_t, k = d alpha_t,
// b = k_t v_t^T, j = dk_t v_t^T + k_t dv_t^T.
#pragma once

#include <cstddef>
#include <span>

#include "pgf/tangent.hpp"
#include "pgf/tose.hpp"

namespace pgf {

/// elu(x) + 1, elementwise.
Tensor<double> elu_plus_one(const Tensor<double>& x);

struct LinAttInputs {
  Tensor<double> keys;     // [L x Nk]
  Tensor<double> values;   // [L x Nv]
  Tensor<double> queries;  // [L x Nk]
};

struct LinAttState {
  Tensor<double> h, dh;  // [Nk x Nv]
  Tensor<double> z, dz;  // [Nk]

  static LinAttState zeros(std::size_t nk, std::size_t nv, MemTag tag = {});
};

/// Primal outputs [L x Nv].
Tensor<double> linatt_forward(const LinAttInputs& x);

struct LinAttResult {
  Tensor<double> y, dy;  // [L x Nv]
};

/// Joint primal/tangent evaluation with the quotient-rule output tangent,
/// streamed over `plan`. Throws pgf::Error if |q^T z| < 1e-12.
LinAttResult linatt_jvp(const LinAttInputs& x, const LinAttInputs& dx, const BlockPlan& plan,
                        MemoryMeter* meter = nullptr);

struct DecayInputs {
  Tensor<double> alphas;  // [L]
  Tensor<double> keys;    // [L x Nk]
  Tensor<double> values;  // [L x Nv]
};

/// Augmented operators for steps [t0, t0 + count), lanes Nk x Nv.
AugmentedOperator<double> decay_operators(const DecayInputs& x, const DecayInputs& dx, std::size_t t0,
                                          std::size_t count, MemTag tag = {});

/// Primal states [L x Nk x Nv] from h_0 = 0.
Tensor<double> decay_forward(const DecayInputs& x);

struct DecayResult {
  Tensor<double> h, dh;  // [L x Nk x Nv]
};

/// Per block: build operators, prefix-scan them, apply to the carried state.
DecayResult decay_jvp(const DecayInputs& x, const DecayInputs& dx, const BlockPlan& plan,
                      MemoryMeter* meter = nullptr);

/// alpha_t = exp(-softplus(w . x_t)) and its tangent along dx: returns (alphas, dalphas).
std::pair<Tensor<double>, Tensor<double>> selective_decay(std::span<const double> w, const Tensor<double>& x,
                                                          const Tensor<double>& dx);

}  // namespace pgf
