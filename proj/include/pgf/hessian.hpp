// SPDX-License-Identifier: Apache-2.0
//
// Second-order forward sensitivity along two input directions v, w:
//
//   d2h_t = Abar_t d2h_{t-1} + H_t
//   H_t   = (d_w Abar_t) dh^v_{t-1} + (d_v Abar_t) dh^w_{t-1} + (d2 Abar_t) h_{t-1} + d2 bbar_t
//
// with the curvature of Abar and bbar taken through the softplus Delta path and
// the bilinear B_t u_t product.
#pragma once

#include <cstddef>
#include <span>

#include "pgf/glr.hpp"
#include "pgf/tose.hpp"

namespace pgf {

template <Real T>
struct TripleState {
  Tensor<T> h, dh_v, dh_w, d2h;  // each [D x N]

  static TripleState zeros(std::size_t d, std::size_t n, MemTag tag = {}) {
    return {Tensor<T>({d, n}, tag), Tensor<T>({d, n}, tag), Tensor<T>({d, n}, tag), Tensor<T>({d, n}, tag)};
  }
};

/// First- and second-order step coefficients for one step.
template <Real T>
struct SecondOrderStep {
  Tensor<T> a_bar, b_bar;      // [D x N]
  Tensor<T> k_v, k_w, j_v, j_w;  // first-order variations of Abar and bbar
  Tensor<T> k_vw, j_vw;        // second-order variations of Abar and bbar

  SecondOrderStep(std::size_t d, std::size_t n, MemTag tag = {})
      : a_bar({d, n}, tag), b_bar({d, n}, tag), k_v({d, n}, tag), k_w({d, n}, tag), j_v({d, n}, tag),
        j_w({d, n}, tag), k_vw({d, n}, tag), j_vw({d, n}, tag) {}
};

template <Real T>
void second_order_step(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_t,
                       std::span<const T> v_t, std::span<const T> w_t, SecondOrderStep<T>& out);

/// H_t from the step coefficients and the previous triple state.
template <Real T>
void hessian_source(const SecondOrderStep<T>& step, const TripleState<T>& prev, std::span<T> h_src);

template <Real T>
struct HvpResult {
  Tensor<T> y, dy_v, dy_w, d2y;  // each [L x D]
  TripleState<T> final_state;
};

/// Streams the triple scan over `plan`. d2y_t = sigma''(y_hat) dyhat_v dyhat_w + sigma'(y_hat) C d2h_t.
template <Real T>
HvpResult<T> pgf_hvp(const GlrParams<T>& p, const Tensor<T>& u, const Tensor<T>& v, const Tensor<T>& w,
                     const BlockPlan& plan, MemoryMeter* meter = nullptr);

}  // namespace pgf
