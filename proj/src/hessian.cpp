// SPDX-License-Identifier: Apache-2.0
#include "pgf/hessian.hpp"

#include <vector>

namespace pgf {

template <Real T>
void second_order_step(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_t,
                       std::span<const T> v_t, std::span<const T> w_t, SecondOrderStep<T>& out) {
  const std::size_t D = p.channels, N = p.states;
  const bool zoh = p.discretization == Discretization::zoh;
  std::vector<T> b(N), db_v(N), db_w(N);
  if (p.selective_b) {
    selective_b_row<T>(p, u_t, b);
    selective_b_row<T>(p, v_t, db_v);
    selective_b_row<T>(p, w_t, db_w);
  }
  for (std::size_t d = 0; d < D; ++d) {
    const T x = u_t[d];
    const T z = p.delta_weight[d] * x + p.delta_bias[d];
    const T sg = sigmoid(z);
    const T delta = softplus(z);
    const T dd_v = sg * (p.delta_weight[d] * v_t[d]);
    const T dd_w = sg * (p.delta_weight[d] * w_t[d]);
    const T dd_vw = sg * (T(1) - sg) * (p.delta_weight[d] * v_t[d]) * (p.delta_weight[d] * w_t[d]);
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = d * N + n;
      const T a = a_cont(d, n);
      const T ab = std::exp(delta * a);
      const T f = zoh ? std::expm1(delta * a) / a : delta;
      const T df_v = zoh ? ab * dd_v : dd_v;
      const T df_w = zoh ? ab * dd_w : dd_w;
      const T df_vw = zoh ? ab * a * dd_v * dd_w + ab * dd_vw : dd_vw;

      const T bn = p.selective_b ? b[n] : p.b_fixed(d, n);
      const T dbn_v = p.selective_b ? db_v[n] : T(0);
      const T dbn_w = p.selective_b ? db_w[n] : T(0);
      const T s = bn * x;
      const T ds_v = dbn_v * x + bn * v_t[d];
      const T ds_w = dbn_w * x + bn * w_t[d];
      const T ds_vw = dbn_v * w_t[d] + dbn_w * v_t[d];

      out.a_bar[i] = ab;
      out.b_bar[i] = f * s;
      out.k_v[i] = ab * a * dd_v;
      out.k_w[i] = ab * a * dd_w;
      out.k_vw[i] = ab * a * a * dd_v * dd_w + ab * a * dd_vw;
      out.j_v[i] = df_v * s + f * ds_v;
      out.j_w[i] = df_w * s + f * ds_w;
      out.j_vw[i] = df_vw * s + df_v * ds_w + df_w * ds_v + f * ds_vw;
    }
  }
}

template <Real T>
void hessian_source(const SecondOrderStep<T>& step, const TripleState<T>& prev, std::span<T> h_src) {
  for (std::size_t i = 0; i < h_src.size(); ++i) {
    h_src[i] = step.k_w[i] * prev.dh_v[i] + step.k_v[i] * prev.dh_w[i] + step.k_vw[i] * prev.h[i] + step.j_vw[i];
  }
}

template <Real T>
HvpResult<T> pgf_hvp(const GlrParams<T>& p, const Tensor<T>& u, const Tensor<T>& v, const Tensor<T>& w,
                     const BlockPlan& plan, MemoryMeter* meter) {
  p.validate();
  if (u.shape().rank != 2 || u.dim(1) != p.channels || !(v.shape() == u.shape()) || !(w.shape() == u.shape())) {
    throw ShapeError("pgf_hvp: u, v, w must share shape [L x D]");
  }
  if (plan.length != u.dim(0)) throw Error("pgf_hvp: plan length differs from input length");
  require_finite(v, "v");
  require_finite(w, "w");
  const std::size_t L = u.dim(0), D = p.channels, N = p.states, lanes = p.lanes();
  const MemTag graph{meter, MemClass::graph};
  const MemTag io{meter, MemClass::io};
  const Tensor<T> a_cont = p.continuous_a();

  HvpResult<T> r{Tensor<T>({L, D}, io), Tensor<T>({L, D}, io), Tensor<T>({L, D}, io), Tensor<T>({L, D}, io),
                 TripleState<T>::zeros(D, N, graph)};
  TripleState<T>& s = r.final_state;
  std::vector<T> y_hat(D), src(lanes);
  for (std::size_t blk = 0; blk < plan.n_blocks(); ++blk) {
    const std::size_t t0 = plan.begin(blk), count = plan.count(blk);
    std::vector<SecondOrderStep<T>> steps;
    steps.reserve(count);
    for (std::size_t t = 0; t < count; ++t) {
      steps.emplace_back(D, N, graph);
      const std::size_t row = t0 + t;
      for (std::size_t d = 0; d < D; ++d) {
        if (!std::isfinite(u(row, d))) {
          throw NonFiniteError("pgf_hvp: u[t=" + std::to_string(row) + ", d=" + std::to_string(d) + "] is not finite");
        }
      }
      second_order_step<T>(p, a_cont, u.row(row), v.row(row), w.row(row), steps.back());
    }
    for (std::size_t t = 0; t < count; ++t) {
      const auto& st = steps[t];
      const std::size_t row = t0 + t;
      hessian_source<T>(st, s, src);
      for (std::size_t i = 0; i < lanes; ++i) {
        const T h_prev = s.h[i];
        s.d2h[i] = st.a_bar[i] * s.d2h[i] + src[i];
        s.dh_v[i] = st.k_v[i] * h_prev + st.a_bar[i] * s.dh_v[i] + st.j_v[i];
        s.dh_w[i] = st.k_w[i] * h_prev + st.a_bar[i] * s.dh_w[i] + st.j_w[i];
        s.h[i] = st.a_bar[i] * h_prev + st.b_bar[i];
      }
      const auto u_t = u.row(row);
      output_map<T>(p, s.h.span(), u_t, r.y.row(row), y_hat);
      for (std::size_t d = 0; d < D; ++d) {
        T yv = p.d_res[d] * v(row, d), yw = p.d_res[d] * w(row, d), yvw = T(0);
        for (std::size_t n = 0; n < N; ++n) {
          const std::size_t i = d * N + n;
          yv += p.c_weight[i] * s.dh_v[i];
          yw += p.c_weight[i] * s.dh_w[i];
          yvw += p.c_weight[i] * s.d2h[i];
        }
        const T slope = activation_slope(p.activation, y_hat[d]);
        r.dy_v(row, d) = slope * yv;
        r.dy_w(row, d) = slope * yw;
        r.d2y(row, d) = activation_curvature(p.activation, y_hat[d]) * yv * yw + slope * yvw;
        if (!std::isfinite(r.d2y(row, d)) || !std::isfinite(r.y(row, d))) {
          throw NonFiniteError("pgf_hvp: non-finite value at block " + std::to_string(blk) + ", step " +
                               std::to_string(row));
        }
      }
    }
  }
  return r;
}

#define PGF_INSTANTIATE_HESSIAN(T)                                                                                \
  template void second_order_step<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>,                  \
                                     std::span<const T>, std::span<const T>, SecondOrderStep<T>&);               \
  template void hessian_source<T>(const SecondOrderStep<T>&, const TripleState<T>&, std::span<T>);               \
  template HvpResult<T> pgf_hvp<T>(const GlrParams<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                   const BlockPlan&, MemoryMeter*);

PGF_INSTANTIATE_HESSIAN(float)
PGF_INSTANTIATE_HESSIAN(double)

}  // namespace pgf
