// SPDX-License-Identifier: Apache-2.0
#include "pgf/param_grad.hpp"

#include <algorithm>
#include <vector>

namespace pgf {

template <Real T>
double loss_value(LossKind kind, const Tensor<T>& y) {
  double acc = 0.0;
  for (const T v : y.span()) acc += kind == LossKind::sum_squares ? 0.5 * double(v) * double(v) : double(v);
  return kind == LossKind::mean ? acc / static_cast<double>(y.size()) : acc;
}

template <Real T>
AdjointSource<T> AdjointSource<T>::from_loss(LossKind kind, std::size_t length, std::size_t channels) {
  if (kind == LossKind::sum_squares) {
    return AdjointSource([](std::size_t, std::span<const T> y, std::span<T> g) { std::copy(y.begin(), y.end(), g.begin()); });
  }
  const T w = T(1) / static_cast<T>(length * channels);
  return AdjointSource([w](std::size_t, std::span<const T>, std::span<T> g) { std::fill(g.begin(), g.end(), w); });
}

template <Real T>
AdjointSource<T> AdjointSource<T>::from_tensor(const Tensor<T>& g) {
  return AdjointSource([&g](std::size_t t, std::span<const T>, std::span<T> out) {
    const auto row = g.row(t);
    std::copy(row.begin(), row.end(), out.begin());
  });
}

template <Real T>
SensitivityFlow<T> SensitivityFlow<T>::zeros(const GlrParams<T>& p, GradOptions opts, MemTag tag) {
  const std::size_t D = p.channels, N = p.states;
  SensitivityFlow f{Tensor<T>({D, N}, tag), Tensor<T>({D, N}, tag)};
  if (p.selective_b && opts.full_b_weight) f.gamma_b = Tensor<T>({D, N, D}, tag);
  return f;
}

template <Real T>
GradAccumulators<T> GradAccumulators<T>::zeros(const GlrParams<T>& p, MemTag tag) {
  const std::size_t D = p.channels, N = p.states;
  const Shape b_shape = p.selective_b ? Shape{N, D} : Shape{D, N};
  return {Tensor<T>({D, N}, tag), Tensor<T>({D, N}, tag), Tensor<T>({D, N}, tag), Tensor<T>(b_shape, tag),
          Tensor<T>(b_shape, tag)};
}

template <Real T>
void grad_c_accumulate(const GlrParams<T>& p, std::span<const T> g_t, std::span<const T> y_hat_t,
                       std::span<const T> h_t, GradAccumulators<T>& acc) {
  const std::size_t D = p.channels, N = p.states;
  for (std::size_t d = 0; d < D; ++d) {
    const T gs = g_t[d] * activation_slope(p.activation, y_hat_t[d]);
    for (std::size_t n = 0; n < N; ++n) acc.g_c(d, n) += gs * h_t[d * N + n];
  }
}

template <Real T>
void gamma_evolve(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_t,
                  std::span<const T> a_bar_t, std::span<const T> delta_t, std::span<const T> h_prev,
                  SensitivityFlow<T>& flow, GradOptions opts) {
  const std::size_t D = p.channels, N = p.states;
  const bool zoh = p.discretization == Discretization::zoh;
  const bool full = p.selective_b && opts.full_b_weight;
  std::vector<T> b_sel(N);
  if (p.selective_b) selective_b_row<T>(p, u_t, b_sel);
  for (std::size_t d = 0; d < D; ++d) {
    const T x = u_t[d];
    const T delta = delta_t[d];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = d * N + n;
      const T a = a_cont(d, n);
      const T ab = a_bar_t[i];
      const T f = zoh ? std::expm1(delta * a) / a : delta;
      const T bn = p.selective_b ? b_sel[n] : p.b_fixed(d, n);
      const T s = bn * x;
      const T dab = delta * ab;
      const T df = zoh ? (dab - f) / a : T(0);
      flow.gamma_a[i] = ab * flow.gamma_a[i] + dab * h_prev[i] + s * df;
      if (!p.selective_b) {
        flow.gamma_b[i] = ab * flow.gamma_b[i] + f * x;
      } else if (full) {
        for (std::size_t e = 0; e < D; ++e) {
          T& g = flow.gamma_b(d, n, e);
          g = ab * g + f * (x * u_t[e]);
        }
      } else if (n < D) {
        flow.gamma_b[i] = ab * flow.gamma_b[i] + f * (x * u_t[n]);
      }
    }
  }
}

namespace {

template <Real T>
void accumulate_flows(const GlrParams<T>& p, std::span<const T> gs, const SensitivityFlow<T>& flow,
                      GradAccumulators<T>& acc, bool full) {
  const std::size_t D = p.channels, N = p.states;
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = d * N + n;
      const T w = gs[d] * p.c_weight[i];
      acc.g_a[i] += w * flow.gamma_a[i];
      if (!p.selective_b) {
        acc.g_b[i] += w * flow.gamma_b[i];
      } else if (full) {
        for (std::size_t e = 0; e < D; ++e) acc.g_b(n, e) += w * flow.gamma_b(d, n, e);
      } else if (n < D) {
        acc.g_b(n, n) += w * flow.gamma_b[i];
      }
    }
  }
}

}  // namespace

template <Real T>
GradAccumulators<T> accumulate_all(const GlrParams<T>& p, const Tensor<T>& u, const AdjointSource<T>& adjoint,
                                   const BlockPlan& plan, MemoryMeter* meter, GradOptions opts) {
  p.validate();
  if (u.shape().rank != 2 || u.dim(1) != p.channels) throw ShapeError("accumulate_all: u has shape " + u.shape().str());
  if (plan.length != u.dim(0)) throw Error("accumulate_all: plan length differs from input length");
  const std::size_t D = p.channels, N = p.states, lanes = p.lanes();
  const bool full = p.selective_b && opts.full_b_weight;
  const MemTag graph{meter, MemClass::graph};
  const Tensor<T> a_cont = p.continuous_a();

  auto acc = GradAccumulators<T>::zeros(p, MemTag{meter, MemClass::accumulator});
  if (!p.selective_b) {
    acc.g_b_mask.fill(T(1));
  } else {
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t e = 0; e < D; ++e) acc.g_b_mask(n, e) = (full || n == e) ? T(1) : T(0);
    }
  }

  Tensor<T> h({D, N}, graph);
  auto flow = SensitivityFlow<T>::zeros(p, opts, graph);
  const auto& kern = kernels::lanes<T>();
  std::vector<T> y(D), y_hat(D), g(D), gs(D);
  for (std::size_t blk = 0; blk < plan.n_blocks(); ++blk) {
    const std::size_t t0 = plan.begin(blk), count = plan.count(blk);
    const auto u_rows = u.rows(t0, count);
    StepOperator<T> step(count, D, N, graph);
    discretize_into(p, a_cont, u_rows, count, t0, step);
    for (std::size_t t = 0; t < count; ++t) {
      const auto u_t = u_rows.subspan(t * D, D);
      gamma_evolve<T>(p, a_cont, u_t, step.a_bar.row(t), step.delta.row(t), h.span(), flow, opts);
      kern.affine_step(step.a_bar.row(t).data(), step.b_bar.row(t).data(), h.data(), lanes);
      output_map<T>(p, h.span(), u_t, y, y_hat);
      adjoint(t0 + t, y, g);
      for (std::size_t d = 0; d < D; ++d) {
        if (!std::isfinite(y[d]) || !std::isfinite(g[d])) {
          throw NonFiniteError("accumulate_all: non-finite value at block " + std::to_string(blk) + ", step " +
                               std::to_string(t0 + t));
        }
        gs[d] = g[d] * activation_slope(p.activation, y_hat[d]);
      }
      grad_c_accumulate<T>(p, g, y_hat, h.span(), acc);
      accumulate_flows<T>(p, gs, flow, acc, full);
    }
  }
  for (std::size_t i = 0; i < lanes; ++i) acc.g_a_log[i] = acc.g_a[i] * a_cont[i];
  return acc;
}

#define PGF_INSTANTIATE_PARAM_GRAD(T)                                                                              \
  template double loss_value<T>(LossKind, const Tensor<T>&);                                                       \
  template class AdjointSource<T>;                                                                                 \
  template struct SensitivityFlow<T>;                                                                              \
  template struct GradAccumulators<T>;                                                                             \
  template void grad_c_accumulate<T>(const GlrParams<T>&, std::span<const T>, std::span<const T>,                 \
                                     std::span<const T>, GradAccumulators<T>&);                                    \
  template void gamma_evolve<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>, std::span<const T>,    \
                                std::span<const T>, std::span<const T>, SensitivityFlow<T>&, GradOptions);        \
  template GradAccumulators<T> accumulate_all<T>(const GlrParams<T>&, const Tensor<T>&, const AdjointSource<T>&,  \
                                                 const BlockPlan&, MemoryMeter*, GradOptions);

PGF_INSTANTIATE_PARAM_GRAD(float)
PGF_INSTANTIATE_PARAM_GRAD(double)

}  // namespace pgf
