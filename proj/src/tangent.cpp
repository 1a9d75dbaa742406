// SPDX-License-Identifier: Apache-2.0
#include "pgf/tangent.hpp"

#include <algorithm>
#include <string>
#include <vector>

namespace pgf {
namespace {

// Selective B_t and its variation along du_t; scratch spans of length N.
template <Real T>
void jacobian_step(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u, std::span<const T> du,
                   std::span<const T> a_bar, std::span<const T> delta, std::span<T> k_out, std::span<T> j_out,
                   std::span<T> b_sel, std::span<T> db_sel) {
  const std::size_t D = p.channels, N = p.states;
  if (p.selective_b) {
    selective_b_row<T>(p, u, b_sel);
    selective_b_row<T>(p, du, db_sel);
  }
  const bool zoh = p.discretization == Discretization::zoh;
  for (std::size_t d = 0; d < D; ++d) {
    const T x = u[d];
    const T dx = du[d];
    const T z = p.delta_weight[d] * x + p.delta_bias[d];
    const T d_delta = sigmoid(z) * (p.delta_weight[d] * dx);
    const T dl = delta[d];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t i = d * N + n;
      const T a = a_cont(d, n);
      const T ab = a_bar[i];
      const T bn = p.selective_b ? b_sel[n] : p.b_fixed(d, n);
      const T dbn = p.selective_b ? db_sel[n] : T(0);
      const T s = bn * x;
      const T ds = dbn * x + bn * dx;
      const T f = zoh ? std::expm1(dl * a) / a : dl;
      // d(Abar)/d(Delta) = Abar * A, and d(expm1(Delta A)/A)/d(Delta) = Abar.
      const T df = zoh ? ab * d_delta : d_delta;
      k_out[i] = ab * a * d_delta;
      j_out[i] = df * s + f * ds;
    }
  }
}

template <Real T>
void check_same_shape(const AugmentedOperator<T>& x, const AugmentedOperator<T>& y, const char* what) {
  if (!(x.a.shape() == y.a.shape())) {
    throw ShapeError(std::string(what) + ": operator shapes differ (" + x.a.shape().str() + " vs " +
                     y.a.shape().str() + ")");
  }
}

}  // namespace

template <Real T>
AugmentedOperator<T> AugmentedOperator<T>::identity(std::size_t len, std::size_t d, std::size_t n, MemTag tag) {
  AugmentedOperator m(len, d, n, tag);
  m.a.fill(T(1));
  return m;
}

template <Real T>
void selectivity_jacobian(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_t,
                          std::span<const T> du_t, std::span<const T> a_bar_t, std::span<const T> delta_t,
                          std::span<T> k_t, std::span<T> j_t) {
  std::vector<T> scratch(2 * p.states);
  jacobian_step<T>(p, a_cont, u_t, du_t, a_bar_t, delta_t, k_t, j_t, std::span<T>(scratch).first(p.states),
                   std::span<T>(scratch).last(p.states));
}

template <Real T>
void selectivity_jacobian_rows(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_rows,
                               std::span<const T> du_rows, const StepOperator<T>& step, Tensor<T>& k, Tensor<T>& j) {
  const std::size_t D = p.channels;
  std::vector<T> scratch(2 * p.states);
  const std::span<T> b_sel = std::span<T>(scratch).first(p.states);
  const std::span<T> db_sel = std::span<T>(scratch).last(p.states);
  for (std::size_t t = 0; t < step.length(); ++t) {
    jacobian_step<T>(p, a_cont, u_rows.subspan(t * D, D), du_rows.subspan(t * D, D), step.a_bar.row(t),
                     step.delta.row(t), k.row(t), j.row(t), b_sel, db_sel);
  }
}

template <Real T>
AugmentedOperator<T> augment(StepOperator<T> step, Tensor<T> k, Tensor<T> j) {
  if (!(step.a_bar.shape() == k.shape()) || !(step.b_bar.shape() == j.shape())) {
    throw ShapeError("augment: lane shapes differ");
  }
  AugmentedOperator<T> m;
  m.a = std::move(step.a_bar);
  m.k = std::move(k);
  m.b = std::move(step.b_bar);
  m.j = std::move(j);
  return m;
}

template <Real T>
UnpackedOperator<T> unpack(const AugmentedOperator<T>& m) {
  return {m.a, m.k, m.b, m.j};
}

template <Real T>
AugmentedOperator<T> compose(const AugmentedOperator<T>& m2, const AugmentedOperator<T>& m1) {
  check_same_shape(m2, m1, "compose");
  AugmentedOperator<T> out(m2.length(), m2.a.dim(1), m2.a.dim(2), m2.a.tag());
  const auto& kern = kernels::lanes<T>();
  for (std::size_t t = 0; t < m2.length(); ++t) kern.compose_augmented(m2.row(t), m1.row(t), out.row(t), m2.lanes());
  return out;
}

template <Real T>
DualState<T> apply(const AugmentedOperator<T>& m, std::size_t t, const DualState<T>& s) {
  if (s.h.size() != m.lanes() || s.dh.size() != m.lanes()) throw ShapeError("apply: state lane count mismatch");
  DualState<T> out = s;
  kernels::lanes<T>().dual_step(m.row(t), s.h.data(), s.dh.data(), out.h.data(), out.dh.data(), m.lanes());
  return out;
}

template <Real T>
DualState<T> fold(const AugmentedOperator<T>& m, DualState<T> s) {
  if (s.h.size() != m.lanes() || s.dh.size() != m.lanes()) throw ShapeError("fold: state lane count mismatch");
  const auto& kern = kernels::lanes<T>();
  for (std::size_t t = 0; t < m.length(); ++t) {
    kern.dual_step(m.row(t), s.h.data(), s.dh.data(), s.h.data(), s.dh.data(), m.lanes());
  }
  return s;
}

template <Real T>
void prefix_scan(AugmentedOperator<T>& m) {
  const auto& kern = kernels::lanes<T>();
  const std::size_t count = m.length();
  for (std::size_t off = 1; off < count; off <<= 1) {
    for (std::size_t i = count - 1; i >= off; --i) {
      const kernels::AugOut<T> later = m.row(i);
      kern.compose_augmented(later, m.row(i - off), later, m.lanes());
    }
  }
}

template <Real T>
void tangent_output(const GlrParams<T>& p, std::span<const T> dh_t, std::span<const T> du_t,
                    std::span<const T> y_hat_t, std::span<T> dy_t) {
  const std::size_t N = p.states;
  for (std::size_t d = 0; d < p.channels; ++d) {
    T acc = T(0);
    for (std::size_t n = 0; n < N; ++n) acc += p.c_weight(d, n) * dh_t[d * N + n];
    acc += p.d_res[d] * du_t[d];
    dy_t[d] = activation_slope(p.activation, y_hat_t[d]) * acc;
  }
}

template <Real T>
void jvp_block(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_rows,
               std::span<const T> du_rows, std::size_t count, std::size_t t_offset, DualState<T>& state,
               std::span<T> y_rows, std::span<T> dy_rows, ScanMode mode, MemTag tag) {
  const std::size_t D = p.channels, N = p.states, lanes = p.lanes();
  const auto& kern = kernels::lanes<T>();

  AugmentedOperator<T> m;
  {
    StepOperator<T> step(count, D, N, tag);
    discretize_into(p, a_cont, u_rows, count, t_offset, step);
    Tensor<T> k({count, D, N}, tag);
    Tensor<T> j({count, D, N}, tag);
    selectivity_jacobian_rows(p, a_cont, u_rows, du_rows, step, k, j);
    m = augment(std::move(step), std::move(k), std::move(j));
  }

  std::vector<T> y_hat(D);
  const auto emit = [&](std::size_t t) {
    const std::span<T> y = y_rows.subspan(t * D, D);
    const std::span<T> dy = dy_rows.subspan(t * D, D);
    output_map<T>(p, state.h.span(), u_rows.subspan(t * D, D), y, y_hat);
    tangent_output<T>(p, state.dh.span(), du_rows.subspan(t * D, D), y_hat, dy);
    for (std::size_t d = 0; d < D; ++d) {
      if (!std::isfinite(y[d]) || !std::isfinite(dy[d])) {
        throw NonFiniteError("non-finite state at step " + std::to_string(t_offset + t) + " (channel " +
                             std::to_string(d) + ")");
      }
    }
  };

  if (mode == ScanMode::fold) {
    for (std::size_t t = 0; t < count; ++t) {
      kern.dual_step(m.row(t), state.h.data(), state.dh.data(), state.h.data(), state.dh.data(), lanes);
      emit(t);
    }
  } else {
    prefix_scan(m);
    const Tensor<T> h_start = state.h;
    const Tensor<T> dh_start = state.dh;
    for (std::size_t t = 0; t < count; ++t) {
      kern.dual_step(m.row(t), h_start.data(), dh_start.data(), state.h.data(), state.dh.data(), lanes);
      emit(t);
    }
  }
}

template <Real T>
JvpResult<T> pgf_jvp_dense(const GlrParams<T>& p, const Tensor<T>& u, const Tensor<T>& du,
                           const DualState<T>* initial, ScanMode mode, MemTag tag) {
  p.validate();
  if (u.shape().rank != 2 || u.dim(1) != p.channels || u.dim(0) == 0) {
    throw ShapeError("pgf_jvp_dense: u has shape " + u.shape().str());
  }
  if (!(du.shape() == u.shape())) throw ShapeError("pgf_jvp_dense: du shape differs from u");
  require_finite(du, "du");
  const std::size_t len = u.dim(0), D = p.channels, N = p.states;
  MemTag io_tag{tag.meter, MemClass::io};
  JvpResult<T> r{Tensor<T>({len, D}, io_tag), Tensor<T>({len, D}, io_tag), DualState<T>::zeros(D, N, tag)};
  if (initial != nullptr) {
    if (initial->h.size() != p.lanes() || initial->dh.size() != p.lanes()) {
      throw ShapeError("pgf_jvp_dense: initial state lane count mismatch");
    }
    std::copy_n(initial->h.data(), p.lanes(), r.final_state.h.data());
    std::copy_n(initial->dh.data(), p.lanes(), r.final_state.dh.data());
  }
  jvp_block<T>(p, p.continuous_a(), u.span(), du.span(), len, 0, r.final_state, r.y.span(), r.dy.span(), mode, tag);
  return r;
}

#define PGF_INSTANTIATE_TANGENT(T)                                                                              \
  template struct AugmentedOperator<T>;                                                                         \
  template void selectivity_jacobian<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>,             \
                                        std::span<const T>, std::span<const T>, std::span<const T>, std::span<T>, \
                                        std::span<T>);                                                          \
  template void selectivity_jacobian_rows<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>,        \
                                             std::span<const T>, const StepOperator<T>&, Tensor<T>&, Tensor<T>&); \
  template AugmentedOperator<T> augment<T>(StepOperator<T>, Tensor<T>, Tensor<T>);                              \
  template UnpackedOperator<T> unpack<T>(const AugmentedOperator<T>&);                                          \
  template AugmentedOperator<T> compose<T>(const AugmentedOperator<T>&, const AugmentedOperator<T>&);           \
  template DualState<T> apply<T>(const AugmentedOperator<T>&, std::size_t, const DualState<T>&);                \
  template DualState<T> fold<T>(const AugmentedOperator<T>&, DualState<T>);                                     \
  template void prefix_scan<T>(AugmentedOperator<T>&);                                                          \
  template void tangent_output<T>(const GlrParams<T>&, std::span<const T>, std::span<const T>,                 \
                                  std::span<const T>, std::span<T>);                                            \
  template void jvp_block<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>, std::span<const T>,    \
                             std::size_t, std::size_t, DualState<T>&, std::span<T>, std::span<T>, ScanMode,     \
                             MemTag);                                                                           \
  template JvpResult<T> pgf_jvp_dense<T>(const GlrParams<T>&, const Tensor<T>&, const Tensor<T>&,               \
                                         const DualState<T>*, ScanMode, MemTag);

PGF_INSTANTIATE_TANGENT(float)
PGF_INSTANTIATE_TANGENT(double)

}  // namespace pgf
