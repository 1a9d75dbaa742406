// SPDX-License-Identifier: Apache-2.0
#include "pgf/glr.hpp"

#include <algorithm>
#include <string>

#include "pgf/kernels.hpp"

namespace pgf {

std::string to_string(Activation a) { return a == Activation::identity ? "identity" : "silu"; }
std::string to_string(Discretization d) { return d == Discretization::zoh ? "zoh" : "euler"; }
std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "silu") return Activation::silu;
  throw Error("unknown activation '" + s + "' (expected identity|silu)");
}

Discretization parse_discretization(const std::string& s) {
  if (s == "zoh") return Discretization::zoh;
  if (s == "euler") return Discretization::euler;
  throw Error("unknown discretization '" + s + "' (expected zoh|euler)");
}

Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw Error("unknown precision '" + s + "' (expected f32|f64)");
}

template <Real T>
GlrParams<T> GlrParams<T>::zeros(std::size_t d, std::size_t n) {
  GlrParams p;
  p.channels = d;
  p.states = n;
  p.a_log = Tensor<T>({d, n});
  p.b_weight = Tensor<T>({n, d});
  p.b_fixed = Tensor<T>({d, n});
  p.c_weight = Tensor<T>({d, n});
  p.d_res = Tensor<T>({d});
  p.delta_weight = Tensor<T>({d});
  p.delta_bias = Tensor<T>({d});
  return p;
}

namespace {

template <Real T>
void check_shape(const Tensor<T>& t, Shape expected, const char* name) {
  if (!(t.shape() == expected)) {
    throw ShapeError(std::string("GlrParams.") + name + " has shape " + t.shape().str() + ", expected " +
                     expected.str());
  }
}

template <Real T>
void check_finite(const Tensor<T>& t, const char* name) {
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      throw NonFiniteError(std::string("GlrParams.") + name + "[" + std::to_string(i) + "] is not finite");
    }
  }
}

}  // namespace

template <Real T>
void GlrParams<T>::validate() const {
  if (channels == 0 || states == 0) throw ShapeError("GlrParams: D and N must be positive");
  const std::size_t d = channels, n = states;
  check_shape(a_log, {d, n}, "a_log");
  check_shape(b_weight, {n, d}, "b_weight");
  check_shape(b_fixed, {d, n}, "b_fixed");
  check_shape(c_weight, {d, n}, "c_weight");
  check_shape(d_res, {d}, "d_res");
  check_shape(delta_weight, {d}, "delta_weight");
  check_shape(delta_bias, {d}, "delta_bias");
  check_finite(a_log, "a_log");
  check_finite(b_weight, "b_weight");
  check_finite(b_fixed, "b_fixed");
  check_finite(c_weight, "c_weight");
  check_finite(d_res, "d_res");
  check_finite(delta_weight, "delta_weight");
  check_finite(delta_bias, "delta_bias");
}

template <Real T>
Tensor<T> GlrParams<T>::continuous_a() const {
  Tensor<T> a({channels, states});
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = -std::exp(a_log[i]);
  return a;
}

template <Real T>
void require_finite(const Tensor<T>& x, const char* name, std::size_t t_offset) {
  const std::size_t cols = x.shape().rank >= 2 ? x.dim(1) : 1;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      throw NonFiniteError(std::string(name) + "[t=" + std::to_string(t_offset + i / cols) +
                           ", d=" + std::to_string(i % cols) + "] is not finite");
    }
  }
}

template <Real T>
void selective_b_row(const GlrParams<T>& p, std::span<const T> u_row, std::span<T> out) {
  const std::size_t d = p.channels;
  for (std::size_t n = 0; n < p.states; ++n) {
    T acc = T(0);
    for (std::size_t e = 0; e < d; ++e) acc += p.b_weight(n, e) * u_row[e];
    out[n] = acc;
  }
}

template <Real T>
void discretize_into(const GlrParams<T>& p, const Tensor<T>& a_cont, std::span<const T> u_rows,
                     std::size_t count, std::size_t t_offset, StepOperator<T>& out) {
  const std::size_t D = p.channels, N = p.states;
  std::vector<T> b_sel(N);
  for (std::size_t t = 0; t < count; ++t) {
    const std::span<const T> u = u_rows.subspan(t * D, D);
    for (std::size_t d = 0; d < D; ++d) {
      if (!std::isfinite(u[d])) {
        throw NonFiniteError("u[t=" + std::to_string(t_offset + t) + ", d=" + std::to_string(d) + "] is not finite");
      }
    }
    if (p.selective_b) selective_b_row<T>(p, u, b_sel);
    for (std::size_t d = 0; d < D; ++d) {
      const T x = u[d];
      const T delta = softplus(p.delta_weight[d] * x + p.delta_bias[d]);
      out.delta(t, d) = delta;
      for (std::size_t n = 0; n < N; ++n) {
        const T a = a_cont(d, n);
        const T da = delta * a;
        const T bn = p.selective_b ? b_sel[n] : p.b_fixed(d, n);
        const T f = p.discretization == Discretization::zoh ? std::expm1(da) / a : delta;
        out.a_bar(t, d, n) = std::exp(da);
        out.b_bar(t, d, n) = f * (bn * x);
      }
    }
  }
}

template <Real T>
StepOperator<T> discretize(const GlrParams<T>& p, const Tensor<T>& u, MemTag tag) {
  p.validate();
  if (u.shape().rank != 2 || u.dim(1) != p.channels || u.dim(0) == 0) {
    throw ShapeError("discretize: u has shape " + u.shape().str() + ", expected [L x " + std::to_string(p.channels) +
                     "] with L >= 1");
  }
  StepOperator<T> out(u.dim(0), p.channels, p.states, tag);
  discretize_into(p, p.continuous_a(), u.span(), u.dim(0), 0, out);
  return out;
}

namespace {

template <Real T>
void check_h0(const StepOperator<T>& ops, std::span<const T> h0) {
  const std::size_t lanes = ops.a_bar.dim(1) * ops.a_bar.dim(2);
  if (h0.size() != lanes) {
    throw ShapeError("scan: h0 has " + std::to_string(h0.size()) + " lanes, expected " + std::to_string(lanes));
  }
}

template <Real T>
StateTrajectory<T> make_trajectory(const StepOperator<T>& ops, TrajectoryKind kind, MemTag tag) {
  StateTrajectory<T> traj;
  traj.kind = kind;
  const std::size_t d = ops.a_bar.dim(1), n = ops.a_bar.dim(2);
  traj.h = kind == TrajectoryKind::dense ? Tensor<T>({ops.length(), d, n}, tag) : Tensor<T>({d, n}, tag);
  return traj;
}

}  // namespace

template <Real T>
StateTrajectory<T> scan_sequential(const StepOperator<T>& ops, std::span<const T> h0, TrajectoryKind kind,
                                   MemTag tag) {
  check_h0(ops, h0);
  const auto& kern = kernels::lanes<T>();
  const std::size_t lanes = h0.size();
  auto traj = make_trajectory(ops, kind, tag);
  std::vector<T> h(h0.begin(), h0.end());
  for (std::size_t t = 0; t < ops.length(); ++t) {
    kern.affine_step(ops.a_bar.row(t).data(), ops.b_bar.row(t).data(), h.data(), lanes);
    if (kind == TrajectoryKind::dense) std::copy(h.begin(), h.end(), traj.h.row(t).begin());
  }
  if (kind == TrajectoryKind::streaming) std::copy(h.begin(), h.end(), traj.h.data());
  return traj;
}

template <Real T>
StateTrajectory<T> scan_chunked(const StepOperator<T>& ops, std::span<const T> h0, std::size_t chunk,
                                TrajectoryKind kind, MemTag tag) {
  if (chunk == 0) throw Error("scan_chunked: chunk must be >= 1");
  check_h0(ops, h0);
  const auto& kern = kernels::lanes<T>();
  const std::size_t lanes = h0.size();
  const std::size_t len = ops.length();
  auto traj = make_trajectory(ops, kind, tag);

  Tensor<T> pa({std::min(chunk, len), lanes}, tag);
  Tensor<T> pb({std::min(chunk, len), lanes}, tag);
  std::vector<T> h_start(h0.begin(), h0.end());
  std::vector<T> h(lanes);

  for (std::size_t begin = 0; begin < len; begin += chunk) {
    const std::size_t count = std::min(chunk, len - begin);
    std::copy_n(ops.a_bar.row(begin).data(), count * lanes, pa.data());
    std::copy_n(ops.b_bar.row(begin).data(), count * lanes, pb.data());
    // Inclusive Hillis-Steele scan: row i becomes op_i o ... o op_0. Iterating i
    // downwards keeps row i-off unmodified within a round.
    for (std::size_t off = 1; off < count; off <<= 1) {
      for (std::size_t i = count - 1; i >= off; --i) {
        T* ai = pa.row(i).data();
        T* bi = pb.row(i).data();
        kern.compose_affine(ai, bi, pa.row(i - off).data(), pb.row(i - off).data(), ai, bi, lanes);
      }
    }
    for (std::size_t i = 0; i < count; ++i) {
      std::copy(h_start.begin(), h_start.end(), h.begin());
      kern.affine_step(pa.row(i).data(), pb.row(i).data(), h.data(), lanes);
      if (kind == TrajectoryKind::dense) std::copy(h.begin(), h.end(), traj.h.row(begin + i).begin());
    }
    std::copy(h.begin(), h.end(), h_start.begin());
  }
  if (kind == TrajectoryKind::streaming) std::copy(h_start.begin(), h_start.end(), traj.h.data());
  return traj;
}

template <Real T>
void output_map(const GlrParams<T>& p, std::span<const T> h_t, std::span<const T> u_t, std::span<T> y,
                std::span<T> y_hat) {
  const std::size_t N = p.states;
  for (std::size_t d = 0; d < p.channels; ++d) {
    T acc = T(0);
    for (std::size_t n = 0; n < N; ++n) acc += p.c_weight(d, n) * h_t[d * N + n];
    acc += p.d_res[d] * u_t[d];
    y_hat[d] = acc;
    y[d] = activate(p.activation, acc);
  }
}

template <Real T>
Tensor<T> forward(const GlrParams<T>& p, const Tensor<T>& u, std::span<const T> h0) {
  const auto ops = discretize(p, u);
  const auto& kern = kernels::lanes<T>();
  const std::size_t lanes = p.lanes(), D = p.channels;
  std::vector<T> h(lanes, T(0));
  if (!h0.empty()) {
    if (h0.size() != lanes) throw ShapeError("forward: h0 lane count mismatch");
    std::copy(h0.begin(), h0.end(), h.begin());
  }
  Tensor<T> y({u.dim(0), D});
  std::vector<T> y_hat(D);
  for (std::size_t t = 0; t < u.dim(0); ++t) {
    kern.affine_step(ops.a_bar.row(t).data(), ops.b_bar.row(t).data(), h.data(), lanes);
    output_map<T>(p, h, u.row(t), y.row(t), y_hat);
  }
  return y;
}

#define PGF_INSTANTIATE_GLR(T)                                                                                 \
  template struct GlrParams<T>;                                                                                \
  template void require_finite<T>(const Tensor<T>&, const char*, std::size_t);                                 \
  template void selective_b_row<T>(const GlrParams<T>&, std::span<const T>, std::span<T>);                     \
  template void discretize_into<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>, std::size_t,     \
                                   std::size_t, StepOperator<T>&);                                             \
  template StepOperator<T> discretize<T>(const GlrParams<T>&, const Tensor<T>&, MemTag);                       \
  template StateTrajectory<T> scan_sequential<T>(const StepOperator<T>&, std::span<const T>, TrajectoryKind,   \
                                                 MemTag);                                                      \
  template StateTrajectory<T> scan_chunked<T>(const StepOperator<T>&, std::span<const T>, std::size_t,         \
                                              TrajectoryKind, MemTag);                                         \
  template void output_map<T>(const GlrParams<T>&, std::span<const T>, std::span<const T>, std::span<T>,       \
                              std::span<T>);                                                                   \
  template Tensor<T> forward<T>(const GlrParams<T>&, const Tensor<T>&, std::span<const T>);

PGF_INSTANTIATE_GLR(float)
PGF_INSTANTIATE_GLR(double)

}  // namespace pgf
