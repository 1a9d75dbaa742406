// SPDX-License-Identifier: Apache-2.0
#include "pgf/oracle.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <random>
#include <vector>

#include "pgf/instance.hpp"

namespace pgf::oracle {

namespace {

Tensor<double> axpy(const Tensor<double>& u, double a, const Tensor<double>& v) {
  Tensor<double> out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] + a * v[i];
  return out;
}

Tensor<double> central(const Tensor<double>& plus, const Tensor<double>& minus, double eps) {
  Tensor<double> out(plus.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (plus[i] - minus[i]) / (2.0 * eps);
  return out;
}

}  // namespace

Tensor<double> fd_jvp(const SequenceMap& f, const Tensor<double>& u, const Tensor<double>& v, double eps) {
  if (!(eps > 0.0)) throw Error("fd_jvp: eps must be positive");
  if (!(u.shape() == v.shape())) throw ShapeError("fd_jvp: u and v differ in shape");
  return central(f(axpy(u, eps, v)), f(axpy(u, -eps, v)), eps);
}

UnrolledResult unrolled_jvp(const GlrParams<double>& p, const Tensor<double>& u, const Tensor<double>& du,
                            MemoryMeter* meter) {
  using D1 = Dual<double>;
  p.validate();
  if (u.shape().rank != 2 || u.dim(1) != p.channels || !(du.shape() == u.shape())) {
    throw ShapeError("unrolled_jvp: u/du shape mismatch");
  }
  const std::size_t L = u.dim(0), D = p.channels, N = p.states;
  const MemTag graph{meter, MemClass::graph};
  const MemTag io{meter, MemClass::io};
  const bool zoh = p.discretization == Discretization::zoh;

  Tensor<D1> delta({L, D}, graph);
  Tensor<D1> a_bar({L, D, N}, graph);
  Tensor<D1> b_bar({L, D, N}, graph);
  Tensor<D1> h({L, D, N}, graph);
  UnrolledResult r{Tensor<double>({L, D}, io), Tensor<double>({L, D}, io)};

  std::vector<D1> b_sel(N);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t n = 0; n < N && p.selective_b; ++n) {
      D1 acc{};
      for (std::size_t e = 0; e < D; ++e) acc = acc + p.b_weight(n, e) * D1{u(t, e), du(t, e)};
      b_sel[n] = acc;
    }
    for (std::size_t d = 0; d < D; ++d) {
      const D1 x{u(t, d), du(t, d)};
      delta(t, d) = softplus(p.delta_weight[d] * x + D1{p.delta_bias[d], 0.0});
      D1 y_hat = p.d_res[d] * x;
      for (std::size_t n = 0; n < N; ++n) {
        const double a = -std::exp(p.a_log(d, n));
        const D1 da = a * delta(t, d);
        a_bar(t, d, n) = exp(da);
        const D1 f = zoh ? (1.0 / a) * expm1(da) : delta(t, d);
        const D1 bn = p.selective_b ? b_sel[n] : D1{p.b_fixed(d, n), 0.0};
        b_bar(t, d, n) = f * (bn * x);
        const D1 h_prev = t == 0 ? D1{} : h(t - 1, d, n);
        h(t, d, n) = a_bar(t, d, n) * h_prev + b_bar(t, d, n);
        y_hat = y_hat + p.c_weight(d, n) * h(t, d, n);
      }
      const D1 y = p.activation == Activation::identity ? y_hat : y_hat * logistic(y_hat);
      r.y(t, d) = y.v;
      r.dy(t, d) = y.d;
    }
  }
  return r;
}

Tensor<double> fd_hvp(const GlrParams<double>& p, const Tensor<double>& u, const Tensor<double>& v,
                      const Tensor<double>& w, double eps) {
  if (!(eps > 0.0)) throw Error("fd_hvp: eps must be positive");
  const auto plus = unrolled_jvp(p, axpy(u, eps, w), v);
  const auto minus = unrolled_jvp(p, axpy(u, -eps, w), v);
  return central(plus.dy, minus.dy, eps);
}

Tensor<double>& param_tensor(GlrParams<double>& p, ParamSlot slot) {
  switch (slot) {
    case ParamSlot::c_weight:
      return p.c_weight;
    case ParamSlot::a_log:
      return p.a_log;
    case ParamSlot::b_weight:
      return p.b_weight;
    case ParamSlot::b_fixed:
      return p.b_fixed;
  }
  throw Error("param_tensor: unknown slot");
}

Tensor<double> fd_param_grad(const GlrParams<double>& p, const Tensor<double>& u, LossKind loss, ParamSlot slot,
                             double eps) {
  if (!(eps > 0.0)) throw Error("fd_param_grad: eps must be positive");
  GlrParams<double> q = p;
  Tensor<double>& theta = param_tensor(q, slot);
  Tensor<double> g(theta.shape());
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double orig = theta[i];
    const double step = eps * std::max(std::abs(orig), 1.0);
    theta[i] = orig + step;
    const double lp = loss_value(loss, forward(q, u));
    theta[i] = orig - step;
    const double lm = loss_value(loss, forward(q, u));
    theta[i] = orig;
    g[i] = (lp - lm) / (2.0 * step);
  }
  return g;
}

double dense_rtrl_time(std::size_t n, std::size_t len, std::uint64_t seed, int repeats) {
  if (n == 0 || len == 0) throw Error("dense_rtrl_time: N and L must be positive");
  auto rng = make_engine(seed, 0xd7e1);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> w(n * n), x(len * n);
  for (auto& v : w) v = dist(rng);
  for (auto& v : x) v = dist(rng);
  double row_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::abs(w[i * n + j]);
    row_max = std::max(row_max, s);
  }
  for (auto& v : w) v *= 0.9 / row_max;  // infinity-norm bound keeps the spectral radius below 0.9

  double best = std::numeric_limits<double>::infinity();
  volatile double sink = 0.0;
  for (int r = 0; r < std::max(repeats, 1); ++r) {
    std::vector<double> h(n, 0.0), h_next(n), s(n * n, 0.0), s_next(n * n);
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t t = 0; t < len; ++t) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
          double acc = i == k ? h[i] : 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += w[i * n + j] * s[j * n + k];
          s_next[i * n + k] = acc;
        }
      }
      for (std::size_t i = 0; i < n; ++i) {
        double acc = x[t * n + i];
        for (std::size_t j = 0; j < n; ++j) acc += w[i * n + j] * h[j];
        h_next[i] = acc;
      }
      s.swap(s_next);
      h.swap(h_next);
    }
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    sink = sink + s[0] + h[0];
  }
  (void)sink;
  return best;
}

}  // namespace pgf::oracle
