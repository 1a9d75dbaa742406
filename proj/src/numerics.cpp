// SPDX-License-Identifier: Apache-2.0
#include "pgf/numerics.hpp"

#include <algorithm>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <limits>
#include <nlohmann/json.hpp>
#include <stdexcept>

namespace pgf {

template <Real T>
Tensor<T> log_decay(const Tensor<T>& a_cont, const StepOperator<T>& step, MemTag tag) {
  const std::size_t L = step.length(), D = a_cont.dim(0), N = a_cont.dim(1);
  Tensor<T> out({L, D, N}, tag);
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t d = 0; d < D; ++d) {
      const T delta = step.delta(t, d);
      for (std::size_t n = 0; n < N; ++n) out(t, d, n) = delta * a_cont(d, n);
    }
  }
  return out;
}

namespace {

template <Real T>
bool lost(T v, T mantissa) {
  return mantissa != T(0) && (v == T(0) || std::fpclassify(v) == FP_SUBNORMAL);
}

}  // namespace

template <Real T>
StabilizedTrajectory<T> log_shift_scan(const Tensor<T>& log_a, const AugmentedOperator<T>& m, const DualState<T>& s0,
                                       double budget, MemTag tag) {
  const std::size_t L = m.length(), D = m.a.dim(1), N = m.a.dim(2), lanes = D * N;
  if (!(log_a.shape() == m.a.shape())) throw ShapeError("log_shift_scan: log_a shape differs from operator");
  if (s0.h.size() != lanes || s0.dh.size() != lanes) throw ShapeError("log_shift_scan: state lane count mismatch");
  if (!(budget > 0.0)) throw Error("log_shift_scan: budget must be positive");

  double worst = 0.0;
  for (const T v : log_a.span()) worst = std::max(worst, std::abs(static_cast<double>(v)));
  const std::size_t tile =
      worst == 0.0 ? L : std::clamp<std::size_t>(static_cast<std::size_t>(budget / worst), 1, L);

  StabilizedTrajectory<T> out{Tensor<T>({L, D, N}, tag), Tensor<T>({L, D, N}, tag), tile, 0};
  std::vector<LogShiftedLane<T>> h(lanes), dh(lanes);
  std::vector<T> h_prev(s0.h.span().begin(), s0.h.span().end());
  for (std::size_t i = 0; i < lanes; ++i) {
    h[i].mantissa = s0.h[i];
    dh[i].mantissa = s0.dh[i];
  }

  for (std::size_t t0 = 0; t0 < L; t0 += tile) {
    const std::size_t t1 = std::min(L, t0 + tile);
    for (std::size_t t = t0; t < t1; ++t) {
      const auto la = log_a.row(t), k = m.k.row(t), b = m.b.row(t), j = m.j.row(t);
      auto h_out = out.h.row(t), dh_out = out.dh.row(t);
      for (std::size_t i = 0; i < lanes; ++i) {
        const T src = k[i] * h_prev[i] + j[i];
        h[i].decay(la[i]);
        dh[i].decay(la[i]);
        if (h[i].log_magnitude < -budget * (1.0 + 1e-12)) throw std::logic_error("log_shift_scan: tile exceeded its log budget");
        h[i].add(b[i]);
        dh[i].add(src);
        h_out[i] = h[i].value();
        dh_out[i] = dh[i].value();
        out.underflowed += lost(h_out[i], h[i].mantissa) + lost(dh_out[i], dh[i].mantissa);
        h_prev[i] = h_out[i];
      }
    }
    for (std::size_t i = 0; i < lanes; ++i) {
      h[i].rebase();
      dh[i].rebase();
    }
  }
  return out;
}

template <Real T>
JvpResult<T> pgf_jvp_stabilized(const GlrParams<T>& p, const Tensor<T>& u, const Tensor<T>& du,
                                const BlockPlan& plan, MemoryMeter* meter) {
  p.validate();
  if (u.shape().rank != 2 || u.dim(1) != p.channels || !(du.shape() == u.shape())) {
    throw ShapeError("pgf_jvp_stabilized: u/du shape mismatch");
  }
  if (plan.length != u.dim(0)) throw Error("pgf_jvp_stabilized: plan length differs from input length");
  require_finite(du, "du");
  const std::size_t D = p.channels, N = p.states;
  const MemTag graph{meter, MemClass::graph};
  const MemTag io{meter, MemClass::io};
  const Tensor<T> a_cont = p.continuous_a();

  JvpResult<T> r{Tensor<T>({u.dim(0), D}, io), Tensor<T>({u.dim(0), D}, io), DualState<T>::zeros(D, N, graph)};
  std::vector<T> y_hat(D);
  for (std::size_t blk = 0; blk < plan.n_blocks(); ++blk) {
    const std::size_t t0 = plan.begin(blk), count = plan.count(blk);
    const auto u_rows = u.rows(t0, count), du_rows = du.rows(t0, count);
    StepOperator<T> step(count, D, N, graph);
    discretize_into(p, a_cont, u_rows, count, t0, step);
    Tensor<T> k({count, D, N}, graph), j({count, D, N}, graph);
    selectivity_jacobian_rows(p, a_cont, u_rows, du_rows, step, k, j);
    const Tensor<T> la = log_decay(a_cont, step, graph);
    const AugmentedOperator<T> m = augment(std::move(step), std::move(k), std::move(j));
    const auto traj = log_shift_scan(la, m, r.final_state, log_shift_budget<T>(), graph);
    for (std::size_t t = 0; t < count; ++t) {
      output_map<T>(p, traj.h.row(t), u_rows.subspan(t * D, D), r.y.row(t0 + t), y_hat);
      tangent_output<T>(p, traj.dh.row(t), du_rows.subspan(t * D, D), y_hat, r.dy.row(t0 + t));
    }
    const auto h_last = traj.h.row(count - 1), dh_last = traj.dh.row(count - 1);
    std::copy(h_last.begin(), h_last.end(), r.final_state.h.data());
    std::copy(dh_last.begin(), dh_last.end(), r.final_state.dh.data());
  }
  return r;
}

template <Real T>
CumulativeProductReport<T> cumulative_product(const Tensor<T>& log_a) {
  const std::size_t L = log_a.dim(0), lanes = log_a.dim(1) * log_a.dim(2);
  CumulativeProductReport<T> rep;
  rep.naive_product_min = T(1);
  std::vector<double> lp(lanes, 0.0);
  std::vector<T> prod(lanes, T(1));
  for (std::size_t t = 0; t < L; ++t) {
    const auto la = log_a.row(t);
    for (std::size_t i = 0; i < lanes; ++i) {
      lp[i] += static_cast<double>(la[i]);
      prod[i] *= std::exp(la[i]);
      if (!rep.underflowed && (prod[i] == T(0) || std::fpclassify(prod[i]) == FP_SUBNORMAL)) {
        rep.underflowed = true;
        rep.first_underflow_step = t;
      }
    }
  }
  rep.log_product_min = *std::min_element(lp.begin(), lp.end());
  rep.naive_product_min = *std::min_element(prod.begin(), prod.end());
  return rep;
}

template <typename T>
double relative_error(std::span<const T> x, std::span<const T> y) {
  if (x.size() != y.size()) throw ShapeError("relative_error: size mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double diff = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    num += diff * diff;
    den += static_cast<double>(y[i]) * static_cast<double>(y[i]);
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-30);
}

std::string RegressionReport::to_json() const {
  const auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  };
  nlohmann::json j{{"slope", num(slope)},   {"intercept", num(intercept)}, {"stderr", num(stderr_slope)},
                   {"t_stat", num(t_stat)}, {"p_value", num(p_value)},     {"n", n},
                   {"method", method}};
  return j.dump();
}

RegressionReport ols_slope_test(std::span<const double> xs, std::span<const double> ys) {
  const std::size_t n = xs.size();
  if (ys.size() != n) throw ShapeError("ols_slope_test: xs and ys differ in length");
  if (n < 3) throw Error("ols_slope_test: need at least 3 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw Error("ols_slope_test: xs are all equal");

  RegressionReport r;
  r.n = n;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  double sse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = ys[i] - (r.intercept + r.slope * xs[i]);
    sse += e * e;
  }
  const double dof = static_cast<double>(n - 2);
  r.stderr_slope = std::sqrt(sse / dof / sxx);
  r.method = n <= 30 ? "student_t" : "normal";
  if (r.stderr_slope == 0.0) {
    r.t_stat = r.slope == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), r.slope);
    r.p_value = r.slope == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.t_stat = r.slope / r.stderr_slope;
  const double a = std::abs(r.t_stat);
  if (n <= 30) {
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(boost::math::students_t(dof), a));
  } else {
    r.p_value = 2.0 * boost::math::cdf(boost::math::complement(boost::math::normal(), a));
  }
  r.p_value = std::clamp(r.p_value, 0.0, 1.0);
  return r;
}

RegressionReport slope_report(std::span<const std::pair<std::size_t, std::size_t>> runs) {
  std::vector<double> xs, ys;
  for (const auto& [len, peak] : runs) {
    xs.push_back(static_cast<double>(len));
    ys.push_back(static_cast<double>(peak));
  }
  return ols_slope_test(xs, ys);
}

#define PGF_INSTANTIATE_NUMERICS(T)                                                                                 \
  template Tensor<T> log_decay<T>(const Tensor<T>&, const StepOperator<T>&, MemTag);                                \
  template StabilizedTrajectory<T> log_shift_scan<T>(const Tensor<T>&, const AugmentedOperator<T>&,                 \
                                                     const DualState<T>&, double, MemTag);                          \
  template JvpResult<T> pgf_jvp_stabilized<T>(const GlrParams<T>&, const Tensor<T>&, const Tensor<T>&,              \
                                              const BlockPlan&, MemoryMeter*);                                      \
  template CumulativeProductReport<T> cumulative_product<T>(const Tensor<T>&);                                      \
  template double relative_error<T>(std::span<const T>, std::span<const T>);

PGF_INSTANTIATE_NUMERICS(float)
PGF_INSTANTIATE_NUMERICS(double)

}  // namespace pgf
