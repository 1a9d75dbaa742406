// SPDX-License-Identifier: Apache-2.0
//
// Log-shift stabilizer for stiff decay, error metrics, and the OLS slope test.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pgf/tangent.hpp"
#include "pgf/tose.hpp"

namespace pgf {

/// A value kept as exp(log_magnitude) * mantissa. The log track is double in
/// every precision; the mantissa has the working precision T.
template <Real T>
struct LogShiftedLane {
  double log_magnitude = 0.0;
  T mantissa{};

  T value() const { return static_cast<T>(std::exp(log_magnitude)) * mantissa; }
  /// Multiplies the represented value by exp(log_a) without touching the mantissa.
  void decay(double log_a) { log_magnitude += log_a; }
  /// Adds x to the represented value.
  void add(T x) { mantissa += x * static_cast<T>(std::exp(-log_magnitude)); }
  /// Folds the shift into the mantissa.
  void rebase() {
    mantissa = value();
    log_magnitude = 0.0;
  }
};

/// Largest |log shift| allowed inside one tile: 16 for float, 64 for double.
template <Real T>
constexpr double log_shift_budget() {
  return std::is_same_v<T, float> ? 16.0 : 64.0;
}

/// Per-step log decay log(Abar) = Delta * A, [L x D x N]. Well defined even where
/// Abar itself underflows.
template <Real T>
Tensor<T> log_decay(const Tensor<T>& a_cont, const StepOperator<T>& step, MemTag tag = {});

template <Real T>
struct StabilizedTrajectory {
  Tensor<T> h;   // [L x D x N]
  Tensor<T> dh;  // [L x D x N]
  std::size_t tile = 0;
  /// Reconstructed values that came out zero or subnormal from a nonzero mantissa.
  std::size_t underflowed = 0;
};

/// Dual-state evolution with cumulative decay kept in log space. Steps are grouped
/// into tiles of at most floor(budget / max|log_a|) steps; inside a tile each lane
/// accumulates sources rescaled by exp(-shift) and reconstructs on emission; the
/// shift is folded back at tile ends.
template <Real T>
StabilizedTrajectory<T> log_shift_scan(const Tensor<T>& log_a, const AugmentedOperator<T>& m, const DualState<T>& s0,
                                       double budget = log_shift_budget<T>(), MemTag tag = {});

/// Block-streamed JVP using log_shift_scan inside each block.
template <Real T>
JvpResult<T> pgf_jvp_stabilized(const GlrParams<T>& p, const Tensor<T>& u, const Tensor<T>& du,
                                const BlockPlan& plan, MemoryMeter* meter = nullptr);

template <Real T>
struct CumulativeProductReport {
  double log_product_min = 0.0;  // exact, accumulated in double log space
  T naive_product_min{};         // running product in precision T
  bool underflowed = false;      // naive product reached zero or a subnormal
  std::size_t first_underflow_step = 0;
};

/// Compares the naive running product of Abar with the log-space accumulation,
/// per lane over the full length.
template <Real T>
CumulativeProductReport<T> cumulative_product(const Tensor<T>& log_a);

/// ||x - y||_2 / max(||y||_2, 1e-30). Accumulated in double.
template <typename T>
double relative_error(std::span<const T> x, std::span<const T> y);

template <typename T>
double relative_error(const Tensor<T>& x, const Tensor<T>& y) {
  if (!(x.shape() == y.shape())) throw ShapeError("relative_error: shape " + x.shape().str() + " vs " + y.shape().str());
  return relative_error<T>(x.span(), y.span());
}

struct RegressionReport {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;  // two-sided, H0: slope = 0
  std::size_t n = 0;
  std::string method;  // "student_t" (n <= 30) or "normal"

  std::string to_json() const;
};

/// Ordinary least squares of ys on xs with a two-sided slope test. A zero
/// residual gives stderr 0 and t = 0 (slope 0) or +-inf.
RegressionReport ols_slope_test(std::span<const double> xs, std::span<const double> ys);

/// OLS of peak bytes against sequence length.
RegressionReport slope_report(std::span<const std::pair<std::size_t, std::size_t>> runs);

}  // namespace pgf
