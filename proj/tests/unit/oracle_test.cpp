// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "check.hpp"
#include "pgf/instance.hpp"
#include "pgf/oracle.hpp"

namespace pgf {
namespace {

TEST(FdJvp, ExactOnLinearMaps) {
  const auto u = random_sequence(20, 3, 1, 1), v = random_sequence(20, 3, 1, 2);
  const oracle::SequenceMap f = [](const Tensor<double>& x) { return testing::scaled(x, 3.0); };
  const auto d = oracle::fd_jvp(f, u, v, 1e-3);
  EXPECT_LE(relative_error(d, testing::scaled(v, 3.0)), 1e-12);
}

TEST(FdJvp, ZeroDirection) {
  const auto p = random_params(2, 3, 2);
  const auto u = random_sequence(30, 2, 2, 1);
  const oracle::SequenceMap f = [&](const Tensor<double>& x) { return forward(p, x); };
  const auto d = oracle::fd_jvp(f, u, Tensor<double>(u.shape()), 1e-5);
  for (const double x : d.span()) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(oracle::fd_jvp(f, u, u, 0.0), Error);
}

TEST(FdJvp, StableAcrossStepSizes) {
  const auto p = random_params(2, 4, 3);
  const auto u = random_sequence(64, 2, 3, 1), v = random_sequence(64, 2, 3, 2);
  const oracle::SequenceMap f = [&](const Tensor<double>& x) { return forward(p, x); };
  const auto ref = oracle::unrolled_jvp(p, u, v).dy;
  for (const double eps : {1e-4, 1e-5, 1e-6}) EXPECT_LE(relative_error(oracle::fd_jvp(f, u, v, eps), ref), 1e-6);
}

TEST(Unrolled, PrimalMatchesForward) {
  const auto p = random_params(3, 4, 4);
  const auto u = random_sequence(50, 3, 4, 1);
  EXPECT_LE(relative_error(oracle::unrolled_jvp(p, u, u).y, forward(p, u)), 1e-14);
}

TEST(Unrolled, GraphMemoryLinearInLength) {
  const auto p = random_params(2, 4, 5);
  std::size_t peaks[2];
  for (int i = 0; i < 2; ++i) {
    const std::size_t len = 100u << i;
    MemoryMeter meter;
    oracle::unrolled_jvp(p, random_sequence(len, 2, 5, 1), random_sequence(len, 2, 5, 2), &meter);
    peaks[i] = meter.peak(MemClass::graph);
    EXPECT_EQ(peaks[i], len * (2 + 3 * 2 * 4) * sizeof(oracle::Dual<double>));
  }
  EXPECT_EQ(peaks[1], 2 * peaks[0]);
}

TEST(Dual, ElementaryDerivatives) {
  using D1 = oracle::Dual<double>;
  const D1 x{0.3, 1.0};
  EXPECT_NEAR(oracle::softplus(x).d, sigmoid(0.3), 1e-15);
  EXPECT_NEAR(oracle::softplus(D1{40.0, 1.0}).v, 40.0, 1e-15);
  EXPECT_NEAR(oracle::expm1(x).d, std::exp(0.3), 1e-15);
  EXPECT_NEAR((x / D1{2.0, 0.0}).d, 0.5, 1e-15);
  EXPECT_NEAR(oracle::logistic(D1{-2.0, 1.0}).d, sigmoid(-2.0) * (1 - sigmoid(-2.0)), 1e-15);
}

TEST(FdHvp, ZeroSecondDirection) {
  const auto p = random_params(2, 3, 6);
  const auto u = random_sequence(20, 2, 6, 1), v = random_sequence(20, 2, 6, 2);
  const auto d = oracle::fd_hvp(p, u, v, Tensor<double>(u.shape()), 1e-5);
  for (const double x : d.span()) EXPECT_EQ(x, 0.0);
}

TEST(FdParamGrad, ExactForQuadraticInC) {
  auto p = random_params(2, 3, 7, {Activation::identity});
  const auto u = random_sequence(10, 2, 7, 1);
  // Loss is quadratic in c, so a central difference is exact up to rounding.
  const auto fd = oracle::fd_param_grad(p, u, LossKind::mean, oracle::ParamSlot::c_weight, 1e-3);
  const std::vector<double> h0(6, 0.0);
  const auto h = scan_sequential(discretize(p, u), std::span<const double>(h0));
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t n = 0; n < 3; ++n) {
      double g = 0.0;
      for (std::size_t t = 0; t < 10; ++t) g += h.h(t, d, n) / 20.0;
      EXPECT_NEAR(fd(d, n), g, 1e-10);
    }
  }
}

TEST(DenseRtrl, CostGrowsWithStateSize) {
  const double small = oracle::dense_rtrl_time(8, 200, 1);
  const double large = oracle::dense_rtrl_time(64, 200, 1);
  EXPECT_GT(large, small);
  EXPECT_THROW(oracle::dense_rtrl_time(0, 10, 1), Error);
}

}  // namespace
}  // namespace pgf
