// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "check.hpp"
#include "pgf/glr.hpp"
#include "pgf/instance.hpp"
#include "pgf/kernels.hpp"

namespace pgf {
namespace {

using testing::bitwise_equal;
using testing::max_rel;
using testing::max_lane_rel;

GlrParams<double> one_lane(double a_log, double delta_bias) {
  auto p = GlrParams<double>::zeros(1, 1);
  p.a_log[0] = a_log;
  p.delta_bias[0] = delta_bias;
  p.selective_b = false;
  p.b_fixed[0] = 1.0;
  return p;
}

TEST(Discretize, HalfDecayClosedForm) {
  // A = -1 and Delta = ln 2 give Abar = 0.5 and a zoh factor of 0.5.
  auto p = one_lane(0.0, softplus_inverse(std::numbers::ln2));
  Tensor<double> u({1, 1}, std::vector<double>{1.0});
  const auto s = discretize(p, u);
  EXPECT_NEAR(s.a_bar[0], 0.5, 1e-15);
  EXPECT_NEAR(s.b_bar[0], 0.5, 1e-15);
  p.discretization = Discretization::euler;
  EXPECT_NEAR(discretize(p, u).b_bar[0], std::numbers::ln2, 1e-15);
}

TEST(Discretize, MatchesScalarReevaluation) {
  const auto p = random_params(3, 5, 21);
  const auto u = random_sequence(64, 3, 21, 1);
  const auto s = discretize(p, u);
  for (std::size_t t = 0; t < 64; ++t) {
    for (std::size_t d = 0; d < 3; ++d) {
      const double z = p.delta_weight[d] * u(t, d) + p.delta_bias[d];
      const double delta = std::log(1.0 + std::exp(z));
      EXPECT_NEAR(s.delta(t, d), delta, 1e-14 * delta);
      for (std::size_t n = 0; n < 5; ++n) {
        const double a = -std::exp(p.a_log(d, n));
        double bn = 0.0;
        for (std::size_t e = 0; e < 3; ++e) bn += p.b_weight(n, e) * u(t, e);
        const double ab = std::exp(delta * a);
        const double bb = (ab - 1.0) / a * bn * u(t, d);
        EXPECT_NEAR(s.a_bar(t, d, n), ab, 1e-14);
        EXPECT_NEAR(s.b_bar(t, d, n), bb, 1e-12 * std::max(1.0, std::abs(bb)));
        EXPECT_GT(s.a_bar(t, d, n), 0.0);
        EXPECT_LT(s.a_bar(t, d, n), 1.0);
      }
    }
  }
}

TEST(Discretize, NonFiniteInputNamesIndex) {
  const auto p = random_params(2, 2, 1);
  auto u = random_sequence(8, 2, 1, 1);
  u(5, 1) = std::nan("");
  try {
    discretize(p, u);
    FAIL() << "expected NonFiniteError";
  } catch (const NonFiniteError& e) {
    EXPECT_NE(std::string(e.what()).find("t=5, d=1"), std::string::npos) << e.what();
  }
}

TEST(Discretize, SoftplusStaysPositive) {
  for (const double z : {-700.0, -40.0, -1.0, 0.0, 1.0, 40.0, 700.0}) EXPECT_GT(softplus(z), 0.0) << z;
}

StepOperator<double> constant_ops(std::size_t len, double a, double b) {
  StepOperator<double> s(len, 1, 1);
  s.a_bar.fill(a);
  s.b_bar.fill(b);
  return s;
}

TEST(Scan, GeometricAccumulation) {
  const auto s = constant_ops(3, 0.5, 1.0);
  const std::vector<double> h0{0.0};
  const auto tr = scan_sequential(s, std::span<const double>(h0));
  EXPECT_EQ(tr.h[0], 1.0);
  EXPECT_EQ(tr.h[1], 1.5);
  EXPECT_EQ(tr.h[2], 1.75);
  EXPECT_EQ(tr.stored_states(), 3u);
  const auto st = scan_sequential(s, std::span<const double>(h0), TrajectoryKind::streaming);
  EXPECT_EQ(st.stored_states(), 1u);
  EXPECT_EQ(st.last()[0], 1.75);
}

TEST(Scan, ZeroDriveStaysZero) {
  const auto s = constant_ops(10, 0.3, 0.0);
  const std::vector<double> h0{0.0};
  const auto tr = scan_sequential(s, std::span<const double>(h0));
  for (const double v : tr.h.span()) EXPECT_EQ(v, 0.0);
}

TEST(Scan, ChunkInvariance) {
  const auto p = random_params(4, 8, 5);
  for (const std::size_t len : {20u, 256u, 4096u}) {
    const auto s = discretize(p, random_sequence(len, 4, 5, len));
    const std::vector<double> h0(32, 0.25);
    const auto ref = scan_sequential(s, std::span<const double>(h0));
    EXPECT_TRUE(bitwise_equal(scan_chunked(s, std::span<const double>(h0), 1).h, ref.h));
    for (const std::size_t chunk : {2u, 7u, 64u}) {
      EXPECT_LE(max_lane_rel(scan_chunked(s, std::span<const double>(h0), chunk).h, ref.h), 1e-12)
          << "chunk " << chunk << " L " << len;
    }
    EXPECT_LE(max_lane_rel(scan_chunked(s, std::span<const double>(h0), len).h, ref.h), 1e-13);
  }
}

TEST(Scan, ContractionWithoutDrive) {
  auto p = random_params(2, 4, 9);
  auto s = discretize(p, random_sequence(200, 2, 9, 2));
  s.b_bar.fill(0.0);
  std::vector<double> h0(8);
  std::mt19937_64 rng(3);
  for (auto& v : h0) v = std::normal_distribution<double>()(rng);
  const auto tr = scan_sequential(s, std::span<const double>(h0));
  double prev = 0.0;
  for (const double v : h0) prev += v * v;
  for (std::size_t t = 0; t < 200; ++t) {
    double norm = 0.0;
    for (const double v : tr.h.row(t)) norm += v * v;
    EXPECT_LE(norm, prev);
    prev = norm;
  }
}

TEST(Scan, AffinePairAssociativity) {
  const auto& kern = kernels::lanes<double>();
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> ua(0.0, 1.0), ub(-2.0, 2.0);
  const std::size_t n = 64;
  std::vector<double> pa(n), pb(n), qa(n), qb(n), ra(n), rb(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = ua(rng), qa[i] = ua(rng), ra[i] = ua(rng);
    pb[i] = ub(rng), qb[i] = ub(rng), rb[i] = ub(rng);
  }
  std::vector<double> la(n), lb(n), xa(n), xb(n);
  kern.compose_affine(pa.data(), pb.data(), qa.data(), qb.data(), la.data(), lb.data(), n);
  kern.compose_affine(la.data(), lb.data(), ra.data(), rb.data(), la.data(), lb.data(), n);
  kern.compose_affine(qa.data(), qb.data(), ra.data(), rb.data(), xa.data(), xb.data(), n);
  kern.compose_affine(pa.data(), pb.data(), xa.data(), xb.data(), xa.data(), xb.data(), n);
  for (std::size_t i = 0; i < n; ++i) {
    EXPECT_NEAR(la[i], xa[i], 1e-13 * std::abs(xa[i]));
    EXPECT_NEAR(lb[i], xb[i], 1e-13 * std::max(std::abs(xb[i]), 1e-300));
  }
}

TEST(OutputMap, ZeroStateGivesZero) {
  auto p = GlrParams<double>::zeros(2, 3);
  const std::vector<double> h(6, 0.0), u{0.7, -1.1};
  std::vector<double> y(2), y_hat(2);
  for (const auto act : {Activation::identity, Activation::silu}) {
    p.activation = act;
    output_map<double>(p, h, u, y, y_hat);
    EXPECT_EQ(y[0], 0.0);
    EXPECT_EQ(y[1], 0.0);
  }
}

TEST(OutputMap, IdentityProjection) {
  auto p = GlrParams<double>::zeros(2, 3);
  p.activation = Activation::identity;
  p.c_weight(0, 0) = 1.0;
  p.c_weight(1, 0) = 1.0;
  p.d_res[0] = 0.5;
  p.d_res[1] = -2.0;
  const std::vector<double> h{3.0, 9.0, 9.0, -4.0, 9.0, 9.0}, u{2.0, 1.0};
  std::vector<double> y(2), y_hat(2);
  output_map<double>(p, h, u, y, y_hat);
  EXPECT_EQ(y[0], 4.0);
  EXPECT_EQ(y[1], -6.0);
}

TEST(OutputMap, SiluAtOne) {
  EXPECT_NEAR(activate(Activation::silu, 1.0), 0.731058578, 1e-9);
  const double x = 0.37, e = 1e-6;
  const double fd = (activate(Activation::silu, x + e) - activate(Activation::silu, x - e)) / (2 * e);
  EXPECT_NEAR(activation_slope(Activation::silu, x), fd, 1e-9);
  const double fd2 =
      (activation_slope(Activation::silu, x + e) - activation_slope(Activation::silu, x - e)) / (2 * e);
  EXPECT_NEAR(activation_curvature(Activation::silu, x), fd2, 1e-8);
}

TEST(Params, ValidateRejectsBadShapes) {
  auto p = random_params(2, 3, 1);
  p.c_weight = Tensor<double>({3, 2});
  EXPECT_THROW(p.validate(), ShapeError);
  auto q = random_params(2, 3, 1);
  q.a_log[0] = INFINITY;
  EXPECT_THROW(q.validate(), NonFiniteError);
}

TEST(Params, ContinuousAIsStrictlyNegative) {
  const auto p = random_params(4, 16, 3);
  const auto a_cont = p.continuous_a();
  for (const double a : a_cont.span()) EXPECT_LT(a, 0.0);
}

}  // namespace
}  // namespace pgf
