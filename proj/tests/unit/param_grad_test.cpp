// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include "check.hpp"
#include "pgf/instance.hpp"
#include "pgf/oracle.hpp"
#include "pgf/param_grad.hpp"

namespace pgf {
namespace {

using testing::bitwise_equal;

double grad_rel(const Tensor<double>& g, const Tensor<double>& fd, const Tensor<double>* mask = nullptr) {
  double worst = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (mask != nullptr && (*mask)[i] == 0.0) continue;
    worst = std::max(worst, std::abs(g[i] - fd[i]) / std::max(std::abs(fd[i]), 1e-12));
  }
  return worst;
}

GradAccumulators<double> run(const GlrParams<double>& p, const Tensor<double>& u, LossKind loss, std::size_t block,
                             bool full = true, MemoryMeter* meter = nullptr) {
  const auto adj = AdjointSource<double>::from_loss(loss, u.dim(0), u.dim(1));
  return accumulate_all(p, u, adj, BlockPlan::make(u.dim(0), block), meter, {full});
}

}  // namespace

std::string param_part(LossKind k) { return k == LossKind::sum_squares ? "sum_squares" : "mean"; }

namespace {

class GradFd : public ::testing::TestWithParam<std::tuple<Discretization, bool, LossKind>> {};

TEST_P(GradFd, MatchesParameterFiniteDifferences) {
  const auto [disc, selective, loss] = GetParam();
  const auto p = random_params(2, 4, 61, {Activation::silu, disc, selective});
  const auto u = random_sequence(128, 2, 61, 1);
  const auto g = run(p, u, loss, 32);
  EXPECT_LE(grad_rel(g.g_c, oracle::fd_param_grad(p, u, loss, oracle::ParamSlot::c_weight, 1e-5)), 1e-5);
  EXPECT_LE(grad_rel(g.g_a_log, oracle::fd_param_grad(p, u, loss, oracle::ParamSlot::a_log, 1e-5)), 1e-5);
  const auto slot = selective ? oracle::ParamSlot::b_weight : oracle::ParamSlot::b_fixed;
  EXPECT_LE(grad_rel(g.g_b, oracle::fd_param_grad(p, u, loss, slot, 1e-5)), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(Modes, GradFd,
                         ::testing::Combine(::testing::Values(Discretization::zoh, Discretization::euler),
                                            ::testing::Bool(),
                                            ::testing::Values(LossKind::sum_squares, LossKind::mean)),
                         testing::ModeName());

TEST(Grad, ZeroAdjointGivesZero) {
  const auto p = random_params(2, 3, 1);
  const auto u = random_sequence(50, 2, 1, 1);
  const Tensor<double> zero({50, 2});
  const auto g = accumulate_all(p, u, AdjointSource<double>::from_tensor(zero), BlockPlan::make(50, 8), nullptr, {true});
  for (const auto* t : {&g.g_c, &g.g_a, &g.g_a_log, &g.g_b}) {
    for (const double v : t->span()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Grad, SingleStepIdentityOuterProduct) {
  const auto p = random_params(2, 3, 2, {Activation::identity});
  const auto u = random_sequence(1, 2, 2, 1);
  Tensor<double> adj({1, 2}, std::vector<double>{0.7, -1.3});
  auto acc = GradAccumulators<double>::zeros(p);
  const auto s = discretize(p, u);
  std::vector<double> y(2), y_hat(2);
  output_map<double>(p, s.b_bar.row(0), u.row(0), y, y_hat);
  grad_c_accumulate<double>(p, adj.row(0), y_hat, s.b_bar.row(0), acc);
  for (std::size_t d = 0; d < 2; ++d) {
    for (std::size_t n = 0; n < 3; ++n) EXPECT_EQ(acc.g_c(d, n), adj(0, d) * s.b_bar(0, d, n));
  }
}

TEST(Grad, GammaBaseCase) {
  const auto p = random_params(2, 3, 3);
  const auto u = random_sequence(1, 2, 3, 1);
  const auto s = discretize(p, u);
  const auto a = p.continuous_a();
  auto flow = SensitivityFlow<double>::zeros(p, {});
  std::vector<double> h0(6);
  for (std::size_t i = 0; i < 6; ++i) h0[i] = 0.3 * double(i) - 0.5;
  gamma_evolve<double>(p, a, u.row(0), s.a_bar.row(0), s.delta.row(0), h0, flow);
  std::vector<double> b(3);
  selective_b_row<double>(p, u.row(0), b);
  for (std::size_t d = 0; d < 2; ++d) {
    const double delta = s.delta(0, d);
    for (std::size_t n = 0; n < 3; ++n) {
      const double ab = s.a_bar(0, d, n), f = std::expm1(delta * a(d, n)) / a(d, n);
      const double db = b[n] * u(0, d) * (delta * ab - f) / a(d, n);
      EXPECT_NEAR(flow.gamma_a(d, n), delta * ab * h0[d * 3 + n] + db, 1e-15);
    }
  }
}

TEST(Grad, GammaAMatchesStateFiniteDifference) {
  const auto p = random_params(2, 3, 4);
  const auto u = random_sequence(40, 2, 4, 1);
  const auto a = p.continuous_a();
  const auto s = discretize(p, u);
  auto flow = SensitivityFlow<double>::zeros(p, {});
  std::vector<double> h(6, 0.0);
  for (std::size_t t = 0; t < 40; ++t) {
    gamma_evolve<double>(p, a, u.row(t), s.a_bar.row(t), s.delta.row(t), h, flow);
    for (std::size_t i = 0; i < 6; ++i) h[i] = s.a_bar.row(t)[i] * h[i] + s.b_bar.row(t)[i];
  }
  // dh/dA per lane: perturb a_log so that A moves by +-eps.
  const double eps = 1e-6;
  for (std::size_t i = 0; i < 6; ++i) {
    auto pp = p, pm = p;
    pp.a_log[i] = std::log(-(a[i] + eps));
    pm.a_log[i] = std::log(-(a[i] - eps));
    const auto hp = scan_sequential(discretize(pp, u), std::span<const double>(std::vector<double>(6, 0.0)));
    const auto hm = scan_sequential(discretize(pm, u), std::span<const double>(std::vector<double>(6, 0.0)));
    const double fd = (hp.last()[i] - hm.last()[i]) / (2 * eps);
    EXPECT_NEAR(flow.gamma_a[i], fd, 1e-5 * std::max(std::abs(fd), 1e-3));
  }
}

TEST(Grad, BlockInvariance) {
  const auto p = random_params(3, 4, 5);
  const auto u = random_sequence(300, 3, 5, 1);
  const auto a = run(p, u, LossKind::sum_squares, 300), b = run(p, u, LossKind::sum_squares, 16);
  EXPECT_LE(relative_error(b.g_c, a.g_c), 1e-12);
  EXPECT_LE(relative_error(b.g_a, a.g_a), 1e-12);
  EXPECT_LE(relative_error(b.g_b, a.g_b), 1e-12);
}

TEST(Grad, LinearInAdjoint) {
  const auto p = random_params(2, 4, 6);
  const auto u = random_sequence(80, 2, 6, 1);
  const auto g = random_sequence(80, 2, 6, 2);
  const auto g2 = testing::scaled(g, 2.5);
  const auto a = accumulate_all(p, u, AdjointSource<double>::from_tensor(g), BlockPlan::make(80, 16), nullptr, {true});
  const auto b = accumulate_all(p, u, AdjointSource<double>::from_tensor(g2), BlockPlan::make(80, 16), nullptr, {true});
  EXPECT_LE(relative_error(b.g_c, testing::scaled(a.g_c, 2.5)), 1e-13);
  EXPECT_LE(relative_error(b.g_a, testing::scaled(a.g_a, 2.5)), 1e-13);
  EXPECT_LE(relative_error(b.g_b, testing::scaled(a.g_b, 2.5)), 1e-13);
}

TEST(Grad, DiagonalTrackingAgreesWithFullOnDiagonal) {
  const auto p = random_params(3, 5, 7);
  const auto u = random_sequence(60, 3, 7, 1);
  const auto full = run(p, u, LossKind::sum_squares, 16, true);
  const auto diag = run(p, u, LossKind::sum_squares, 16, false);
  for (std::size_t n = 0; n < 5; ++n) {
    for (std::size_t e = 0; e < 3; ++e) {
      if (n == e) {
        EXPECT_EQ(diag.g_b_mask(n, e), 1.0);
        EXPECT_NEAR(diag.g_b(n, e), full.g_b(n, e), 1e-13 * std::abs(full.g_b(n, e)));
      } else {
        EXPECT_EQ(diag.g_b_mask(n, e), 0.0);
        EXPECT_EQ(diag.g_b(n, e), 0.0);
      }
    }
  }
}

TEST(Grad, GraphPeakIndependentOfLength) {
  const auto p = random_params(2, 4, 8);
  std::size_t peaks[2];
  for (int i = 0; i < 2; ++i) {
    const std::size_t len = 500u << i;
    const auto u = random_sequence(len, 2, 8, 1);
    MemoryMeter meter;
    run(p, u, LossKind::sum_squares, 32, true, &meter);
    peaks[i] = meter.peak(MemClass::graph);
    EXPECT_GT(meter.peak(MemClass::accumulator), 0u);
  }
  EXPECT_EQ(peaks[0], peaks[1]);
}

TEST(Grad, LossValues) {
  Tensor<double> y({2, 2}, std::vector<double>{1.0, 2.0, -3.0, 4.0});
  EXPECT_EQ(loss_value(LossKind::sum_squares, y), 15.0);
  EXPECT_EQ(loss_value(LossKind::mean, y), 1.0);
}

}  // namespace
}  // namespace pgf
