// SPDX-License-Identifier: Apache-2.0
#include "pgf/instance.hpp"

#include <cmath>

namespace pgf {

std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

namespace {

void fill_normal(Tensor<double>& t, std::mt19937_64& rng, double sd) {
  std::normal_distribution<double> dist(0.0, sd);
  for (auto& v : t.span()) v = dist(rng);
}

void fill_uniform(Tensor<double>& t, std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.span()) v = dist(rng);
}

GlrParams<double> base(std::size_t d, std::size_t n, const InstanceOptions& opts) {
  auto p = GlrParams<double>::zeros(d, n);
  p.activation = opts.activation;
  p.discretization = opts.discretization;
  p.selective_b = opts.selective_b;
  return p;
}

}  // namespace

GlrParams<double> random_params(std::size_t d, std::size_t n, std::uint64_t seed, InstanceOptions opts) {
  auto p = base(d, n, opts);
  auto rng = make_engine(seed, 0x9a7a);
  fill_uniform(p.a_log, rng, -0.5, 1.0);
  fill_normal(p.b_weight, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  fill_normal(p.b_fixed, rng, 1.0);
  fill_normal(p.c_weight, rng, 1.0 / std::sqrt(static_cast<double>(n)));
  fill_normal(p.d_res, rng, 0.5);
  fill_normal(p.delta_weight, rng, 0.5);
  fill_uniform(p.delta_bias, rng, -3.0, -1.0);
  return p;
}

GlrParams<double> stiff_params(std::size_t d, std::size_t n, double log_decay, std::uint64_t seed,
                               InstanceOptions opts) {
  if (!(log_decay < 0.0)) throw Error("stiff_params: log decay must be negative");
  auto p = base(d, n, opts);
  auto rng = make_engine(seed, 0x571f);
  fill_uniform(p.a_log, rng, 0.0, 0.5);
  fill_normal(p.b_weight, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  fill_normal(p.b_fixed, rng, 1.0);
  fill_normal(p.c_weight, rng, 1.0 / std::sqrt(static_cast<double>(n)));
  fill_normal(p.d_res, rng, 0.5);
  fill_normal(p.delta_weight, rng, 0.02);
  for (std::size_t c = 0; c < d; ++c) {
    double mean_abs_a = 0.0;
    for (std::size_t k = 0; k < n; ++k) mean_abs_a += std::exp(p.a_log(c, k));
    mean_abs_a /= static_cast<double>(n);
    p.delta_bias[c] = softplus_inverse(-log_decay / mean_abs_a);
  }
  return p;
}

Tensor<double> random_sequence(std::size_t len, std::size_t d, std::uint64_t seed, std::uint64_t stream,
                               double scale) {
  Tensor<double> t({len, d});
  auto rng = make_engine(seed, stream);
  fill_normal(t, rng, scale);
  return t;
}

double softplus_inverse(double y) {
  if (!(y > 0.0)) throw Error("softplus_inverse: argument must be positive");
  return y + std::log(-std::expm1(-y));
}

}  // namespace pgf
