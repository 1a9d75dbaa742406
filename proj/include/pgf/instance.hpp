// SPDX-License-Identifier: Apache-2.0
//
// Seeded random problem instances. All draws are made in double from a
// mt19937_64 stream and cast afterwards, so f32 and f64 runs share values.
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

#include "pgf/glr.hpp"

namespace pgf {

struct InstanceOptions {
  Activation activation = Activation::silu;
  Discretization discretization = Discretization::zoh;
  bool selective_b = true;
};

/// Moderately damped selective instance:
///   a_log ~ U[-0.5, 1], delta_bias ~ U[-3, -1], delta_weight ~ N(0, 0.5^2),
///   b_weight ~ N(0, 1/D), b_fixed ~ N(0, 1), c_weight ~ N(0, 1/N), d_res ~ N(0, 0.5^2).
GlrParams<double> random_params(std::size_t d, std::size_t n, std::uint64_t seed, InstanceOptions opts = {});

/// Instance whose per-step log decay Delta*A is close to `log_decay` (< 0) in every
/// lane: a_log ~ U[0, 0.5], weak selectivity, delta_bias chosen so that
/// softplus(delta_bias) * mean|A| = |log_decay|.
GlrParams<double> stiff_params(std::size_t d, std::size_t n, double log_decay, std::uint64_t seed,
                               InstanceOptions opts = {});

/// [L x D] i.i.d. N(0, scale^2). `stream` separates independent draws under one seed.
Tensor<double> random_sequence(std::size_t len, std::size_t d, std::uint64_t seed, std::uint64_t stream,
                               double scale = 1.0);

/// Inverse of softplus for y > 0.
double softplus_inverse(double y);

/// Deterministic per-(seed, stream) engine.
std::mt19937_64 make_engine(std::uint64_t seed, std::uint64_t stream);

}  // namespace pgf
