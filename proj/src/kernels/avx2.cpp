// SPDX-License-Identifier: Apache-2.0
//
// Compiled with -mavx2 (and without -mfma). Only reached after a runtime CPU check.
#include <immintrin.h>

#include "pgf/kernels.hpp"

namespace pgf::kernels::avx2 {
namespace {

template <Real T>
struct Vec;

template <>
struct Vec<double> {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
};

template <>
struct Vec<float> {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
};

template <Real T>
void affine_step(const T* a, const T* b, T* x, std::size_t n) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    V::store(x + i, V::add(V::mul(V::load(a + i), V::load(x + i)), V::load(b + i)));
  }
  scalar::table<T>().affine_step(a + i, b + i, x + i, n - i);
}

template <Real T>
void dual_step(AugIn<T> m, const T* h, const T* dh, T* h_out, T* dh_out, std::size_t n) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto hv = V::load(h + i);
    const auto dhv = V::load(dh + i);
    const auto a = V::load(m.a + i);
    const auto nh = V::add(V::mul(a, hv), V::load(m.b + i));
    const auto ndh = V::add(V::add(V::mul(V::load(m.k + i), hv), V::mul(a, dhv)), V::load(m.j + i));
    V::store(h_out + i, nh);
    V::store(dh_out + i, ndh);
  }
  const AugIn<T> tail{m.a + i, m.k + i, m.b + i, m.j + i};
  scalar::table<T>().dual_step(tail, h + i, dh + i, h_out + i, dh_out + i, n - i);
}

template <Real T>
void tangent_step(const T* a, const T* k, const T* j, const T* h, T* dh, std::size_t n) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto r = V::add(V::add(V::mul(V::load(k + i), V::load(h + i)), V::mul(V::load(a + i), V::load(dh + i))),
                          V::load(j + i));
    V::store(dh + i, r);
  }
  scalar::table<T>().tangent_step(a + i, k + i, j + i, h + i, dh + i, n - i);
}

template <Real T>
void compose_affine(const T* a2, const T* b2, const T* a1, const T* b1, T* a_out, T* b_out,
                    std::size_t n) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto x2 = V::load(a2 + i), y2 = V::load(b2 + i), x1 = V::load(a1 + i), y1 = V::load(b1 + i);
    V::store(a_out + i, V::mul(x2, x1));
    V::store(b_out + i, V::add(V::mul(x2, y1), y2));
  }
  scalar::table<T>().compose_affine(a2 + i, b2 + i, a1 + i, b1 + i, a_out + i, b_out + i, n - i);
}

template <Real T>
void compose_augmented(AugIn<T> m2, AugIn<T> m1, AugOut<T> out, std::size_t n) {
  using V = Vec<T>;
  std::size_t i = 0;
  for (; i + V::width <= n; i += V::width) {
    const auto a2 = V::load(m2.a + i), k2 = V::load(m2.k + i), b2 = V::load(m2.b + i), j2 = V::load(m2.j + i);
    const auto a1 = V::load(m1.a + i), k1 = V::load(m1.k + i), b1 = V::load(m1.b + i), j1 = V::load(m1.j + i);
    V::store(out.a + i, V::mul(a2, a1));
    V::store(out.k + i, V::add(V::mul(k2, a1), V::mul(a2, k1)));
    V::store(out.b + i, V::add(V::mul(a2, b1), b2));
    V::store(out.j + i, V::add(V::add(V::mul(k2, b1), V::mul(a2, j1)), j2));
  }
  const AugIn<T> t2{m2.a + i, m2.k + i, m2.b + i, m2.j + i};
  const AugIn<T> t1{m1.a + i, m1.k + i, m1.b + i, m1.j + i};
  const AugOut<T> to{out.a + i, out.k + i, out.b + i, out.j + i};
  scalar::table<T>().compose_augmented(t2, t1, to, n - i);
}

template <Real T>
constexpr LaneKernels<T> kTable{&affine_step<T>, &dual_step<T>, &tangent_step<T>, &compose_affine<T>,
                                &compose_augmented<T>};

}  // namespace

template <Real T>
const LaneKernels<T>& table() {
  return kTable<T>;
}

template const LaneKernels<float>& table<float>();
template const LaneKernels<double>& table<double>();

}  // namespace pgf::kernels::avx2
