// SPDX-License-Identifier: Apache-2.0
#include "pgf/kernels.hpp"

namespace pgf::kernels::scalar {
namespace {

template <Real T>
void affine_step(const T* a, const T* b, T* x, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) x[i] = a[i] * x[i] + b[i];
}

template <Real T>
void dual_step(AugIn<T> m, const T* h, const T* dh, T* h_out, T* dh_out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T hv = h[i];
    const T dhv = dh[i];
    const T a = m.a[i];
    h_out[i] = a * hv + m.b[i];
    dh_out[i] = m.k[i] * hv + a * dhv + m.j[i];
  }
}

template <Real T>
void tangent_step(const T* a, const T* k, const T* j, const T* h, T* dh, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dh[i] = k[i] * h[i] + a[i] * dh[i] + j[i];
}

template <Real T>
void compose_affine(const T* a2, const T* b2, const T* a1, const T* b1, T* a_out, T* b_out,
                    std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T x2 = a2[i], y2 = b2[i], x1 = a1[i], y1 = b1[i];
    a_out[i] = x2 * x1;
    b_out[i] = x2 * y1 + y2;
  }
}

template <Real T>
void compose_augmented(AugIn<T> m2, AugIn<T> m1, AugOut<T> out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    const T a2 = m2.a[i], k2 = m2.k[i], b2 = m2.b[i], j2 = m2.j[i];
    const T a1 = m1.a[i], k1 = m1.k[i], b1 = m1.b[i], j1 = m1.j[i];
    out.a[i] = a2 * a1;
    out.k[i] = k2 * a1 + a2 * k1;
    out.b[i] = a2 * b1 + b2;
    out.j[i] = k2 * b1 + a2 * j1 + j2;
  }
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

}  // namespace pgf::kernels::scalar
