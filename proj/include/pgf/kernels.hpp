// SPDX-License-Identifier: Apache-2.0
//
// Lane kernels: the data-parallel inner loops of every recurrence in the library.
// A "lane" is one (channel, state) pair; all kernels are elementwise across lanes.
//
// Each kernel has a scalar reference implementation and an AVX2 variant. The
// variants evaluate the same expression tree in the same order without FMA, so
// results are bit-identical across ISAs (tests/unit/kernels_test.cpp).
#pragma once

#include <cstddef>
#include <string>
#include <string_view>

#include "pgf/common.hpp"

namespace pgf::kernels {

enum class Isa { scalar, avx2 };

std::string_view to_string(Isa isa);
Isa parse_isa(const std::string& s);

/// Read-only view of an augmented operator's four lane arrays.
template <Real T>
struct AugIn {
  const T* a;
  const T* k;
  const T* b;
  const T* j;
};

template <Real T>
struct AugOut {
  T* a;
  T* k;
  T* b;
  T* j;

  operator AugIn<T>() const { return {a, k, b, j}; }
};

template <Real T>
struct LaneKernels {
  /// x[i] = a[i]*x[i] + b[i]
  void (*affine_step)(const T* a, const T* b, T* x, std::size_t n);
  /// h_out = a*h + b;  dh_out = k*h + a*dh + j. Outputs may alias h/dh.
  void (*dual_step)(AugIn<T> m, const T* h, const T* dh, T* h_out, T* dh_out, std::size_t n);
  /// dh = k*h + a*dh + j, h untouched.
  void (*tangent_step)(const T* a, const T* k, const T* j, const T* h, T* dh, std::size_t n);
  /// (a, b) = (a2*a1, a2*b1 + b2). Outputs may alias any input.
  void (*compose_affine)(const T* a2, const T* b2, const T* a1, const T* b1, T* a_out, T* b_out,
                         std::size_t n);
  /// Block product of two augmented operators (later m2, earlier m1):
  ///   a = a2 a1, k = k2 a1 + a2 k1, b = a2 b1 + b2, j = k2 b1 + a2 j1 + j2.
  /// Outputs may alias any input.
  void (*compose_augmented)(AugIn<T> m2, AugIn<T> m1, AugOut<T> out, std::size_t n);
};

bool isa_supported(Isa isa);
Isa active_isa();
/// Selects the kernel table used by the library. Throws pgf::Error if the CPU
/// lacks the ISA. Intended to be called at startup or from tests.
void set_isa(Isa isa);
/// Best supported ISA, honouring the PGF_ISA environment variable.
Isa default_isa();

template <Real T>
const LaneKernels<T>& lanes(Isa isa);

template <Real T>
const LaneKernels<T>& lanes() {
  return lanes<T>(active_isa());
}

namespace scalar {
template <Real T>
const LaneKernels<T>& table();
}

#if defined(PGF_HAVE_AVX2_KERNELS)
namespace avx2 {
template <Real T>
const LaneKernels<T>& table();
}
#endif

}  // namespace pgf::kernels
