// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>

#include "pgf/kernels.hpp"

namespace pgf::kernels {
namespace {

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{default_isa()};
  return isa;
}

}  // namespace

std::string_view to_string(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return "scalar";
    case Isa::avx2:
      return "avx2";
  }
  return "unknown";
}

Isa parse_isa(const std::string& s) {
  if (s == "scalar") return Isa::scalar;
  if (s == "avx2") return Isa::avx2;
  throw Error("unknown ISA '" + s + "' (expected scalar|avx2)");
}

bool isa_supported(Isa isa) {
  switch (isa) {
    case Isa::scalar:
      return true;
    case Isa::avx2:
#if defined(PGF_HAVE_AVX2_KERNELS)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
  }
  return false;
}

Isa default_isa() {
  if (const char* env = std::getenv("PGF_ISA")) {
    const Isa requested = parse_isa(env);
    if (!isa_supported(requested)) throw Error("PGF_ISA=" + std::string(env) + " is not supported on this CPU");
    return requested;
  }
  return isa_supported(Isa::avx2) ? Isa::avx2 : Isa::scalar;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa)) throw Error("ISA " + std::string(to_string(isa)) + " is not supported on this CPU");
  active().store(isa, std::memory_order_relaxed);
}

template <Real T>
const LaneKernels<T>& lanes(Isa isa) {
#if defined(PGF_HAVE_AVX2_KERNELS)
  if (isa == Isa::avx2) return avx2::table<T>();
#endif
  (void)isa;
  return scalar::table<T>();
}

template const LaneKernels<float>& lanes<float>(Isa);
template const LaneKernels<double>& lanes<double>(Isa);

}  // namespace pgf::kernels
