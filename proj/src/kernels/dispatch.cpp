#include "variants.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace manta::kernels {

std::string_view isa_name(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool isa_available(Isa isa) {
  if (isa == Isa::kScalar) return true;
  if (isa != Isa::kAvx2) return false;
#if MANTA_HAVE_AVX2 && (defined(__x86_64__) || defined(__i386__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detected_isa() { return isa_available(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar; }

namespace {

Isa initial_isa() {
  if (const char* env = std::getenv("MANTA_SIMD")) {
    const std::string v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && isa_available(Isa::kAvx2)) return Isa::kAvx2;
  }
  return detected_isa();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa))
    throw std::invalid_argument("kernel variant '" + std::string(isa_name(isa)) + "' unavailable");
  current().store(isa, std::memory_order_relaxed);
}

double containment_violation(PointsSoA points, const Ellipsoid& e, double margin) {
#if MANTA_HAVE_AVX2
  if (active_isa() == Isa::kAvx2) return avx2::containment_violation(points, e, margin);
#endif
  return scalar::containment_violation(points, e, margin);
}

void segment_normalwash(const Vec3& p, const Vec3& n, SegmentsSoA segments, std::span<double> out) {
#if MANTA_HAVE_AVX2
  if (active_isa() == Isa::kAvx2) return avx2::segment_normalwash(p, n, segments, out);
#endif
  scalar::segment_normalwash(p, n, segments, out);
}

void squared_distances(std::span<const double> x, std::span<const double> centers,
                       std::size_t count, std::span<double> out) {
#if MANTA_HAVE_AVX2
  if (active_isa() == Isa::kAvx2) return avx2::squared_distances(x, centers, count, out);
#endif
  scalar::squared_distances(x, centers, count, out);
}

}  // namespace manta::kernels
