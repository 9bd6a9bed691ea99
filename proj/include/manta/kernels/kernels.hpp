#pragma once

// Data-parallel inner loops shared by the sizing, hydrodynamics and surrogate
// modules. Each kernel has a scalar reference implementation and an AVX2
// variant; the variant is picked once at startup from CPUID and can be forced
// with MANTA_SIMD=scalar|avx2 or set_isa(). Variants agree to round-off, not
// bitwise (the vector paths reassociate sums).

#include "manta/vec3.hpp"

#include <cstddef>
#include <span>
#include <string_view>

namespace manta::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// Best variant compiled in and supported by this CPU.
Isa detected_isa();
bool isa_available(Isa isa);

Isa active_isa();
/// Throws std::invalid_argument if `isa` is not available.
void set_isa(Isa isa);

/// Structure-of-arrays point cloud.
struct PointsSoA {
  std::span<const double> x, y, z;
  std::size_t size() const { return x.size(); }
};

/// Axis-aligned ellipsoid centred at (cx, 0, cz) with semi-axes (ax, ay, az).
struct Ellipsoid {
  double cx, cz;
  double ax, ay, az;
};

/// Sum over points of max(0, (1 + margin) / d^2 - 1) where d^2 is the
/// normalised squared distance to the ellipsoid centre. d^2 is floored at
/// 1e-12 so a point at the centre contributes a large finite violation.
double containment_violation(PointsSoA points, const Ellipsoid& e, double margin);

/// Straight vortex segments a -> b, structure-of-arrays.
struct SegmentsSoA {
  std::span<const double> ax, ay, az, bx, by, bz;
  std::size_t size() const { return ax.size(); }
};

/// out[k] = n . v_k(p), v_k the Biot-Savart velocity induced at p by segment k
/// carrying unit circulation. Points on (or within 1e-10 of) a segment's line
/// receive zero.
void segment_normalwash(const Vec3& p, const Vec3& n, SegmentsSoA segments, std::span<double> out);

/// out[k] = sum_d (x[d] - centers[d * count + k])^2 for k < count.
void squared_distances(std::span<const double> x, std::span<const double> centers_dim_major,
                       std::size_t count, std::span<double> out);

}  // namespace manta::kernels
