#pragma once

#include "manta/kernels/kernels.hpp"

namespace manta::kernels {

namespace scalar {
double containment_violation(PointsSoA points, const Ellipsoid& e, double margin);
void segment_normalwash(const Vec3& p, const Vec3& n, SegmentsSoA segments, std::span<double> out);
void squared_distances(std::span<const double> x, std::span<const double> centers,
                       std::size_t count, std::span<double> out);
}  // namespace scalar

#if MANTA_HAVE_AVX2
namespace avx2 {
double containment_violation(PointsSoA points, const Ellipsoid& e, double margin);
void segment_normalwash(const Vec3& p, const Vec3& n, SegmentsSoA segments, std::span<double> out);
void squared_distances(std::span<const double> x, std::span<const double> centers,
                       std::size_t count, std::span<double> out);
}  // namespace avx2
#endif

inline constexpr double kMinSquaredDistance = 1e-12;
inline constexpr double kSegmentCutoff = 1e-20;
inline constexpr double kInvFourPi = 0.079577471545947667884;

}  // namespace manta::kernels
