#include "variants.hpp"

#include <algorithm>
#include <cmath>

namespace manta::kernels::scalar {

double containment_violation(PointsSoA points, const Ellipsoid& e, double margin) {
  const double ix = 1.0 / (e.ax * e.ax);
  const double iy = 1.0 / (e.ay * e.ay);
  const double iz = 1.0 / (e.az * e.az);
  const double num = 1.0 + margin;
  double sum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double dx = points.x[i] - e.cx;
    const double dy = points.y[i];
    const double dz = points.z[i] - e.cz;
    const double d2 = std::max(dx * dx * ix + dy * dy * iy + dz * dz * iz, kMinSquaredDistance);
    sum += std::max(0.0, num / d2 - 1.0);
  }
  return sum;
}

void segment_normalwash(const Vec3& p, const Vec3& n, SegmentsSoA s, std::span<double> out) {
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double r1x = p[0] - s.ax[k], r1y = p[1] - s.ay[k], r1z = p[2] - s.az[k];
    const double r2x = p[0] - s.bx[k], r2y = p[1] - s.by[k], r2z = p[2] - s.bz[k];
    const double cx = r1y * r2z - r1z * r2y;
    const double cy = r1z * r2x - r1x * r2z;
    const double cz = r1x * r2y - r1y * r2x;
    const double c2 = cx * cx + cy * cy + cz * cz;
    const double l1 = std::sqrt(r1x * r1x + r1y * r1y + r1z * r1z);
    const double l2 = std::sqrt(r2x * r2x + r2y * r2y + r2z * r2z);
    if (c2 < kSegmentCutoff || l1 < 1e-10 || l2 < 1e-10) {
      out[k] = 0.0;
      continue;
    }
    const double r0x = s.bx[k] - s.ax[k], r0y = s.by[k] - s.ay[k], r0z = s.bz[k] - s.az[k];
    const double proj = r0x * (r1x / l1 - r2x / l2) + r0y * (r1y / l1 - r2y / l2) +
                        r0z * (r1z / l1 - r2z / l2);
    const double scale = kInvFourPi * proj / c2;
    out[k] = scale * (cx * n[0] + cy * n[1] + cz * n[2]);
  }
}

void squared_distances(std::span<const double> x, std::span<const double> centers,
                       std::size_t count, std::span<double> out) {
  std::fill(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(count), 0.0);
  for (std::size_t d = 0; d < x.size(); ++d) {
    const double* c = centers.data() + d * count;
    const double xd = x[d];
    for (std::size_t k = 0; k < count; ++k) {
      const double diff = xd - c[k];
      out[k] += diff * diff;
    }
  }
}

}  // namespace manta::kernels::scalar
