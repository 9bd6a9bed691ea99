// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include "variants.hpp"

#include <immintrin.h>

#include <algorithm>
#include <cmath>

namespace manta::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d shuf = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

}  // namespace

double containment_violation(PointsSoA points, const Ellipsoid& e, double margin) {
  const double ix = 1.0 / (e.ax * e.ax);
  const double iy = 1.0 / (e.ay * e.ay);
  const double iz = 1.0 / (e.az * e.az);
  const double num = 1.0 + margin;
  const __m256d vcx = _mm256_set1_pd(e.cx);
  const __m256d vcz = _mm256_set1_pd(e.cz);
  const __m256d vix = _mm256_set1_pd(ix);
  const __m256d viy = _mm256_set1_pd(iy);
  const __m256d viz = _mm256_set1_pd(iz);
  const __m256d vnum = _mm256_set1_pd(num);
  const __m256d vone = _mm256_set1_pd(1.0);
  const __m256d vzero = _mm256_setzero_pd();
  const __m256d vfloor = _mm256_set1_pd(kMinSquaredDistance);
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();

  const std::size_t n = points.size();
  const double* px = points.x.data();
  const double* py = points.y.data();
  const double* pz = points.z.data();
  std::size_t i = 0;
  auto lane = [&](std::size_t j) {
    const __m256d dx = _mm256_sub_pd(_mm256_loadu_pd(px + j), vcx);
    const __m256d dy = _mm256_loadu_pd(py + j);
    const __m256d dz = _mm256_sub_pd(_mm256_loadu_pd(pz + j), vcz);
    __m256d d2 = _mm256_mul_pd(_mm256_mul_pd(dx, dx), vix);
    d2 = _mm256_fmadd_pd(_mm256_mul_pd(dy, dy), viy, d2);
    d2 = _mm256_fmadd_pd(_mm256_mul_pd(dz, dz), viz, d2);
    d2 = _mm256_max_pd(d2, vfloor);
    return _mm256_max_pd(_mm256_sub_pd(_mm256_div_pd(vnum, d2), vone), vzero);
  };
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, lane(i));
    acc1 = _mm256_add_pd(acc1, lane(i + 4));
  }
  for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, lane(i));
  double sum = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) {
    const double dx = px[i] - e.cx;
    const double dy = py[i];
    const double dz = pz[i] - e.cz;
    const double d2 = std::max(dx * dx * ix + dy * dy * iy + dz * dz * iz, kMinSquaredDistance);
    sum += std::max(0.0, num / d2 - 1.0);
  }
  return sum;
}

void segment_normalwash(const Vec3& p, const Vec3& n, SegmentsSoA s, std::span<double> out) {
  const std::size_t count = s.size();
  const __m256d px = _mm256_set1_pd(p[0]);
  const __m256d py = _mm256_set1_pd(p[1]);
  const __m256d pz = _mm256_set1_pd(p[2]);
  const __m256d nx = _mm256_set1_pd(n[0]);
  const __m256d ny = _mm256_set1_pd(n[1]);
  const __m256d nz = _mm256_set1_pd(n[2]);
  const __m256d cutoff = _mm256_set1_pd(kSegmentCutoff);
  const __m256d lmin = _mm256_set1_pd(1e-10);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d k4pi = _mm256_set1_pd(kInvFourPi);
  std::size_t k = 0;
  for (; k + 4 <= count; k += 4) {
    const __m256d ax = _mm256_loadu_pd(s.ax.data() + k);
    const __m256d ay = _mm256_loadu_pd(s.ay.data() + k);
    const __m256d az = _mm256_loadu_pd(s.az.data() + k);
    const __m256d bx = _mm256_loadu_pd(s.bx.data() + k);
    const __m256d by = _mm256_loadu_pd(s.by.data() + k);
    const __m256d bz = _mm256_loadu_pd(s.bz.data() + k);
    const __m256d r1x = _mm256_sub_pd(px, ax), r1y = _mm256_sub_pd(py, ay), r1z = _mm256_sub_pd(pz, az);
    const __m256d r2x = _mm256_sub_pd(px, bx), r2y = _mm256_sub_pd(py, by), r2z = _mm256_sub_pd(pz, bz);
    const __m256d cx = _mm256_fmsub_pd(r1y, r2z, _mm256_mul_pd(r1z, r2y));
    const __m256d cy = _mm256_fmsub_pd(r1z, r2x, _mm256_mul_pd(r1x, r2z));
    const __m256d cz = _mm256_fmsub_pd(r1x, r2y, _mm256_mul_pd(r1y, r2x));
    const __m256d c2 = _mm256_fmadd_pd(cx, cx, _mm256_fmadd_pd(cy, cy, _mm256_mul_pd(cz, cz)));
    const __m256d l1 = _mm256_sqrt_pd(_mm256_fmadd_pd(r1x, r1x, _mm256_fmadd_pd(r1y, r1y, _mm256_mul_pd(r1z, r1z))));
    const __m256d l2 = _mm256_sqrt_pd(_mm256_fmadd_pd(r2x, r2x, _mm256_fmadd_pd(r2y, r2y, _mm256_mul_pd(r2z, r2z))));
    const __m256d valid = _mm256_and_pd(
        _mm256_cmp_pd(c2, cutoff, _CMP_GE_OQ),
        _mm256_and_pd(_mm256_cmp_pd(l1, lmin, _CMP_GE_OQ), _mm256_cmp_pd(l2, lmin, _CMP_GE_OQ)));
    // Substitute safe denominators in masked-out lanes before dividing.
    const __m256d sc2 = _mm256_blendv_pd(one, c2, valid);
    const __m256d il1 = _mm256_div_pd(one, _mm256_blendv_pd(one, l1, valid));
    const __m256d il2 = _mm256_div_pd(one, _mm256_blendv_pd(one, l2, valid));
    const __m256d r0x = _mm256_sub_pd(bx, ax), r0y = _mm256_sub_pd(by, ay), r0z = _mm256_sub_pd(bz, az);
    const __m256d ex = _mm256_fmsub_pd(r1x, il1, _mm256_mul_pd(r2x, il2));
    const __m256d ey = _mm256_fmsub_pd(r1y, il1, _mm256_mul_pd(r2y, il2));
    const __m256d ez = _mm256_fmsub_pd(r1z, il1, _mm256_mul_pd(r2z, il2));
    const __m256d proj = _mm256_fmadd_pd(r0x, ex, _mm256_fmadd_pd(r0y, ey, _mm256_mul_pd(r0z, ez)));
    const __m256d scale = _mm256_div_pd(_mm256_mul_pd(k4pi, proj), sc2);
    const __m256d cn = _mm256_fmadd_pd(cx, nx, _mm256_fmadd_pd(cy, ny, _mm256_mul_pd(cz, nz)));
    const __m256d res = _mm256_and_pd(_mm256_mul_pd(scale, cn), valid);
    _mm256_storeu_pd(out.data() + k, res);
  }
  if (k < count) {
    SegmentsSoA tail{s.ax.subspan(k), s.ay.subspan(k), s.az.subspan(k),
                     s.bx.subspan(k), s.by.subspan(k), s.bz.subspan(k)};
    scalar::segment_normalwash(p, n, tail, out.subspan(k));
  }
}

void squared_distances(std::span<const double> x, std::span<const double> centers,
                       std::size_t count, std::span<double> out) {
  std::size_t k = 0;
  const std::size_t dim = x.size();
  for (; k + 4 <= count; k += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t d = 0; d < dim; ++d) {
      const __m256d diff =
          _mm256_sub_pd(_mm256_set1_pd(x[d]), _mm256_loadu_pd(centers.data() + d * count + k));
      acc = _mm256_fmadd_pd(diff, diff, acc);
    }
    _mm256_storeu_pd(out.data() + k, acc);
  }
  for (; k < count; ++k) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = x[d] - centers[d * count + k];
      acc += diff * diff;
    }
    out[k] = acc;
  }
}

}  // namespace manta::kernels::avx2
