#include "manta/geometry.hpp"

#include "manta/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <string>

namespace manta {

namespace {

constexpr double kMinChord = 0.01;
constexpr double kMinTipThickness = 1e-3;
constexpr double kDeg = std::numbers::pi / 180.0;

void require(bool ok, const char* field, const std::string& what) {
  if (!ok) throw DomainError(field, what);
}

/// Cubic spline through knots s_0 < ... < s_{n-1}, expressed as weights on
/// the knot values so one factorisation serves every surface coordinate.
/// Left end either clamped to zero slope or natural; right end natural.
class SplineBasis {
 public:
  SplineBasis(std::vector<double> knots, bool clamp_left) : s_(std::move(knots)) {
    const auto n = static_cast<Eigen::Index>(s_.size());
    Eigen::MatrixXd lhs = Eigen::MatrixXd::Zero(n, n);
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, n);  // second derivatives = K * values
    auto h = [&](Eigen::Index i) { return s_[i + 1] - s_[i]; };
    if (clamp_left) {
      lhs(0, 0) = 2.0 * h(0);
      lhs(0, 1) = h(0);
      rhs(0, 0) = -6.0 / h(0);
      rhs(0, 1) = 6.0 / h(0);
    } else {
      lhs(0, 0) = 1.0;
    }
    for (Eigen::Index i = 1; i + 1 < n; ++i) {
      lhs(i, i - 1) = h(i - 1);
      lhs(i, i) = 2.0 * (h(i - 1) + h(i));
      lhs(i, i + 1) = h(i);
      rhs(i, i + 1) += 6.0 / h(i);
      rhs(i, i) += -6.0 / h(i) - 6.0 / h(i - 1);
      rhs(i, i - 1) += 6.0 / h(i - 1);
    }
    lhs(n - 1, n - 1) = 1.0;
    curvature_ = lhs.partialPivLu().solve(rhs);
  }

  /// Weights w with f(s) = sum_k w_k f_k.
  std::vector<double> weights(double s) const {
    const std::size_t n = s_.size();
    std::vector<double> w(n, 0.0);
    std::size_t i = 0;
    while (i + 2 < n && s > s_[i + 1]) ++i;
    const double h = s_[i + 1] - s_[i];
    const double a = (s_[i + 1] - s) / h;
    const double b = 1.0 - a;
    const double ca = (a * a * a - a) * h * h / 6.0;
    const double cb = (b * b * b - b) * h * h / 6.0;
    w[i] += a;
    w[i + 1] += b;
    for (std::size_t k = 0; k < n; ++k)
      w[k] += ca * curvature_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) +
              cb * curvature_(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(k));
    return w;
  }

 private:
  std::vector<double> s_;
  Eigen::MatrixXd curvature_;
};

std::vector<double> cosine_abscissae(std::size_t n) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
  x.front() = 0.0;
  x.back() = 1.0;
  return x;
}

void check_sections_for_loft(const std::array<SectionParams, kSectionCount>& sections) {
  for (std::size_t k = 0; k < kSectionCount; ++k) {
    validate_section(sections[k]);
    if (sections[k].chord < kMinChord)
      throw GeometryInfeasible("section " + std::to_string(k + 1) + " chord below 1 cm");
    if (k > 0 && !(sections[k].leading_edge[1] > sections[k - 1].leading_edge[1]))
      throw GeometryInfeasible("spanwise ordinates not strictly increasing at section " +
                               std::to_string(k + 1));
  }
  if (sections.back().thickness < kMinTipThickness)
    throw GeometryInfeasible("tip section has vanishing thickness");
}

std::vector<double> section_knots(const std::array<SectionParams, kSectionCount>& sections) {
  std::vector<double> knots;
  for (const auto& s : sections) knots.push_back(s.leading_edge[1]);
  return knots;
}

/// Interpolates per-section point rows (same count and ordering) at the given
/// spanwise parameters. Row 0 of the output reproduces section 1 exactly.
std::vector<std::vector<Vec3>> interpolate_rows(
    const std::array<std::vector<Vec3>, kSectionCount>& rows, const std::vector<double>& knots,
    const std::vector<double>& stations) {
  const SplineBasis clamped(knots, true);
  const SplineBasis natural(knots, false);
  std::vector<std::vector<Vec3>> out(stations.size());
  const std::size_t width = rows[0].size();
  for (std::size_t i = 0; i < stations.size(); ++i) {
    out[i].resize(width);
    if (i == 0 && stations[0] == knots[0]) {
      out[i] = rows[0];
      continue;
    }
    const auto wc = clamped.weights(stations[i]);
    const auto wn = natural.weights(stations[i]);
    for (std::size_t j = 0; j < width; ++j) {
      Vec3 p{0.0, 0.0, 0.0};
      for (std::size_t k = 0; k < kSectionCount; ++k) {
        p[0] += wc[k] * rows[k][j][0];
        p[1] += wn[k] * rows[k][j][1];
        p[2] += wc[k] * rows[k][j][2];
      }
      out[i][j] = p;
    }
  }
  return out;
}

}  // namespace

void validate_section(const SectionParams& s) {
  require(std::isfinite(s.chord) && s.chord > 0.0, "chord", "must be positive");
  require(s.thickness >= 0.0 && s.thickness <= 0.5, "thickness", "must lie in [0, 0.5]");
  require(s.camber_max >= 0.0 && s.camber_max <= 0.2, "camber_max", "must lie in [0, 0.2]");
  if (s.camber_max > 0.0)
    require(s.camber_pos > 0.0 && s.camber_pos < 1.0, "camber_pos", "must lie in (0, 1)");
  for (double v : {s.leading_edge[0], s.leading_edge[1], s.leading_edge[2], s.twist, s.roll, s.yaw})
    require(std::isfinite(v), "section", "non-finite placement parameter");
}

std::array<std::string_view, kDesignDim> design_parameter_names() {
  return {"s1_thickness", "s1_chord",
          "s2_camber_max", "s2_camber_pos", "s2_thickness", "s2_chord", "s2_le_x", "s2_le_y",
          "s2_le_z", "s2_twist", "s2_roll", "s2_yaw",
          "s3_camber_max", "s3_camber_pos", "s3_thickness", "s3_chord", "s3_le_x", "s3_le_y",
          "s3_le_z", "s3_twist", "s3_roll", "s3_yaw",
          "s4_camber_max", "s4_camber_pos", "s4_thickness", "s4_chord", "s4_le_x", "s4_le_y",
          "s4_le_z", "s4_twist", "s4_roll", "s4_yaw"};
}

bool DesignBounds::contains(const FullDesignVector& u) const {
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (!(u[i] >= lower[i] && u[i] <= upper[i])) return false;
  return true;
}

FullDesignVector DesignBounds::clamp(const FullDesignVector& u) const {
  FullDesignVector out{};
  for (std::size_t i = 0; i < kDesignDim; ++i) out[i] = std::clamp(u[i], lower[i], upper[i]);
  return out;
}

void DesignBounds::check(const FullDesignVector& u) const {
  const auto names = design_parameter_names();
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (!(u[i] >= lower[i] && u[i] <= upper[i]))
      throw DomainError(std::string(names[i]), "outside its design bounds");
}

FullDesignVector baseline_design() {
  // clang-format off
  return {
      0.20, 1.00,
      0.010, 0.40, 0.16, 0.72, 0.22, 0.35, 0.00, -1.5 * kDeg, 0.0, 0.0,
      0.020, 0.40, 0.12, 0.42, 0.48, 0.62, 0.02, -4.5 * kDeg, 0.0, 0.0,
      0.020, 0.40, 0.10, 0.14, 0.80, 1.00, 0.06, -8.0 * kDeg, 0.0, 0.0,
  };
  // clang-format on
}

DesignBounds default_design_bounds() {
  const FullDesignVector base = baseline_design();
  // Half-widths of the box around the baseline, per section parameter.
  const std::array<double, 10> half = {0.015, 0.15, 0.03, 0.0, 0.06, 0.06, 0.04,
                                       3.0 * kDeg, 5.0 * kDeg, 5.0 * kDeg};
  DesignBounds b;
  b.lower[0] = 0.16; b.upper[0] = 0.24;
  b.lower[1] = 0.90; b.upper[1] = 1.10;
  for (std::size_t k = 0; k < 3; ++k) {
    for (std::size_t p = 0; p < 10; ++p) {
      const std::size_t i = 2 + 10 * k + p;
      double h = half[p];
      if (p == 3) h = 0.15 * base[i];  // chord +-15 %
      b.lower[i] = base[i] - h;
      b.upper[i] = base[i] + h;
    }
    const std::size_t camber = 2 + 10 * k;
    b.lower[camber] = std::max(0.0, b.lower[camber]);
  }
  return b;
}

double naca4_half_thickness(double thickness, double x) {
  return 5.0 * thickness *
         (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x -
          0.1036 * x * x * x * x);
}

double naca4_camber(double m, double p, double x, double* slope) {
  if (m <= 0.0) {
    if (slope) *slope = 0.0;
    return 0.0;
  }
  if (x < p) {
    if (slope) *slope = 2.0 * m / (p * p) * (p - x);
    return m / (p * p) * (2.0 * p * x - x * x);
  }
  const double q = 1.0 - p;
  if (slope) *slope = 2.0 * m / (q * q) * (p - x);
  return m / (q * q) * ((1.0 - 2.0 * p) + 2.0 * p * x - x * x);
}

std::vector<Point2> naca4_profile(double camber_max, double camber_pos, double thickness,
                                  std::size_t n_points) {
  require(n_points >= 10, "n_points", "must be at least 10");
  SectionParams probe;
  probe.camber_max = camber_max;
  probe.camber_pos = camber_pos;
  probe.thickness = thickness;
  validate_section(probe);

  const auto xs = cosine_abscissae(n_points);
  std::vector<Point2> upper(n_points), lower(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const double x = xs[i];
    double slope = 0.0;
    const double yc = naca4_camber(camber_max, camber_pos, x, &slope);
    const double yt = naca4_half_thickness(thickness, x);
    const double theta = std::atan(slope);
    upper[i] = {x - yt * std::sin(theta), yc + yt * std::cos(theta)};
    lower[i] = {x + yt * std::sin(theta), yc - yt * std::cos(theta)};
  }
  // The closed polynomial vanishes at x = 1 only to round-off.
  upper.back() = lower.back() = {1.0, naca4_camber(camber_max, camber_pos, 1.0)};

  std::vector<Point2> loop;
  loop.reserve(2 * n_points - 1);
  for (std::size_t i = n_points; i-- > 0;) loop.push_back(upper[i]);
  for (std::size_t i = 1; i < n_points; ++i) loop.push_back(lower[i]);
  return loop;
}

std::array<SectionParams, kSectionCount> build_sections(const FullDesignVector& u) {
  for (double v : u)
    if (!std::isfinite(v)) throw DomainError("u", "non-finite design component");
  std::array<SectionParams, kSectionCount> s{};
  s[0].thickness = u[0];
  s[0].chord = u[1];
  s[0].camber_max = 0.0;
  s[0].leading_edge = {0.0, 0.0, 0.0};
  for (std::size_t k = 1; k < kSectionCount; ++k) {
    const double* p = u.data() + 2 + 10 * (k - 1);
    s[k].camber_max = p[0];
    s[k].camber_pos = p[1];
    s[k].thickness = p[2];
    s[k].chord = p[3];
    s[k].leading_edge = {p[4], p[5], p[6]};
    s[k].twist = p[7];
    s[k].roll = p[8];
    s[k].yaw = p[9];
  }
  for (const auto& sec : s) validate_section(sec);
  return s;
}

FullDesignVector pack_sections(const std::array<SectionParams, kSectionCount>& s) {
  FullDesignVector u{};
  u[0] = s[0].thickness;
  u[1] = s[0].chord;
  for (std::size_t k = 1; k < kSectionCount; ++k) {
    double* p = u.data() + 2 + 10 * (k - 1);
    p[0] = s[k].camber_max;
    p[1] = s[k].camber_pos;
    p[2] = s[k].thickness;
    p[3] = s[k].chord;
    p[4] = s[k].leading_edge[0];
    p[5] = s[k].leading_edge[1];
    p[6] = s[k].leading_edge[2];
    p[7] = s[k].twist;
    p[8] = s[k].roll;
    p[9] = s[k].yaw;
  }
  return u;
}

Vec3 place_on_section(const SectionParams& s, double x_chord, double z_chord) {
  double x = x_chord * s.chord;
  double y = 0.0;
  double z = z_chord * s.chord;
  // twist about the local span axis through the leading edge (nose-up positive)
  const double ct = std::cos(s.twist), st = std::sin(s.twist);
  const double x1 = x * ct + z * st;
  const double z1 = -x * st + z * ct;
  x = x1;
  z = z1;
  // roll about the streamwise axis
  const double cr = std::cos(s.roll), sr = std::sin(s.roll);
  const double y2 = y * cr - z * sr;
  const double z2 = y * sr + z * cr;
  y = y2;
  z = z2;
  // yaw about the vertical axis
  const double cy = std::cos(s.yaw), sy = std::sin(s.yaw);
  const double x3 = x * cy - y * sy;
  const double y3 = x * sy + y * cy;
  return {x3 + s.leading_edge[0], y3 + s.leading_edge[1], z + s.leading_edge[2]};
}

SurfaceMesh loft(const std::array<SectionParams, kSectionCount>& sections,
                 LoftResolution resolution) {
  if (resolution.chordwise < 10 || resolution.spanwise < 2)
    throw DomainError("resolution", "need >= 10 chordwise points and >= 2 stations");
  check_sections_for_loft(sections);

  const std::size_t nc = resolution.chordwise;
  const std::size_t ns = resolution.spanwise;
  const std::size_t n_loop = 2 * (nc - 1);

  std::array<std::vector<Vec3>, kSectionCount> rows;
  for (std::size_t k = 0; k < kSectionCount; ++k) {
    const auto& s = sections[k];
    auto profile = naca4_profile(s.camber_max, s.camber_pos, s.thickness, nc);
    profile.pop_back();  // drop the repeated trailing edge
    rows[k].reserve(n_loop);
    for (const auto& p : profile) rows[k].push_back(place_on_section(s, p.x, p.z));
  }

  const auto knots = section_knots(sections);
  std::vector<double> stations(ns);
  for (std::size_t i = 0; i < ns; ++i)
    stations[i] = knots.back() * static_cast<double>(i) / static_cast<double>(ns - 1);
  const auto half = interpolate_rows(rows, knots, stations);

  // Jacobian screen on the surface map (loop index, station): spanwise
  // ordinates must increase along every chordwise line, and the cell normal
  // must keep one orientation relative to the local section centroid.
  std::vector<Vec3> centroids(ns, Vec3{0.0, 0.0, 0.0});
  for (std::size_t i = 0; i < ns; ++i) {
    for (const auto& p : half[i]) centroids[i] = centroids[i] + p;
    centroids[i] = (1.0 / static_cast<double>(n_loop)) * centroids[i];
  }
  int orientation = 0;
  for (std::size_t i = 0; i + 1 < ns; ++i) {
    const Vec3 c = 0.5 * (centroids[i] + centroids[i + 1]);
    for (std::size_t j = 0; j < n_loop; ++j) {
      const std::size_t jn = (j + 1) % n_loop;
      if (!(half[i + 1][j][1] > half[i][j][1]))
        throw GeometryInfeasible("loft folds spanwise near station " + std::to_string(i));
      const Vec3 ec = half[i][jn] - half[i][j];
      const Vec3 es = half[i + 1][j] - half[i][j];
      const Vec3 mid = 0.25 * (half[i][j] + half[i][jn] + half[i + 1][j] + half[i + 1][jn]);
      const double jac = dot(cross(ec, es), mid - c);
      const int sign = jac > 0.0 ? 1 : (jac < 0.0 ? -1 : 0);
      if (orientation == 0) orientation = sign;
      if (sign == 0 || sign != orientation)
        throw GeometryInfeasible("loft self-intersects (negative surface Jacobian near station " +
                                 std::to_string(i) + ")");
    }
  }

  SurfaceMesh mesh;
  mesh.spanwise_stations = ns;
  mesh.chordwise_points = nc;
  const std::size_t n_rows = 2 * ns - 1;
  mesh.points.reserve(n_rows * n_loop);
  for (std::size_t m = 0; m < n_rows; ++m) {
    const bool mirrored = m + 1 < ns;
    const auto& row = half[mirrored ? ns - 1 - m : m - (ns - 1)];
    for (const auto& p : row) mesh.points.push_back(mirrored ? Vec3{p[0], -p[1], p[2]} : p);
  }

  auto idx = [&](std::size_t m, std::size_t j) {
    return static_cast<std::uint32_t>(m * n_loop + (j % n_loop));
  };
  mesh.triangles.reserve(2 * (n_rows - 1) * n_loop + 4 * nc);
  for (std::size_t m = 0; m + 1 < n_rows; ++m) {
    for (std::size_t j = 0; j < n_loop; ++j) {
      mesh.triangles.push_back({idx(m, j), idx(m + 1, j), idx(m + 1, j + 1)});
      mesh.triangles.push_back({idx(m, j), idx(m + 1, j + 1), idx(m, j + 1)});
    }
  }
  // Tip caps: strip between upper(c) and lower(c), c counted from the LE.
  auto upper_at = [&](std::size_t c) { return nc - 1 - c; };
  auto lower_at = [&](std::size_t c) { return (nc - 1 + c) % n_loop; };
  for (std::size_t cap = 0; cap < 2; ++cap) {
    const std::size_t m = cap == 0 ? n_rows - 1 : 0;
    auto add = [&](std::size_t a, std::size_t b, std::size_t c) {
      if (cap == 0)
        mesh.triangles.push_back({idx(m, a), idx(m, b), idx(m, c)});
      else
        mesh.triangles.push_back({idx(m, a), idx(m, c), idx(m, b)});
    };
    for (std::size_t c = 0; c + 1 < nc; ++c) {
      if (c == 0) {
        add(upper_at(0), upper_at(1), lower_at(1));
      } else if (c + 2 == nc) {
        add(upper_at(c), lower_at(c + 1), lower_at(c));
      } else {
        add(upper_at(c), upper_at(c + 1), lower_at(c + 1));
        add(upper_at(c), lower_at(c + 1), lower_at(c));
      }
    }
  }
  if (enclosed_volume(mesh) < 0.0) flip_winding(mesh);
  return mesh;
}

bool is_watertight(const SurfaceMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      std::uint32_t a = t[e], b = t[(e + 1) % 3];
      if (a == b) return false;
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  return std::all_of(edges.begin(), edges.end(), [](const auto& kv) { return kv.second == 2; });
}

double enclosed_volume(const SurfaceMesh& mesh) {
  if (!is_watertight(mesh)) throw ValidationError("enclosed_volume: mesh is not watertight");
  double six_v = 0.0;
  for (const auto& t : mesh.triangles)
    six_v += dot(mesh.points[t[0]], cross(mesh.points[t[1]], mesh.points[t[2]]));
  return six_v / 6.0;
}

void flip_winding(SurfaceMesh& mesh) {
  for (auto& t : mesh.triangles) std::swap(t[1], t[2]);
}

MidSurface camber_surface(const std::array<SectionParams, kSectionCount>& sections,
                          std::size_t n_span, std::size_t n_chord) {
  if (n_span < 2 || n_chord < 2) throw DomainError("lattice", "dimensions must be >= 2");
  check_sections_for_loft(sections);
  std::array<std::vector<Vec3>, kSectionCount> rows;
  for (std::size_t k = 0; k < kSectionCount; ++k) {
    const auto& s = sections[k];
    for (std::size_t j = 0; j <= n_chord; ++j) {
      const double x = static_cast<double>(j) / static_cast<double>(n_chord);
      rows[k].push_back(place_on_section(s, x, naca4_camber(s.camber_max, s.camber_pos, x)));
    }
  }
  const auto knots = section_knots(sections);
  std::vector<double> stations(n_span + 1);
  for (std::size_t i = 0; i <= n_span; ++i)
    stations[i] = knots.back() *
                  std::sin(0.5 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n_span));
  stations.back() = knots.back();
  const auto grid = interpolate_rows(rows, knots, stations);
  MidSurface mid;
  mid.n_span = n_span;
  mid.n_chord = n_chord;
  mid.points.reserve((n_span + 1) * (n_chord + 1));
  for (const auto& row : grid) mid.points.insert(mid.points.end(), row.begin(), row.end());
  return mid;
}

void write_stl(const std::filesystem::path& path, const SurfaceMesh& mesh) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(9);
  out << "solid manta\n";
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.points[t[0]];
    const Vec3& b = mesh.points[t[1]];
    const Vec3& c = mesh.points[t[2]];
    Vec3 n = cross(b - a, c - a);
    const double len = norm(n);
    if (len > 0.0) n = (1.0 / len) * n;
    out << " facet normal " << n[0] << ' ' << n[1] << ' ' << n[2] << "\n  outer loop\n";
    for (const Vec3* p : {&a, &b, &c})
      out << "   vertex " << (*p)[0] << ' ' << (*p)[1] << ' ' << (*p)[2] << '\n';
    out << "  endloop\n endfacet\n";
  }
  out << "endsolid manta\n";
}

void write_point_table(const std::filesystem::path& path, const SurfaceMesh& mesh) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.precision(12);
  out << "TITLE = \"manta outer shell\"\n";
  out << "VARIABLES = \"X\" \"Y\" \"Z\"\n";
  out << "ZONE I=" << mesh.loop_size() << ", J=" << mesh.stations() << ", F=POINT\n";
  for (const auto& p : mesh.points) out << p[0] << ' ' << p[1] << ' ' << p[2] << '\n';
}

Glider make_glider(const FullDesignVector& u, LoftResolution resolution) {
  Glider g;
  g.u = u;
  g.sections = build_sections(u);
  g.mesh = loft(g.sections, resolution);
  g.volume = enclosed_volume(g.mesh);
  return g;
}

}  // namespace manta
