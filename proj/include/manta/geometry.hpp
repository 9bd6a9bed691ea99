#pragma once

#include "manta/vec3.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace manta {

inline constexpr std::size_t kDesignDim = 32;
inline constexpr std::size_t kSectionCount = 4;

/// Half-body design: [root thickness, root chord] followed by ten parameters
/// for each of sections 2-4 in SectionParams field order. Angles in radians.
using FullDesignVector = std::array<double, kDesignDim>;

/// One transverse section: NACA 4-digit profile placed by its leading edge
/// and rotated by twist (about the local span axis, positive nose-up), then
/// roll (about x), then yaw (about z).
struct SectionParams {
  double camber_max = 0.0;  // fraction of chord
  double camber_pos = 0.4;  // fraction of chord
  double thickness = 0.12;  // fraction of chord
  double chord = 1.0;       // m
  Vec3 leading_edge{0.0, 0.0, 0.0};
  double twist = 0.0;
  double roll = 0.0;
  double yaw = 0.0;
};

/// Throws DomainError naming the offending field.
void validate_section(const SectionParams& s);

std::array<std::string_view, kDesignDim> design_parameter_names();

/// Box bounds on the 32 design parameters.
struct DesignBounds {
  FullDesignVector lower{};
  FullDesignVector upper{};

  bool contains(const FullDesignVector& u) const;
  FullDesignVector clamp(const FullDesignVector& u) const;
  /// Throws DomainError for the first component outside the box.
  void check(const FullDesignVector& u) const;
};

/// Stand-in baseline: ~2 m span, 1 m centre-body chord.
FullDesignVector baseline_design();
DesignBounds default_design_bounds();

struct Point2 {
  double x = 0.0;
  double z = 0.0;
};

/// Closed NACA 4-digit loop in chord units: trailing edge -> upper surface ->
/// leading edge -> lower surface -> trailing edge (first point repeated at
/// the end, 2 * n_points - 1 entries). Cosine-spaced abscissae and the
/// closed-trailing-edge thickness polynomial.
std::vector<Point2> naca4_profile(double camber_max, double camber_pos, double thickness,
                                  std::size_t n_points);

/// Mean-line ordinate and slope at chord fraction x.
double naca4_camber(double camber_max, double camber_pos, double x, double* slope = nullptr);
/// Half-thickness (chord units) of the closed-trailing-edge polynomial.
double naca4_half_thickness(double thickness, double x);

std::array<SectionParams, kSectionCount> build_sections(const FullDesignVector& u);
FullDesignVector pack_sections(const std::array<SectionParams, kSectionCount>& sections);

/// Maps a point given in section chord units (x along chord, z normal) to
/// body coordinates: x streamwise, y spanwise, z up.
Vec3 place_on_section(const SectionParams& s, double x_chord, double z_chord);

struct LoftResolution {
  std::size_t chordwise = 57;  // points per surface side, LE to TE
  std::size_t spanwise = 57;   // stations per half-body, root to tip
};

/// Watertight triangulated shell of the full (mirrored) body. Points are laid
/// out station-major: `stations()` rows of `loop_size()` points ordered from
/// the left tip (y < 0) to the right tip; each row follows the section loop
/// TE -> upper -> LE -> lower. Triangles wind outward.
struct SurfaceMesh {
  std::vector<Vec3> points;
  std::vector<std::array<std::uint32_t, 3>> triangles;
  std::size_t spanwise_stations = 0;  // per half-body, including the root
  std::size_t chordwise_points = 0;   // per side, LE and TE included

  std::size_t loop_size() const { return 2 * (chordwise_points - 1); }
  std::size_t stations() const { return 2 * spanwise_stations - 1; }
  const Vec3& at(std::size_t station, std::size_t loop_index) const {
    return points[station * loop_size() + loop_index];
  }
};

/// Spanwise cubic loft through the four sections (zero spanwise slope of x and
/// z at the symmetry plane), mirrored and closed with tip caps. Throws
/// GeometryInfeasible for chords below 1 cm, non-increasing spanwise
/// ordering, vanishing tip thickness or a folded planform map.
SurfaceMesh loft(const std::array<SectionParams, kSectionCount>& sections,
                 LoftResolution resolution = {});

bool is_watertight(const SurfaceMesh& mesh);

/// Divergence-theorem volume; positive for outward winding. Throws
/// ValidationError if the mesh is not watertight.
double enclosed_volume(const SurfaceMesh& mesh);

/// Reverse every triangle.
void flip_winding(SurfaceMesh& mesh);

/// Camber (mid) surface of the half-body sampled on a lattice of
/// (n_span + 1) x (n_chord + 1) points, station-major from root to tip.
/// Spanwise stations are half-cosine spaced (clustered at the tip), chordwise
/// points uniform in chord fraction.
struct MidSurface {
  std::size_t n_span = 0;
  std::size_t n_chord = 0;
  std::vector<Vec3> points;

  const Vec3& at(std::size_t i_span, std::size_t i_chord) const {
    return points[i_span * (n_chord + 1) + i_chord];
  }
};

MidSurface camber_surface(const std::array<SectionParams, kSectionCount>& sections,
                          std::size_t n_span, std::size_t n_chord);

/// ASCII STL.
void write_stl(const std::filesystem::path& path, const SurfaceMesh& mesh);
/// Structured point table (Tecplot POINT layout): header with I (loop) and J
/// (station) dimensions, then one "x y z" line per point.
void write_point_table(const std::filesystem::path& path, const SurfaceMesh& mesh);

/// A lofted design with the derived quantities the sizing level consumes.
struct Glider {
  FullDesignVector u{};
  std::array<SectionParams, kSectionCount> sections{};
  SurfaceMesh mesh;
  double volume = 0.0;
};

Glider make_glider(const FullDesignVector& u, LoftResolution resolution = {});

}  // namespace manta
