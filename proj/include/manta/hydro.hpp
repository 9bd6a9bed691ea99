#pragma once

#include "manta/geometry.hpp"

#include <chrono>
#include <memory>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace manta {

struct FlowConditions {
  double speed = 0.25;        // m/s
  double density = 1030.0;    // kg/m^3
  double viscosity = 0.0012;  // kg/(m s)
  double gravity = 9.804;     // m/s^2

  void validate() const;  // DomainError unless all strictly positive
  double dynamic_pressure() const { return 0.5 * density * speed * speed; }
  double reynolds(double length) const { return density * speed * length / viscosity; }
};

struct Lattice {
  std::size_t n_span = 12;  // spanwise panels per half-body
  std::size_t n_chord = 6;
};

struct HydroConfig {
  Lattice coarse{12, 6};
  Lattice fine{24, 12};
  double transition_reynolds = 5e5;
  double aoa_min_deg = -2.0;
  double aoa_max_deg = 12.0;
  double aoa_step_deg = 1.0;
  double field_aoa_deg = 8.0;  // operating point for the distributed field
  LoftResolution mesh{};

  const Lattice& lattice(int fidelity) const;  // DomainError unless 1 or 2
  std::vector<double> aoa_grid() const;
};

struct VlmResult {
  double lift = 0.0;           // N, full body
  double induced_drag = 0.0;   // N, Trefftz plane
  std::vector<double> panel_dcp;  // loading coefficient per half-body panel
};

/// Horseshoe vortex lattice on a half-body camber surface with its mirror
/// image. The influence matrix depends only on geometry, so one factorisation
/// serves a whole incidence sweep. Trailing legs run along +x (body axis).
class VortexLattice {
 public:
  explicit VortexLattice(const MidSurface& surface);

  std::size_t panels() const { return control_.size(); }
  /// Throws EvaluationFailed if the influence matrix is singular or the
  /// incidence is outside (-20, 20) degrees.
  VlmResult solve(double aoa_deg, const FlowConditions& flow) const;
  std::vector<VlmResult> sweep(const std::vector<double>& aoa_deg, const FlowConditions& flow) const;

 private:
  struct Factorisation;
  const MidSurface surface_;
  std::vector<Vec3> control_, normal_, bound_a_, bound_b_;
  std::vector<double> area_;
  std::shared_ptr<Factorisation> lu_;
};

VlmResult vlm_forces(const MidSurface& surface, double aoa_deg, const FlowConditions& flow);
VlmResult vlm_forces(const std::array<SectionParams, kSectionCount>& sections, double aoa_deg,
                     const FlowConditions& flow, Lattice lattice);

/// Structured skin patch: `stations` rows of `points` each, every row running
/// from the leading edge downstream.
struct SkinGrid {
  std::size_t stations = 0;
  std::size_t points = 0;
  std::vector<Vec3> xyz;
  const Vec3& at(std::size_t s, std::size_t p) const { return xyz[s * points + p]; }
};

/// Laminar 1.328/sqrt(Re) below the transition Reynolds number, turbulent
/// 0.074/Re^0.2 above; Re clamped to >= 1.
double flat_plate_cf(double reynolds, double transition_reynolds);

/// Friction drag of a skin patch. Each panel takes the friction accumulated
/// between its upstream and downstream run lengths, so a plate of length c
/// recovers q * S * Cf(Re_c) exactly.
double skin_friction_drag(const SkinGrid& skin, const FlowConditions& flow, double transition_reynolds);

/// Upper and lower skins of a lofted shell, both halves.
std::vector<SkinGrid> mesh_skins(const SurfaceMesh& mesh);

double viscous_drag(const SurfaceMesh& mesh, const FlowConditions& flow, double transition_reynolds = 5e5);

struct PolarPoint {
  double aoa_deg = 0.0;
  double lift = 0.0;  // N
  double drag = 0.0;  // N
};

struct PolarCurve {
  std::vector<PolarPoint> points;
  int fidelity = 1;
};

/// Checks strictly increasing incidence and positive drag; throws
/// EvaluationFailed otherwise.
void validate_polar(const PolarCurve& polar);

PolarCurve polar(const Glider& glider, const FlowConditions& flow, const HydroConfig& config, int fidelity);

struct GlideState {
  double gamma = 0.0;     // rad
  double delta_vb = 0.0;  // m^3
  double aoa_star = 0.0;  // deg
  double e_max = 0.0;
};

/// Origin tangent of the polar: E_max = max L/D, ties resolved to the smaller
/// incidence. Throws EvaluationFailed when no sample has positive lift.
GlideState max_efficiency(const PolarCurve& polar);

/// tan(gamma) = -D/L; bladder volume balancing the resultant force.
GlideState glide_closure(double lift, double drag, const FlowConditions& flow);

/// Distributed loading and lumped forces at the reference incidence on the
/// coarse lattice, the physics sample consumed by the design-space reduction.
struct FieldSample {
  std::vector<double> field;
  double lift = 0.0;
  double drag = 0.0;
};
FieldSample field_sample(const Glider& glider, const FlowConditions& flow, const HydroConfig& config);

/// CSV with header aoa_deg,lift_N,drag_N.
void write_polar_csv(const std::filesystem::path& path, const PolarCurve& polar,
                     const std::string& config_hash = {});
PolarCurve read_polar_csv(const std::filesystem::path& path, int fidelity);

/// Directory protocol letting an external solver stand in for either
/// fidelity. For every request the adapter creates `<root>/<tag>/` holding
/// `design.csv` (parameter,value rows plus a `fidelity` row), runs
/// `command <request dir>` when a command is configured, then waits for the
/// sentinel file `DONE` and reads `polar.csv` (aoa_deg,lift_N,drag_N).
class ExternalSolverAdapter {
 public:
  ExternalSolverAdapter(std::filesystem::path root, std::string command = {},
                        std::chrono::milliseconds timeout = std::chrono::minutes(60));

  std::filesystem::path request_dir(const FullDesignVector& u, int fidelity) const;
  /// Writes the request files and returns the request directory.
  std::filesystem::path submit(const FullDesignVector& u, int fidelity) const;
  /// Reads a finished request. Throws EvaluationFailed when the sentinel is
  /// missing or the polar does not cover the incidence grid.
  PolarCurve collect(const std::filesystem::path& dir, int fidelity, const HydroConfig& config) const;
  /// submit + optional command + wait for the sentinel + collect.
  PolarCurve evaluate(const FullDesignVector& u, int fidelity, const HydroConfig& config) const;

  static constexpr const char* kDesignFile = "design.csv";
  static constexpr const char* kPolarFile = "polar.csv";
  static constexpr const char* kSentinel = "DONE";

 private:
  std::filesystem::path root_;
  std::string command_;
  std::chrono::milliseconds timeout_;
};

}  // namespace manta
