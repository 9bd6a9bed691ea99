#pragma once

#include "manta/geometry.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace manta {

/// Pressure hull placement and size plus the extra bladder volume.
struct SizingVariables {
  double xi0 = 0.0;    // hull centre x [m]
  double zeta0 = 0.0;  // hull centre z [m]
  double a = 0.1;      // internal semi-axes [m]
  double b = 0.1;
  double c = 0.1;
  double t = 0.005;    // wall thickness [m]
  double v_buo = 0.0;  // additional buoyancy volume [m^3]

  static constexpr std::size_t kDim = 7;
  std::array<double, kDim> to_array() const { return {xi0, zeta0, a, b, c, t, v_buo}; }
  static SizingVariables from_array(const std::array<double, kDim>& v) {
    return {v[0], v[1], v[2], v[3], v[4], v[5], v[6]};
  }
};

std::array<std::string_view, SizingVariables::kDim> sizing_variable_names();

struct MassBudget {
  double m_sci = 1.0;  // kg
  double m_pay = 2.5;
  double m_bat = 8.0;
  double m_buo = 7.5;
  double v_sci = 0.0068;  // m^3
  double v_pay = 0.0026;
  double v_bat = 0.005;
  double rho_fill = 950.0;   // kg/m^3
  double rho_ph = 2700.0;
  double rho_water = 1030.0;
  double gravity = 9.804;    // m/s^2
  double e_ph = 69e9;        // Pa
  double nu_ph = 0.33;
  double p_max = 1e7;        // Pa
  double tau = 2.0;          // N, hydrostatic trim tolerance
  double eps_cont = 0.05;    // containment margin on d^2

  void validate() const;  // DomainError naming the field
  double fixed_mass() const { return m_sci + m_pay + m_bat + m_buo; }
};

/// What the sizing level sees of an outer shell: its volume, its surface
/// points (structure of arrays, for the containment kernel) and the bladder
/// stroke required by the glide closure.
struct SizingGeometry {
  double volume = 0.0;
  double delta_vb = 0.0;
  std::vector<double> x, y, z;
  /// Symmetry-plane section as upper/lower ordinates over ascending x; used
  /// to screen hull centres that fall outside the body. Empty disables it.
  std::vector<double> root_x, root_upper, root_lower;

  static SizingGeometry from_mesh(const SurfaceMesh& mesh, double volume, double delta_vb);
  std::array<double, 3> min_corner() const;
  std::array<double, 3> max_corner() const;
};

double hull_internal_volume(const SizingVariables& y);
double hull_external_volume(const SizingVariables& y);
double bladder_volume(const SizingGeometry& geo, const SizingVariables& y);
/// V_ph^ext + V_bladd + V_sci.
double occupied_volume(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);

/// W_ph + W_fill [N]. Throws PackagingInfeasible if the occupied volume
/// exceeds the shell volume.
double empty_weight(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);
/// Same formula without the packaging check (the fill term may go negative).
double empty_weight_unchecked(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);
double total_weight(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);
double buoyancy(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);

double critical_pressure(const SizingVariables& y, const MassBudget& m);
double g_struct(const SizingVariables& y, const MassBudget& m);
double g_hydro(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);
double g_surf(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);
double g_cont(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m);
double g_pay(const SizingVariables& y, const MassBudget& m);

/// Distance (in root chords) of the hull centre outside the symmetry-plane
/// section; zero when the centre is enclosed. The containment sum only sees
/// shell points inside the hull, so a hull placed wholly outside the body
/// would otherwise pass it.
double hull_enclosure_violation(const SizingGeometry& geo, const SizingVariables& y);

inline constexpr std::size_t kConstraintCount = 5;
std::array<std::string_view, kConstraintCount> constraint_names();
/// (g_struct, g_hydro, g_surf, g_cont, g_pay).
std::array<double, kConstraintCount> sizing_constraints(const SizingGeometry& geo, const SizingVariables& y,
                                                        const MassBudget& m);

struct SizingBounds {
  SizingVariables lower;
  SizingVariables upper;

  /// Centres inside the shell bounding box, semi-axes [0.02, 0.6] m, wall
  /// [1, 30] mm, v_buo in [delta_vb, max(0.05, delta_vb)] m^3.
  static SizingBounds defaults(const SizingGeometry& geo);
  void validate() const;
};

struct PsoConfig {
  std::size_t particles = 32;
  std::size_t iterations = 200;
  double inertia = 0.721;
  double cognitive = 1.193;
  double social = 1.193;
  std::size_t pattern_iterations = 50;
  double pattern_shrink = 0.5;
  double penalty = 1e6;
  std::uint64_t seed = 1;
  /// Switches for the five constraints, in sizing_constraints order.
  std::array<bool, kConstraintCount> active{true, true, true, true, true};
  /// Penalise occupied volume beyond the shell volume and hull centres
  /// outside the body.
  bool packaging = true;
  bool record_trace = false;

  void validate() const;
};

struct SizingSolution {
  SizingVariables y;
  double w_empty = 0.0;
  std::array<double, kConstraintCount> constraints{};
  bool feasible = false;
  std::size_t pso_iterations = 0;
  std::size_t evaluations = 0;
  /// max(0, g_i) at the returned point; packaging excess as a volume ratio.
  std::array<double, kConstraintCount> violation{};
  double packaging_excess = 0.0;
  double enclosure_violation = 0.0;
  std::vector<double> trace;  // best penalised objective per iteration
};

/// Whether `y` passes every active constraint and the packaging screens.
bool sizing_feasible(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m,
                     const PsoConfig& cfg);

/// W_empty + penalty * sum max(0, g_i)^2 over active constraints (plus
/// packaging excess and enclosure when enabled).
double penalized_objective(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m,
                           const PsoConfig& cfg);

/// Deterministic particle swarm (no random coefficients, Sobol initial swarm)
/// followed by a compass pattern search from the incumbent. Feasible points
/// always rank ahead of infeasible ones.
SizingSolution solve_sizing(const SizingGeometry& geo, const MassBudget& m, const PsoConfig& cfg = {});
SizingSolution solve_sizing(const SizingGeometry& geo, const MassBudget& m, const PsoConfig& cfg,
                            const SizingBounds& bounds);

/// JSON report: y*, W*_empty, per-constraint values and margins, flags,
/// optionally the iteration trace.
std::string sizing_report_json(const SizingSolution& s, bool include_trace = false);

}  // namespace manta
