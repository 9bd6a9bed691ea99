#include "manta/errors.hpp"
#include "manta/hydro.hpp"
#include "manta/sizing.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

namespace {

using namespace manta;

constexpr double kPi = std::numbers::pi;

double ellipsoid(double a, double b, double c) { return 4.0 * kPi / 3.0 * a * b * c; }

SizingVariables sphere(double r, double t) {
  SizingVariables y;
  y.a = y.b = y.c = r;
  y.t = t;
  return y;
}

// A bare volume with no surface points: only the volumetric formulas apply.
SizingGeometry bare(double volume, double delta_vb) {
  SizingGeometry g;
  g.volume = volume;
  g.delta_vb = delta_vb;
  return g;
}

const SizingGeometry& baseline_geometry() {
  static const SizingGeometry geo = [] {
    const auto g = make_glider(baseline_design());
    const auto p = polar(g, FlowConditions{}, HydroConfig{}, 1);
    const auto best = max_efficiency(p);
    double l = 0, d = 0;
    for (const auto& pt : p.points)
      if (pt.aoa_deg == best.aoa_star) l = pt.lift, d = pt.drag;
    return SizingGeometry::from_mesh(g.mesh, g.volume, glide_closure(l, d, FlowConditions{}).delta_vb);
  }();
  return geo;
}

TEST(EmptyWeight, ZeroThicknessShellWeighsNothing) {
  const MassBudget m;
  const auto geo = bare(0.1, 1e-3);
  const auto y = sphere(0.1, 0.0);
  const double fill = (0.1 - ellipsoid(0.1, 0.1, 0.1) - (1e-3 + y.v_buo) - m.v_sci) * m.rho_fill * m.gravity;
  EXPECT_NEAR(empty_weight(geo, y, m), fill, 1e-12 * fill);
}

TEST(EmptyWeight, HandEvaluatedShell) {
  const MassBudget m;
  const auto geo = bare(0.1, 1e-3);
  const auto y = sphere(0.1, 0.01);
  const double shell = 4.0 * kPi / 3.0 * (1.331e-3 - 1.0e-3) * 2700.0 * 9.804;
  EXPECT_NEAR(shell, 36.7, 0.05);
  const double fill = (0.1 - ellipsoid(0.11, 0.11, 0.11) - 1e-3 - m.v_sci) * m.rho_fill * m.gravity;
  EXPECT_NEAR(empty_weight(geo, y, m), shell + fill, 1e-12 * (shell + fill));
  EXPECT_NEAR(hull_external_volume(y) - hull_internal_volume(y), 1.3865e-3, 1e-7);
}

TEST(EmptyWeight, MoreBladderMeansLessFill) {
  const MassBudget m;
  const auto geo = bare(0.1, 1e-3);
  auto y = sphere(0.1, 0.005);
  double prev = empty_weight(geo, y, m);
  for (int i = 1; i <= 10; ++i) {
    y.v_buo = 0.001 * i;
    const double w = empty_weight(geo, y, m);
    EXPECT_LT(w, prev);
    prev = w;
  }
}

TEST(EmptyWeight, OverfullShellIsPackagingInfeasible) {
  const MassBudget m;
  const auto geo = bare(0.01, 1e-3);
  const auto y = sphere(0.2, 0.005);
  EXPECT_THROW(empty_weight(geo, y, m), PackagingInfeasible);
  EXPECT_LT(empty_weight_unchecked(geo, y, m), 0.0);
}

TEST(Structure, HandEvaluatedBuckling) {
  MassBudget m;
  SizingVariables y;
  y.a = 0.30, y.b = 0.20, y.c = 0.10, y.t = 0.005;
  const double r_min = 0.1 * 0.1 / 0.3;
  const double p_cr = 2.0 * 69e9 / std::sqrt(3.0 * (1.0 - 0.33 * 0.33)) * std::pow(0.005 / r_min, 2);
  EXPECT_NEAR(p_cr, 1.90e9, 0.01e9);
  EXPECT_NEAR(critical_pressure(y, m), p_cr, 1e-12 * p_cr);
  EXPECT_NEAR(g_struct(y, m), 1e7 / p_cr - 1.0, 1e-12);
  EXPECT_NEAR(g_struct(y, m), -0.995, 1e-3);
}

TEST(Structure, AxisOrderDoesNotMatter) {
  MassBudget m;
  SizingVariables a, b;
  a.a = 0.30, a.b = 0.20, a.c = 0.10;
  b.a = 0.10, b.b = 0.30, b.c = 0.20;
  EXPECT_DOUBLE_EQ(g_struct(a, m), g_struct(b, m));
}

TEST(Structure, SphereUsesItsRadius) {
  MassBudget m;
  const auto y = sphere(0.25, 0.004);
  const double classical = 2.0 * m.e_ph / std::sqrt(3.0 * (1.0 - m.nu_ph * m.nu_ph)) * std::pow(0.004 / 0.25, 2);
  EXPECT_NEAR(critical_pressure(y, m), classical, 1e-12 * classical);
}

TEST(Structure, CriticalPressureScalesWithThicknessSquared) {
  MassBudget m;
  auto y = sphere(0.2, 0.008);
  const double thick = g_struct(y, m) + 1.0;
  y.t = 0.004;
  EXPECT_NEAR((g_struct(y, m) + 1.0) / thick, 4.0, 1e-12);
}

TEST(Hydrostatics, ToleranceBandIsLinear) {
  MassBudget m;
  const auto geo = bare(0.06, 1e-3);
  const auto y = sphere(0.1, 0.004);
  const double excess = total_weight(geo, y, m) - buoyancy(geo, y, m);
  ASSERT_GT(excess, 0.0);
  const double b = m.rho_water * m.gravity * (0.06 - bladder_volume(geo, y) - m.v_sci);
  EXPECT_NEAR(buoyancy(geo, y, m), b, 1e-12 * b);
  EXPECT_NEAR(total_weight(geo, y, m), empty_weight(geo, y, m) + m.fixed_mass() * m.gravity, 1e-9);
  m.tau = excess;
  EXPECT_NEAR(g_hydro(geo, y, m), 0.0, 1e-12);
  m.tau = excess / 2.0;
  EXPECT_NEAR(g_hydro(geo, y, m), 1.0, 1e-12);
  m.tau = excess * 1e12;
  EXPECT_NEAR(g_hydro(geo, y, m), -1.0, 1e-11);
}

TEST(Surfacing, MatchesDisplacementRatio) {
  MassBudget m;
  const auto geo = bare(0.06, 1e-3);
  const auto y = sphere(0.1, 0.004);
  const double w = total_weight(geo, y, m);
  EXPECT_NEAR(g_surf(geo, y, m), w / (m.rho_water * m.gravity * (0.06 - m.v_sci)) - 1.0, 1e-12);
  // Choose the water density so the vehicle is 10% heavier than it displaces.
  m.rho_water = w / (1.1 * m.gravity * (0.06 - m.v_sci));
  EXPECT_NEAR(g_surf(geo, y, m), 0.1, 1e-12);
  m.rho_water = w / (m.gravity * (0.06 - m.v_sci));
  EXPECT_NEAR(g_surf(geo, y, m), 0.0, 1e-12);
}

TEST(Surfacing, WeightlessVehicleFloats) {
  MassBudget m;
  m.m_sci = m.m_pay = m.m_bat = m.m_buo = 0.0;
  m.rho_ph = m.rho_fill = 0.0;
  EXPECT_DOUBLE_EQ(g_surf(bare(0.06, 1e-3), sphere(0.1, 0.004), m), -1.0);
}

class Containment : public ::testing::Test {
 protected:
  void SetUp() override {
    y_.xi0 = 0.4, y_.zeta0 = 0.02;
    y_.a = 0.3, y_.b = 0.2, y_.c = 0.08, y_.t = 0.01;
    // Points at d^2 = 2 along each external semi-axis.
    const double s = std::sqrt(2.0);
    const double ax[] = {0.31, 0.21, 0.09};
    for (int k = 0; k < 3; ++k)
      for (double sign : {-1.0, 1.0}) {
        double p[3] = {0.0, 0.0, 0.0};
        p[k] = sign * s * ax[k];
        geo_.x.push_back(y_.xi0 + p[0]);
        geo_.y.push_back(p[1]);
        geo_.z.push_back(y_.zeta0 + p[2]);
      }
    geo_.volume = 1.0;
  }
  SizingGeometry geo_;
  SizingVariables y_;
};

TEST_F(Containment, PointsWellOutsideAreClear) {
  MassBudget m;
  m.eps_cont = 0.1;
  EXPECT_DOUBLE_EQ(g_cont(geo_, y_, m), 0.0);
}

TEST_F(Containment, PointOnTheHullViolatesByMargin) {
  MassBudget m;
  m.eps_cont = 0.1;
  geo_.x.push_back(y_.xi0);
  geo_.y.push_back(0.0);
  geo_.z.push_back(y_.zeta0 + 0.09);
  EXPECT_NEAR(g_cont(geo_, y_, m), 0.1, 1e-12);
}

TEST(ContainmentProperty, ShrinkingHullNeverIncreasesViolation) {
  const auto& geo = baseline_geometry();
  const MassBudget m;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    SizingVariables y;
    y.xi0 = 0.2 + 0.5 * u(rng);
    y.zeta0 = -0.03 + 0.06 * u(rng);
    y.a = 0.05 + 0.4 * u(rng);
    y.b = 0.05 + 0.4 * u(rng);
    y.c = 0.02 + 0.1 * u(rng);
    y.t = 0.001 + 0.01 * u(rng);
    auto smaller = y;
    smaller.a *= u(rng);
    smaller.b *= u(rng);
    smaller.c *= u(rng);
    ASSERT_LE(g_cont(geo, smaller, m), g_cont(geo, y, m));
  }
}

TEST(Payload, HandEvaluated) {
  const MassBudget m;
  const auto y = sphere(0.15, 0.005);
  const double v_int = 4.0 * kPi / 3.0 * 3.375e-3;
  EXPECT_NEAR(v_int, 0.01414, 1e-5);
  EXPECT_NEAR(g_pay(y, m), 0.0076 / v_int - 1.0, 1e-12);
  EXPECT_NEAR(g_pay(y, m), -0.4626, 5e-4);
}

TEST(Payload, ExactFitIsOnTheBoundary) {
  const MassBudget m;
  const double r = std::cbrt((m.v_pay + m.v_bat) * 3.0 / (4.0 * kPi));
  EXPECT_NEAR(g_pay(sphere(r, 0.005), m), 0.0, 1e-12);
}

TEST(Payload, ShrinkingAnyAxisIncreasesViolation) {
  const MassBudget m;
  const auto y = sphere(0.15, 0.005);
  for (int k = 0; k < 3; ++k) {
    auto z = y;
    (k == 0 ? z.a : k == 1 ? z.b : z.c) *= 0.9;
    EXPECT_GT(g_pay(z, m), g_pay(y, m));
  }
}

TEST(Constraints, FiniteOverRandomInputs) {
  const auto& geo = baseline_geometry();
  const auto bounds = SizingBounds::defaults(geo);
  const auto lo = bounds.lower.to_array(), hi = bounds.upper.to_array();
  const MassBudget m;
  std::mt19937_64 rng(17);
  for (int i = 0; i < 20000; ++i) {
    std::array<double, SizingVariables::kDim> v{};
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = std::uniform_real_distribution<double>(lo[k], hi[k])(rng);
    for (double g : sizing_constraints(geo, SizingVariables::from_array(v), m)) ASSERT_TRUE(std::isfinite(g));
  }
}

TEST(Budget, RejectsInvalidFields) {
  MassBudget m;
  m.nu_ph = 0.5;
  EXPECT_THROW(m.validate(), DomainError);
  m = {};
  m.rho_fill = -1.0;
  EXPECT_THROW(m.validate(), DomainError);
  EXPECT_NO_THROW(MassBudget{}.validate());
}

TEST(Bounds, DefaultBoxFollowsTheShell) {
  const auto& geo = baseline_geometry();
  const auto b = SizingBounds::defaults(geo);
  EXPECT_DOUBLE_EQ(b.lower.a, 0.02);
  EXPECT_DOUBLE_EQ(b.upper.a, 0.6);
  EXPECT_DOUBLE_EQ(b.lower.t, 0.001);
  EXPECT_DOUBLE_EQ(b.upper.t, 0.03);
  EXPECT_DOUBLE_EQ(b.lower.v_buo, geo.delta_vb);
  EXPECT_DOUBLE_EQ(b.upper.v_buo, 0.05);
  EXPECT_GE(b.lower.xi0, geo.min_corner()[0]);
  EXPECT_LE(b.upper.xi0, geo.max_corner()[0]);
}

TEST(Penalty, EqualsRawObjectiveOnFeasiblePoints) {
  const auto& geo = baseline_geometry();
  const MassBudget m;
  const PsoConfig cfg;
  const auto s = solve_sizing(geo, m, cfg);
  ASSERT_TRUE(s.feasible);
  EXPECT_TRUE(sizing_feasible(geo, s.y, m, cfg));
  EXPECT_EQ(penalized_objective(geo, s.y, m, cfg), empty_weight(geo, s.y, m));
  auto bad = s.y;
  bad.t = 0.0011;
  bad.a *= 1.5;
  EXPECT_GT(penalized_objective(geo, bad, m, cfg), empty_weight_unchecked(geo, bad, m));
}

TEST(Solver, BaselineIsFeasibleUnderIndependentRecheck) {
  const auto& geo = baseline_geometry();
  const MassBudget m;
  const auto s = solve_sizing(geo, m);
  ASSERT_TRUE(s.feasible);
  const auto& y = s.y;
  // Constraint formulas evaluated here from scratch.
  const double v_int = ellipsoid(y.a, y.b, y.c);
  const double v_ext = ellipsoid(y.a + y.t, y.b + y.t, y.c + y.t);
  const double v_bl = geo.delta_vb + y.v_buo;
  const double w_empty = (v_ext - v_int) * m.rho_ph * m.gravity +
                         (geo.volume - v_ext - v_bl - m.v_sci) * m.rho_fill * m.gravity;
  const double w = w_empty + m.fixed_mass() * m.gravity;
  const double b = m.rho_water * m.gravity * (geo.volume - v_bl - m.v_sci);
  double axes[3] = {y.a, y.b, y.c};
  std::sort(axes, axes + 3);
  const double r_min = axes[0] * axes[0] / axes[2];
  const double p_cr = 2.0 * m.e_ph / std::sqrt(3.0 * (1.0 - m.nu_ph * m.nu_ph)) * std::pow(y.t / r_min, 2);
  double cont = 0.0;
  for (std::size_t i = 0; i < geo.x.size(); ++i) {
    const double dx = (geo.x[i] - y.xi0) / (y.a + y.t);
    const double dy = geo.y[i] / (y.b + y.t);
    const double dz = (geo.z[i] - y.zeta0) / (y.c + y.t);
    cont += std::max(0.0, (1.0 + m.eps_cont) / (dx * dx + dy * dy + dz * dz) - 1.0);
  }
  EXPECT_NEAR(s.w_empty, w_empty, 1e-9 * w_empty);
  EXPECT_LE(m.p_max / p_cr - 1.0, 1e-9);
  EXPECT_LE((w - b) / m.tau - 1.0, 1e-9);
  EXPECT_LE(w / (m.rho_water * m.gravity * (geo.volume - m.v_sci)) - 1.0, 1e-9);
  EXPECT_LE(cont, 1e-9);
  EXPECT_LE((m.v_pay + m.v_bat) / v_int - 1.0, 1e-9);
  for (double g : s.constraints) EXPECT_LE(g, 1e-9);
}

TEST(Solver, IsBitDeterministic) {
  const auto& geo = baseline_geometry();
  const MassBudget m;
  const auto a = solve_sizing(geo, m);
  const auto b = solve_sizing(geo, m);
  EXPECT_EQ(a.y.to_array(), b.y.to_array());
  EXPECT_EQ(a.w_empty, b.w_empty);
  EXPECT_EQ(a.constraints, b.constraints);
  EXPECT_EQ(sizing_report_json(a, true), sizing_report_json(b, true));
}

TEST(Solver, UnconstrainedOptimumSitsOnTheMonotoneCorner) {
  // With only the box active, W_empty rises with t (shell is denser than
  // filler), falls with v_buo, and falls with every semi-axis while t is small.
  const auto& geo = baseline_geometry();
  const MassBudget m;
  PsoConfig cfg;
  cfg.active = {false, false, false, false, false};
  cfg.packaging = false;
  const auto bounds = SizingBounds::defaults(geo);
  const auto s = solve_sizing(geo, m, cfg, bounds);
  const double tol = 1e-6;
  EXPECT_NEAR(s.y.t, bounds.lower.t, tol);
  EXPECT_NEAR(s.y.v_buo, bounds.upper.v_buo, tol);
  EXPECT_NEAR(s.y.a, bounds.upper.a, tol);
  EXPECT_NEAR(s.y.b, bounds.upper.b, tol);
  EXPECT_NEAR(s.y.c, bounds.upper.c, tol);
}

TEST(Solver, BeatsRandomFeasibleSamples) {
  const auto& geo = baseline_geometry();
  const MassBudget m;
  const PsoConfig cfg;
  const auto s = solve_sizing(geo, m, cfg);
  ASSERT_TRUE(s.feasible);
  const auto bounds = SizingBounds::defaults(geo);
  const auto lo = bounds.lower.to_array(), hi = bounds.upper.to_array();
  std::mt19937_64 rng(23);
  std::size_t found = 0;
  for (int i = 0; i < 400000; ++i) {
    std::array<double, SizingVariables::kDim> v{};
    for (std::size_t k = 0; k < v.size(); ++k)
      v[k] = std::uniform_real_distribution<double>(lo[k], hi[k])(rng);
    const auto y = SizingVariables::from_array(v);
    if (!sizing_feasible(geo, y, m, cfg)) continue;
    ++found;
    EXPECT_LE(s.w_empty, empty_weight(geo, y, m));
  }
  EXPECT_GT(found, 0u);
}

TEST(Solver, ReportsViolationsWhenNothingFits) {
  auto geo = baseline_geometry();
  MassBudget m;
  m.v_pay = 0.5;  // payload larger than the body
  const auto s = solve_sizing(geo, m);
  EXPECT_FALSE(s.feasible);
  EXPECT_GT(s.violation[4], 0.0);
  EXPECT_NE(sizing_report_json(s).find("\"feasible\""), std::string::npos);
}

TEST(Solver, RejectsBadSwarmSettings) {
  PsoConfig cfg;
  cfg.particles = 0;
  EXPECT_THROW(cfg.validate(), DomainError);
}

}  // namespace
