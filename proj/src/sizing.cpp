#include "manta/sizing.hpp"

#include "manta/errors.hpp"
#include "manta/kernels/kernels.hpp"
#include "manta/sampling.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace manta {

namespace {

constexpr double kFourThirdsPi = 4.0 * std::numbers::pi / 3.0;

void positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(name, "must be finite and > 0");
}

}  // namespace

std::array<std::string_view, SizingVariables::kDim> sizing_variable_names() {
  return {"xi0", "zeta0", "a", "b", "c", "t", "v_buo"};
}

std::array<std::string_view, kConstraintCount> constraint_names() {
  return {"g_struct", "g_hydro", "g_surf", "g_cont", "g_pay"};
}

void MassBudget::validate() const {
  positive(m_sci, "m_sci");
  positive(m_pay, "m_pay");
  positive(m_bat, "m_bat");
  positive(m_buo, "m_buo");
  positive(v_sci, "v_sci");
  positive(v_pay, "v_pay");
  positive(v_bat, "v_bat");
  positive(rho_fill, "rho_fill");
  positive(rho_ph, "rho_ph");
  positive(rho_water, "rho_water");
  positive(gravity, "gravity");
  positive(e_ph, "e_ph");
  positive(p_max, "p_max");
  positive(tau, "tau");
  positive(eps_cont, "eps_cont");
  if (!(nu_ph > 0.0 && nu_ph < 0.5)) throw DomainError("nu_ph", "must lie in (0, 0.5)");
}

SizingGeometry SizingGeometry::from_mesh(const SurfaceMesh& mesh, double volume, double delta_vb) {
  positive(volume, "volume");
  if (!(delta_vb >= 0.0) || !std::isfinite(delta_vb)) throw DomainError("delta_vb", "must be >= 0");
  SizingGeometry g;
  g.volume = volume;
  g.delta_vb = delta_vb;
  g.x.reserve(mesh.points.size());
  g.y.reserve(mesh.points.size());
  g.z.reserve(mesh.points.size());
  for (const auto& p : mesh.points) {
    g.x.push_back(p[0]);
    g.y.push_back(p[1]);
    g.z.push_back(p[2]);
  }
  // Root station of the mirrored mesh: upper side runs TE -> LE, lower LE -> TE.
  if (mesh.spanwise_stations > 0 && mesh.chordwise_points >= 2) {
    const std::size_t root = mesh.spanwise_stations - 1;
    const std::size_t nc = mesh.chordwise_points;
    const std::size_t loop = mesh.loop_size();
    for (std::size_t k = 0; k < nc; ++k) {
      const Vec3& up = mesh.at(root, nc - 1 - k);
      const Vec3& lo = mesh.at(root, (nc - 1 + k) % loop);
      g.root_x.push_back(0.5 * (up[0] + lo[0]));
      g.root_upper.push_back(std::max(up[2], lo[2]));
      g.root_lower.push_back(std::min(up[2], lo[2]));
    }
    if (!std::is_sorted(g.root_x.begin(), g.root_x.end())) {
      g.root_x.clear();
      g.root_upper.clear();
      g.root_lower.clear();
    }
  }
  return g;
}

std::array<double, 3> SizingGeometry::min_corner() const {
  if (x.empty()) return {0.0, 0.0, 0.0};
  return {*std::min_element(x.begin(), x.end()), *std::min_element(y.begin(), y.end()),
          *std::min_element(z.begin(), z.end())};
}

std::array<double, 3> SizingGeometry::max_corner() const {
  if (x.empty()) return {0.0, 0.0, 0.0};
  return {*std::max_element(x.begin(), x.end()), *std::max_element(y.begin(), y.end()),
          *std::max_element(z.begin(), z.end())};
}

double hull_internal_volume(const SizingVariables& y) { return kFourThirdsPi * y.a * y.b * y.c; }

double hull_external_volume(const SizingVariables& y) {
  return kFourThirdsPi * (y.a + y.t) * (y.b + y.t) * (y.c + y.t);
}

double bladder_volume(const SizingGeometry& geo, const SizingVariables& y) { return geo.delta_vb + y.v_buo; }

double occupied_volume(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  return hull_external_volume(y) + bladder_volume(geo, y) + m.v_sci;
}

double empty_weight_unchecked(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  const double w_ph = (hull_external_volume(y) - hull_internal_volume(y)) * m.rho_ph * m.gravity;
  const double w_fill = (geo.volume - occupied_volume(geo, y, m)) * m.rho_fill * m.gravity;
  return w_ph + w_fill;
}

double empty_weight(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  if (occupied_volume(geo, y, m) > geo.volume)
    throw PackagingInfeasible("hull, bladders and payload exceed the shell volume");
  return empty_weight_unchecked(geo, y, m);
}

double total_weight(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  return empty_weight_unchecked(geo, y, m) + m.fixed_mass() * m.gravity;
}

double buoyancy(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  return m.rho_water * m.gravity * (geo.volume - bladder_volume(geo, y) - m.v_sci);
}

double critical_pressure(const SizingVariables& y, const MassBudget& m) {
  std::array<double, 3> s{y.a, y.b, y.c};
  std::sort(s.begin(), s.end(), std::greater<>());
  const double r_min = std::min({s[1] * s[1] / s[0], s[2] * s[2] / s[0], s[0] * s[0] / s[1],
                                 s[2] * s[2] / s[1], s[0] * s[0] / s[2], s[1] * s[1] / s[2]});
  const double ratio = y.t / r_min;
  return 2.0 * m.e_ph / std::sqrt(3.0 * (1.0 - m.nu_ph * m.nu_ph)) * ratio * ratio;
}

double g_struct(const SizingVariables& y, const MassBudget& m) { return m.p_max / critical_pressure(y, m) - 1.0; }

double g_hydro(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  return (total_weight(geo, y, m) - buoyancy(geo, y, m)) / m.tau - 1.0;
}

double g_surf(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  return total_weight(geo, y, m) / (m.rho_water * m.gravity * (geo.volume - m.v_sci)) - 1.0;
}

double g_cont(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m) {
  const kernels::Ellipsoid e{y.xi0, y.zeta0, y.a + y.t, y.b + y.t, y.c + y.t};
  return kernels::containment_violation({geo.x, geo.y, geo.z}, e, m.eps_cont);
}

double g_pay(const SizingVariables& y, const MassBudget& m) {
  return (m.v_pay + m.v_bat) / hull_internal_volume(y) - 1.0;
}

double hull_enclosure_violation(const SizingGeometry& geo, const SizingVariables& y) {
  const auto& xs = geo.root_x;
  if (xs.size() < 2) return 0.0;
  const double chord = xs.back() - xs.front();
  if (!(chord > 0.0)) return 0.0;
  double out = std::max({0.0, xs.front() - y.xi0, y.xi0 - xs.back()});
  const double xc = std::clamp(y.xi0, xs.front(), xs.back());
  const auto it = std::upper_bound(xs.begin(), xs.end(), xc);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - xs.begin(), 1)), xs.size() - 1);
  const double span = xs[i] - xs[i - 1];
  const double w = span > 0.0 ? (xc - xs[i - 1]) / span : 0.0;
  const double zu = geo.root_upper[i - 1] + w * (geo.root_upper[i] - geo.root_upper[i - 1]);
  const double zl = geo.root_lower[i - 1] + w * (geo.root_lower[i] - geo.root_lower[i - 1]);
  out += std::max({0.0, y.zeta0 - zu, zl - y.zeta0});
  return out / chord;
}

std::array<double, kConstraintCount> sizing_constraints(const SizingGeometry& geo, const SizingVariables& y,
                                                        const MassBudget& m) {
  return {g_struct(y, m), g_hydro(geo, y, m), g_surf(geo, y, m), g_cont(geo, y, m), g_pay(y, m)};
}

SizingBounds SizingBounds::defaults(const SizingGeometry& geo) {
  const auto lo = geo.min_corner();
  const auto hi = geo.max_corner();
  SizingBounds b;
  b.lower = {lo[0], lo[2], 0.02, 0.02, 0.02, 0.001, geo.delta_vb};
  b.upper = {hi[0], hi[2], 0.6, 0.6, 0.6, 0.030, std::max(0.05, geo.delta_vb)};
  return b;
}

void SizingBounds::validate() const {
  const auto lo = lower.to_array();
  const auto hi = upper.to_array();
  const auto names = sizing_variable_names();
  for (std::size_t i = 0; i < SizingVariables::kDim; ++i)
    if (!(lo[i] <= hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
      throw DomainError(std::string(names[i]), "lower bound exceeds upper bound");
  for (std::size_t i = 2; i < 6; ++i)
    if (!(lo[i] > 0.0)) throw DomainError(std::string(names[i]), "lower bound must be > 0");
}

void PsoConfig::validate() const {
  if (particles < 2) throw DomainError("particles", "need at least 2");
  if (!(penalty > 0.0)) throw DomainError("penalty", "must be > 0");
  if (!(pattern_shrink > 0.0 && pattern_shrink < 1.0)) throw DomainError("pattern_shrink", "must lie in (0, 1)");
}

namespace {

// Ranking tiers: feasible, then infeasible with the hull centre inside the
// body, then centre outside (ordered by how far outside).
struct Score {
  int tier = 3;
  double value = std::numeric_limits<double>::infinity();
  bool feasible() const { return tier == 0; }
};

bool better(const Score& a, const Score& b) {
  if (a.tier != b.tier) return a.tier < b.tier;
  return a.value < b.value;
}

double squared_violation(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m,
                         const PsoConfig& cfg) {
  double violation = 0.0;
  const auto g = sizing_constraints(geo, y, m);
  for (std::size_t i = 0; i < kConstraintCount; ++i)
    if (cfg.active[i] && g[i] > 0.0) violation += g[i] * g[i];
  if (cfg.packaging) {
    const double excess = occupied_volume(geo, y, m) / geo.volume - 1.0;
    if (excess > 0.0) violation += excess * excess;
    const double outside = hull_enclosure_violation(geo, y);
    violation += outside * outside;
  }
  return violation;
}

struct Evaluator {
  const SizingGeometry& geo;
  const MassBudget& m;
  const PsoConfig& cfg;
  const SizingBounds& bounds;
  std::size_t count = 0;

  SizingVariables decode(const std::array<double, SizingVariables::kDim>& s) const {
    const auto lo = bounds.lower.to_array();
    const auto hi = bounds.upper.to_array();
    std::array<double, SizingVariables::kDim> v{};
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = lo[i] + s[i] * (hi[i] - lo[i]);
    return SizingVariables::from_array(v);
  }

  Score operator()(const std::array<double, SizingVariables::kDim>& s) {
    ++count;
    const auto y = decode(s);
    if (cfg.packaging) {
      const double outside = hull_enclosure_violation(geo, y);
      if (outside > 0.0) return {2, outside};
    }
    const double violation = squared_violation(geo, y, m, cfg);
    const double w = empty_weight_unchecked(geo, y, m);
    double value = violation > 0.0 ? w + cfg.penalty * violation : w;
    if (!std::isfinite(value)) value = std::numeric_limits<double>::max();
    return {violation == 0.0 ? 0 : 1, value};
  }
};

}  // namespace

bool sizing_feasible(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m,
                     const PsoConfig& cfg) {
  return squared_violation(geo, y, m, cfg) == 0.0;
}

double penalized_objective(const SizingGeometry& geo, const SizingVariables& y, const MassBudget& m,
                           const PsoConfig& cfg) {
  const double violation = squared_violation(geo, y, m, cfg);
  const double w = empty_weight_unchecked(geo, y, m);
  return violation > 0.0 ? w + cfg.penalty * violation : w;
}

SizingSolution solve_sizing(const SizingGeometry& geo, const MassBudget& m, const PsoConfig& cfg) {
  return solve_sizing(geo, m, cfg, SizingBounds::defaults(geo));
}

SizingSolution solve_sizing(const SizingGeometry& geo, const MassBudget& m, const PsoConfig& cfg,
                            const SizingBounds& bounds) {
  m.validate();
  cfg.validate();
  bounds.validate();
  positive(geo.volume, "volume");
  constexpr std::size_t D = SizingVariables::kDim;
  using Pos = std::array<double, D>;
  Evaluator eval{geo, m, cfg, bounds};
  SizingSolution sol;

  // Positions from the first block of a Sobol set, initial velocities from
  // the offset to the second block, so the swarm starts spread and moving.
  const auto init = SobolSequence::generate(D, 2 * cfg.particles, cfg.seed);
  std::vector<Pos> x(cfg.particles), v(cfg.particles), pbest(cfg.particles);
  std::vector<Score> pscore(cfg.particles);
  Pos gbest{};
  Score gscore;
  for (std::size_t p = 0; p < cfg.particles; ++p) {
    for (std::size_t d = 0; d < D; ++d) x[p][d] = init[p][d];
    for (std::size_t d = 0; d < D; ++d) v[p][d] = 0.5 * (init[cfg.particles + p][d] - init[p][d]);
    pbest[p] = x[p];
    pscore[p] = eval(x[p]);
    if (better(pscore[p], gscore)) {
      gscore = pscore[p];
      gbest = x[p];
    }
  }

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    // Synchronous update: every particle sees the same global best.
    const Pos g = gbest;
    for (std::size_t p = 0; p < cfg.particles; ++p) {
      for (std::size_t d = 0; d < D; ++d) {
        v[p][d] = cfg.inertia * v[p][d] + cfg.cognitive * (pbest[p][d] - x[p][d]) +
                  cfg.social * (g[d] - x[p][d]);
        x[p][d] += v[p][d];
        if (x[p][d] < 0.0 || x[p][d] > 1.0) {
          x[p][d] = std::clamp(x[p][d], 0.0, 1.0);
          v[p][d] = 0.0;
        }
      }
    }
    for (std::size_t p = 0; p < cfg.particles; ++p) {
      const Score s = eval(x[p]);
      if (better(s, pscore[p])) {
        pscore[p] = s;
        pbest[p] = x[p];
      }
    }
    for (std::size_t p = 0; p < cfg.particles; ++p) {
      if (better(pscore[p], gscore)) {
        gscore = pscore[p];
        gbest = pbest[p];
      }
    }
    if (cfg.record_trace) sol.trace.push_back(gscore.value);
    sol.pso_iterations = it + 1;
  }

  // Compass search around the swarm incumbent.
  double step = 0.1;
  for (std::size_t it = 0; it < cfg.pattern_iterations && step > 1e-12; ++it) {
    Pos best_poll = gbest;
    Score best_score = gscore;
    for (std::size_t d = 0; d < D; ++d) {
      for (double dir : {1.0, -1.0}) {
        Pos trial = gbest;
        trial[d] = std::clamp(trial[d] + dir * step, 0.0, 1.0);
        if (trial[d] == gbest[d]) continue;
        const Score s = eval(trial);
        if (better(s, best_score)) {
          best_score = s;
          best_poll = trial;
        }
      }
    }
    if (better(best_score, gscore)) {
      gscore = best_score;
      gbest = best_poll;
    } else {
      step *= cfg.pattern_shrink;
    }
    if (cfg.record_trace) sol.trace.push_back(gscore.value);
  }

  sol.y = eval.decode(gbest);
  sol.evaluations = eval.count;
  sol.w_empty = empty_weight_unchecked(geo, sol.y, m);
  sol.constraints = sizing_constraints(geo, sol.y, m);
  sol.packaging_excess = std::max(0.0, occupied_volume(geo, sol.y, m) / geo.volume - 1.0);
  sol.enclosure_violation = hull_enclosure_violation(geo, sol.y);
  for (std::size_t i = 0; i < kConstraintCount; ++i) sol.violation[i] = std::max(0.0, sol.constraints[i]);
  sol.feasible = sizing_feasible(geo, sol.y, m, cfg);
  return sol;
}

std::string sizing_report_json(const SizingSolution& s, bool include_trace) {
  nlohmann::ordered_json j;
  j["feasible"] = s.feasible;
  j["w_empty_N"] = s.w_empty;
  nlohmann::ordered_json y;
  const auto names = sizing_variable_names();
  const auto values = s.y.to_array();
  for (std::size_t i = 0; i < names.size(); ++i) y[std::string(names[i])] = values[i];
  j["y"] = y;
  nlohmann::ordered_json g;
  const auto cn = constraint_names();
  for (std::size_t i = 0; i < kConstraintCount; ++i)
    g[std::string(cn[i])] = {{"value", s.constraints[i]}, {"margin", 0.0 - s.constraints[i]},
                             {"violation", s.violation[i]}};
  j["constraints"] = g;
  j["packaging_excess"] = s.packaging_excess;
  j["enclosure_violation"] = s.enclosure_violation;
  j["pso_iterations"] = s.pso_iterations;
  j["evaluations"] = s.evaluations;
  if (include_trace) j["trace"] = s.trace;
  return j.dump(2);
}

}  // namespace manta
