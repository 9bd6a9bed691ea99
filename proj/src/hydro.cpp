#include "manta/hydro.hpp"

#include "manta/errors.hpp"
#include "manta/hashing.hpp"
#include "manta/kernels/kernels.hpp"
#include "manta/table.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

namespace manta {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
// Trailing legs end this many reference lengths downstream.
constexpr double kWakeLength = 1000.0;

Vec3 mirror(const Vec3& p) { return {p[0], -p[1], p[2]}; }

}  // namespace

void FlowConditions::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(name, "must be finite and > 0");
  };
  positive(speed, "speed");
  positive(density, "density");
  positive(viscosity, "viscosity");
  positive(gravity, "gravity");
}

const Lattice& HydroConfig::lattice(int fidelity) const {
  if (fidelity == 1) return coarse;
  if (fidelity == 2) return fine;
  throw DomainError("fidelity", "must be 1 or 2");
}

std::vector<double> HydroConfig::aoa_grid() const {
  if (!(aoa_step_deg > 0.0) || aoa_max_deg < aoa_min_deg)
    throw DomainError("aoa_grid", "need step > 0 and max >= min");
  const auto n = static_cast<std::size_t>(std::llround((aoa_max_deg - aoa_min_deg) / aoa_step_deg)) + 1;
  std::vector<double> grid(n);
  for (std::size_t i = 0; i < n; ++i) grid[i] = aoa_min_deg + aoa_step_deg * static_cast<double>(i);
  return grid;
}

// ---------------------------------------------------------------------------
// Vortex lattice

struct VortexLattice::Factorisation {
  Eigen::PartialPivLU<Eigen::MatrixXd> lu;
};

VortexLattice::VortexLattice(const MidSurface& surface) : surface_(surface) {
  const std::size_t ns = surface.n_span, nc = surface.n_chord;
  if (ns < 2 || nc < 2) throw DomainError("lattice", "dimensions must be >= 2");
  const std::size_t n = ns * nc;
  control_.reserve(n);
  normal_.reserve(n);
  bound_a_.reserve(n);
  bound_b_.reserve(n);
  area_.reserve(n);

  double span = 0.0;
  for (const auto& p : surface.points) span = std::max(span, std::abs(p[1]));
  const double wake = kWakeLength * std::max(span, 1e-3);

  for (std::size_t i = 0; i < ns; ++i) {
    for (std::size_t j = 0; j < nc; ++j) {
      const Vec3& p00 = surface.at(i, j);
      const Vec3& p01 = surface.at(i, j + 1);
      const Vec3& p10 = surface.at(i + 1, j);
      const Vec3& p11 = surface.at(i + 1, j + 1);
      bound_a_.push_back(p00 + 0.25 * (p01 - p00));
      bound_b_.push_back(p10 + 0.25 * (p11 - p10));
      const Vec3 c0 = p00 + 0.75 * (p01 - p00);
      const Vec3 c1 = p10 + 0.75 * (p11 - p10);
      control_.push_back(0.5 * (c0 + c1));
      const Vec3 nrm = cross(p11 - p00, p10 - p01);
      const double len = norm(nrm);
      area_.push_back(0.5 * len);
      normal_.push_back(len > 0.0 ? (1.0 / len) * nrm : Vec3{0.0, 0.0, 0.0});
    }
  }

  // Six segments per panel: the horseshoe and its mirror image, ordered so
  // that a positive circulation lifts on both halves.
  const std::size_t nseg = 6 * n;
  std::vector<double> ax(nseg), ay(nseg), az(nseg), bx(nseg), by(nseg), bz(nseg);
  auto put = [&](std::size_t k, const Vec3& a, const Vec3& b) {
    ax[k] = a[0]; ay[k] = a[1]; az[k] = a[2];
    bx[k] = b[0]; by[k] = b[1]; bz[k] = b[2];
  };
  const Vec3 downstream{wake, 0.0, 0.0};
  for (std::size_t p = 0; p < n; ++p) {
    const Vec3& a = bound_a_[p];
    const Vec3& b = bound_b_[p];
    const Vec3 ma = mirror(a), mb = mirror(b);
    put(6 * p + 0, a + downstream, a);
    put(6 * p + 1, a, b);
    put(6 * p + 2, b, b + downstream);
    put(6 * p + 3, mb + downstream, mb);
    put(6 * p + 4, mb, ma);
    put(6 * p + 5, ma, ma + downstream);
  }
  const kernels::SegmentsSoA segs{ax, ay, az, bx, by, bz};

  Eigen::MatrixXd aic(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  std::vector<double> wash(nseg);
  for (std::size_t i = 0; i < n; ++i) {
    kernels::segment_normalwash(control_[i], normal_[i], segs, wash);
    for (std::size_t p = 0; p < n; ++p) {
      const double* w = &wash[6 * p];
      aic(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(p)) =
          ((w[0] + w[1]) + (w[2] + w[3])) + (w[4] + w[5]);
    }
  }
  lu_ = std::make_shared<Factorisation>();
  lu_->lu.compute(aic);
  const double rc = lu_->lu.rcond();
  if (!(rc > 1e-13)) {
    std::ostringstream msg;
    msg << "singular influence matrix (rcond " << rc << ")";
    throw EvaluationFailed(msg.str());
  }
}

VlmResult VortexLattice::solve(double aoa_deg, const FlowConditions& flow) const {
  return sweep({aoa_deg}, flow).front();
}

std::vector<VlmResult> VortexLattice::sweep(const std::vector<double>& aoa_deg,
                                            const FlowConditions& flow) const {
  flow.validate();
  const std::size_t n = control_.size();
  const auto m = static_cast<Eigen::Index>(aoa_deg.size());
  Eigen::MatrixXd rhs(static_cast<Eigen::Index>(n), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double a = aoa_deg[static_cast<std::size_t>(k)];
    if (!(std::abs(a) < 20.0)) throw EvaluationFailed("incidence outside (-20, 20) degrees");
    const Vec3 vinf{flow.speed * std::cos(a * kDeg), 0.0, flow.speed * std::sin(a * kDeg)};
    for (std::size_t i = 0; i < n; ++i) rhs(static_cast<Eigen::Index>(i), k) = -dot(vinf, normal_[i]);
  }
  const Eigen::MatrixXd gamma = lu_->lu.solve(rhs);
  if (!gamma.allFinite()) throw EvaluationFailed("non-finite circulation");

  const std::size_t ns = surface_.n_span, nc = surface_.n_chord;
  // Trefftz plane: trailing-edge strip edges of the full span, left to right.
  std::vector<std::array<double, 2>> edge;
  edge.reserve(2 * ns + 1);
  for (std::size_t i = ns; i > 0; --i) edge.push_back({-surface_.at(i, nc)[1], surface_.at(i, nc)[2]});
  for (std::size_t i = 0; i <= ns; ++i) edge.push_back({surface_.at(i, nc)[1], surface_.at(i, nc)[2]});
  const std::size_t strips = 2 * ns;

  std::vector<VlmResult> out(aoa_deg.size());
  std::vector<double> strip_gamma(strips), kappa(strips + 1);
  for (Eigen::Index k = 0; k < m; ++k) {
    const double a = aoa_deg[static_cast<std::size_t>(k)] * kDeg;
    const Vec3 vinf{flow.speed * std::cos(a), 0.0, flow.speed * std::sin(a)};
    const Vec3 lift_dir{-std::sin(a), 0.0, std::cos(a)};
    const double q = flow.dynamic_pressure();
    VlmResult& r = out[static_cast<std::size_t>(k)];
    r.panel_dcp.resize(n);
    double lift_half = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
      const double g = gamma(static_cast<Eigen::Index>(p), k);
      const Vec3 l = bound_b_[p] - bound_a_[p];
      const double fl = flow.density * g * dot(cross(vinf, l), lift_dir);
      lift_half += fl;
      r.panel_dcp[p] = area_[p] > 0.0 ? fl / (q * area_[p]) : 0.0;
    }
    r.lift = 2.0 * lift_half;

    for (std::size_t i = 0; i < ns; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < nc; ++j) s += gamma(static_cast<Eigen::Index>(i * nc + j), k);
      strip_gamma[ns + i] = s;
      strip_gamma[ns - 1 - i] = s;
    }
    for (std::size_t e = 0; e <= strips; ++e)
      kappa[e] = (e > 0 ? strip_gamma[e - 1] : 0.0) - (e < strips ? strip_gamma[e] : 0.0);
    double drag = 0.0;
    for (std::size_t s = 0; s < strips; ++s) {
      const double ty = edge[s + 1][0] - edge[s][0];
      const double tz = edge[s + 1][1] - edge[s][1];
      const double len = std::hypot(ty, tz);
      if (len <= 0.0) continue;
      const double ny = -tz / len, nz = ty / len;
      const double my = 0.5 * (edge[s][0] + edge[s + 1][0]);
      const double mz = 0.5 * (edge[s][1] + edge[s + 1][1]);
      double vy = 0.0, vz = 0.0;
      for (std::size_t e = 0; e <= strips; ++e) {
        const double ry = my - edge[e][0], rz = mz - edge[e][1];
        const double r2 = ry * ry + rz * rz;
        if (r2 < 1e-24) continue;
        const double f = kappa[e] / (2.0 * std::numbers::pi * r2);
        vy -= f * rz;
        vz += f * ry;
      }
      drag -= strip_gamma[s] * (vy * ny + vz * nz) * len;
    }
    r.induced_drag = 0.5 * flow.density * drag;
  }
  return out;
}

VlmResult vlm_forces(const MidSurface& surface, double aoa_deg, const FlowConditions& flow) {
  return VortexLattice(surface).solve(aoa_deg, flow);
}

VlmResult vlm_forces(const std::array<SectionParams, kSectionCount>& sections, double aoa_deg,
                     const FlowConditions& flow, Lattice lattice) {
  return vlm_forces(camber_surface(sections, lattice.n_span, lattice.n_chord), aoa_deg, flow);
}

// ---------------------------------------------------------------------------
// Skin friction

double flat_plate_cf(double reynolds, double transition_reynolds) {
  const double re = std::max(reynolds, 1.0);
  return re < transition_reynolds ? 1.328 / std::sqrt(re) : 0.074 / std::pow(re, 0.2);
}

double skin_friction_drag(const SkinGrid& skin, const FlowConditions& flow, double transition_reynolds) {
  flow.validate();
  if (skin.stations < 2 || skin.points < 2) return 0.0;
  const double q = flow.dynamic_pressure();
  // Friction per unit span accumulated from the leading edge to run length x,
  // in units of q: x * Cf_mean(Re_x).
  auto accumulated = [&](double x) {
    if (x <= 0.0) return 0.0;
    return x * flat_plate_cf(flow.reynolds(x), transition_reynolds);
  };
  std::vector<double> run(skin.stations * skin.points, 0.0);
  for (std::size_t s = 0; s < skin.stations; ++s)
    for (std::size_t p = 1; p < skin.points; ++p)
      run[s * skin.points + p] = run[s * skin.points + p - 1] + norm(skin.at(s, p) - skin.at(s, p - 1));

  double drag = 0.0;
  for (std::size_t s = 0; s + 1 < skin.stations; ++s) {
    for (std::size_t p = 0; p + 1 < skin.points; ++p) {
      const Vec3& a = skin.at(s, p);
      const Vec3& b = skin.at(s, p + 1);
      const Vec3& c = skin.at(s + 1, p + 1);
      const Vec3& d = skin.at(s + 1, p);
      const double area = 0.5 * norm(cross(b - a, c - a)) + 0.5 * norm(cross(c - a, d - a));
      if (area <= 0.0) continue;
      const double x0 = 0.5 * (run[s * skin.points + p] + run[(s + 1) * skin.points + p]);
      const double x1 = 0.5 * (run[s * skin.points + p + 1] + run[(s + 1) * skin.points + p + 1]);
      double cf;
      if (x1 - x0 > 1e-15)
        cf = (accumulated(x1) - accumulated(x0)) / (x1 - x0);
      else
        cf = flat_plate_cf(flow.reynolds(x1), transition_reynolds);
      drag += q * cf * area;
    }
  }
  return drag;
}

std::vector<SkinGrid> mesh_skins(const SurfaceMesh& mesh) {
  const std::size_t nc = mesh.chordwise_points;
  const std::size_t loop = mesh.loop_size();
  SkinGrid upper, lower;
  upper.stations = lower.stations = mesh.stations();
  upper.points = lower.points = nc;
  for (std::size_t s = 0; s < mesh.stations(); ++s) {
    for (std::size_t p = 0; p < nc; ++p) {
      upper.xyz.push_back(mesh.at(s, nc - 1 - p));
      lower.xyz.push_back(mesh.at(s, (nc - 1 + p) % loop));
    }
  }
  return {std::move(upper), std::move(lower)};
}

double viscous_drag(const SurfaceMesh& mesh, const FlowConditions& flow, double transition_reynolds) {
  double d = 0.0;
  for (const auto& skin : mesh_skins(mesh)) d += skin_friction_drag(skin, flow, transition_reynolds);
  return d;
}

// ---------------------------------------------------------------------------
// Polar and glide

void validate_polar(const PolarCurve& polar) {
  if (polar.points.empty()) throw EvaluationFailed("empty polar");
  for (std::size_t i = 0; i < polar.points.size(); ++i) {
    const auto& p = polar.points[i];
    if (!std::isfinite(p.aoa_deg) || !std::isfinite(p.lift) || !std::isfinite(p.drag))
      throw EvaluationFailed("non-finite polar sample");
    if (!(p.drag > 0.0)) throw EvaluationFailed("non-positive drag in polar");
    if (i > 0 && !(p.aoa_deg > polar.points[i - 1].aoa_deg))
      throw EvaluationFailed("polar incidence not strictly increasing");
  }
}

PolarCurve polar(const Glider& glider, const FlowConditions& flow, const HydroConfig& config, int fidelity) {
  const Lattice& lat = config.lattice(fidelity);
  const VortexLattice vlm(camber_surface(glider.sections, lat.n_span, lat.n_chord));
  const auto grid = config.aoa_grid();
  const auto forces = vlm.sweep(grid, flow);
  const double dv = viscous_drag(glider.mesh, flow, config.transition_reynolds);
  PolarCurve curve;
  curve.fidelity = fidelity;
  for (std::size_t i = 0; i < grid.size(); ++i)
    curve.points.push_back({grid[i], forces[i].lift, forces[i].induced_drag + dv});
  validate_polar(curve);
  return curve;
}

GlideState max_efficiency(const PolarCurve& polar) {
  validate_polar(polar);
  GlideState st;
  bool found = false;
  for (const auto& p : polar.points) {
    if (!(p.lift > 0.0)) continue;
    const double e = p.lift / p.drag;
    if (!found || e > st.e_max) {
      st.e_max = e;
      st.aoa_star = p.aoa_deg;
      found = true;
    }
  }
  if (!found) throw EvaluationFailed("no positive lift in polar");
  return st;
}

GlideState glide_closure(double lift, double drag, const FlowConditions& flow) {
  flow.validate();
  if (!(lift > 0.0)) throw EvaluationFailed("glide closure needs positive lift");
  if (!(drag > 0.0)) throw EvaluationFailed("glide closure needs positive drag");
  GlideState st;
  st.gamma = std::atan(-drag / lift);
  st.delta_vb = (-drag * std::sin(st.gamma) + lift * std::cos(st.gamma)) / (flow.density * flow.gravity);
  st.e_max = lift / drag;
  return st;
}

FieldSample field_sample(const Glider& glider, const FlowConditions& flow, const HydroConfig& config) {
  const Lattice& lat = config.coarse;
  const VortexLattice vlm(camber_surface(glider.sections, lat.n_span, lat.n_chord));
  auto r = vlm.solve(config.field_aoa_deg, flow);
  FieldSample s;
  s.field = std::move(r.panel_dcp);
  s.lift = r.lift;
  s.drag = r.induced_drag + viscous_drag(glider.mesh, flow, config.transition_reynolds);
  return s;
}

// ---------------------------------------------------------------------------
// Files

void write_polar_csv(const std::filesystem::path& path, const PolarCurve& polar, const std::string& config_hash) {
  Table t;
  if (!config_hash.empty()) t.meta["config_hash"] = config_hash;
  t.meta["fidelity"] = std::to_string(polar.fidelity);
  t.columns = {"aoa_deg", "lift_N", "drag_N"};
  for (const auto& p : polar.points) t.rows.push_back({p.aoa_deg, p.lift, p.drag});
  write_table(path, t);
}

PolarCurve read_polar_csv(const std::filesystem::path& path, int fidelity) {
  Table t;
  try {
    t = read_table(path);
  } catch (const ValidationError& e) {
    throw EvaluationFailed(e.what());
  }
  if (t.columns != std::vector<std::string>{"aoa_deg", "lift_N", "drag_N"})
    throw EvaluationFailed(path.string() + ": expected header aoa_deg,lift_N,drag_N");
  PolarCurve c;
  c.fidelity = fidelity;
  for (const auto& r : t.rows) c.points.push_back({r[0], r[1], r[2]});
  validate_polar(c);
  return c;
}

ExternalSolverAdapter::ExternalSolverAdapter(std::filesystem::path root, std::string command,
                                             std::chrono::milliseconds timeout)
    : root_(std::move(root)), command_(std::move(command)), timeout_(timeout) {}

std::filesystem::path ExternalSolverAdapter::request_dir(const FullDesignVector& u, int fidelity) const {
  std::string key = "fidelity=" + std::to_string(fidelity);
  for (double v : u) key += "," + format_double(v);
  return root_ / ("req_" + content_hash(key));
}

std::filesystem::path ExternalSolverAdapter::submit(const FullDesignVector& u, int fidelity) const {
  const auto dir = request_dir(u, fidelity);
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / kDesignFile, std::ios::binary);
  if (!out) throw EvaluationFailed("cannot write request in " + dir.string());
  const auto names = design_parameter_names();
  out << "parameter,value\n";
  out << "fidelity," << fidelity << '\n';
  for (std::size_t i = 0; i < kDesignDim; ++i) out << names[i] << ',' << format_double(u[i]) << '\n';
  return dir;
}

PolarCurve ExternalSolverAdapter::collect(const std::filesystem::path& dir, int fidelity,
                                          const HydroConfig& config) const {
  if (!std::filesystem::exists(dir / kSentinel))
    throw EvaluationFailed("external solver has not finished: " + dir.string());
  auto c = read_polar_csv(dir / kPolarFile, fidelity);
  const auto grid = config.aoa_grid();
  if (c.points.size() != grid.size()) throw EvaluationFailed("external polar is incomplete");
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (std::abs(c.points[i].aoa_deg - grid[i]) > 1e-9)
      throw EvaluationFailed("external polar does not match the incidence grid");
  return c;
}

PolarCurve ExternalSolverAdapter::evaluate(const FullDesignVector& u, int fidelity,
                                           const HydroConfig& config) const {
  const auto dir = submit(u, fidelity);
  if (!command_.empty() && !std::filesystem::exists(dir / kSentinel)) {
    const std::string cmd = command_ + " '" + dir.string() + "'";
    if (std::system(cmd.c_str()) != 0) throw EvaluationFailed("external solver command failed: " + cmd);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  while (!std::filesystem::exists(dir / kSentinel)) {
    if (std::chrono::steady_clock::now() >= deadline)
      throw EvaluationFailed("timed out waiting for " + (dir / kSentinel).string());
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  return collect(dir, fidelity, config);
}

}  // namespace manta
