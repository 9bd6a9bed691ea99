#include "manta/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <exception>

namespace manta {

DesignEvaluation evaluate_design(const FullDesignVector& u, int fidelity, const PipelineConfig& cfg) {
  DesignEvaluation ev;
  ev.fidelity = fidelity;
  try {
    const Glider glider = make_glider(u, cfg.loft);
    ev.volume = glider.volume;
    ev.polar = polar(glider, cfg.flow, cfg.hydro, fidelity);
    const GlideState best = max_efficiency(ev.polar);
    const PolarPoint* star = nullptr;
    for (const auto& p : ev.polar.points)
      if (p.aoa_deg == best.aoa_star) star = &p;
    ev.glide = glide_closure(star->lift, star->drag, cfg.flow);
    ev.glide.aoa_star = best.aoa_star;
    const auto geo = SizingGeometry::from_mesh(glider.mesh, glider.volume, ev.glide.delta_vb);
    ev.sizing = solve_sizing(geo, cfg.mass, cfg.pso);
    ev.objectives = {-ev.glide.e_max, ev.sizing.w_empty};
    ev.ok = std::isfinite(ev.objectives[0]) && std::isfinite(ev.objectives[1]);
    if (!ev.ok) ev.error = "non-finite objectives";
  } catch (const std::exception& ex) {
    ev.ok = false;
    ev.error = ex.what();
  }
  return ev;
}

EnsembleRecord ensemble_sample(const FullDesignVector& u, const PipelineConfig& cfg) {
  EnsembleRecord r;
  r.u = u;
  try {
    const Glider glider = make_glider(u, cfg.loft);
    auto s = field_sample(glider, cfg.flow, cfg.hydro);
    r.field = std::move(s.field);
    r.lift = s.lift;
    r.drag = s.drag;
    r.evaluated = true;
  } catch (const std::exception& ex) {
    spdlog::debug("ensemble sample failed: {}", ex.what());
    r.evaluated = false;
  }
  return r;
}

Evaluator reduced_evaluator(const Embedding& embedding, const DesignBounds& box, const PipelineConfig& cfg) {
  return [embedding, box, cfg](const std::vector<double>& x, int fidelity) {
    EvaluationOutcome out;
    const Eigen::VectorXd xv = Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
    const auto ev = evaluate_design(back_map(embedding, xv, box), fidelity, cfg);
    out.ok = ev.ok;
    out.error = ev.error;
    if (ev.ok) {
      out.f = ev.objectives;
      out.feasible_lower = ev.sizing.feasible;
      if (!ev.sizing.feasible) out.error = "lower level infeasible";
    }
    return out;
  };
}

}  // namespace manta
