#pragma once

// One design evaluation across both levels: loft, polar at a fidelity,
// E_max and glide closure at the optimum angle, then internal sizing.

#include "manta/geometry.hpp"
#include "manta/hydro.hpp"
#include "manta/optimizer.hpp"
#include "manta/reduction.hpp"
#include "manta/sizing.hpp"

#include <string>

namespace manta {

struct PipelineConfig {
  FlowConditions flow;
  HydroConfig hydro;
  MassBudget mass;
  PsoConfig pso;
  LoftResolution loft;
};

struct DesignEvaluation {
  bool ok = false;
  std::string error;
  int fidelity = 1;
  PolarCurve polar;
  GlideState glide;  // at the best-efficiency angle
  double volume = 0.0;
  SizingSolution sizing;
  /// (-E_max, W*_empty); only meaningful when ok.
  Objectives objectives{0.0, 0.0};
};

/// Never throws for per-design failures (geometry, hydro or packaging);
/// those come back with ok = false and the reason in `error`.
DesignEvaluation evaluate_design(const FullDesignVector& u, int fidelity, const PipelineConfig& cfg);

/// Coarse-lattice distributed loading plus integral forces for the
/// reduction ensemble. Failures come back with evaluated = false.
EnsembleRecord ensemble_sample(const FullDesignVector& u, const PipelineConfig& cfg);

/// Maps reduced coordinates back to a full design (clamped to `box`) and
/// evaluates it. Lower-level infeasibility is reported, not thrown.
Evaluator reduced_evaluator(const Embedding& embedding, const DesignBounds& box, const PipelineConfig& cfg);

}  // namespace manta
