#pragma once

#include "manta/surrogate.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace manta {

/// Two minimised objectives: (-E_max, W*_empty).
using Objectives = std::array<double, 2>;

/// a dominates b: no worse in both and strictly better in one.
bool dominates(const Objectives& a, const Objectives& b);
bool dominates(const std::vector<double>& a, const std::vector<double>& b);

/// Indices of the nondominated members; of exact duplicates the first is kept.
std::vector<std::size_t> nondominated(const std::vector<Objectives>& points);

/// Exact 2D hypervolume by a sweep over the sorted front. Throws
/// ValidationError if a point does not strictly dominate r componentwise.
double hypervolume(const std::vector<Objectives>& front, const Objectives& r);
/// Same, silently ignoring points that do not strictly dominate r.
double hypervolume_clipped(const std::vector<Objectives>& front, const Objectives& r);
/// H(front + {y}) - H(front), points not dominating r ignored.
double hypervolume_improvement(const std::vector<Objectives>& front, const Objectives& y, const Objectives& r);

/// Expected hypervolume improvement of y ~ N(mean, diag(sigma^2)).
/// Quasi-Monte-Carlo with 2D Sobol points under a seeded digital shift.
double ehvi_mc(const Objectives& mean, const Objectives& sigma, const std::vector<Objectives>& front,
               const Objectives& r, std::size_t samples = 4096, std::uint64_t seed = 11);
/// Closed form by vertical strips of the nondominated staircase.
double ehvi_analytic(const Objectives& mean, const Objectives& sigma, const std::vector<Objectives>& front,
                     const Objectives& r);

struct ObjectivePoint {
  std::vector<double> x;
  Objectives f{};
  Objectives sigma{};     // combined (multi-fidelity) uncertainty
  Objectives sigma_lf{};  // low-fidelity model uncertainty
  int fidelity = 1;
  bool feasible_lower = true;
};

struct EhviConfig {
  std::size_t samples = 4096;
  std::uint64_t seed = 11;
  bool analytic = false;  // use the closed form instead of sampling
};

/// EHVI of a candidate against `front`; sigma = 0 gives the exact
/// hypervolume improvement.
double ehvi(const ObjectivePoint& candidate, const std::vector<Objectives>& front, const Objectives& r,
            const EhviConfig& cfg = {});

/// Per-objective surrogates scoring a reduced-space point.
struct ObjectiveModels {
  MfSurrogate f1;
  MfSurrogate f2;
};

/// Scans the box [lower, upper] with `scan_budget` shifted-Sobol points,
/// scores them with the surrogate means and returns the nondominated set,
/// sorted by the first objective. Throws NumericalError if nothing scored.
std::vector<ObjectivePoint> predicted_pareto(const ObjectiveModels& models, const std::vector<double>& lower,
                                             const std::vector<double>& upper, std::size_t scan_budget,
                                             std::uint64_t seed, unsigned threads = 1);

struct Clustering {
  std::vector<std::vector<std::size_t>> clusters;  // member indices into the front
  std::size_t k = 1;
  std::vector<std::pair<std::size_t, double>> silhouettes;  // (k, mean silhouette) tried
};

/// Deterministic Lloyd k-means: centres seeded from front members picked by
/// the base-2 van der Corput sequence over the f1-sorted order, at most 100
/// iterations.
std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& features, std::size_t k,
                                std::size_t max_iterations = 100);
/// Mean silhouette; points in singleton clusters score 0.
double mean_silhouette(const std::vector<std::vector<double>>& features, const std::vector<std::size_t>& labels,
                       std::size_t k);
/// Unit-box feature normalisation of [x, f] per coordinate.
std::vector<std::vector<double>> cluster_features(const std::vector<ObjectivePoint>& front);

/// k* = argmax mean silhouette over [k_min, min(k_max, n - 1)] (ties to the
/// smaller k). Falls back to one cluster when the range is empty or every
/// feature vector coincides.
Clustering cluster_batch(const std::vector<ObjectivePoint>& front, std::size_t k_min = 2, std::size_t k_max = 8);

/// One member per cluster maximising EHVI; ties go to the larger combined
/// uncertainty, then to the lexicographically smaller x.
std::vector<std::size_t> select_infill(const Clustering& clusters, const std::vector<ObjectivePoint>& front,
                                       const std::vector<double>& ehvi_values);

/// argmax over levels of U_agg / cost, where U_agg is the Euclidean norm of
/// the per-objective uncertainties at that level; ties go to level 1.
int allocate_fidelity(const Objectives& u_lf, const Objectives& u_hf, const std::array<double, 2>& costs);

/// Result of one expensive evaluation.
struct EvaluationOutcome {
  bool ok = false;              // evaluation completed
  bool feasible_lower = false;  // sizing found a feasible point
  Objectives f{};
  double seconds = 0.0;
  std::string error;
};

using Evaluator = std::function<EvaluationOutcome(const std::vector<double>& x, int fidelity)>;

struct LoopConfig {
  std::size_t lf_initial = 128;
  std::size_t hf_initial = 32;  // nested: the first hf_initial LF points
  std::size_t max_iterations = 6;
  std::size_t scan_budget = 16384;
  std::size_t k_min = 2;
  std::size_t k_max = 8;
  double stop_uncertainty = 0.03;  // of the per-objective front range
  double stop_hv_gain = 1e-3;      // relative, over hv_window iterations
  std::size_t hv_window = 2;
  double max_cost = 1e9;           // in cost units
  std::array<double, 2> costs{1.0, 10.0};
  bool measured_costs = false;     // replace costs by median wall times
  std::uint64_t seed = 2024;
  unsigned threads = 1;
  SrbfConfig srbf{};
  EhviConfig ehvi{};
  std::filesystem::path out_dir;   // empty: no files
  std::string config_hash;         // stamped into every artifact
};

struct ArchiveEntry {
  std::vector<double> x;
  int fidelity = 1;
  int iteration = 0;   // 0 = initial design
  EvaluationOutcome outcome;
};

struct IterationRecord {
  std::size_t iteration = 0;
  double hv_evaluated = 0.0;
  double hv_predicted = 0.0;
  std::size_t front_size = 0;
  std::size_t batch = 0;
  std::size_t lf_count = 0, hf_count = 0, failures = 0;
  double lf_cost = 0.0, hf_cost = 0.0;
  Objectives max_norm_uncertainty{};
  std::vector<ObjectivePoint> predicted_front;
};

struct LoopState {
  std::vector<ArchiveEntry> archive;
  std::vector<IterationRecord> history;
  Objectives reference{};
  std::vector<Objectives> evaluated_front;
  std::string stop_reason;
  std::array<double, 2> costs{};
  std::size_t lf_count() const;
  std::size_t hf_count() const;
};

/// Multi-fidelity models of both objectives: f1 from every successful
/// evaluation in `archive`, f2 from those with a feasible lower level. The discrepancy term is used once there are at least
/// dim + 2 feasible HF evaluations.
ObjectiveModels train_objectives(const std::vector<ArchiveEntry>& archive, const std::vector<double>& lower,
                                 const std::vector<double>& upper, const SrbfConfig& cfg);

/// Archive table: x0.., fidelity, iteration, ok, feasible_lower, f1, f2.
/// Wall times are not stored so reruns give identical bytes.
void write_archive_csv(const std::filesystem::path& path, const std::vector<ArchiveEntry>& archive,
                       const std::string& config_hash = {});
std::vector<ArchiveEntry> read_archive_csv(const std::filesystem::path& path);

/// Points of the nested initial design: LF set, then the HF prefix.
std::vector<std::pair<std::vector<double>, int>> initial_design(const LoopConfig& cfg, const std::vector<double>& lower,
                                                                const std::vector<double>& upper);

/// Evaluates the initial design in parallel (iteration 0 entries).
std::vector<ArchiveEntry> evaluate_initial(const LoopConfig& cfg, const std::vector<double>& lower,
                                          const std::vector<double>& upper, const Evaluator& evaluate);

/// Outer active-learning loop on the reduced box [lower, upper]. A supplied
/// initial archive must match initial_design point for point; it replaces
/// the iteration-0 evaluations.
LoopState run_loop(const LoopConfig& cfg, const std::vector<double>& lower, const std::vector<double>& upper,
                   const Evaluator& evaluate, const std::vector<ArchiveEntry>* initial = nullptr);

/// Evaluated (feasible) objective vectors, optionally of one fidelity only.
std::vector<Objectives> archive_objectives(const LoopState& s, std::optional<int> fidelity = std::nullopt);

/// max over front points of sigma_m / range_m of the front, per objective.
Objectives max_normalized_uncertainty(const std::vector<ObjectivePoint>& front);

}  // namespace manta
