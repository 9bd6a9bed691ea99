#include "manta/optimizer.hpp"

#include "manta/errors.hpp"
#include "manta/parallel.hpp"
#include "manta/sampling.hpp"
#include "manta/table.hpp"

#include <boost/math/distributions/normal.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>

namespace manta {

bool dominates(const Objectives& a, const Objectives& b) {
  return a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1]);
}

bool dominates(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw ValidationError("dominates: dimension mismatch");
  bool strict = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] > b[i]) return false;
    strict |= a[i] < b[i];
  }
  return strict;
}

std::vector<std::size_t> nondominated(const std::vector<Objectives>& points) {
  std::vector<std::size_t> order(points.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return points[a][0] != points[b][0] ? points[a][0] < points[b][0] : points[a][1] < points[b][1];
  });
  std::vector<std::size_t> keep;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i : order) {
    if (points[i][1] < best) {
      keep.push_back(i);
      best = points[i][1];
    }
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

namespace {

bool strictly_inside(const Objectives& p, const Objectives& r) { return p[0] < r[0] && p[1] < r[1]; }

/// Nondominated points strictly dominating r, sorted by ascending f1.
std::vector<Objectives> staircase(const std::vector<Objectives>& front, const Objectives& r) {
  std::vector<Objectives> pts;
  for (const auto& p : front)
    if (strictly_inside(p, r)) pts.push_back(p);
  std::sort(pts.begin(), pts.end());
  std::vector<Objectives> out;
  double best = r[1];
  for (const auto& p : pts)
    if (p[1] < best) {
      out.push_back(p);
      best = p[1];
    }
  return out;
}

double sweep_area(const std::vector<Objectives>& stairs, const Objectives& r) {
  double area = 0.0;
  double prev = r[1];
  for (const auto& p : stairs) {
    area += (r[0] - p[0]) * (prev - p[1]);
    prev = p[1];
  }
  return area;
}

/// Improvement of y over a staircase: strip i spans [a_i, b_i) in f1 with
/// the uncovered region below height c_i.
double improvement_on(const std::vector<Objectives>& stairs, const Objectives& y, const Objectives& r) {
  if (!(y[0] < r[0] && y[1] < r[1])) return 0.0;
  double total = 0.0;
  double a = -std::numeric_limits<double>::infinity();
  double c = r[1];
  for (std::size_t i = 0; i <= stairs.size(); ++i) {
    const double b = i < stairs.size() ? stairs[i][0] : r[0];
    const double width = b - std::max(a, y[0]);
    const double height = c - y[1];
    if (width > 0.0 && height > 0.0) total += width * height;
    if (i < stairs.size()) {
      a = stairs[i][0];
      c = stairs[i][1];
    }
  }
  return total;
}

double psi(double t) {
  static const boost::math::normal_distribution<double> n01;
  return t * boost::math::cdf(n01, t) + boost::math::pdf(n01, t);
}

/// E[(c - Y)^+] for Y ~ N(mu, s^2).
double plus_expectation(double c, double mu, double s) {
  if (c == -std::numeric_limits<double>::infinity()) return 0.0;
  if (s <= 0.0) return std::max(0.0, c - mu);
  return s * psi((c - mu) / s);
}

const std::vector<Objectives>& qmc_normals(std::size_t samples, std::uint64_t seed) {
  static std::mutex mutex;
  static std::map<std::pair<std::size_t, std::uint64_t>, std::vector<Objectives>> cache;
  std::lock_guard<std::mutex> lock(mutex);
  auto& z = cache[{samples, seed}];
  if (z.empty() && samples > 0) {
    static const boost::math::normal_distribution<double> n01;
    const double lo = std::ldexp(1.0, -54);
    SobolSequence sob(2, seed);
    z.reserve(samples);
    for (std::size_t i = 0; i < samples; ++i) {
      const auto u = sob.next();
      z.push_back({boost::math::quantile(n01, std::clamp(u[0], lo, 1.0 - lo)),
                   boost::math::quantile(n01, std::clamp(u[1], lo, 1.0 - lo))});
    }
  }
  return z;
}

}  // namespace

double hypervolume(const std::vector<Objectives>& front, const Objectives& r) {
  for (const auto& p : front)
    if (!strictly_inside(p, r)) throw ValidationError("hypervolume: point does not dominate the reference point");
  return sweep_area(staircase(front, r), r);
}

double hypervolume_clipped(const std::vector<Objectives>& front, const Objectives& r) {
  return sweep_area(staircase(front, r), r);
}

double hypervolume_improvement(const std::vector<Objectives>& front, const Objectives& y, const Objectives& r) {
  return improvement_on(staircase(front, r), y, r);
}

double ehvi_mc(const Objectives& mean, const Objectives& sigma, const std::vector<Objectives>& front,
               const Objectives& r, std::size_t samples, std::uint64_t seed) {
  if (sigma[0] < 0.0 || sigma[1] < 0.0) throw DomainError("sigma", "must be >= 0");
  const auto stairs = staircase(front, r);
  if (sigma[0] == 0.0 && sigma[1] == 0.0) return improvement_on(stairs, mean, r);
  if (samples == 0) throw DomainError("samples", "must be >= 1");
  const auto& z = qmc_normals(samples, seed);
  double acc = 0.0;
  for (const auto& zi : z)
    acc += improvement_on(stairs, {mean[0] + sigma[0] * zi[0], mean[1] + sigma[1] * zi[1]}, r);
  return acc / static_cast<double>(samples);
}

double ehvi_analytic(const Objectives& mean, const Objectives& sigma, const std::vector<Objectives>& front,
                     const Objectives& r) {
  if (sigma[0] < 0.0 || sigma[1] < 0.0) throw DomainError("sigma", "must be >= 0");
  const auto stairs = staircase(front, r);
  double total = 0.0;
  double a = -std::numeric_limits<double>::infinity();
  double c = r[1];
  for (std::size_t i = 0; i <= stairs.size(); ++i) {
    const double b = i < stairs.size() ? stairs[i][0] : r[0];
    const double width = plus_expectation(b, mean[0], sigma[0]) - plus_expectation(a, mean[0], sigma[0]);
    total += width * plus_expectation(c, mean[1], sigma[1]);
    if (i < stairs.size()) {
      a = stairs[i][0];
      c = stairs[i][1];
    }
  }
  return std::max(0.0, total);
}

double ehvi(const ObjectivePoint& candidate, const std::vector<Objectives>& front, const Objectives& r,
            const EhviConfig& cfg) {
  if (cfg.analytic) return ehvi_analytic(candidate.f, candidate.sigma, front, r);
  return ehvi_mc(candidate.f, candidate.sigma, front, r, cfg.samples, cfg.seed);
}

std::vector<ObjectivePoint> predicted_pareto(const ObjectiveModels& models, const std::vector<double>& lower,
                                             const std::vector<double>& upper, std::size_t scan_budget,
                                             std::uint64_t seed, unsigned threads) {
  if (lower.size() != upper.size() || lower.empty()) throw ValidationError("predicted_pareto: bad box");
  if (scan_budget == 0) throw DomainError("scan_budget", "must be >= 1");
  auto pts = SobolSequence::generate(lower.size(), scan_budget, seed);
  scale_to_box(pts, lower, upper);

  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (pts.size() + kChunk - 1) / kChunk;
  std::vector<MfPrediction> p1(pts.size()), p2(pts.size());
  parallel_for(chunks, threads, [&](std::size_t c) {
    const std::size_t lo = c * kChunk, hi = std::min(pts.size(), lo + kChunk);
    const std::vector<std::vector<double>> block(pts.begin() + static_cast<std::ptrdiff_t>(lo),
                                                 pts.begin() + static_cast<std::ptrdiff_t>(hi));
    const auto a = predict_mf_batch(models.f1, block);
    const auto b = predict_mf_batch(models.f2, block);
    std::copy(a.begin(), a.end(), p1.begin() + static_cast<std::ptrdiff_t>(lo));
    std::copy(b.begin(), b.end(), p2.begin() + static_cast<std::ptrdiff_t>(lo));
  });

  std::vector<Objectives> f;
  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!std::isfinite(p1[i].mean) || !std::isfinite(p2[i].mean)) continue;
    valid.push_back(i);
    f.push_back({p1[i].mean, p2[i].mean});
  }
  if (valid.empty()) throw NumericalError("predicted_pareto: no scan point could be scored");
  std::vector<ObjectivePoint> front;
  for (std::size_t k : nondominated(f)) {
    const std::size_t i = valid[k];
    ObjectivePoint op;
    op.x = pts[i];
    op.f = f[k];
    op.sigma = {p1[i].uncertainty, p2[i].uncertainty};
    op.sigma_lf = {p1[i].lf_uncertainty, p2[i].lf_uncertainty};
    front.push_back(std::move(op));
  }
  std::stable_sort(front.begin(), front.end(), [](const ObjectivePoint& a, const ObjectivePoint& b) {
    return a.f[0] < b.f[0];
  });
  return front;
}

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

std::vector<std::vector<double>> cluster_features(const std::vector<ObjectivePoint>& front) {
  std::vector<std::vector<double>> feats;
  for (const auto& p : front) {
    std::vector<double> v = p.x;
    v.push_back(p.f[0]);
    v.push_back(p.f[1]);
    feats.push_back(std::move(v));
  }
  if (feats.empty()) return feats;
  const std::size_t d = feats.front().size();
  for (std::size_t k = 0; k < d; ++k) {
    double lo = feats[0][k], hi = feats[0][k];
    for (const auto& v : feats) {
      lo = std::min(lo, v[k]);
      hi = std::max(hi, v[k]);
    }
    for (auto& v : feats) v[k] = hi > lo ? (v[k] - lo) / (hi - lo) : 0.0;
  }
  return feats;
}

std::vector<std::size_t> kmeans(const std::vector<std::vector<double>>& features, std::size_t k,
                                std::size_t max_iterations) {
  const std::size_t n = features.size();
  if (n == 0 || k == 0) return {};
  k = std::min(k, n);
  // Seeds: van der Corput positions along the given order, skipping repeats.
  std::vector<std::vector<double>> centres;
  std::vector<bool> used(n, false);
  for (std::uint64_t i = 0; centres.size() < k && i < 4 * n + 64; ++i) {
    std::size_t idx = std::min(n - 1, static_cast<std::size_t>(radical_inverse_base2(i) * static_cast<double>(n)));
    for (std::size_t probe = 0; probe < n; ++probe) {
      const std::size_t j = (idx + probe) % n;
      if (used[j]) continue;
      bool fresh = true;
      for (const auto& c : centres) fresh &= distance(c, features[j]) > 0.0;
      if (fresh) {
        used[j] = true;
        centres.push_back(features[j]);
        break;
      }
      used[j] = true;
    }
  }
  if (centres.empty()) centres.push_back(features[0]);
  const std::size_t kk = centres.size();
  std::vector<std::size_t> labels(n, 0);
  for (std::size_t it = 0; it < max_iterations; ++it) {
    bool changed = it == 0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < kk; ++c) {
        const double dist = distance(features[i], centres[c]);
        if (dist < bd) {
          bd = dist;
          best = c;
        }
      }
      if (labels[i] != best) changed = true;
      labels[i] = best;
    }
    if (!changed) break;
    const std::size_t d = features.front().size();
    std::vector<std::vector<double>> sum(kk, std::vector<double>(d, 0.0));
    std::vector<std::size_t> count(kk, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[labels[i]];
      for (std::size_t q = 0; q < d; ++q) sum[labels[i]][q] += features[i][q];
    }
    for (std::size_t c = 0; c < kk; ++c)
      if (count[c] > 0)
        for (std::size_t q = 0; q < d; ++q) centres[c][q] = sum[c][q] / static_cast<double>(count[c]);
  }
  return labels;
}

double mean_silhouette(const std::vector<std::vector<double>>& features, const std::vector<std::size_t>& labels,
                       std::size_t k) {
  const std::size_t n = features.size();
  if (n == 0) return 0.0;
  std::vector<std::size_t> size(k, 0);
  for (auto l : labels) ++size[l];
  double total = 0.0;
  std::vector<double> sum(k);
  for (std::size_t i = 0; i < n; ++i) {
    if (size[labels[i]] <= 1) continue;  // singleton scores 0
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) sum[labels[j]] += distance(features[i], features[j]);
    const double a = sum[labels[i]] / static_cast<double>(size[labels[i]] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < k; ++c)
      if (c != labels[i] && size[c] > 0) b = std::min(b, sum[c] / static_cast<double>(size[c]));
    if (!std::isfinite(b)) continue;
    const double m = std::max(a, b);
    if (m > 0.0) total += (b - a) / m;
  }
  return total / static_cast<double>(n);
}

Clustering cluster_batch(const std::vector<ObjectivePoint>& front, std::size_t k_min, std::size_t k_max) {
  Clustering out;
  const std::size_t n = front.size();
  auto single = [&] {
    out.k = 1;
    out.clusters.assign(1, {});
    for (std::size_t i = 0; i < n; ++i) out.clusters[0].push_back(i);
    return out;
  };
  if (n == 0) throw ValidationError("cluster_batch: empty front");
  const auto feats = cluster_features(front);
  bool identical = true;
  for (const auto& f : feats) identical &= distance(f, feats[0]) == 0.0;
  k_min = std::max<std::size_t>(k_min, 2);
  const std::size_t k_hi = std::min(k_max, n - 1);
  if (identical || n < k_min || k_hi < k_min) return single();

  double best = -std::numeric_limits<double>::infinity();
  std::vector<std::size_t> best_labels;
  for (std::size_t k = k_min; k <= k_hi; ++k) {
    const auto labels = kmeans(feats, k);
    const double s = mean_silhouette(feats, labels, k);
    out.silhouettes.emplace_back(k, s);
    if (s > best) {
      best = s;
      best_labels = labels;
      out.k = k;
    }
  }
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[best_labels[i]].push_back(i);
  for (auto& [label, members] : groups) out.clusters.push_back(std::move(members));
  out.k = out.clusters.size();
  return out;
}

std::vector<std::size_t> select_infill(const Clustering& clusters, const std::vector<ObjectivePoint>& front,
                                       const std::vector<double>& ehvi_values) {
  if (ehvi_values.size() != front.size()) throw ValidationError("select_infill: one EHVI value per front point");
  std::vector<std::size_t> picks;
  for (const auto& members : clusters.clusters) {
    if (members.empty()) continue;
    std::size_t best = members.front();
    for (std::size_t i : members) {
      const double ei = ehvi_values[i], eb = ehvi_values[best];
      if (ei != eb) {
        if (ei > eb) best = i;
        continue;
      }
      const double ui = std::hypot(front[i].sigma[0], front[i].sigma[1]);
      const double ub = std::hypot(front[best].sigma[0], front[best].sigma[1]);
      if (ui != ub) {
        if (ui > ub) best = i;
        continue;
      }
      if (front[i].x < front[best].x) best = i;
    }
    picks.push_back(best);
  }
  return picks;
}

int allocate_fidelity(const Objectives& u_lf, const Objectives& u_hf, const std::array<double, 2>& costs) {
  if (!(costs[0] > 0.0 && costs[1] > 0.0)) throw DomainError("costs", "must be > 0");
  const double r1 = std::hypot(u_lf[0], u_lf[1]) / costs[0];
  const double r2 = std::hypot(u_hf[0], u_hf[1]) / costs[1];
  return r2 > r1 ? 2 : 1;
}

std::size_t LoopState::lf_count() const {
  return static_cast<std::size_t>(std::count_if(archive.begin(), archive.end(), [](const ArchiveEntry& e) { return e.fidelity == 1; }));
}

std::size_t LoopState::hf_count() const {
  return static_cast<std::size_t>(std::count_if(archive.begin(), archive.end(), [](const ArchiveEntry& e) { return e.fidelity == 2; }));
}

std::vector<Objectives> archive_objectives(const LoopState& s, std::optional<int> fidelity) {
  std::vector<Objectives> out;
  for (const auto& e : s.archive)
    if (e.outcome.ok && e.outcome.feasible_lower && (!fidelity || *fidelity == e.fidelity)) out.push_back(e.outcome.f);
  return out;
}

Objectives max_normalized_uncertainty(const std::vector<ObjectivePoint>& front) {
  Objectives out{0.0, 0.0};
  if (front.empty()) return out;
  for (std::size_t m = 0; m < 2; ++m) {
    double lo = front[0].f[m], hi = front[0].f[m], smax = 0.0;
    for (const auto& p : front) {
      lo = std::min(lo, p.f[m]);
      hi = std::max(hi, p.f[m]);
      smax = std::max(smax, p.sigma[m]);
    }
    const double range = hi - lo;
    out[m] = range > 0.0 ? smax / range : (smax > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return out;
}

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

void evaluate_batch(const std::vector<std::vector<double>>& xs, const std::vector<int>& levels, int iteration,
                    unsigned threads, const Evaluator& evaluate, std::vector<ArchiveEntry>& archive) {
  std::vector<ArchiveEntry> out(xs.size());
  parallel_for(xs.size(), threads, [&](std::size_t i) {
    ArchiveEntry e;
    e.x = xs[i];
    e.fidelity = levels[i];
    e.iteration = iteration;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      e.outcome = evaluate(xs[i], levels[i]);
    } catch (const std::exception& ex) {
      e.outcome = {};
      e.outcome.error = ex.what();
    }
    e.outcome.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out[i] = std::move(e);
  });
  std::size_t failed = 0;
  for (auto& e : out) {
    if (!e.outcome.ok) {
      ++failed;
      spdlog::debug("evaluation failed (fidelity {}): {}", e.fidelity, e.outcome.error);
    }
    archive.push_back(std::move(e));
  }
  if (failed > 0) spdlog::info("{} of {} evaluations failed", failed, xs.size());
}

void fill_counts(const LoopState& s, IterationRecord& rec) {
  rec.lf_count = rec.hf_count = rec.failures = 0;
  rec.lf_cost = rec.hf_cost = 0.0;
  for (const auto& e : s.archive) {
    (e.fidelity == 1 ? rec.lf_count : rec.hf_count) += 1;
    if (!e.outcome.ok) ++rec.failures;
    (e.fidelity == 1 ? rec.lf_cost : rec.hf_cost) += e.outcome.seconds;
  }
}

TrainingSet training_set(const std::vector<ArchiveEntry>& archive, int fidelity, std::size_t objective,
                         const std::vector<double>& lower, const std::vector<double>& upper) {
  TrainingSet t;
  t.fidelity = fidelity;
  t.lower = lower;
  t.upper = upper;
  for (const auto& e : archive) {
    // The hydrodynamic objective stays valid when sizing fails; the weight
    // of an infeasible sizing result is not a design weight.
    if (e.fidelity != fidelity || !e.outcome.ok) continue;
    if (objective == 1 && !e.outcome.feasible_lower) continue;
    t.inputs.push_back(e.x);
    t.outputs.push_back(e.outcome.f[objective]);
  }
  return t;
}

bool already_evaluated(const LoopState& s, const std::vector<double>& x, int fidelity) {
  for (const auto& e : s.archive) {
    if (e.fidelity != fidelity) continue;
    double d = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) d = std::max(d, std::abs(e.x[k] - x[k]));
    if (d <= 1e-9) return true;
  }
  return false;
}

void write_outputs(const LoopConfig& cfg, const LoopState& s, const IterationRecord& rec, std::size_t dim) {
  if (cfg.out_dir.empty()) return;
  auto stamp = [&](Table& t) {
    if (!cfg.config_hash.empty()) t.meta["config_hash"] = cfg.config_hash;
  };
  if (rec.iteration > 0) {
    Table p;
    stamp(p);
    p.meta["iteration"] = std::to_string(rec.iteration);
    for (std::size_t k = 0; k < dim; ++k) p.columns.push_back("x" + std::to_string(k));
    for (const char* c : {"f1", "f2", "sigma1", "sigma2", "fidelity"}) p.columns.emplace_back(c);
    for (const auto& op : rec.predicted_front) {
      std::vector<double> row = op.x;
      row.insert(row.end(), {op.f[0], op.f[1], op.sigma[0], op.sigma[1], static_cast<double>(op.fidelity)});
      p.rows.push_back(std::move(row));
    }
    write_table(cfg.out_dir / ("pareto_iter_" + std::to_string(rec.iteration) + ".csv"), p);
  }

  Table hv, budget;
  stamp(hv);
  stamp(budget);
  hv.columns = {"iteration", "hv_evaluated", "hv_predicted", "front_size", "batch", "max_unc_f1", "max_unc_f2"};
  budget.columns = {"iteration", "lf_count", "hf_count", "failures", "lf_seconds", "hf_seconds", "cost_units"};
  for (const auto& h : s.history) {
    hv.rows.push_back({static_cast<double>(h.iteration), h.hv_evaluated, h.hv_predicted,
                       static_cast<double>(h.front_size), static_cast<double>(h.batch), h.max_norm_uncertainty[0],
                       h.max_norm_uncertainty[1]});
    budget.rows.push_back({static_cast<double>(h.iteration), static_cast<double>(h.lf_count),
                           static_cast<double>(h.hf_count), static_cast<double>(h.failures), h.lf_cost, h.hf_cost,
                           static_cast<double>(h.lf_count) * cfg.costs[0] + static_cast<double>(h.hf_count) * cfg.costs[1]});
  }
  write_table(cfg.out_dir / "hv_history.csv", hv);
  write_table(cfg.out_dir / "budget.csv", budget);

  write_archive_csv(cfg.out_dir / "archive.csv", s.archive, cfg.config_hash);
}

}  // namespace

ObjectiveModels train_objectives(const std::vector<ArchiveEntry>& archive, const std::vector<double>& lower,
                                 const std::vector<double>& upper, const SrbfConfig& cfg) {
  const std::size_t dim = lower.size();
  const TrainingSet empty{{}, {}, lower, upper, 2};
  ObjectiveModels models;
  for (std::size_t m = 0; m < 2; ++m) {
    const auto lf = training_set(archive, 1, m, lower, upper);
    const auto hf = training_set(archive, 2, m, lower, upper);
    if (lf.size() < dim + 2) throw NumericalError("too few successful low-fidelity evaluations to train a surrogate");
    (m == 0 ? models.f1 : models.f2) = train_mf(lf, hf.size() >= dim + 2 ? hf : empty, cfg);
  }
  return models;
}

void write_archive_csv(const std::filesystem::path& path, const std::vector<ArchiveEntry>& archive,
                       const std::string& config_hash) {
  Table a;
  if (!config_hash.empty()) a.meta["config_hash"] = config_hash;
  const std::size_t dim = archive.empty() ? 0 : archive.front().x.size();
  for (std::size_t k = 0; k < dim; ++k) a.columns.push_back("x" + std::to_string(k));
  for (const char* c : {"fidelity", "iteration", "ok", "feasible_lower", "f1", "f2"}) a.columns.emplace_back(c);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& e : archive) {
    std::vector<double> row = e.x;
    row.insert(row.end(), {static_cast<double>(e.fidelity), static_cast<double>(e.iteration),
                           e.outcome.ok ? 1.0 : 0.0, e.outcome.feasible_lower ? 1.0 : 0.0,
                           e.outcome.ok ? e.outcome.f[0] : nan, e.outcome.ok ? e.outcome.f[1] : nan});
    a.rows.push_back(std::move(row));
  }
  write_table(path, a);
}

std::vector<ArchiveEntry> read_archive_csv(const std::filesystem::path& path) {
  const Table t = read_table(path);
  const std::size_t fid = t.column("fidelity");
  const std::size_t it = t.column("iteration"), ok = t.column("ok"), feas = t.column("feasible_lower");
  const std::size_t f1 = t.column("f1"), f2 = t.column("f2");
  std::vector<ArchiveEntry> out;
  for (const auto& row : t.rows) {
    ArchiveEntry e;
    e.x.assign(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(fid));
    e.fidelity = static_cast<int>(row[fid]);
    e.iteration = static_cast<int>(row[it]);
    e.outcome.ok = row[ok] != 0.0;
    e.outcome.feasible_lower = row[feas] != 0.0;
    if (e.outcome.ok) e.outcome.f = {row[f1], row[f2]};
    if (e.fidelity != 1 && e.fidelity != 2) throw ValidationError("archive: fidelity must be 1 or 2 in " + path.string());
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::pair<std::vector<double>, int>> initial_design(const LoopConfig& cfg, const std::vector<double>& lower,
                                                                const std::vector<double>& upper) {
  const std::size_t dim = lower.size();
  if (dim == 0 || upper.size() != dim) throw ValidationError("initial_design: bad reduced box");
  for (std::size_t k = 0; k < dim; ++k)
    if (!(upper[k] > lower[k])) throw ValidationError("initial_design: empty reduced box");
  if (cfg.hf_initial > cfg.lf_initial) throw DomainError("hf_initial", "nested design needs hf_initial <= lf_initial");
  if (cfg.lf_initial < dim + 2) throw DomainError("lf_initial", "need at least dim + 2 low-fidelity samples");
  auto doe = SobolSequence::generate(dim, cfg.lf_initial, cfg.seed);
  scale_to_box(doe, lower, upper);
  std::vector<std::pair<std::vector<double>, int>> out;
  for (const auto& x : doe) out.emplace_back(x, 1);
  for (std::size_t i = 0; i < cfg.hf_initial; ++i) out.emplace_back(doe[i], 2);
  return out;
}

std::vector<ArchiveEntry> evaluate_initial(const LoopConfig& cfg, const std::vector<double>& lower,
                                          const std::vector<double>& upper, const Evaluator& evaluate) {
  std::vector<std::vector<double>> xs;
  std::vector<int> levels;
  for (auto& [x, level] : initial_design(cfg, lower, upper)) {
    xs.push_back(std::move(x));
    levels.push_back(level);
  }
  std::vector<ArchiveEntry> archive;
  evaluate_batch(xs, levels, 0, cfg.threads, evaluate, archive);
  return archive;
}

LoopState run_loop(const LoopConfig& cfg, const std::vector<double>& lower, const std::vector<double>& upper,
                   const Evaluator& evaluate, const std::vector<ArchiveEntry>* initial) {
  const std::size_t dim = lower.size();
  const auto design = initial_design(cfg, lower, upper);

  LoopState s;
  s.costs = cfg.costs;
  if (initial) {
    if (initial->size() != design.size()) throw ValidationError("run_loop: initial archive does not match the design");
    for (std::size_t i = 0; i < design.size(); ++i) {
      const auto& e = (*initial)[i];
      if (e.fidelity != design[i].second || e.x.size() != dim) throw ValidationError("run_loop: initial archive does not match the design");
      for (std::size_t k = 0; k < dim; ++k)
        if (std::abs(e.x[k] - design[i].first[k]) > 1e-12 * std::max(1.0, std::abs(e.x[k])))
          throw ValidationError("run_loop: initial archive does not match the design");
    }
    s.archive = *initial;
  } else {
    s.archive = evaluate_initial(cfg, lower, upper, evaluate);
  }

  const auto first = archive_objectives(s);
  if (first.empty()) throw NumericalError("run_loop: every initial evaluation failed");
  for (std::size_t m = 0; m < 2; ++m) {
    double lo = first[0][m], hi = first[0][m];
    for (const auto& f : first) {
      lo = std::min(lo, f[m]);
      hi = std::max(hi, f[m]);
    }
    const double range = hi - lo;
    s.reference[m] = hi + 0.1 * (range > 0.0 ? range : std::max(1.0, std::abs(hi)));
  }

  IterationRecord rec0;
  rec0.hv_evaluated = hypervolume_clipped(archive_objectives(s), s.reference);
  fill_counts(s, rec0);
  s.history.push_back(rec0);
  write_outputs(cfg, s, rec0, dim);

  s.stop_reason = "max_iterations";
  for (std::size_t it = 1; it <= cfg.max_iterations; ++it) {
    if (cfg.measured_costs) {
      std::vector<double> t1, t2;
      for (const auto& e : s.archive) (e.fidelity == 1 ? t1 : t2).push_back(e.outcome.seconds);
      const double m1 = median(t1), m2 = median(t2);
      if (m1 > 0.0 && m2 > 0.0) s.costs = {m1, m2};
    }
    const ObjectiveModels models = train_objectives(s.archive, lower, upper, cfg.srbf);

    IterationRecord rec;
    rec.iteration = it;
    rec.predicted_front = predicted_pareto(models, lower, upper, cfg.scan_budget, mix_seed(cfg.seed, it), cfg.threads);
    for (auto& op : rec.predicted_front) op.fidelity = allocate_fidelity(op.sigma_lf, op.sigma, s.costs);
    rec.front_size = rec.predicted_front.size();
    rec.max_norm_uncertainty = max_normalized_uncertainty(rec.predicted_front);
    std::vector<Objectives> pt;
    for (const auto& op : rec.predicted_front) pt.push_back(op.f);
    rec.hv_predicted = hypervolume_clipped(pt, s.reference);

    const bool converged = rec.max_norm_uncertainty[0] < cfg.stop_uncertainty &&
                           rec.max_norm_uncertainty[1] < cfg.stop_uncertainty;
    std::vector<std::vector<double>> batch;
    std::vector<int> batch_levels;
    bool out_of_budget = false;
    if (!converged) {
      const auto clusters = cluster_batch(rec.predicted_front, cfg.k_min, cfg.k_max);
      std::vector<double> ev(rec.predicted_front.size());
      parallel_for(ev.size(), cfg.threads,
                   [&](std::size_t i) { ev[i] = ehvi(rec.predicted_front[i], pt, s.reference, cfg.ehvi); });
      double spent = 0.0;
      for (const auto& e : s.archive) spent += cfg.costs[static_cast<std::size_t>(e.fidelity - 1)];
      for (std::size_t pick : select_infill(clusters, rec.predicted_front, ev)) {
        const auto& op = rec.predicted_front[pick];
        int level = op.fidelity;
        if (already_evaluated(s, op.x, level)) {
          if (level == 1 && !already_evaluated(s, op.x, 2))
            level = 2;
          else
            continue;
        }
        const double cost = cfg.costs[static_cast<std::size_t>(level - 1)];
        if (spent + cost > cfg.max_cost) {
          out_of_budget = true;
          break;
        }
        spent += cost;
        batch.push_back(op.x);
        batch_levels.push_back(level);
      }
    }
    rec.batch = batch.size();
    evaluate_batch(batch, batch_levels, static_cast<int>(it), cfg.threads, evaluate, s.archive);
    rec.hv_evaluated = hypervolume_clipped(archive_objectives(s), s.reference);
    fill_counts(s, rec);
    s.history.push_back(rec);
    write_outputs(cfg, s, rec, dim);
    spdlog::info("iteration {}: front {} batch {} hv {:.6g} max unc ({:.3g}, {:.3g})", it, rec.front_size,
                 rec.batch, rec.hv_evaluated, rec.max_norm_uncertainty[0], rec.max_norm_uncertainty[1]);

    if (converged) {
      s.stop_reason = "uncertainty";
      break;
    }
    if (out_of_budget) {
      s.stop_reason = "budget";
      break;
    }
    if (batch.empty()) {
      s.stop_reason = "no_new_candidates";
      break;
    }
    if (s.history.size() > cfg.hv_window) {
      const double before = s.history[s.history.size() - 1 - cfg.hv_window].hv_evaluated;
      if (before > 0.0 && (rec.hv_evaluated - before) / before < cfg.stop_hv_gain) {
        s.stop_reason = "hypervolume";
        break;
      }
    }
  }
  const auto objs = archive_objectives(s);
  for (std::size_t i : nondominated(objs)) s.evaluated_front.push_back(objs[i]);
  std::sort(s.evaluated_front.begin(), s.evaluated_front.end());
  return s;
}

}  // namespace manta
