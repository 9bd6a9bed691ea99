#include "manta/errors.hpp"
#include "manta/optimizer.hpp"
#include "manta/sampling.hpp"
#include "manta/table.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

namespace {

using namespace manta;

double grid_hypervolume(const std::vector<Objectives>& front, const Objectives& r, const Objectives& lo,
                        int n) {
  const double hx = (r[0] - lo[0]) / n, hy = (r[1] - lo[1]) / n;
  std::size_t covered = 0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double x = lo[0] + (i + 0.5) * hx, y = lo[1] + (j + 0.5) * hy;
      for (const auto& p : front)
        if (p[0] <= x && p[1] <= y) {
          ++covered;
          break;
        }
    }
  return static_cast<double>(covered) * hx * hy;
}

double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }

// E[(c - Y)^+] for Y ~ N(mu, s^2).
double partial_expectation(double c, double mu, double s) {
  const double t = (c - mu) / s;
  return s * (t * normal_cdf(t) + normal_pdf(t));
}

// Single-point front p: the improvement is the box dominated by y minus its
// overlap with the box dominated by p, and both factor per axis.
double single_point_ehvi(const Objectives& mu, const Objectives& s, const Objectives& p, const Objectives& r) {
  const double whole = partial_expectation(r[0], mu[0], s[0]) * partial_expectation(r[1], mu[1], s[1]);
  const double overlap = (partial_expectation(r[0], mu[0], s[0]) - partial_expectation(p[0], mu[0], s[0])) *
                         (partial_expectation(r[1], mu[1], s[1]) - partial_expectation(p[1], mu[1], s[1]));
  return whole - overlap;
}

TEST(Dominance, Examples) {
  EXPECT_TRUE(dominates(Objectives{1, 1}, Objectives{2, 2}));
  EXPECT_FALSE(dominates(Objectives{1, 2}, Objectives{2, 1}));
  EXPECT_FALSE(dominates(Objectives{2, 1}, Objectives{1, 2}));
  EXPECT_FALSE(dominates(Objectives{1, 1}, Objectives{1, 1}));
  EXPECT_TRUE(dominates(Objectives{1, 1}, Objectives{1, 2}));
  EXPECT_TRUE(dominates(std::vector<double>{0, 0, 1}, std::vector<double>{0, 0, 2}));
}

TEST(Dominance, IsAStrictPartialOrder) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> d(0, 3);
  std::vector<Objectives> v(60);
  for (auto& p : v) p = {double(d(rng)), double(d(rng))};
  for (const auto& a : v) {
    EXPECT_FALSE(dominates(a, a));
    for (const auto& b : v) {
      if (dominates(a, b)) EXPECT_FALSE(dominates(b, a));
      for (const auto& c : v)
        if (dominates(a, b) && dominates(b, c)) EXPECT_TRUE(dominates(a, c));
    }
  }
}

TEST(Dominance, NondominatedMatchesBruteForce) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Objectives> v(300);
  for (auto& p : v) p = {u(rng), u(rng)};
  v.push_back(v[5]);  // exact duplicate
  const auto idx = nondominated(v);
  std::set<std::size_t> kept(idx.begin(), idx.end());
  for (std::size_t i = 0; i < v.size(); ++i) {
    bool dominated = false;
    for (const auto& q : v) dominated = dominated || dominates(q, v[i]);
    if (i == v.size() - 1) {
      EXPECT_FALSE(kept.count(i));
      continue;
    }
    EXPECT_EQ(kept.count(i) == 1, !dominated) << i;
  }
}

TEST(Hypervolume, SinglePoint) {
  EXPECT_DOUBLE_EQ(hypervolume({{1, 1}}, {2, 2}), 1.0);
}

TEST(Hypervolume, MatchesGridOracle) {
  const std::vector<Objectives> stairs = {{0, 2}, {1, 1}, {2, 0}};
  EXPECT_NEAR(hypervolume(stairs, {3, 3}), grid_hypervolume(stairs, {3, 3}, {0, 0}, 2000), 1e-3);
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 5; ++t) {
    std::vector<Objectives> front(25);
    for (auto& p : front) p = {u(rng), u(rng)};
    const Objectives r = {1.1, 1.2};
    EXPECT_NEAR(hypervolume(front, r), grid_hypervolume(front, r, {0, 0}, 2000), 1e-3);
  }
}

TEST(Hypervolume, DominatedPointChangesNothing) {
  const std::vector<Objectives> front = {{0, 2}, {1, 1}, {2, 0}};
  auto more = front;
  more.push_back({1.5, 1.5});
  EXPECT_DOUBLE_EQ(hypervolume(more, {3, 3}), hypervolume(front, {3, 3}));
  EXPECT_DOUBLE_EQ(hypervolume_improvement(front, {1.5, 1.5}, {3, 3}), 0.0);
}

TEST(Hypervolume, PointBeyondReferenceIsRejected) {
  EXPECT_THROW(hypervolume({{1, 1}, {3, 0}}, {3, 3}), ValidationError);
  EXPECT_DOUBLE_EQ(hypervolume_clipped({{1, 1}, {3, 0}}, {3, 3}), 4.0);
}

TEST(Ehvi, ZeroSigmaIsExactImprovement) {
  const std::vector<Objectives> front = {{0, 2}, {1, 1}, {2, 0}};
  const Objectives r = {3, 3};
  ObjectivePoint c;
  c.f = {2.5, 2.5};
  EXPECT_EQ(ehvi(c, front, r), 0.0);
  c.f = {0, 1};  // fills the unit square between the first two steps
  EXPECT_DOUBLE_EQ(ehvi(c, front, r), 1.0);
  EXPECT_DOUBLE_EQ(ehvi(c, front, r, {512, 3, true}), 1.0);
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 3.5);
  for (int i = 0; i < 200; ++i) {
    c.f = {u(rng), u(rng)};
    EXPECT_EQ(ehvi(c, front, r), hypervolume_improvement(front, c.f, r));
  }
}

TEST(Ehvi, MonteCarloMatchesClosedFormForSinglePointFront) {
  const Objectives p = {1.0, 1.0}, r = {2.0, 2.0};
  const std::vector<std::pair<Objectives, Objectives>> cases = {
      {{1.2, 0.8}, {0.3, 0.2}}, {{0.5, 1.5}, {0.5, 0.5}}, {{1.0, 1.0}, {0.1, 0.4}}, {{1.5, 1.5}, {0.6, 0.6}}};
  for (const auto& [mu, s] : cases) {
    const double oracle = single_point_ehvi(mu, s, p, r);
    const double mc = ehvi_mc(mu, s, {p}, r, 1u << 14, 11);
    EXPECT_NEAR(mc, oracle, 0.02 * oracle) << mu[0] << ',' << mu[1];
    EXPECT_NEAR(ehvi_analytic(mu, s, {p}, r), oracle, 1e-12 * oracle + 1e-15);
  }
}

TEST(Ehvi, StripFormulaAgreesWithSamplingOnLongerFronts) {
  const std::vector<Objectives> front = {{0.1, 0.9}, {0.3, 0.5}, {0.6, 0.3}, {0.9, 0.05}};
  const Objectives r = {1.0, 1.0};
  const Objectives mu = {0.4, 0.4}, s = {0.15, 0.2};
  const double a = ehvi_analytic(mu, s, front, r);
  EXPECT_NEAR(ehvi_mc(mu, s, front, r, 1u << 16, 5), a, 0.01 * a);
  EXPECT_GE(ehvi_mc(mu, s, front, r, 256, 5), 0.0);
}

TEST(Ehvi, SamplingIsDeterministic) {
  const Objectives mu = {0.4, 0.4}, s = {0.15, 0.2};
  const std::vector<Objectives> front = {{0.3, 0.5}};
  EXPECT_EQ(ehvi_mc(mu, s, front, {1, 1}, 1024, 9), ehvi_mc(mu, s, front, {1, 1}, 1024, 9));
}

std::vector<ObjectivePoint> two_groups() {
  std::vector<ObjectivePoint> front;
  for (int i = 0; i < 6; ++i) {
    ObjectivePoint a, b;
    a.x = {0.1 + 0.01 * i, 0.1};
    a.f = {0.0 + 0.01 * i, 1.0 - 0.01 * i};
    b.x = {0.9 + 0.01 * i, 0.9};
    b.f = {1.0 + 0.01 * i, 0.0 - 0.01 * i};
    front.push_back(a);
    front.push_back(b);
  }
  return front;
}

double brute_silhouette(const std::vector<std::vector<double>>& f, const std::vector<std::size_t>& lab) {
  auto dist = [&](std::size_t i, std::size_t j) {
    double s = 0;
    for (std::size_t k = 0; k < f[i].size(); ++k) s += (f[i][k] - f[j][k]) * (f[i][k] - f[j][k]);
    return std::sqrt(s);
  };
  const std::size_t k = *std::max_element(lab.begin(), lab.end()) + 1;
  double total = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    std::vector<double> sum(k, 0.0);
    std::vector<std::size_t> cnt(k, 0);
    for (std::size_t j = 0; j < f.size(); ++j)
      if (j != i) sum[lab[j]] += dist(i, j), ++cnt[lab[j]];
    if (cnt[lab[i]] == 0) continue;
    const double a = sum[lab[i]] / cnt[lab[i]];
    double b = 1e300;
    for (std::size_t c = 0; c < k; ++c)
      if (c != lab[i] && cnt[c] > 0) b = std::min(b, sum[c] / cnt[c]);
    total += (b - a) / std::max(a, b);
  }
  return total / f.size();
}

TEST(Clustering, SeparatesTwoGroups) {
  const auto front = two_groups();
  const auto c = cluster_batch(front, 2, 4);
  ASSERT_EQ(c.k, 2u);
  ASSERT_EQ(c.clusters.size(), 2u);
  for (const auto& members : c.clusters) {
    ASSERT_EQ(members.size(), 6u);
    const bool left = front[members[0]].x[0] < 0.5;
    for (auto m : members) EXPECT_EQ(front[m].x[0] < 0.5, left);
  }
}

TEST(Clustering, ChosenKHasTheBestSilhouette) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<ObjectivePoint> front(40);
  for (std::size_t i = 0; i < front.size(); ++i) {
    const double t = static_cast<double>(i) / 39.0;
    front[i].x = {u(rng), u(rng), u(rng)};
    front[i].f = {t, (1 - t) * (1 - t)};
  }
  const auto c = cluster_batch(front, 2, 6);
  const auto features = cluster_features(front);
  double best = -2.0;
  for (std::size_t k = 2; k <= 6; ++k) {
    const double s = brute_silhouette(features, kmeans(features, k));
    EXPECT_NEAR(s, mean_silhouette(features, kmeans(features, k), k), 1e-12);
    best = std::max(best, s);
  }
  std::vector<std::size_t> labels(front.size());
  for (std::size_t j = 0; j < c.clusters.size(); ++j)
    for (auto m : c.clusters[j]) labels[m] = j;
  EXPECT_NEAR(brute_silhouette(features, labels), best, 1e-12);
  EXPECT_EQ(c.silhouettes.size(), 5u);
}

TEST(Clustering, IdenticalPointsFallBackToOneCluster) {
  std::vector<ObjectivePoint> front(5);
  for (auto& p : front) p.x = {0.3, 0.3}, p.f = {1.0, 1.0};
  const auto c = cluster_batch(front);
  EXPECT_EQ(c.k, 1u);
  ASSERT_EQ(c.clusters.size(), 1u);
  EXPECT_EQ(c.clusters[0].size(), 5u);
}

TEST(Clustering, TooFewPointsFallBackToOneCluster) {
  auto front = two_groups();
  front.resize(2);
  EXPECT_EQ(cluster_batch(front, 3, 8).k, 1u);
}

TEST(Clustering, FeaturesSpanTheUnitBox) {
  const auto features = cluster_features(two_groups());
  for (std::size_t k = 0; k < features[0].size(); ++k) {
    double lo = 1e300, hi = -1e300;
    for (const auto& f : features) lo = std::min(lo, f[k]), hi = std::max(hi, f[k]);
    if (k == 1) continue;  // x1 takes two values only, still mapped to {0, 1}
    EXPECT_DOUBLE_EQ(lo, 0.0);
    EXPECT_DOUBLE_EQ(hi, 1.0);
  }
}

TEST(Infill, TieBreakRules) {
  std::vector<ObjectivePoint> front(4);
  for (std::size_t i = 0; i < 4; ++i) front[i].x = {double(i)};
  front[0].sigma = {0.1, 0.1};
  front[1].sigma = {0.3, 0.4};
  front[2].sigma = {0.3, 0.4};
  front[3].sigma = {0.0, 0.0};
  Clustering c;
  c.clusters = {{0, 1, 2}, {3}};
  c.k = 2;
  const auto picks = select_infill(c, front, {0.0, 0.0, 0.0, 0.0});
  ASSERT_EQ(picks.size(), 2u);
  EXPECT_EQ(picks[0], 1u);  // largest uncertainty, then smaller x
  EXPECT_EQ(picks[1], 3u);
  EXPECT_EQ(select_infill(c, front, {0.5, 0.1, 0.2, 0.0})[0], 0u);
}

TEST(Allocation, Examples) {
  EXPECT_EQ(allocate_fidelity({1, 0}, {1, 0}, {1, 10}), 1);
  EXPECT_EQ(allocate_fidelity({0.1, 0}, {2, 0}, {1, 10}), 2);
  EXPECT_EQ(allocate_fidelity({1, 0}, {10, 0}, {1, 10}), 1);
  EXPECT_EQ(allocate_fidelity({0.6, 0.8}, {30, 40}, {1, 10}), 2);
}

TEST(Uncertainty, NormalisedByFrontRange) {
  std::vector<ObjectivePoint> front(3);
  front[0].f = {0, 10};
  front[1].f = {1, 5};
  front[2].f = {2, 0};
  front[1].sigma = {0.2, 3.0};
  front[2].sigma = {0.5, 1.0};
  const auto u = max_normalized_uncertainty(front);
  EXPECT_DOUBLE_EQ(u[0], 0.25);
  EXPECT_DOUBLE_EQ(u[1], 0.3);
}

// Two-fidelity analytic benchmark on [0, 1]^2: HF is a convex front, LF a
// smooth distortion of it.
EvaluationOutcome benchmark(const std::vector<double>& x, int fidelity) {
  EvaluationOutcome o;
  o.ok = true;
  o.feasible_lower = true;
  const double g = 1.0 + 2.0 * (x[1] - 0.3) * (x[1] - 0.3);
  o.f = {x[0], g * (1.0 - std::sqrt(x[0]) + 0.2)};
  if (fidelity == 1) {
    o.f[0] += 0.03 * std::sin(4.0 * x[1]);
    o.f[1] += 0.05 * (x[0] - 0.5);
  }
  return o;
}

LoopConfig benchmark_config() {
  LoopConfig cfg;
  cfg.lf_initial = 24;
  cfg.hf_initial = 8;
  cfg.max_iterations = 4;
  cfg.scan_budget = 2048;
  cfg.stop_hv_gain = 0.0;
  cfg.stop_uncertainty = 0.0;
  cfg.ehvi.samples = 512;
  cfg.srbf.ensemble = 8;
  return cfg;
}

TEST(Loop, InitialDesignIsNested) {
  const auto cfg = benchmark_config();
  const auto pts = initial_design(cfg, {0, 0}, {1, 1});
  ASSERT_EQ(pts.size(), 32u);
  for (std::size_t i = 0; i < 24; ++i) EXPECT_EQ(pts[i].second, 1);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(pts[24 + i].second, 2);
    EXPECT_EQ(pts[24 + i].first, pts[i].first);
  }
  auto small = cfg;
  small.lf_initial = 3;
  EXPECT_THROW(initial_design(small, {0, 0}, {1, 1}), ValidationError);
}

TEST(Loop, AnalyticBenchmarkBehaves) {
  auto cfg = benchmark_config();
  const auto dir = std::filesystem::temp_directory_path() / "manta_loop_test";
  std::filesystem::remove_all(dir);
  cfg.out_dir = dir;
  cfg.config_hash = "bench";
  const auto s = run_loop(cfg, {0, 0}, {1, 1}, benchmark);

  ASSERT_GE(s.history.size(), 2u);
  for (std::size_t t = 1; t < s.history.size(); ++t)
    EXPECT_GE(s.history[t].hv_evaluated, s.history[t - 1].hv_evaluated);
  EXPECT_GT(s.lf_count(), s.hf_count());
  EXPECT_FALSE(s.stop_reason.empty());

  // Every evaluated front point dominates the reference point.
  for (const auto& f : s.evaluated_front) EXPECT_TRUE(f[0] < s.reference[0] && f[1] < s.reference[1]);

  // Ellipse table axes are the surrogate sigmas of that iteration.
  for (const auto& rec : s.history) {
    if (rec.predicted_front.empty()) continue;
    const auto t = read_table(dir / ("pareto_iter_" + std::to_string(rec.iteration) + ".csv"));
    ASSERT_EQ(t.rows.size(), rec.predicted_front.size());
    EXPECT_EQ(t.meta.at("config_hash"), "bench");
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      EXPECT_EQ(t.rows[i][t.column("sigma1")], rec.predicted_front[i].sigma[0]);
      EXPECT_EQ(t.rows[i][t.column("sigma2")], rec.predicted_front[i].sigma[1]);
    }
  }
  EXPECT_TRUE(std::filesystem::exists(dir / "hv_history.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "budget.csv"));

  const auto back = read_archive_csv(dir / "archive.csv");
  ASSERT_EQ(back.size(), s.archive.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].x, s.archive[i].x);
    EXPECT_EQ(back[i].fidelity, s.archive[i].fidelity);
    EXPECT_EQ(back[i].outcome.f, s.archive[i].outcome.f);
  }
  std::filesystem::remove_all(dir);
}

TEST(Loop, RerunReproducesTheArchive) {
  const auto cfg = benchmark_config();
  const auto a = run_loop(cfg, {0, 0}, {1, 1}, benchmark);
  const auto b = run_loop(cfg, {0, 0}, {1, 1}, benchmark);
  ASSERT_EQ(a.archive.size(), b.archive.size());
  for (std::size_t i = 0; i < a.archive.size(); ++i) {
    EXPECT_EQ(a.archive[i].x, b.archive[i].x);
    EXPECT_EQ(a.archive[i].fidelity, b.archive[i].fidelity);
  }
  EXPECT_EQ(a.evaluated_front, b.evaluated_front);
}

TEST(Loop, FailedCandidatesAreSkippedNotFatal) {
  auto cfg = benchmark_config();
  cfg.max_iterations = 2;
  const Evaluator flaky = [](const std::vector<double>& x, int fidelity) {
    auto o = benchmark(x, fidelity);
    if (x[0] > 0.45 && x[0] < 0.55) {
      o.ok = false;
      o.error = "synthetic failure";
    }
    return o;
  };
  const auto s = run_loop(cfg, {0, 0}, {1, 1}, flaky);
  std::size_t failed = 0;
  for (const auto& e : s.archive) failed += e.outcome.ok ? 0 : 1;
  EXPECT_EQ(s.history.back().failures, failed);
}

TEST(Loop, SuppliedInitialArchiveMustMatchTheDesign) {
  const auto cfg = benchmark_config();
  auto first = evaluate_initial(cfg, {0, 0}, {1, 1}, benchmark);
  auto short_cfg = cfg;
  short_cfg.max_iterations = 0;
  EXPECT_NO_THROW(run_loop(short_cfg, {0, 0}, {1, 1}, benchmark, &first));
  first[3].x[0] += 0.1;
  EXPECT_THROW(run_loop(short_cfg, {0, 0}, {1, 1}, benchmark, &first), ValidationError);
}

TEST(Pareto, ConstantSecondObjectiveLeavesOneMinimiser) {
  const auto cfg = benchmark_config();
  const auto s = run_loop([&] { auto c = cfg; c.max_iterations = 0; return c; }(), {0, 0}, {1, 1}, benchmark);
  auto models = train_objectives(s.archive, {0, 0}, {1, 1}, cfg.srbf);
  // Flatten f2 to an exact constant: no kernel weights, constant tail only.
  for (auto* m : {&models.f2.lf, &models.f2.discrepancy}) {
    for (auto& w : m->weights) w.setZero();
    for (auto& c : m->tails) c.setZero();
  }
  models.f2.lf.tails[0](0) = 3.0;
  for (auto& c : models.f2.lf.tails) c(0) = 3.0;
  const auto front = predicted_pareto(models, {0, 0}, {1, 1}, 1024, 1);
  ASSERT_EQ(front.size(), 1u);
  EXPECT_EQ(front[0].f[1], 3.0);
}

TEST(Pareto, FrontIsNondominatedWithinTheScan) {
  const auto cfg = benchmark_config();
  const auto s = run_loop([&] { auto c = cfg; c.max_iterations = 0; return c; }(), {0, 0}, {1, 1}, benchmark);
  const auto models = train_objectives(s.archive, {0, 0}, {1, 1}, cfg.srbf);
  const auto front = predicted_pareto(models, {0, 0}, {1, 1}, 512, 2);
  EXPECT_LE(front.size(), 512u);
  auto scan = SobolSequence::generate(2, 512, 2);
  scale_to_box(scan, {0, 0}, {1, 1});
  for (const auto& x : scan) {
    const Objectives f = {predict_mf(models.f1, x).mean, predict_mf(models.f2, x).mean};
    for (const auto& p : front) EXPECT_FALSE(dominates(f, p.f));
  }
  for (std::size_t i = 1; i < front.size(); ++i) EXPECT_LE(front[i - 1].f[0], front[i].f[0]);
}

}  // namespace
