#include "commands.hpp"

#include "manta/hashing.hpp"
#include "manta/parallel.hpp"
#include "manta/sampling.hpp"
#include "manta/surrogate.hpp"
#include "manta/table.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <chrono>
#include <fstream>
#include <limits>
#include <regex>
#include <set>
#include <sstream>

namespace manta::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kEnsemble = "ensemble.csv";
constexpr const char* kFailures = "ensemble_failures.csv";
constexpr const char* kEmbedding = "embedding.json";
constexpr const char* kDoe = "doe_archive.csv";
constexpr const char* kSurrogateF1 = "surrogate_f1.json";
constexpr const char* kSurrogateF2 = "surrogate_f2.json";
constexpr const char* kArchive = "archive.csv";
constexpr const char* kOptimizeReport = "optimize_report.json";

std::vector<double> lower_of(const Embedding& e) {
  std::vector<double> v;
  for (const auto& b : e.x_bounds) v.push_back(b.first);
  return v;
}

std::vector<double> upper_of(const Embedding& e) {
  std::vector<double> v;
  for (const auto& b : e.x_bounds) v.push_back(b.second);
  return v;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json objectives_json(const Objectives& f) { return json{{"f1", f[0]}, {"f2", f[1]}, {"e_max", -f[0]}, {"w_empty_N", f[1]}}; }

Embedding fresh_embedding(const RunConfig& cfg) {
  const auto path = cfg.out_dir / kEmbedding;
  require_fresh(path, cfg, "reduce");
  auto e = load_embedding(path);
  if (e.x_bounds.size() != e.dim()) throw ValidationError("embedding has no reduced bounds");
  return e;
}

}  // namespace

std::string artifact_hash(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  if (path.extension() == ".json") {
    json j;
    try {
      j = json::parse(in);
    } catch (const json::exception& ex) {
      throw ValidationError(path.string() + ": " + ex.what());
    }
    return j.value("config_hash", std::string{});
  }
  std::string line;
  while (std::getline(in, line) && !line.empty() && line[0] == '#') {
    const auto eq = line.find('=');
    if (eq != std::string::npos && line.find("config_hash") != std::string::npos) {
      std::string v = line.substr(eq + 1);
      while (!v.empty() && (v.back() == '\r' || v.back() == ' ')) v.pop_back();
      return v;
    }
  }
  return {};
}

void require_fresh(const fs::path& path, const RunConfig& cfg, const char* producer) {
  if (!fs::exists(path))
    throw ValidationError("missing " + path.string() + "; run 'manta " + producer + "' first");
  const std::string have = artifact_hash(path);
  if (have != cfg.hash())
    throw StaleArtifact(path.string() + " was produced under config " + (have.empty() ? "<none>" : have) +
                        ", current config is " + cfg.hash() + "; rerun 'manta " + producer + "'");
}

void write_manifest(const RunConfig& cfg, const std::string& command) {
  json m;
  m["command"] = command;
  m["config_hash"] = cfg.hash();
  std::vector<std::string> lines;
  std::istringstream is(cfg.canonical());
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  m["config"] = lines;
  const auto loop = cfg.effective_loop();
  m["seeds"] = {{"run", cfg.seed},
                {"ensemble", cfg.ensemble_seed()},
                {"sizing", cfg.effective_pipeline().pso.seed},
                {"surrogate", loop.srbf.seed},
                {"ehvi", loop.ehvi.seed},
                {"optimizer", loop.seed}};
  m["threads"] = cfg.threads;
  json inputs = json::object();
  for (const char* name : {kEnsemble, kEmbedding, kDoe, kSurrogateF1, kSurrogateF2}) {
    const auto p = cfg.out_dir / name;
    if (fs::exists(p)) inputs[name] = file_content_hash(p);
  }
  m["artifacts"] = inputs;
  write_json(cfg.out_dir / ("manifest_" + command + ".json"), m);
}

void cmd_sample(const RunConfig& cfg) {
  const auto pipeline = cfg.effective_pipeline();
  const std::size_t n = cfg.ensemble.size;
  auto pts = SobolSequence::generate(kDesignDim, n, cfg.ensemble_seed());
  const std::vector<double> lo(cfg.design_bounds.lower.begin(), cfg.design_bounds.lower.end());
  const std::vector<double> hi(cfg.design_bounds.upper.begin(), cfg.design_bounds.upper.end());
  scale_to_box(pts, lo, hi);

  std::vector<EnsembleRecord> records(n);
  parallel_for(n, cfg.threads, [&](std::size_t i) {
    FullDesignVector u{};
    std::copy(pts[i].begin(), pts[i].end(), u.begin());
    records[i] = ensemble_sample(u, pipeline);
  });

  std::size_t failed = 0;
  for (const auto& r : records) failed += r.evaluated ? 0 : 1;
  const double rate = static_cast<double>(failed) / static_cast<double>(n);
  if (rate > cfg.ensemble.max_failure_rate) {
    throw NumericalError("ensemble: " + std::to_string(failed) + " of " + std::to_string(n) +
                         " designs failed to evaluate; check the design bounds");
  }
  FilterReport rep;
  const auto kept = filter_ensemble(records, cfg.ensemble.iqr_k, &rep);
  const std::string hash = cfg.hash();
  write_ensemble_csv(cfg.out_dir / kEnsemble, kept, hash);

  // Failure log: 1 = evaluation failed, 2 = outside the IQR fence.
  std::set<FullDesignVector> survivors;
  for (const auto& r : kept) survivors.insert(r.u);
  Table log;
  log.meta["config_hash"] = hash;
  log.columns = {"index", "reason"};
  for (const auto& name : design_parameter_names()) log.columns.emplace_back(name);
  for (std::size_t i = 0; i < n; ++i) {
    if (survivors.count(records[i].u)) continue;
    std::vector<double> row{static_cast<double>(i), records[i].evaluated ? 2.0 : 1.0};
    row.insert(row.end(), records[i].u.begin(), records[i].u.end());
    log.rows.push_back(std::move(row));
  }
  write_table(cfg.out_dir / kFailures, log);
  spdlog::info("sample: {} designs, {} failed, {} outliers, {} kept", n, rep.failed, rep.outliers, kept.size());
}

void cmd_reduce(const RunConfig& cfg) {
  const auto path = cfg.out_dir / kEnsemble;
  require_fresh(path, cfg, "sample");
  const auto records = read_ensemble_csv(path);
  const auto data = assemble_matrix(records);
  auto e = solve_embedding(data, cfg.ensemble.eta);
  e.x_bounds = reduced_bounds(e, records);
  e.ensemble_hash = ensemble_hash(records);
  save_embedding(cfg.out_dir / kEmbedding, e, cfg.hash());
  spdlog::info("reduce: {} samples, N = {} modes retaining {:.4f} of the weighted variance", records.size(), e.dim(),
               e.eta_retained);
}

void cmd_train(const RunConfig& cfg) {
  const auto e = fresh_embedding(cfg);
  const auto loop = cfg.effective_loop();
  const auto lower = lower_of(e), upper = upper_of(e);
  const auto evaluate = reduced_evaluator(e, cfg.design_bounds, cfg.effective_pipeline());
  const auto archive = evaluate_initial(loop, lower, upper, evaluate);
  write_archive_csv(cfg.out_dir / kDoe, archive, loop.config_hash);
  const auto models = train_objectives(archive, lower, upper, loop.srbf);
  save_surrogate(cfg.out_dir / kSurrogateF1, models.f1, loop.config_hash);
  save_surrogate(cfg.out_dir / kSurrogateF2, models.f2, loop.config_hash);
  std::size_t usable = 0;
  for (const auto& a : archive) usable += a.outcome.ok && a.outcome.feasible_lower;
  spdlog::info("train: {} initial evaluations, {} feasible", archive.size(), usable);
}

void cmd_optimize(const RunConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  const auto e = fresh_embedding(cfg);
  write_manifest(cfg, "optimize");
  auto loop = cfg.effective_loop();
  loop.out_dir = cfg.out_dir;
  const auto lower = lower_of(e), upper = upper_of(e);
  const auto pipeline = cfg.effective_pipeline();
  const auto evaluate = reduced_evaluator(e, cfg.design_bounds, pipeline);

  std::vector<ArchiveEntry> initial;
  const auto doe = cfg.out_dir / kDoe;
  if (fs::exists(doe)) {
    require_fresh(doe, cfg, "train");
    initial = read_archive_csv(doe);
    spdlog::info("optimize: reusing {} initial evaluations from {}", initial.size(), doe.string());
  }
  const LoopState state = run_loop(loop, lower, upper, evaluate, initial.empty() ? nullptr : &initial);

  json r;
  r["config_hash"] = loop.config_hash;
  r["stop_reason"] = state.stop_reason;
  r["iterations"] = state.history.empty() ? 0 : state.history.back().iteration;
  r["reduced_dim"] = e.dim();
  r["lf_evaluations"] = state.lf_count();
  r["hf_evaluations"] = state.hf_count();
  std::size_t failures = 0, infeasible = 0;
  for (const auto& a : state.archive) {
    failures += a.outcome.ok ? 0 : 1;
    infeasible += a.outcome.ok && !a.outcome.feasible_lower ? 1 : 0;
  }
  r["failed_evaluations"] = failures;
  r["lower_level_infeasible"] = infeasible;
  r["reference_point"] = {state.reference[0], state.reference[1]};
  json hist = json::array();
  for (const auto& h : state.history) {
    hist.push_back({{"iteration", h.iteration},
                    {"hv_evaluated", h.hv_evaluated},
                    {"hv_predicted", h.hv_predicted},
                    {"batch", h.batch},
                    {"max_normalized_uncertainty", {h.max_norm_uncertainty[0], h.max_norm_uncertainty[1]}}});
  }
  r["history"] = hist;
  const auto& last = state.history.back();
  r["final_max_normalized_uncertainty"] = std::max(last.max_norm_uncertainty[0], last.max_norm_uncertainty[1]);

  json front = json::array();
  for (const auto& f : state.evaluated_front) {
    for (const auto& a : state.archive) {
      if (!a.outcome.ok || !a.outcome.feasible_lower || a.outcome.f != f) continue;
      json p = objectives_json(f);
      p["fidelity"] = a.fidelity;
      p["iteration"] = a.iteration;
      p["x"] = a.x;
      front.push_back(p);
      break;
    }
  }
  r["evaluated_front"] = front;

  json base = json::object();
  for (int fid : {1, 2}) {
    const auto ev = evaluate_design(cfg.baseline, fid, pipeline);
    json b;
    b["ok"] = ev.ok;
    if (ev.ok) {
      b["objectives"] = objectives_json(ev.objectives);
      b["sizing_feasible"] = ev.sizing.feasible;
      bool dominated = false;
      for (const auto& f : state.evaluated_front) dominated |= dominates(f, ev.objectives);
      b["dominated_by_front"] = dominated;
    } else {
      b["error"] = ev.error;
    }
    base[fid == 1 ? "lf" : "hf"] = b;
  }
  const Eigen::VectorXd xb = project(e, cfg.baseline);
  base["x"] = std::vector<double>(xb.data(), xb.data() + xb.size());
  r["baseline"] = base;
  r["runtime_s"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  write_json(cfg.out_dir / kOptimizeReport, r);
  spdlog::info("optimize: stopped ({}) after {} iterations; {} LF / {} HF evaluations; front of {}",
               state.stop_reason, r["iterations"].get<std::size_t>(), state.lf_count(), state.hf_count(),
               state.evaluated_front.size());
}

void cmd_size(const RunConfig& cfg, const std::optional<fs::path>& design, int fidelity) {
  const FullDesignVector u = design ? read_design_file(*design) : cfg.baseline;
  const auto pipeline = cfg.effective_pipeline();
  make_glider(u, pipeline.loft);  // geometry problems surface as input errors
  const auto ev = evaluate_design(u, fidelity, pipeline);
  if (!ev.ok) throw EvaluationFailed("size: " + ev.error);
  json r;
  r["config_hash"] = cfg.hash();
  r["design"] = design ? design->string() : std::string("baseline");
  r["fidelity"] = fidelity;
  r["volume_m3"] = ev.volume;
  r["e_max"] = ev.glide.e_max;
  r["aoa_star_deg"] = ev.glide.aoa_star;
  r["glide_angle_deg"] = ev.glide.gamma * 180.0 / 3.14159265358979323846;
  r["delta_vb_m3"] = ev.glide.delta_vb;
  r["sizing"] = json::parse(sizing_report_json(ev.sizing));
  write_json(cfg.out_dir / "sizing_report.json", r);
  spdlog::info("size: W*_empty = {:.4f} N ({})", ev.sizing.w_empty, ev.sizing.feasible ? "feasible" : "infeasible");
}

void cmd_polar(const RunConfig& cfg, const std::optional<fs::path>& design) {
  const FullDesignVector u = design ? read_design_file(*design) : cfg.baseline;
  const auto pipeline = cfg.effective_pipeline();
  const Glider g = make_glider(u, pipeline.loft);
  for (int fid : {1, 2}) {
    const auto c = polar(g, pipeline.flow, pipeline.hydro, fid);
    write_polar_csv(cfg.out_dir / (fid == 1 ? "polar_lf.csv" : "polar_hf.csv"), c, cfg.hash());
    const auto best = max_efficiency(c);
    spdlog::info("polar: fidelity {} E_max = {:.3f} at {} deg", fid, best.e_max, best.aoa_star);
  }
}

void cmd_report(const RunConfig& cfg) {
  const std::string hash = cfg.hash();
  const fs::path dir = cfg.out_dir / "report";
  const auto e = fresh_embedding(cfg);

  {
    Table t;
    t.meta["config_hash"] = hash;
    t.columns = {"mode", "eigenvalue", "cumulative_fraction", "retained"};
    const auto curve = retention_curve(e);
    for (std::size_t k = 0; k < curve.size(); ++k)
      t.rows.push_back({static_cast<double>(k + 1), e.spectrum[k], curve[k], k < e.dim() ? 1.0 : 0.0});
    write_table(dir / "variance_retention.csv", t);
  }

  const auto archive_path = cfg.out_dir / kArchive;
  require_fresh(archive_path, cfg, "optimize");
  const auto archive = read_archive_csv(archive_path);
  {
    Table t;
    t.meta["config_hash"] = hash;
    t.columns = {"index", "iteration", "fidelity", "ok", "feasible_lower", "e_max", "w_empty_N", "pareto"};
    std::vector<Objectives> objs;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < archive.size(); ++i)
      if (archive[i].outcome.ok && archive[i].outcome.feasible_lower) {
        objs.push_back(archive[i].outcome.f);
        idx.push_back(i);
      }
    std::set<std::size_t> pareto;
    for (std::size_t k : nondominated(objs)) pareto.insert(idx[k]);
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < archive.size(); ++i) {
      const auto& a = archive[i];
      t.rows.push_back({static_cast<double>(i), static_cast<double>(a.iteration), static_cast<double>(a.fidelity),
                        a.outcome.ok ? 1.0 : 0.0, a.outcome.feasible_lower ? 1.0 : 0.0,
                        a.outcome.ok ? -a.outcome.f[0] : nan, a.outcome.ok ? a.outcome.f[1] : nan,
                        pareto.count(i) ? 1.0 : 0.0});
    }
    write_table(dir / "archive_objectives.csv", t);
  }

  {
    // Uncertainty ellipses: centre and semi-axes (the surrogate sigmas).
    Table t;
    t.meta["config_hash"] = hash;
    t.columns = {"iteration", "point", "f1", "f2", "axis_f1", "axis_f2", "fidelity"};
    const std::regex name("pareto_iter_([0-9]+)\\.csv");
    std::vector<std::pair<int, fs::path>> files;
    for (const auto& entry : fs::directory_iterator(cfg.out_dir)) {
      std::smatch m;
      const std::string fname = entry.path().filename().string();
      if (std::regex_match(fname, m, name)) files.emplace_back(std::stoi(m[1]), entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& [it, path] : files) {
      require_fresh(path, cfg, "optimize");
      const Table p = read_table(path);
      const std::size_t f1 = p.column("f1"), f2 = p.column("f2"), s1 = p.column("sigma1"), s2 = p.column("sigma2"),
                        fid = p.column("fidelity");
      for (std::size_t i = 0; i < p.rows.size(); ++i) {
        const auto& row = p.rows[i];
        t.rows.push_back({static_cast<double>(it), static_cast<double>(i), row[f1], row[f2], row[s1], row[s2], row[fid]});
      }
    }
    write_table(dir / "pareto_ellipses.csv", t);
  }

  {
    // Polar overlay: baseline at both fidelities and the best-efficiency
    // feasible design of the archive at high fidelity.
    const auto pipeline = cfg.effective_pipeline();
    const Glider base = make_glider(cfg.baseline, pipeline.loft);
    const auto lf = polar(base, pipeline.flow, pipeline.hydro, 1);
    const auto hf = polar(base, pipeline.flow, pipeline.hydro, 2);
    const ArchiveEntry* best = nullptr;
    for (const auto& a : archive)
      if (a.outcome.ok && a.outcome.feasible_lower && (!best || a.outcome.f[0] < best->outcome.f[0])) best = &a;
    Table t;
    t.meta["config_hash"] = hash;
    t.columns = {"aoa_deg", "baseline_lf_lift_N", "baseline_lf_drag_N", "baseline_hf_lift_N", "baseline_hf_drag_N"};
    std::optional<PolarCurve> opt;
    if (best) {
      const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(best->x.data(), static_cast<Eigen::Index>(best->x.size()));
      const Glider g = make_glider(back_map(e, x, cfg.design_bounds), pipeline.loft);
      opt = polar(g, pipeline.flow, pipeline.hydro, 2);
      t.columns.insert(t.columns.end(), {"optimum_hf_lift_N", "optimum_hf_drag_N"});
    }
    for (std::size_t i = 0; i < lf.points.size(); ++i) {
      std::vector<double> row{lf.points[i].aoa_deg, lf.points[i].lift, lf.points[i].drag, hf.points[i].lift,
                              hf.points[i].drag};
      if (opt) row.insert(row.end(), {opt->points[i].lift, opt->points[i].drag});
      t.rows.push_back(std::move(row));
    }
    write_table(dir / "polar_overlay.csv", t);
  }
  spdlog::info("report: wrote {}", dir.string());
}

void cmd_predict(const RunConfig& cfg, const fs::path& input, const fs::path& output) {
  const auto p1 = cfg.out_dir / kSurrogateF1, p2 = cfg.out_dir / kSurrogateF2;
  require_fresh(p1, cfg, "train");
  require_fresh(p2, cfg, "train");
  const auto m1 = load_surrogate(p1), m2 = load_surrogate(p2);
  const std::size_t dim = m1.lf.lower.size();
  const Table in = read_table(input);
  std::vector<std::size_t> cols;
  for (std::size_t k = 0; k < dim; ++k) cols.push_back(in.column("x" + std::to_string(k)));
  std::vector<std::vector<double>> xs;
  for (const auto& row : in.rows) {
    std::vector<double> x;
    for (auto c : cols) x.push_back(row[c]);
    xs.push_back(std::move(x));
  }
  const auto a = predict_mf_batch(m1, xs), b = predict_mf_batch(m2, xs);
  Table out;
  out.meta["config_hash"] = cfg.hash();
  for (std::size_t k = 0; k < dim; ++k) out.columns.push_back("x" + std::to_string(k));
  for (const char* c : {"f1", "sigma1", "f2", "sigma2"}) out.columns.emplace_back(c);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    std::vector<double> row = xs[i];
    row.insert(row.end(), {a[i].mean, a[i].uncertainty, b[i].mean, b[i].uncertainty});
    out.rows.push_back(std::move(row));
  }
  write_table(output, out);
  spdlog::info("predict: scored {} points", xs.size());
}

}  // namespace manta::cli
