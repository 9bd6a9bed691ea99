#include "manta/config.hpp"

#include "manta/errors.hpp"
#include "manta/hashing.hpp"
#include "manta/table.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace manta {

namespace {

std::string trim(std::string s) {
  s.erase(0, s.find_first_not_of(" \t\r"));
  s.erase(s.find_last_not_of(" \t\r") + 1);
  return s;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  double v = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::uint64_t to_uint(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw ValidationError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ValidationError(key + ": expected true or false, got '" + text + "'");
}

struct Field {
  std::function<std::string(RunConfig&)> get;  // reads only
  std::function<void(RunConfig&, const std::string&)> set;
  bool hashed = true;
};

using Schema = std::map<std::string, Field>;  // "section.key"

Field real(std::function<double&(RunConfig&)> ref) {
  return {[ref](RunConfig& c) { return format_double(ref(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = to_double("value", v); }};
}

template <typename U>
Field integer(std::function<U&(RunConfig&)> ref) {
  return {[ref](RunConfig& c) { return std::to_string(ref(c)); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = static_cast<U>(to_uint("value", v)); }};
}

Field boolean(std::function<bool&(RunConfig&)> ref) {
  return {[ref](RunConfig& c) { return std::string(ref(c) ? "true" : "false"); },
          [ref](RunConfig& c, const std::string& v) { ref(c) = to_bool("value", v); }};
}

#define MANTA_REAL(name, member) s[name] = real([](RunConfig& c) -> double& { return c.member; })
#define MANTA_SIZE(name, member) s[name] = integer<std::size_t>([](RunConfig& c) -> std::size_t& { return c.member; })
#define MANTA_SEED(name, member) s[name] = integer<std::uint64_t>([](RunConfig& c) -> std::uint64_t& { return c.member; })
#define MANTA_BOOL(name, member) s[name] = boolean([](RunConfig& c) -> bool& { return c.member; })

const Schema& schema() {
  static const Schema s = [] {
    Schema s;
    MANTA_REAL("flow.speed", pipeline.flow.speed);
    MANTA_REAL("flow.density", pipeline.flow.density);
    MANTA_REAL("flow.viscosity", pipeline.flow.viscosity);
    MANTA_REAL("flow.gravity", pipeline.flow.gravity);

    MANTA_SIZE("hydro.coarse_span", pipeline.hydro.coarse.n_span);
    MANTA_SIZE("hydro.coarse_chord", pipeline.hydro.coarse.n_chord);
    MANTA_SIZE("hydro.fine_span", pipeline.hydro.fine.n_span);
    MANTA_SIZE("hydro.fine_chord", pipeline.hydro.fine.n_chord);
    MANTA_REAL("hydro.transition_reynolds", pipeline.hydro.transition_reynolds);
    MANTA_REAL("hydro.aoa_min_deg", pipeline.hydro.aoa_min_deg);
    MANTA_REAL("hydro.aoa_max_deg", pipeline.hydro.aoa_max_deg);
    MANTA_REAL("hydro.aoa_step_deg", pipeline.hydro.aoa_step_deg);
    MANTA_REAL("hydro.field_aoa_deg", pipeline.hydro.field_aoa_deg);

    MANTA_SIZE("geometry.loft_chordwise", pipeline.loft.chordwise);
    MANTA_SIZE("geometry.loft_spanwise", pipeline.loft.spanwise);
    s["geometry.bounds_file"] = {[](RunConfig& c) { return c.bounds_file.string(); },
                                 [](RunConfig& c, const std::string& v) { c.bounds_file = trim(v); }, false};
    s["geometry.baseline_file"] = {[](RunConfig& c) { return c.baseline_file.string(); },
                                   [](RunConfig& c, const std::string& v) { c.baseline_file = trim(v); }, false};

    MANTA_REAL("mass.m_sci", pipeline.mass.m_sci);
    MANTA_REAL("mass.m_pay", pipeline.mass.m_pay);
    MANTA_REAL("mass.m_bat", pipeline.mass.m_bat);
    MANTA_REAL("mass.m_buo", pipeline.mass.m_buo);
    MANTA_REAL("mass.v_sci", pipeline.mass.v_sci);
    MANTA_REAL("mass.v_pay", pipeline.mass.v_pay);
    MANTA_REAL("mass.v_bat", pipeline.mass.v_bat);
    MANTA_REAL("mass.rho_fill", pipeline.mass.rho_fill);
    MANTA_REAL("mass.rho_ph", pipeline.mass.rho_ph);
    MANTA_REAL("mass.rho_water", pipeline.mass.rho_water);
    MANTA_REAL("mass.gravity", pipeline.mass.gravity);
    MANTA_REAL("mass.e_ph", pipeline.mass.e_ph);
    MANTA_REAL("mass.nu_ph", pipeline.mass.nu_ph);
    MANTA_REAL("mass.p_max", pipeline.mass.p_max);
    MANTA_REAL("mass.tau", pipeline.mass.tau);
    MANTA_REAL("mass.eps_cont", pipeline.mass.eps_cont);

    MANTA_SIZE("sizing.particles", pipeline.pso.particles);
    MANTA_SIZE("sizing.iterations", pipeline.pso.iterations);
    MANTA_REAL("sizing.inertia", pipeline.pso.inertia);
    MANTA_REAL("sizing.cognitive", pipeline.pso.cognitive);
    MANTA_REAL("sizing.social", pipeline.pso.social);
    MANTA_SIZE("sizing.pattern_iterations", pipeline.pso.pattern_iterations);
    MANTA_REAL("sizing.pattern_shrink", pipeline.pso.pattern_shrink);
    MANTA_REAL("sizing.penalty", pipeline.pso.penalty);
    MANTA_SEED("sizing.seed", pipeline.pso.seed);
    MANTA_BOOL("sizing.packaging", pipeline.pso.packaging);

    MANTA_SIZE("ensemble.size", ensemble.size);
    MANTA_REAL("ensemble.eta", ensemble.eta);
    MANTA_REAL("ensemble.iqr_k", ensemble.iqr_k);
    MANTA_SEED("ensemble.seed", ensemble.seed);
    MANTA_REAL("ensemble.max_failure_rate", ensemble.max_failure_rate);

    MANTA_REAL("surrogate.mu", loop.srbf.mu);
    MANTA_SIZE("surrogate.ensemble", loop.srbf.ensemble);
    MANTA_REAL("surrogate.eps_min", loop.srbf.eps_min);
    MANTA_REAL("surrogate.eps_max", loop.srbf.eps_max);
    MANTA_SEED("surrogate.seed", loop.srbf.seed);

    MANTA_SIZE("optimizer.lf_initial", loop.lf_initial);
    MANTA_SIZE("optimizer.hf_initial", loop.hf_initial);
    MANTA_SIZE("optimizer.max_iterations", loop.max_iterations);
    MANTA_SIZE("optimizer.scan_budget", loop.scan_budget);
    MANTA_SIZE("optimizer.k_min", loop.k_min);
    MANTA_SIZE("optimizer.k_max", loop.k_max);
    MANTA_REAL("optimizer.stop_uncertainty", loop.stop_uncertainty);
    MANTA_REAL("optimizer.stop_hv_gain", loop.stop_hv_gain);
    MANTA_SIZE("optimizer.hv_window", loop.hv_window);
    MANTA_REAL("optimizer.max_cost", loop.max_cost);
    MANTA_REAL("optimizer.cost_lf", loop.costs[0]);
    MANTA_REAL("optimizer.cost_hf", loop.costs[1]);
    MANTA_BOOL("optimizer.measured_costs", loop.measured_costs);
    MANTA_SIZE("optimizer.ehvi_samples", loop.ehvi.samples);
    MANTA_SEED("optimizer.ehvi_seed", loop.ehvi.seed);
    MANTA_BOOL("optimizer.ehvi_analytic", loop.ehvi.analytic);
    MANTA_SEED("optimizer.seed", loop.seed);

    MANTA_SEED("run.seed", seed);
    s["run.out_dir"] = {[](RunConfig& c) { return c.out_dir.string(); },
                        [](RunConfig& c, const std::string& v) { c.out_dir = trim(v); }, false};
    s["run.threads"] = {[](RunConfig& c) { return std::to_string(c.threads); },
                        [](RunConfig& c, const std::string& v) {
                          c.threads = static_cast<unsigned>(to_uint("run.threads", v));
                        },
                        false};
    return s;
  }();
  return s;
}

#undef MANTA_REAL
#undef MANTA_SIZE
#undef MANTA_SEED
#undef MANTA_BOOL

std::vector<std::vector<std::string>> read_rows(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    if (header) {  // column names
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::size_t parameter_index(const std::string& name, const std::filesystem::path& path) {
  const auto names = design_parameter_names();
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (names[i] == name) return i;
  throw ValidationError("unknown design parameter '" + name + "' in " + path.string());
}

}  // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::load(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError("config: " + std::string(e.what()));
  }
  RunConfig cfg;
  const auto& s = schema();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty())
      throw ValidationError("config: key '" + section + "' outside any section");
    for (const auto& [key, value] : body) {
      const std::string name = section + "." + key;
      auto it = s.find(name);
      if (it == s.end()) throw ValidationError("config: unknown setting '" + name + "'");
      try {
        it->second.set(cfg, value.data());
      } catch (const ValidationError& e) {
        throw ValidationError("config: " + name + ": " + e.what());
      }
    }
  }
  const auto base = path.parent_path();
  auto resolve = [&](std::filesystem::path& p) {
    if (!p.empty() && p.is_relative()) p = base / p;
  };
  resolve(cfg.bounds_file);
  resolve(cfg.baseline_file);
  if (!cfg.bounds_file.empty()) cfg.design_bounds = read_bounds_file(cfg.bounds_file);
  if (!cfg.baseline_file.empty()) cfg.baseline = read_design_file(cfg.baseline_file);
  cfg.validate();
  return cfg;
}

std::string RunConfig::canonical() const {
  std::ostringstream os;
  RunConfig copy = *this;
  for (const auto& [name, field] : schema())
    if (field.hashed) os << name << " = " << field.get(copy) << '\n';
  // File-borne settings enter through their values, not their paths.
  const auto names = design_parameter_names();
  for (std::size_t i = 0; i < kDesignDim; ++i)
    os << "bounds." << names[i] << " = " << format_double(design_bounds.lower[i]) << ','
       << format_double(design_bounds.upper[i]) << '\n';
  for (std::size_t i = 0; i < kDesignDim; ++i) os << "baseline." << names[i] << " = " << format_double(baseline[i]) << '\n';
  return os.str();
}

std::string RunConfig::hash() const { return content_hash(canonical()); }

void RunConfig::validate() const {
  pipeline.flow.validate();
  pipeline.mass.validate();
  pipeline.pso.validate();
  const auto& h = pipeline.hydro;
  if (h.coarse.n_span == 0 || h.coarse.n_chord == 0 || h.fine.n_span == 0 || h.fine.n_chord == 0)
    throw DomainError("hydro lattice", "panel counts must be >= 1");
  if (!(h.aoa_step_deg > 0.0) || !(h.aoa_max_deg >= h.aoa_min_deg)) throw DomainError("hydro.aoa", "empty incidence grid");
  if (!(h.transition_reynolds > 0.0)) throw DomainError("hydro.transition_reynolds", "must be > 0");
  if (pipeline.loft.chordwise < 3 || pipeline.loft.spanwise < 4) throw DomainError("geometry.loft", "resolution too coarse");
  if (!(ensemble.eta > 0.0 && ensemble.eta <= 1.0)) throw DomainError("ensemble.eta", "must lie in (0, 1]");
  if (ensemble.size < 34) throw DomainError("ensemble.size", "must be >= 34");
  if (!(ensemble.iqr_k > 0.0)) throw DomainError("ensemble.iqr_k", "must be > 0");
  if (!(ensemble.max_failure_rate >= 0.0 && ensemble.max_failure_rate <= 1.0))
    throw DomainError("ensemble.max_failure_rate", "must lie in [0, 1]");
  if (!(loop.srbf.mu >= 0.0)) throw DomainError("surrogate.mu", "must be >= 0");
  if (loop.srbf.ensemble == 0) throw DomainError("surrogate.ensemble", "must be >= 1");
  if (!(loop.srbf.eps_min > 0.0 && loop.srbf.eps_max >= loop.srbf.eps_min))
    throw DomainError("surrogate.eps", "need 0 < eps_min <= eps_max");
  if (loop.lf_initial == 0 || loop.hf_initial > loop.lf_initial)
    throw DomainError("optimizer.hf_initial", "nested design needs 0 < hf_initial <= lf_initial");
  if (loop.scan_budget == 0) throw DomainError("optimizer.scan_budget", "must be >= 1");
  if (loop.k_min < 2 || loop.k_max < loop.k_min) throw DomainError("optimizer.k", "need 2 <= k_min <= k_max");
  if (!(loop.costs[0] > 0.0 && loop.costs[1] > 0.0)) throw DomainError("optimizer.cost", "must be > 0");
  if (loop.ehvi.samples == 0) throw DomainError("optimizer.ehvi_samples", "must be >= 1");
  if (loop.hv_window == 0) throw DomainError("optimizer.hv_window", "must be >= 1");
  if (threads == 0) throw DomainError("run.threads", "must be >= 1");
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (!(design_bounds.upper[i] >= design_bounds.lower[i]))
      throw DomainError(std::string(design_parameter_names()[i]), "upper bound below lower bound");
  design_bounds.check(baseline);
}

PipelineConfig RunConfig::effective_pipeline() const {
  PipelineConfig p = pipeline;
  p.pso.seed += seed;
  return p;
}

LoopConfig RunConfig::effective_loop() const {
  LoopConfig l = loop;
  l.seed += seed;
  l.srbf.seed += seed;
  l.ehvi.seed += seed;
  l.threads = threads;
  l.config_hash = hash();
  return l;
}

void apply_overrides(RunConfig& cfg, std::optional<std::uint64_t> seed, std::optional<unsigned> threads,
                     std::optional<std::filesystem::path> out_dir) {
  if (const char* env = std::getenv("MANTA_OUT"); env && *env) cfg.out_dir = env;
  if (const char* env = std::getenv("MANTA_THREADS"); env && *env)
    cfg.threads = static_cast<unsigned>(to_uint("MANTA_THREADS", env));
  if (seed) cfg.seed = *seed;
  if (threads) cfg.threads = *threads;
  if (out_dir) cfg.out_dir = *out_dir;
  if (cfg.threads == 0) throw DomainError("threads", "must be >= 1");
}

FullDesignVector read_design_file(const std::filesystem::path& path) {
  FullDesignVector u{};
  std::array<bool, kDesignDim> seen{};
  for (const auto& row : read_rows(path)) {
    if (row.size() != 2) throw ValidationError("design file rows are 'parameter,value': " + path.string());
    if (row[0] == "fidelity") continue;
    const std::size_t i = parameter_index(row[0], path);
    u[i] = to_double(row[0], row[1]);
    seen[i] = true;
  }
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (!seen[i]) throw ValidationError("design file lacks '" + std::string(design_parameter_names()[i]) + "'");
  return u;
}

void write_design_file(const std::filesystem::path& path, const FullDesignVector& u, const std::string& config_hash) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  if (!config_hash.empty()) out << "# config_hash=" << config_hash << '\n';
  out << "parameter,value\n";
  const auto names = design_parameter_names();
  for (std::size_t i = 0; i < kDesignDim; ++i) out << names[i] << ',' << format_double(u[i]) << '\n';
}

DesignBounds read_bounds_file(const std::filesystem::path& path) {
  DesignBounds b;
  std::array<bool, kDesignDim> seen{};
  for (const auto& row : read_rows(path)) {
    if (row.size() != 3) throw ValidationError("bounds file rows are 'parameter,lower,upper': " + path.string());
    const std::size_t i = parameter_index(row[0], path);
    b.lower[i] = to_double(row[0], row[1]);
    b.upper[i] = to_double(row[0], row[2]);
    seen[i] = true;
  }
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (!seen[i]) throw ValidationError("bounds file lacks '" + std::string(design_parameter_names()[i]) + "'");
  return b;
}

}  // namespace manta
