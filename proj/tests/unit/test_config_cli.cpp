#include "commands.hpp"

#include "manta/config.hpp"
#include "manta/errors.hpp"
#include "manta/table.hpp"

#include <gtest/gtest.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <fstream>
#include <iterator>
#include <sstream>

namespace fs = std::filesystem;
using namespace manta;

namespace {

const fs::path kConfigDir = MANTA_CONFIG_DIR;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("manta_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Small enough to run the whole chain in a few seconds.
const char* kTinyIni = R"([hydro]
coarse_span = 8
coarse_chord = 4
fine_span = 12
fine_chord = 6

[geometry]
loft_chordwise = 29
loft_spanwise = 29

[ensemble]
size = 64

[surrogate]
ensemble = 4

[optimizer]
lf_initial = 32
hf_initial = 6
max_iterations = 1
scan_budget = 512
ehvi_samples = 256
)";

int run_binary(const std::string& args) {
  const std::string cmd = std::string("\"") + MANTA_BINARY + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Config, DefaultIniMatchesBuiltInDefaults) {
  const auto cfg = RunConfig::load(kConfigDir / "default.ini");
  EXPECT_EQ(cfg.hash(), RunConfig::defaults().hash());
  EXPECT_EQ(cfg.ensemble.size, 2048u);
  EXPECT_EQ(cfg.loop.lf_initial, 128u);
  EXPECT_EQ(cfg.loop.hf_initial, 32u);
}

TEST(Config, UnknownKeyOrSectionIsRejected) {
  const auto dir = scratch("unknown");
  write_text(dir / "a.ini", "[flow]\nsped = 0.25\n");
  EXPECT_THROW(RunConfig::load(dir / "a.ini"), ValidationError);
  write_text(dir / "b.ini", "[flws]\nspeed = 0.25\n");
  EXPECT_THROW(RunConfig::load(dir / "b.ini"), ValidationError);
}

TEST(Config, MalformedValuesAreRejected) {
  const auto dir = scratch("malformed");
  for (const char* text : {"[flow]\nspeed = fast\n", "[ensemble]\nsize = -3\n", "[sizing]\npackaging = maybe\n",
                           "[ensemble]\neta = 1.5\n", "[optimizer]\nlf_initial = 4\nhf_initial = 8\n",
                           "[geometry]\nbaseline_file = nowhere.csv\n"}) {
    write_text(dir / "c.ini", text);
    EXPECT_THROW(RunConfig::load(dir / "c.ini"), ValidationError) << text;
  }
}

TEST(Config, HashTracksResultAffectingSettingsOnly) {
  const auto dir = scratch("hash");
  write_text(dir / "a.ini", "[flow]\nspeed = 0.25\n");
  write_text(dir / "b.ini", "[flow]\nspeed = 0.26\n");
  write_text(dir / "c.ini", "[run]\nout_dir = elsewhere\nthreads = 4\n");
  write_text(dir / "d.ini", "[run]\nseed = 1\n");
  const std::string h = RunConfig::defaults().hash();
  EXPECT_EQ(RunConfig::load(dir / "a.ini").hash(), h);
  EXPECT_NE(RunConfig::load(dir / "b.ini").hash(), h);
  EXPECT_EQ(RunConfig::load(dir / "c.ini").hash(), h);
  EXPECT_NE(RunConfig::load(dir / "d.ini").hash(), h);
  EXPECT_EQ(RunConfig::defaults().hash(), h);
}

TEST(Config, RunSeedShiftsEveryModuleSeed) {
  RunConfig a = RunConfig::defaults(), b = a;
  b.seed = 3;
  EXPECT_EQ(b.ensemble_seed(), a.ensemble_seed() + 3);
  EXPECT_EQ(b.effective_pipeline().pso.seed, a.effective_pipeline().pso.seed + 3);
  EXPECT_EQ(b.effective_loop().seed, a.effective_loop().seed + 3);
  EXPECT_EQ(b.effective_loop().srbf.seed, a.effective_loop().srbf.seed + 3);
  EXPECT_EQ(b.effective_loop().ehvi.seed, a.effective_loop().ehvi.seed + 3);
}

TEST(Config, DesignFileRoundTrip) {
  const auto dir = scratch("design");
  FullDesignVector u = baseline_design();
  u[3] += 0.0123456789;
  write_design_file(dir / "d.csv", u, "abc");
  EXPECT_EQ(read_design_file(dir / "d.csv"), u);
  EXPECT_EQ(cli::artifact_hash(dir / "d.csv"), "abc");

  // A missing row or an unknown name is an input error.
  std::string text = read_text(dir / "d.csv");
  const auto cut = text.rfind('\n', text.size() - 2);
  write_text(dir / "short.csv", text.substr(0, cut + 1));
  EXPECT_THROW(read_design_file(dir / "short.csv"), ValidationError);
  write_text(dir / "bad.csv", text + "wingspan,3\n");
  EXPECT_THROW(read_design_file(dir / "bad.csv"), ValidationError);
}

TEST(Config, BoundsFileFeedsTheHash) {
  const auto dir = scratch("bounds");
  const auto b = default_design_bounds();
  const auto names = design_parameter_names();
  std::ostringstream os;
  os << "parameter,lower,upper\n";
  for (std::size_t i = 0; i < kDesignDim; ++i)
    os << names[i] << ',' << format_double(b.lower[i]) << ',' << format_double(b.upper[i] * (i == 0 ? 1.01 : 1.0))
       << '\n';
  write_text(dir / "bounds.csv", os.str());
  write_text(dir / "a.ini", "[geometry]\nbounds_file = bounds.csv\n");
  const auto cfg = RunConfig::load(dir / "a.ini");
  EXPECT_DOUBLE_EQ(cfg.design_bounds.upper[0], b.upper[0] * 1.01);
  EXPECT_NE(cfg.hash(), RunConfig::defaults().hash());
}

TEST(Config, EnvironmentAndExplicitOverrides) {
  RunConfig cfg = RunConfig::defaults();
  ::setenv("MANTA_OUT", "/tmp/from_env", 1);
  ::setenv("MANTA_THREADS", "3", 1);
  apply_overrides(cfg, std::nullopt, std::nullopt, std::nullopt);
  EXPECT_EQ(cfg.out_dir, fs::path("/tmp/from_env"));
  EXPECT_EQ(cfg.threads, 3u);
  apply_overrides(cfg, 9, 2, fs::path("/tmp/explicit"));
  EXPECT_EQ(cfg.out_dir, fs::path("/tmp/explicit"));
  EXPECT_EQ(cfg.threads, 2u);
  EXPECT_EQ(cfg.seed, 9u);
  ::setenv("MANTA_THREADS", "0", 1);
  EXPECT_THROW(apply_overrides(cfg, std::nullopt, std::nullopt, std::nullopt), ValidationError);
  ::unsetenv("MANTA_OUT");
  ::unsetenv("MANTA_THREADS");
}

TEST(Commands, StaleArtifactIsRefused) {
  RunConfig cfg = RunConfig::defaults();
  cfg.out_dir = scratch("stale");
  write_design_file(cfg.out_dir / "x.csv", baseline_design(), cfg.hash());
  EXPECT_NO_THROW(cli::require_fresh(cfg.out_dir / "x.csv", cfg, "sample"));
  RunConfig other = cfg;
  other.pipeline.flow.speed = 0.3;
  EXPECT_THROW(cli::require_fresh(cfg.out_dir / "x.csv", other, "sample"), cli::StaleArtifact);
  EXPECT_THROW(cli::require_fresh(cfg.out_dir / "missing.csv", cfg, "sample"), ValidationError);
  // Downstream commands refuse to start without their inputs.
  EXPECT_THROW(cli::cmd_reduce(cfg), ValidationError);
  EXPECT_THROW(cli::cmd_train(cfg), ValidationError);
}

TEST(Commands, PolarWritesBothFidelities) {
  RunConfig cfg = RunConfig::defaults();
  cfg.out_dir = scratch("polar");
  cli::cmd_polar(cfg, std::nullopt);
  for (const char* name : {"polar_lf.csv", "polar_hf.csv"}) {
    const Table t = read_table(cfg.out_dir / name);
    EXPECT_EQ(t.rows.size(), 15u) << name;
    EXPECT_EQ(cli::artifact_hash(cfg.out_dir / name), cfg.hash());
  }
}

TEST(Commands, SizeWritesReport) {
  RunConfig cfg = RunConfig::defaults();
  cfg.out_dir = scratch("size");
  cli::cmd_size(cfg, std::nullopt, 1);
  const auto j = nlohmann::json::parse(read_text(cfg.out_dir / "sizing_report.json"));
  EXPECT_EQ(j["config_hash"], cfg.hash());
  EXPECT_NEAR(j["e_max"].get<double>(), 18.16, 0.05);
  EXPECT_TRUE(j["sizing"]["feasible"].get<bool>());
}

class EndToEnd : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    spdlog::set_level(spdlog::level::warn);
    dir_ = scratch("e2e");
    write_text(dir_ / "tiny.ini", kTinyIni);
    cfg_ = RunConfig::load(dir_ / "tiny.ini");
    cfg_.out_dir = dir_ / "out";
    fs::create_directories(cfg_.out_dir);
    cli::cmd_sample(cfg_);
    cli::cmd_reduce(cfg_);
    cli::cmd_train(cfg_);
    cli::cmd_optimize(cfg_);
    cli::cmd_report(cfg_);
  }

  static inline fs::path dir_;
  static inline RunConfig cfg_;
};

TEST_F(EndToEnd, EveryArtifactCarriesTheConfigHash) {
  std::size_t checked = 0;
  for (const auto& entry : fs::recursive_directory_iterator(cfg_.out_dir)) {
    const auto ext = entry.path().extension();
    if (!entry.is_regular_file() || (ext != ".csv" && ext != ".json")) continue;
    EXPECT_EQ(cli::artifact_hash(entry.path()), cfg_.hash()) << entry.path();
    ++checked;
  }
  EXPECT_GE(checked, 10u);
}

TEST_F(EndToEnd, ReportRowsMatchTheArchive) {
  const Table archive = read_table(cfg_.out_dir / "archive.csv");
  const Table objectives = read_table(cfg_.out_dir / "report" / "archive_objectives.csv");
  EXPECT_EQ(objectives.rows.size(), archive.rows.size());
  const auto report = nlohmann::json::parse(read_text(cfg_.out_dir / "optimize_report.json"));
  EXPECT_EQ(report["lf_evaluations"].get<std::size_t>() + report["hf_evaluations"].get<std::size_t>(),
            archive.rows.size());
  const Table retention = read_table(cfg_.out_dir / "report" / "variance_retention.csv");
  EXPECT_FALSE(retention.rows.empty());
  EXPECT_TRUE(fs::exists(cfg_.out_dir / "report" / "polar_overlay.csv"));
  EXPECT_TRUE(fs::exists(cfg_.out_dir / "manifest_optimize.json"));
}

TEST_F(EndToEnd, SampleIsReproducible) {
  const std::string before = read_text(cfg_.out_dir / "ensemble.csv");
  RunConfig again = cfg_;
  again.out_dir = dir_ / "again";
  fs::create_directories(again.out_dir);
  cli::cmd_sample(again);
  EXPECT_EQ(read_text(again.out_dir / "ensemble.csv"), before);
}

TEST_F(EndToEnd, ChangedConfigInvalidatesArtifacts) {
  RunConfig changed = cfg_;
  changed.ensemble.eta = 0.9;
  EXPECT_THROW(cli::cmd_reduce(changed), cli::StaleArtifact);
  EXPECT_THROW(cli::cmd_optimize(changed), cli::StaleArtifact);
  EXPECT_THROW(cli::cmd_report(changed), cli::StaleArtifact);
}

TEST_F(EndToEnd, PredictScoresPoints) {
  const auto e = nlohmann::json::parse(read_text(cfg_.out_dir / "embedding.json"));
  Table in;
  const std::size_t n = e["x_bounds"].size();
  for (std::size_t k = 0; k < n; ++k) in.columns.push_back("x" + std::to_string(k));
  in.rows.assign(3, std::vector<double>(n, 0.0));
  write_table(dir_ / "points.csv", in);
  cli::cmd_predict(cfg_, dir_ / "points.csv", dir_ / "pred.csv");
  const Table out = read_table(dir_ / "pred.csv");
  ASSERT_EQ(out.rows.size(), 3u);
  for (const auto& row : out.rows)
    for (double v : row) EXPECT_TRUE(std::isfinite(v));
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  EXPECT_EQ(run_binary("--help"), 0);
  EXPECT_EQ(run_binary("no-such-command"), 2);
  EXPECT_EQ(run_binary("--config " + (dir / "missing.ini").string() + " polar"), 2);
  write_text(dir / "bad.ini", "[flow]\nspeed = -1\n");
  EXPECT_EQ(run_binary("--config " + (dir / "bad.ini").string() + " polar"), 2);
  EXPECT_EQ(run_binary("--out " + (dir / "empty").string() + " reduce"), 2);

  // A field incidence the lattice refuses fails every design of the ensemble.
  write_text(dir / "fail.ini", "[ensemble]\nsize = 40\n[hydro]\nfield_aoa_deg = 80\n");
  EXPECT_EQ(run_binary("--config " + (dir / "fail.ini").string() + " --out " + (dir / "o").string() + " sample"), 3);

  EXPECT_EQ(run_binary("--out " + (dir / "p").string() + " polar"), 0);
  EXPECT_TRUE(fs::exists(dir / "p" / "polar_lf.csv"));
}
