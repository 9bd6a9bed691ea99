#include "commands.hpp"

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <iostream>

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

}  // namespace

int main(int argc, char** argv) {
  using namespace manta;
  CLI::App app{"Bi-level multi-fidelity design optimisation for a blended-wing underwater glider"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<std::string> out;
  bool verbose = false;
  app.add_option("--config", config_path, "INI run configuration (built-in defaults if omitted)");
  app.add_option("--seed", seed, "Run seed, added to every module seed");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--out", out, "Output directory");
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* sample = app.add_subcommand("sample", "Evaluate the Sobol design ensemble at low fidelity");
  auto* reduce = app.add_subcommand("reduce", "Build the physics-driven embedding from the ensemble");
  auto* train = app.add_subcommand("train", "Evaluate the nested initial design and fit the surrogates");
  auto* optimize = app.add_subcommand("optimize", "Run the multi-fidelity batch optimisation loop");
  auto* size = app.add_subcommand("size", "Solve the internal sizing problem for one design");
  auto* polar_cmd = app.add_subcommand("polar", "Write the polar of one design at both fidelities");
  auto* report = app.add_subcommand("report", "Emit plot-ready CSVs from the run artifacts");
  auto* predict = app.add_subcommand("predict", "Score reduced-space points with the trained surrogates");

  std::optional<std::string> design;
  int fidelity = 1;
  size->add_option("--design", design, "Design file (parameter,value rows); baseline if omitted");
  size->add_option("--fidelity", fidelity, "1 = coarse lattice, 2 = fine lattice")->check(CLI::Range(1, 2));
  polar_cmd->add_option("--design", design, "Design file (parameter,value rows); baseline if omitted");
  std::string input, output = "predictions.csv";
  predict->add_option("--input", input, "CSV with columns x0..x{N-1}")->required();
  predict->add_option("--output", output, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }
  spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

  try {
    RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::load(config_path);
    apply_overrides(cfg, seed, threads, out ? std::optional<std::filesystem::path>(*out) : std::nullopt);
    std::filesystem::create_directories(cfg.out_dir);
    std::optional<std::filesystem::path> design_path;
    if (design) design_path = *design;

    if (*sample) cli::cmd_sample(cfg);
    else if (*reduce) cli::cmd_reduce(cfg);
    else if (*train) cli::cmd_train(cfg);
    else if (*optimize) cli::cmd_optimize(cfg);
    else if (*size) cli::cmd_size(cfg, design_path, fidelity);
    else if (*polar_cmd) cli::cmd_polar(cfg, design_path);
    else if (*report) cli::cmd_report(cfg);
    else if (*predict) cli::cmd_predict(cfg, input, output);
    return 0;
  } catch (const ValidationError& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const GeometryInfeasible& e) {
    spdlog::error("infeasible geometry: {}", e.what());
    return kExitValidation;
  } catch (const PackagingInfeasible& e) {
    spdlog::error("{}", e.what());
    return kExitValidation;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitNumerical;
  }
}
