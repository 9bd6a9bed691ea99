#pragma once

// Run configuration: an INI file with sections, one per run. Every setting
// that can change a result feeds the config hash; the output root and thread
// count do not.

#include "manta/geometry.hpp"
#include "manta/optimizer.hpp"
#include "manta/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace manta {

struct EnsembleConfig {
  std::size_t size = 2048;
  double eta = 0.95;
  double iqr_k = 3.0;
  std::uint64_t seed = 5;
  double max_failure_rate = 0.5;
};

struct RunConfig {
  PipelineConfig pipeline;
  EnsembleConfig ensemble;
  LoopConfig loop;
  DesignBounds design_bounds = default_design_bounds();
  FullDesignVector baseline = baseline_design();
  std::filesystem::path bounds_file;    // empty: built-in bounds
  std::filesystem::path baseline_file;  // empty: built-in baseline
  std::uint64_t seed = 0;  // added to every module seed
  std::filesystem::path out_dir = "out";
  unsigned threads = 1;

  /// Schema-checked load. Unknown sections or keys, malformed values and
  /// missing referenced files throw ValidationError. Relative file paths
  /// resolve against the config file's directory.
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig defaults();

  /// Canonical "section.key = value" listing of every hashed setting.
  std::string canonical() const;
  std::string hash() const;
  void validate() const;

  /// Module configurations with the run seed folded in.
  PipelineConfig effective_pipeline() const;
  LoopConfig effective_loop() const;
  std::uint64_t ensemble_seed() const { return ensemble.seed + seed; }
};

/// Applies MANTA_OUT and MANTA_THREADS, then explicit overrides.
void apply_overrides(RunConfig& cfg, std::optional<std::uint64_t> seed, std::optional<unsigned> threads,
                     std::optional<std::filesystem::path> out_dir);

/// "parameter,value" rows naming all 32 design parameters.
FullDesignVector read_design_file(const std::filesystem::path& path);
void write_design_file(const std::filesystem::path& path, const FullDesignVector& u,
                       const std::string& config_hash = {});

/// "parameter,lower,upper" rows naming all 32 design parameters.
DesignBounds read_bounds_file(const std::filesystem::path& path);

}  // namespace manta
