#pragma once

// Subcommands of the manta CLI. Each wraps one module entry point, reads
// its upstream artifacts from the output directory after checking their
// config hash, and writes hash-stamped artifacts back there.

#include "manta/config.hpp"
#include "manta/errors.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace manta::cli {

/// Upstream artifact produced under a different configuration.
class StaleArtifact : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// "# config_hash=" line of a CSV or the "config_hash" key of a JSON file.
std::string artifact_hash(const std::filesystem::path& path);
/// Throws ValidationError if missing, StaleArtifact if the hash differs.
void require_fresh(const std::filesystem::path& path, const RunConfig& cfg, const char* producer);

void write_manifest(const RunConfig& cfg, const std::string& command);

void cmd_sample(const RunConfig& cfg);
void cmd_reduce(const RunConfig& cfg);
void cmd_train(const RunConfig& cfg);
void cmd_optimize(const RunConfig& cfg);
void cmd_size(const RunConfig& cfg, const std::optional<std::filesystem::path>& design, int fidelity);
void cmd_polar(const RunConfig& cfg, const std::optional<std::filesystem::path>& design);
void cmd_report(const RunConfig& cfg);
void cmd_predict(const RunConfig& cfg, const std::filesystem::path& input, const std::filesystem::path& output);

}  // namespace manta::cli
