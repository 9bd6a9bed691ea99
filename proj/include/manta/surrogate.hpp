#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace manta {

/// Samples of one scalar output over a box in the reduced space.
struct TrainingSet {
  std::vector<std::vector<double>> inputs;
  std::vector<double> outputs;
  std::vector<double> lower, upper;  // normalisation box; empty = data range
  int fidelity = 1;

  std::size_t size() const { return outputs.size(); }
  std::size_t dim() const { return inputs.empty() ? lower.size() : inputs.front().size(); }
  /// Throws ValidationError for ragged or non-finite data, mismatched box
  /// dimensions or duplicate inputs (within 1e-12).
  void validate() const;
};

struct SrbfConfig {
  double mu = 1e-8;              // relative to ||A||_F^2 / n
  std::size_t ensemble = 16;     // number of kernel exponents
  double eps_min = 1.0;
  double eps_max = 3.0;
  std::uint64_t seed = 7;
};

/// Kernel exponents stratified over [eps_min, eps_max]: one uniform draw in
/// each of `ensemble` equal strata, from a seeded 64-bit Mersenne twister.
std::vector<double> stratified_epsilons(const SrbfConfig& cfg);

struct Prediction {
  double mean = 0.0;
  double uncertainty = 0.0;  // 2 x ensemble standard deviation
};

/// Stochastic RBF regressor: one power-kernel fit ||x - x_j||^eps with a
/// linear tail per sampled exponent.
struct SrbfModel {
  std::vector<std::vector<double>> centers;  // normalised to the unit box
  std::vector<double> lower, upper;
  std::vector<double> epsilons;
  std::vector<Eigen::VectorXd> weights;  // per exponent, length n
  std::vector<Eigen::VectorXd> tails;    // per exponent, [c0, c1..cd]
  double mu = 0.0;                       // as configured (relative)
  std::string training_hash;

  std::size_t dim() const { return lower.size(); }
  std::vector<double> normalise(const std::vector<double>& x) const;
  Prediction predict(const std::vector<double>& x) const;
  /// Per-exponent predictions at x.
  std::vector<double> members(const std::vector<double>& x) const;
  /// Predictions for many points, rows of `x` (physical coordinates).
  std::vector<Prediction> predict_batch(const std::vector<std::vector<double>>& x) const;
};

/// Solves, for every exponent, min ||A w + P c - y||^2 + mu_eff ||w||^2 with
/// P^T w = 0, as the least-squares system [A N, P; sqrt(mu_eff) I, 0] over
/// w = N z, N an orthonormal basis of null(P^T). Throws ValidationError for
/// fewer than d + 2 points and NumericalError when mu = 0 and the system is
/// rank deficient.
SrbfModel train_srbf(const TrainingSet& data, double mu, const std::vector<double>& epsilons);
SrbfModel train_srbf(const TrainingSet& data, const SrbfConfig& cfg);

Prediction predict(const SrbfModel& model, const std::vector<double>& x);

/// Additive two-fidelity model: low-fidelity fit plus a discrepancy fit on
/// the high-fidelity residuals.
struct MfSurrogate {
  SrbfModel lf;
  SrbfModel discrepancy;
  bool has_discrepancy = false;  // false when trained without HF data
};

struct MfPrediction {
  double mean = 0.0;
  double uncertainty = 0.0;  // sqrt(U_lf^2 + U_disc^2)
  double lf_mean = 0.0;
  double lf_uncertainty = 0.0;
  double disc_uncertainty = 0.0;
};

/// sqrt(u1^2 + u2^2).
double combine_uncertainty(double u1, double u2);

/// HF inputs need not be a subset of the LF inputs. An empty HF set yields a
/// model without discrepancy (zero discrepancy uncertainty).
MfSurrogate train_mf(const TrainingSet& lf, const TrainingSet& hf, const SrbfConfig& cfg);
MfPrediction predict_mf(const MfSurrogate& mf, const std::vector<double>& x);
std::vector<MfPrediction> predict_mf_batch(const MfSurrogate& mf, const std::vector<std::vector<double>>& x);

std::string training_hash(const TrainingSet& data);

void save_surrogate(const std::filesystem::path& path, const MfSurrogate& mf, const std::string& config_hash = {});
MfSurrogate load_surrogate(const std::filesystem::path& path);

}  // namespace manta
