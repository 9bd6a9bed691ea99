#pragma once

#include "manta/geometry.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace manta {

/// One sampled design with its coarse-fidelity physics: a distributed field
/// (loading coefficient per lattice panel) and the lumped forces.
struct EnsembleRecord {
  FullDesignVector u{};
  std::vector<double> field;
  double lift = 0.0;
  double drag = 0.0;
  bool evaluated = true;  // false when the evaluation failed
};

struct FilterReport {
  std::size_t failed = 0;     // evaluation failures and non-finite outputs
  std::size_t outliers = 0;   // outside the IQR fence
  std::array<double, 2> lift_fence{};
  std::array<double, 2> drag_fence{};
};

/// Type-7 (linear interpolation) sample quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

/// Drops failed or non-finite records, then records whose lift or drag falls
/// outside [Q1 - k IQR, Q3 + k IQR] (inclusive, so constant data survive).
/// Throws ValidationError when nothing is left.
std::vector<EnsembleRecord> filter_ensemble(const std::vector<EnsembleRecord>& records, double k = 3.0,
                                            FilterReport* report = nullptr);

/// Centred physics-augmented data matrix with its diagonal weights.
struct DataMatrix {
  Eigen::MatrixXd p;        // (M + n_f + n_c) x S, each row centred
  Eigen::VectorXd weights;  // 0 on geometry rows, 1/variance on physical rows
  Eigen::VectorXd mean;     // row means removed from p
  std::size_t n_field = 0;
  std::size_t n_lumped = 2;
  std::size_t samples() const { return static_cast<std::size_t>(p.cols()); }
};

/// Throws ValidationError for inconsistent field lengths, fewer than M + 2
/// samples, or when every physical row is constant.
DataMatrix assemble_matrix(const std::vector<EnsembleRecord>& records);

struct Embedding {
  int version = 1;
  FullDesignVector mean_u{};
  Eigen::MatrixXd basis;             // 32 x N, unit columns
  std::vector<double> eigenvalues;   // retained, descending
  std::vector<double> spectrum;      // full weighted spectrum, descending
  std::vector<std::pair<double, double>> x_bounds;
  double eta = 0.95;
  double eta_retained = 0.0;
  std::string ensemble_hash;

  std::size_t dim() const { return static_cast<std::size_t>(basis.cols()); }
};

/// Solves A W z = lambda z through the symmetric form W^1/2 A W^1/2 and keeps
/// the smallest N whose eigenvalues reach the fraction eta. Bounds are left
/// empty (see reduced_bounds).
Embedding solve_embedding(const DataMatrix& data, double eta);

/// Cumulative retained-variance fraction for N = 1..rank.
std::vector<double> retention_curve(const Embedding& e);

/// Least-squares reduced coordinates of u: x = (V^T V)^-1 V^T (u - mean).
Eigen::VectorXd project(const Embedding& e, const FullDesignVector& u);

/// mean + V x with no clamping (the affine map itself).
FullDesignVector back_map_raw(const Embedding& e, const Eigen::VectorXd& x);

/// Clamps x into x_bounds (with a logged warning) when bounds are present,
/// maps back and clamps u into the design box.
FullDesignVector back_map(const Embedding& e, const Eigen::VectorXd& x, const DesignBounds& box);

/// Per-coordinate range of the training projections widened by 5 % of the
/// range on each side. Throws ValidationError for a degenerate range.
std::vector<std::pair<double, double>> reduced_bounds(const Embedding& e,
                                                      const std::vector<EnsembleRecord>& records);

void save_embedding(const std::filesystem::path& path, const Embedding& e, const std::string& config_hash = {});
Embedding load_embedding(const std::filesystem::path& path);

/// CSV: the 32 parameter names, f0..f{n-1}, lift_N, drag_N.
void write_ensemble_csv(const std::filesystem::path& path, const std::vector<EnsembleRecord>& records,
                        const std::string& config_hash = {});
std::vector<EnsembleRecord> read_ensemble_csv(const std::filesystem::path& path);

/// Content hash of an ensemble (inputs and outputs).
std::string ensemble_hash(const std::vector<EnsembleRecord>& records);

}  // namespace manta
