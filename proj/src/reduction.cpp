#include "manta/reduction.hpp"

#include "manta/errors.hpp"
#include "manta/hashing.hpp"
#include "manta/table.hpp"

#include <json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace manta {

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ValidationError("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

namespace {

bool finite_record(const EnsembleRecord& r) {
  if (!r.evaluated || !std::isfinite(r.lift) || !std::isfinite(r.drag)) return false;
  for (double v : r.u)
    if (!std::isfinite(v)) return false;
  for (double v : r.field)
    if (!std::isfinite(v)) return false;
  return true;
}

std::array<double, 2> fence(const std::vector<double>& v, double k) {
  const double q1 = quantile(v, 0.25);
  const double q3 = quantile(v, 0.75);
  const double iqr = q3 - q1;
  return {q1 - k * iqr, q3 + k * iqr};
}

}  // namespace

std::vector<EnsembleRecord> filter_ensemble(const std::vector<EnsembleRecord>& records, double k,
                                            FilterReport* report) {
  if (records.empty()) throw ValidationError("filter_ensemble: empty ensemble");
  FilterReport rep;
  std::vector<EnsembleRecord> ok;
  for (const auto& r : records) {
    if (finite_record(r))
      ok.push_back(r);
    else
      ++rep.failed;
  }
  std::vector<EnsembleRecord> kept;
  if (!ok.empty()) {
    std::vector<double> lift, drag;
    for (const auto& r : ok) {
      lift.push_back(r.lift);
      drag.push_back(r.drag);
    }
    rep.lift_fence = fence(lift, k);
    rep.drag_fence = fence(drag, k);
    for (const auto& r : ok) {
      const bool in = r.lift >= rep.lift_fence[0] && r.lift <= rep.lift_fence[1] &&
                      r.drag >= rep.drag_fence[0] && r.drag <= rep.drag_fence[1];
      if (in)
        kept.push_back(r);
      else
        ++rep.outliers;
    }
  }
  if (report) *report = rep;
  if (kept.empty()) throw ValidationError("filter_ensemble: no records survive filtering");
  return kept;
}

DataMatrix assemble_matrix(const std::vector<EnsembleRecord>& records) {
  if (records.empty()) throw ValidationError("assemble_matrix: empty ensemble");
  const std::size_t nf = records.front().field.size();
  for (const auto& r : records)
    if (r.field.size() != nf) throw ValidationError("assemble_matrix: inconsistent field length");
  const std::size_t s = records.size();
  if (s < kDesignDim + 2)
    throw ValidationError("assemble_matrix: need at least " + std::to_string(kDesignDim + 2) + " samples");

  DataMatrix d;
  d.n_field = nf;
  d.n_lumped = 2;
  const auto rows = static_cast<Eigen::Index>(kDesignDim + nf + 2);
  d.p.resize(rows, static_cast<Eigen::Index>(s));
  for (std::size_t j = 0; j < s; ++j) {
    const auto& r = records[j];
    const auto col = static_cast<Eigen::Index>(j);
    for (std::size_t i = 0; i < kDesignDim; ++i) d.p(static_cast<Eigen::Index>(i), col) = r.u[i];
    for (std::size_t i = 0; i < nf; ++i) d.p(static_cast<Eigen::Index>(kDesignDim + i), col) = r.field[i];
    d.p(rows - 2, col) = r.lift;
    d.p(rows - 1, col) = r.drag;
  }
  d.mean = d.p.rowwise().mean();
  d.p.colwise() -= d.mean;
  d.weights = Eigen::VectorXd::Zero(rows);
  bool any = false;
  for (Eigen::Index i = static_cast<Eigen::Index>(kDesignDim); i < rows; ++i) {
    const double var = d.p.row(i).squaredNorm() / static_cast<double>(s);
    // Rows that are constant up to round-off carry no information.
    const double scale = std::max(1.0, std::abs(d.mean(i)));
    if (var > 1e-24 * scale * scale) {
      d.weights(i) = 1.0 / var;
      any = true;
    }
  }
  if (!any) throw ValidationError("assemble_matrix: every physical row is constant");
  return d;
}

Embedding solve_embedding(const DataMatrix& data, double eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta", "must lie in (0, 1]");
  const double s = static_cast<double>(data.samples());
  const Eigen::VectorXd sw = data.weights.cwiseSqrt();
  // W^1/2 A W^1/2 = (1/S) (W^1/2 P)(W^1/2 P)^T
  const Eigen::MatrixXd wp = sw.asDiagonal() * data.p;
  const Eigen::MatrixXd b = (wp * wp.transpose()) / s;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(b);
  if (es.info() != Eigen::Success) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b);
    const auto& sv = svd.singularValues();
    throw NumericalError("eigen-decomposition failed; singular values span [" +
                         std::to_string(sv(sv.size() - 1)) + ", " + std::to_string(sv(0)) + "]");
  }
  const Eigen::Index n = b.rows();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const auto& ev = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) { return ev(i) > ev(j); });

  Embedding e;
  e.eta = eta;
  for (std::size_t i = 0; i < kDesignDim; ++i) e.mean_u[i] = data.mean(static_cast<Eigen::Index>(i));
  double total = 0.0;
  for (auto i : order) {
    e.spectrum.push_back(ev(i));
    total += std::max(0.0, ev(i));
  }
  if (!(total > 0.0)) throw NumericalError("weighted covariance has no positive eigenvalue");
  const double cutoff = 1e-12 * e.spectrum.front();
  std::size_t rank = 0;
  while (rank < e.spectrum.size() && e.spectrum[rank] > cutoff) ++rank;

  std::size_t count = 0;
  double acc = 0.0;
  while (count < rank) {
    acc += e.spectrum[count];
    ++count;
    if (acc / total >= eta - 1e-12) break;
  }
  e.eta_retained = std::min(1.0, acc / total);
  if (count == rank && eta >= 1.0) e.eta_retained = 1.0;

  // Eigenvectors of A W: z = A W^1/2 q, well defined for zero geometry weights.
  const Eigen::MatrixXd a = (data.p * data.p.transpose()) / s;
  e.basis.resize(static_cast<Eigen::Index>(kDesignDim), static_cast<Eigen::Index>(count));
  for (std::size_t k = 0; k < count; ++k) {
    const Eigen::VectorXd q = es.eigenvectors().col(order[k]);
    const Eigen::VectorXd z = a * (sw.asDiagonal() * q);
    Eigen::VectorXd v = z.head(static_cast<Eigen::Index>(kDesignDim));
    const double len = v.norm();
    if (len > 0.0) v /= len;
    // Fix the sign so the largest component is positive.
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;
    e.basis.col(static_cast<Eigen::Index>(k)) = v;
    e.eigenvalues.push_back(e.spectrum[k]);
  }
  return e;
}

std::vector<double> retention_curve(const Embedding& e) {
  double total = 0.0;
  for (double l : e.spectrum) total += std::max(0.0, l);
  std::vector<double> curve;
  double acc = 0.0;
  for (double l : e.spectrum) {
    acc += std::max(0.0, l);
    curve.push_back(total > 0.0 ? std::min(1.0, acc / total) : 0.0);
  }
  return curve;
}

Eigen::VectorXd project(const Embedding& e, const FullDesignVector& u) {
  Eigen::VectorXd d(static_cast<Eigen::Index>(kDesignDim));
  for (std::size_t i = 0; i < kDesignDim; ++i) d(static_cast<Eigen::Index>(i)) = u[i] - e.mean_u[i];
  if (e.dim() == 0) return Eigen::VectorXd();
  return e.basis.completeOrthogonalDecomposition().solve(d);
}

FullDesignVector back_map_raw(const Embedding& e, const Eigen::VectorXd& x) {
  if (static_cast<std::size_t>(x.size()) != e.dim()) throw ValidationError("back_map: dimension mismatch");
  const Eigen::VectorXd d = e.basis * x;
  FullDesignVector u = e.mean_u;
  for (std::size_t i = 0; i < kDesignDim; ++i) u[i] += d(static_cast<Eigen::Index>(i));
  return u;
}

FullDesignVector back_map(const Embedding& e, const Eigen::VectorXd& x, const DesignBounds& box) {
  Eigen::VectorXd xc = x;
  if (e.x_bounds.size() == e.dim()) {
    bool clamped = false;
    for (std::size_t k = 0; k < e.dim(); ++k) {
      const auto i = static_cast<Eigen::Index>(k);
      const double v = std::clamp(x(i), e.x_bounds[k].first, e.x_bounds[k].second);
      clamped |= v != x(i);
      xc(i) = v;
    }
    if (clamped) spdlog::warn("back_map: reduced coordinates clamped into the embedding bounds");
  }
  return box.clamp(back_map_raw(e, xc));
}

std::vector<std::pair<double, double>> reduced_bounds(const Embedding& e,
                                                      const std::vector<EnsembleRecord>& records) {
  if (records.size() < 2) throw ValidationError("reduced_bounds: need at least two records");
  const std::size_t n = e.dim();
  std::vector<double> lo(n, std::numeric_limits<double>::infinity());
  std::vector<double> hi(n, -std::numeric_limits<double>::infinity());
  for (const auto& r : records) {
    const auto x = project(e, r.u);
    for (std::size_t k = 0; k < n; ++k) {
      lo[k] = std::min(lo[k], x(static_cast<Eigen::Index>(k)));
      hi[k] = std::max(hi[k], x(static_cast<Eigen::Index>(k)));
    }
  }
  std::vector<std::pair<double, double>> b(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double range = hi[k] - lo[k];
    if (!(range > 1e-14 * std::max(1.0, std::abs(hi[k]))))
      throw ValidationError("reduced_bounds: degenerate range for coordinate " + std::to_string(k));
    b[k] = {lo[k] - 0.05 * range, hi[k] + 0.05 * range};
  }
  return b;
}

void save_embedding(const std::filesystem::path& path, const Embedding& e, const std::string& config_hash) {
  nlohmann::ordered_json j;
  j["format"] = "manta-embedding";
  j["version"] = e.version;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["ensemble_hash"] = e.ensemble_hash;
  j["eta"] = e.eta;
  j["eta_retained"] = e.eta_retained;
  j["mean_u"] = std::vector<double>(e.mean_u.begin(), e.mean_u.end());
  std::vector<std::vector<double>> cols;
  for (Eigen::Index k = 0; k < e.basis.cols(); ++k) {
    std::vector<double> c(static_cast<std::size_t>(e.basis.rows()));
    for (Eigen::Index i = 0; i < e.basis.rows(); ++i) c[static_cast<std::size_t>(i)] = e.basis(i, k);
    cols.push_back(std::move(c));
  }
  j["basis_columns"] = cols;
  j["eigenvalues"] = e.eigenvalues;
  j["spectrum"] = e.spectrum;
  std::vector<std::array<double, 2>> b;
  for (const auto& [lo, hi] : e.x_bounds) b.push_back({lo, hi});
  j["x_bounds"] = b;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Embedding load_embedding(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
    if (j.at("format") != "manta-embedding") throw ValidationError(path.string() + ": not an embedding file");
    Embedding e;
    e.version = j.at("version").get<int>();
    if (e.version != 1) throw ValidationError(path.string() + ": unsupported embedding version");
    e.ensemble_hash = j.value("ensemble_hash", "");
    e.eta = j.at("eta").get<double>();
    e.eta_retained = j.at("eta_retained").get<double>();
    const auto mean = j.at("mean_u").get<std::vector<double>>();
    if (mean.size() != kDesignDim) throw ValidationError(path.string() + ": mean_u must have 32 entries");
    std::copy(mean.begin(), mean.end(), e.mean_u.begin());
    const auto cols = j.at("basis_columns").get<std::vector<std::vector<double>>>();
    e.basis.resize(static_cast<Eigen::Index>(kDesignDim), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) {
      if (cols[k].size() != kDesignDim) throw ValidationError(path.string() + ": basis column length");
      for (std::size_t i = 0; i < kDesignDim; ++i)
        e.basis(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = cols[k][i];
    }
    e.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    e.spectrum = j.at("spectrum").get<std::vector<double>>();
    for (const auto& b : j.at("x_bounds").get<std::vector<std::array<double, 2>>>()) e.x_bounds.emplace_back(b[0], b[1]);
    if (!e.x_bounds.empty() && e.x_bounds.size() != e.dim())
      throw ValidationError(path.string() + ": x_bounds do not match the basis");
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
}

void write_ensemble_csv(const std::filesystem::path& path, const std::vector<EnsembleRecord>& records,
                        const std::string& config_hash) {
  Table t;
  if (!config_hash.empty()) t.meta["config_hash"] = config_hash;
  t.meta["ensemble_hash"] = ensemble_hash(records);
  const std::size_t nf = records.empty() ? 0 : records.front().field.size();
  for (auto n : design_parameter_names()) t.columns.emplace_back(n);
  for (std::size_t i = 0; i < nf; ++i) t.columns.push_back("f" + std::to_string(i));
  t.columns.push_back("lift_N");
  t.columns.push_back("drag_N");
  for (const auto& r : records) {
    if (r.field.size() != nf) throw ValidationError("write_ensemble_csv: inconsistent field length");
    std::vector<double> row(r.u.begin(), r.u.end());
    row.insert(row.end(), r.field.begin(), r.field.end());
    row.push_back(r.lift);
    row.push_back(r.drag);
    t.rows.push_back(std::move(row));
  }
  write_table(path, t);
}

std::vector<EnsembleRecord> read_ensemble_csv(const std::filesystem::path& path) {
  const Table t = read_table(path);
  if (t.columns.size() < kDesignDim + 2) throw ValidationError(path.string() + ": too few columns");
  const auto names = design_parameter_names();
  for (std::size_t i = 0; i < kDesignDim; ++i)
    if (t.columns[i] != names[i]) throw ValidationError(path.string() + ": unexpected column " + t.columns[i]);
  const std::size_t nf = t.columns.size() - kDesignDim - 2;
  const std::size_t il = t.column("lift_N"), id = t.column("drag_N");
  std::vector<EnsembleRecord> out;
  for (const auto& row : t.rows) {
    EnsembleRecord r;
    std::copy(row.begin(), row.begin() + kDesignDim, r.u.begin());
    r.field.assign(row.begin() + kDesignDim, row.begin() + static_cast<std::ptrdiff_t>(kDesignDim + nf));
    r.lift = row[il];
    r.drag = row[id];
    out.push_back(std::move(r));
  }
  return out;
}

std::string ensemble_hash(const std::vector<EnsembleRecord>& records) {
  std::string bytes;
  for (const auto& r : records) {
    for (double v : r.u) bytes += format_double(v) + ',';
    for (double v : r.field) bytes += format_double(v) + ',';
    bytes += format_double(r.lift) + ',' + format_double(r.drag) + ';';
  }
  return content_hash(bytes);
}

}  // namespace manta
