#include "manta/surrogate.hpp"

#include "manta/errors.hpp"
#include "manta/hashing.hpp"
#include "manta/kernels/kernels.hpp"
#include "manta/table.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

namespace manta {

void TrainingSet::validate() const {
  if (inputs.size() != outputs.size()) throw ValidationError("training set: inputs and outputs differ in length");
  const std::size_t d = dim();
  if (d == 0) throw ValidationError("training set: zero-dimensional inputs");
  if (!lower.empty() && (lower.size() != d || upper.size() != d))
    throw ValidationError("training set: box dimension mismatch");
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != d) throw ValidationError("training set: ragged inputs");
    if (!std::isfinite(outputs[i])) throw ValidationError("training set: non-finite output");
    for (double v : inputs[i])
      if (!std::isfinite(v)) throw ValidationError("training set: non-finite input");
  }
  // Sorting by the first coordinate keeps the duplicate scan near-linear.
  std::vector<std::size_t> order(inputs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return inputs[a][0] < inputs[b][0]; });
  for (std::size_t a = 0; a < order.size(); ++a) {
    for (std::size_t b = a + 1; b < order.size(); ++b) {
      const auto& p = inputs[order[a]];
      const auto& q = inputs[order[b]];
      if (q[0] - p[0] > 1e-12) break;
      double dmax = 0.0;
      for (std::size_t k = 0; k < d; ++k) dmax = std::max(dmax, std::abs(p[k] - q[k]));
      if (dmax <= 1e-12) throw ValidationError("training set: duplicate inputs");
    }
  }
}

std::vector<double> stratified_epsilons(const SrbfConfig& cfg) {
  if (cfg.ensemble == 0) throw DomainError("ensemble", "must be >= 1");
  if (!(cfg.eps_min >= 1.0 && cfg.eps_max <= 3.0 && cfg.eps_min <= cfg.eps_max))
    throw DomainError("epsilon range", "must satisfy 1 <= eps_min <= eps_max <= 3");
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<double> eps(cfg.ensemble);
  const double width = (cfg.eps_max - cfg.eps_min) / static_cast<double>(cfg.ensemble);
  for (std::size_t k = 0; k < cfg.ensemble; ++k)
    eps[k] = std::min(cfg.eps_max, cfg.eps_min + width * (static_cast<double>(k) + unit(rng)));
  return eps;
}

std::vector<double> SrbfModel::normalise(const std::vector<double>& x) const {
  if (x.size() != dim()) throw ValidationError("surrogate: input dimension mismatch");
  std::vector<double> s(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) s[k] = (x[k] - lower[k]) / (upper[k] - lower[k]);
  return s;
}

namespace {

double kernel_from_log(double log_r2, double eps) { return log_r2 == -INFINITY ? 0.0 : std::exp(0.5 * eps * log_r2); }

std::vector<double> log_squared_distances(const SrbfModel& m, const std::vector<double>& s,
                                          const std::vector<double>& centers_dim_major) {
  const std::size_t n = m.centers.size();
  std::vector<double> r2(n);
  kernels::squared_distances(s, centers_dim_major, n, r2);
  for (double& v : r2) v = v > 0.0 ? std::log(v) : -INFINITY;
  return r2;
}

std::vector<double> dim_major(const SrbfModel& m) {
  const std::size_t n = m.centers.size(), d = m.dim();
  std::vector<double> c(n * d);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < d; ++k) c[k * n + j] = m.centers[j][k];
  return c;
}

std::vector<double> member_values(const SrbfModel& m, const std::vector<double>& s, const std::vector<double>& lr2) {
  std::vector<double> out(m.epsilons.size());
  const std::size_t n = m.centers.size();
  std::vector<double> phi(n);
  for (std::size_t e = 0; e < m.epsilons.size(); ++e) {
    const Eigen::VectorXd& w = m.weights[e];
    const Eigen::VectorXd& c = m.tails[e];
    double acc = c(0);
    for (std::size_t k = 0; k < s.size(); ++k) acc += c(static_cast<Eigen::Index>(k + 1)) * s[k];
    double rbf = 0.0;
    for (std::size_t j = 0; j < n; ++j) rbf += w(static_cast<Eigen::Index>(j)) * kernel_from_log(lr2[j], m.epsilons[e]);
    out[e] = acc + rbf;
  }
  return out;
}

Prediction summarise(const std::vector<double>& values) {
  Prediction p;
  if (values.empty()) return p;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(values.size());
  p.mean = mean;
  p.uncertainty = 2.0 * std::sqrt(var);
  return p;
}

}  // namespace

std::vector<double> SrbfModel::members(const std::vector<double>& x) const {
  const auto s = normalise(x);
  return member_values(*this, s, log_squared_distances(*this, s, dim_major(*this)));
}

Prediction SrbfModel::predict(const std::vector<double>& x) const { return summarise(members(x)); }

std::vector<Prediction> SrbfModel::predict_batch(const std::vector<std::vector<double>>& x) const {
  const auto cdm = dim_major(*this);
  std::vector<Prediction> out;
  out.reserve(x.size());
  for (const auto& p : x) {
    const auto s = normalise(p);
    out.push_back(summarise(member_values(*this, s, log_squared_distances(*this, s, cdm))));
  }
  return out;
}

Prediction predict(const SrbfModel& model, const std::vector<double>& x) { return model.predict(x); }

SrbfModel train_srbf(const TrainingSet& data, const SrbfConfig& cfg) {
  return train_srbf(data, cfg.mu, stratified_epsilons(cfg));
}

SrbfModel train_srbf(const TrainingSet& data, double mu, const std::vector<double>& epsilons) {
  data.validate();
  if (!(mu >= 0.0) || !std::isfinite(mu)) throw DomainError("mu", "must be finite and >= 0");
  if (epsilons.empty()) throw DomainError("epsilons", "need at least one kernel exponent");
  for (double e : epsilons)
    if (!(e >= 1.0 && e <= 3.0)) throw DomainError("epsilons", "kernel exponents must lie in [1, 3]");
  const std::size_t n = data.size(), d = data.dim();
  if (n < d + 2) throw ValidationError("train_srbf: need at least d + 2 = " + std::to_string(d + 2) + " points");

  SrbfModel m;
  m.mu = mu;
  m.epsilons = epsilons;
  m.training_hash = training_hash(data);
  if (data.lower.empty()) {
    m.lower.assign(d, INFINITY);
    m.upper.assign(d, -INFINITY);
    for (const auto& x : data.inputs)
      for (std::size_t k = 0; k < d; ++k) {
        m.lower[k] = std::min(m.lower[k], x[k]);
        m.upper[k] = std::max(m.upper[k], x[k]);
      }
  } else {
    m.lower = data.lower;
    m.upper = data.upper;
  }
  for (std::size_t k = 0; k < d; ++k)
    if (!(m.upper[k] > m.lower[k])) {
      m.lower[k] -= 0.5;
      m.upper[k] += 0.5;
    }
  for (const auto& x : data.inputs) m.centers.push_back(m.normalise(x));

  const auto ni = static_cast<Eigen::Index>(n);
  const auto nt = static_cast<Eigen::Index>(d + 1);
  Eigen::MatrixXd p(ni, nt);
  Eigen::MatrixXd log_r2(ni, ni);
  Eigen::VectorXd y(ni);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    p(ii, 0) = 1.0;
    for (std::size_t k = 0; k < d; ++k) p(ii, static_cast<Eigen::Index>(k + 1)) = m.centers[i][k];
    y(ii) = data.outputs[i];
    for (std::size_t j = 0; j < n; ++j) {
      double r2 = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double t = m.centers[i][k] - m.centers[j][k];
        r2 += t * t;
      }
      log_r2(ii, static_cast<Eigen::Index>(j)) = r2 > 0.0 ? std::log(r2) : -INFINITY;
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> pqr(p);
  if (pqr.rank() < nt) throw ValidationError("train_srbf: training inputs do not span the reduced space");
  Eigen::HouseholderQR<Eigen::MatrixXd> hqr(p);
  const Eigen::MatrixXd q = hqr.householderQ() * Eigen::MatrixXd::Identity(ni, ni);
  const Eigen::MatrixXd null = q.rightCols(ni - nt);

  for (double eps : epsilons) {
    Eigen::MatrixXd a(ni, ni);
    for (Eigen::Index i = 0; i < ni; ++i)
      for (Eigen::Index j = 0; j < ni; ++j) a(i, j) = kernel_from_log(log_r2(i, j), eps);
    const double mu_eff = mu * a.squaredNorm() / static_cast<double>(n);
    const Eigen::MatrixXd an = a * null;
    Eigen::VectorXd sol;
    if (mu_eff == 0.0) {
      Eigen::MatrixXd sq(ni, ni);
      sq << an, p;
      Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(sq);
      if (qr.rank() < ni)
        throw NumericalError("train_srbf: interpolation system is rank deficient; use mu > 0");
      sol = qr.solve(y);
    } else {
      const Eigen::Index nz = ni - nt;
      Eigen::MatrixXd big = Eigen::MatrixXd::Zero(ni + nz, ni);
      big.topLeftCorner(ni, nz) = an;
      big.topRightCorner(ni, nt) = p;
      big.bottomLeftCorner(nz, nz) = std::sqrt(mu_eff) * Eigen::MatrixXd::Identity(nz, nz);
      Eigen::VectorXd rhs = Eigen::VectorXd::Zero(ni + nz);
      rhs.head(ni) = y;
      sol = big.colPivHouseholderQr().solve(rhs);
    }
    if (!sol.allFinite()) throw NumericalError("train_srbf: non-finite coefficients");
    m.weights.push_back(null * sol.head(ni - nt));
    m.tails.push_back(sol.tail(nt));
  }
  return m;
}

double combine_uncertainty(double u1, double u2) { return std::sqrt(u1 * u1 + u2 * u2); }

MfSurrogate train_mf(const TrainingSet& lf, const TrainingSet& hf, const SrbfConfig& cfg) {
  MfSurrogate mf;
  mf.lf = train_srbf(lf, cfg);
  if (hf.size() == 0) return mf;
  TrainingSet disc = hf;
  disc.lower = mf.lf.lower;
  disc.upper = mf.lf.upper;
  disc.fidelity = 2;
  for (std::size_t i = 0; i < hf.size(); ++i) disc.outputs[i] = hf.outputs[i] - mf.lf.predict(hf.inputs[i]).mean;
  mf.discrepancy = train_srbf(disc, cfg);
  mf.has_discrepancy = true;
  return mf;
}

namespace {

MfPrediction compose(const Prediction& lf, const Prediction* disc) {
  MfPrediction p;
  p.lf_mean = lf.mean;
  p.lf_uncertainty = lf.uncertainty;
  p.mean = lf.mean;
  if (disc) {
    p.mean += disc->mean;
    p.disc_uncertainty = disc->uncertainty;
  }
  p.uncertainty = combine_uncertainty(p.lf_uncertainty, p.disc_uncertainty);
  return p;
}

}  // namespace

MfPrediction predict_mf(const MfSurrogate& mf, const std::vector<double>& x) {
  const Prediction lf = mf.lf.predict(x);
  if (!mf.has_discrepancy) return compose(lf, nullptr);
  const Prediction d = mf.discrepancy.predict(x);
  return compose(lf, &d);
}

std::vector<MfPrediction> predict_mf_batch(const MfSurrogate& mf, const std::vector<std::vector<double>>& x) {
  const auto lf = mf.lf.predict_batch(x);
  std::vector<Prediction> d;
  if (mf.has_discrepancy) d = mf.discrepancy.predict_batch(x);
  std::vector<MfPrediction> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = compose(lf[i], mf.has_discrepancy ? &d[i] : nullptr);
  return out;
}

std::string training_hash(const TrainingSet& data) {
  std::string bytes = "fidelity=" + std::to_string(data.fidelity) + ";";
  for (std::size_t i = 0; i < data.inputs.size(); ++i) {
    for (double v : data.inputs[i]) bytes += format_double(v) + ',';
    bytes += format_double(data.outputs[i]) + ';';
  }
  return content_hash(bytes);
}

namespace {

nlohmann::ordered_json model_json(const SrbfModel& m) {
  nlohmann::ordered_json j;
  j["training_hash"] = m.training_hash;
  j["mu"] = m.mu;
  j["lower"] = m.lower;
  j["upper"] = m.upper;
  j["centers"] = m.centers;
  j["epsilons"] = m.epsilons;
  std::vector<std::vector<double>> w, c;
  for (const auto& v : m.weights) w.emplace_back(v.data(), v.data() + v.size());
  for (const auto& v : m.tails) c.emplace_back(v.data(), v.data() + v.size());
  j["weights"] = w;
  j["tails"] = c;
  return j;
}

SrbfModel model_from_json(const nlohmann::json& j) {
  SrbfModel m;
  m.training_hash = j.at("training_hash").get<std::string>();
  m.mu = j.at("mu").get<double>();
  m.lower = j.at("lower").get<std::vector<double>>();
  m.upper = j.at("upper").get<std::vector<double>>();
  m.centers = j.at("centers").get<std::vector<std::vector<double>>>();
  m.epsilons = j.at("epsilons").get<std::vector<double>>();
  for (const auto& w : j.at("weights").get<std::vector<std::vector<double>>>())
    m.weights.push_back(Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size())));
  for (const auto& c : j.at("tails").get<std::vector<std::vector<double>>>())
    m.tails.push_back(Eigen::Map<const Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size())));
  if (m.weights.size() != m.epsilons.size() || m.tails.size() != m.epsilons.size() || m.lower.size() != m.upper.size())
    throw ValidationError("surrogate file: inconsistent model arrays");
  for (std::size_t e = 0; e < m.epsilons.size(); ++e)
    if (static_cast<std::size_t>(m.weights[e].size()) != m.centers.size() ||
        static_cast<std::size_t>(m.tails[e].size()) != m.lower.size() + 1)
      throw ValidationError("surrogate file: coefficient lengths do not match the centres");
  return m;
}

}  // namespace

void save_surrogate(const std::filesystem::path& path, const MfSurrogate& mf, const std::string& config_hash) {
  nlohmann::ordered_json j;
  j["format"] = "manta-srbf";
  j["version"] = 1;
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  j["lf"] = model_json(mf.lf);
  j["has_discrepancy"] = mf.has_discrepancy;
  if (mf.has_discrepancy) j["discrepancy"] = model_json(mf.discrepancy);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << j.dump() << '\n';
}

MfSurrogate load_surrogate(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    if (j.at("format") != "manta-srbf" || j.at("version") != 1)
      throw ValidationError(path.string() + ": not a version-1 surrogate file");
    MfSurrogate mf;
    mf.lf = model_from_json(j.at("lf"));
    mf.has_discrepancy = j.at("has_discrepancy").get<bool>();
    if (mf.has_discrepancy) mf.discrepancy = model_from_json(j.at("discrepancy"));
    return mf;
  } catch (const nlohmann::json::exception& ex) {
    throw ValidationError(path.string() + ": " + ex.what());
  }
}

}  // namespace manta
