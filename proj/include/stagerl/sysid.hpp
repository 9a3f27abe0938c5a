#pragma once

// Velocity-command system identification.
//
// The platform is driven by commanded body velocities a = (a_x, a_y, a_theta)
// and executes body velocities v = (v_x, v_y, v_theta) that differ from the
// command (asymmetries, cross-coupling, saturation). Each executed component
// is modelled as a third-order multivariate polynomial in the command with no
// constant term — zero command must map to zero velocity — and the
// coefficients are fitted by linear least squares over a grid of commands.

#include <array>
#include <cmath>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "stagerl/csv.hpp"
#include "stagerl/errors.hpp"
#include "stagerl/rng.hpp"

namespace stagerl {

inline constexpr int kActionDim = 3;
// Monomials a_x^i a_y^j a_theta^l with 0 < i+j+l <= 3: C(6,3) - 1 = 19.
inline constexpr int kFeatureCount = 19;

struct Action {
  double ax = 0.0, ay = 0.0, atheta = 0.0;

  Eigen::Vector3d vec() const { return {ax, ay, atheta}; }
  static Action from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
  bool finite() const {
    return std::isfinite(ax) && std::isfinite(ay) && std::isfinite(atheta);
  }
};

inline bool operator==(const Action& a, const Action& b) {
  return a.ax == b.ax && a.ay == b.ay && a.atheta == b.atheta;
}

struct BodyVelocity {
  double vx = 0.0, vy = 0.0, vtheta = 0.0;

  Eigen::Vector3d vec() const { return {vx, vy, vtheta}; }
  static BodyVelocity from_vec(const Eigen::Vector3d& v) { return {v[0], v[1], v[2]}; }
};

// Box of admissible commands. Defaults are the platform limits used
// throughout: forward/backward asymmetric in x, symmetric in y and theta.
struct ActionRanges {
  Eigen::Vector3d lo{-0.8, -0.7, -1.1};
  Eigen::Vector3d hi{1.1, 0.7, 1.1};

  Action clamp(const Action& a, bool* clamped = nullptr) const {
    Eigen::Vector3d v = a.vec().cwiseMax(lo).cwiseMin(hi);
    if (clamped) *clamped = (v != a.vec());
    return Action::from_vec(v);
  }

  bool contains(const Action& a) const {
    Eigen::Vector3d v = a.vec();
    return (v.array() >= lo.array()).all() && (v.array() <= hi.array()).all();
  }

  Eigen::Vector3d center() const { return 0.5 * (lo + hi); }
  Eigen::Vector3d half_width() const { return 0.5 * (hi - lo); }
};

// Exponent table shared by fitting and prediction. Order is fixed: total
// degree 1, then 2, then 3; within a degree, (i, j, l) sorted descending on
// i, then j, then l.
inline const std::array<std::array<int, 3>, kFeatureCount>& monomial_exponents() {
  static const auto table = [] {
    std::array<std::array<int, 3>, kFeatureCount> t{};
    int n = 0;
    for (int deg = 1; deg <= 3; ++deg)
      for (int i = deg; i >= 0; --i)
        for (int j = deg - i; j >= 0; --j) t[n++] = {i, j, deg - i - j};
    return t;
  }();
  return table;
}

using FeatureVector = Eigen::Matrix<double, kFeatureCount, 1>;

inline FeatureVector expand_features(const Action& a) {
  if (!a.finite()) throw InvalidInput("expand_features: non-finite action");
  // Powers 0..3 per axis.
  double px[4] = {1.0, a.ax, a.ax * a.ax, a.ax * a.ax * a.ax};
  double py[4] = {1.0, a.ay, a.ay * a.ay, a.ay * a.ay * a.ay};
  double pt[4] = {1.0, a.atheta, a.atheta * a.atheta, a.atheta * a.atheta * a.atheta};
  FeatureVector f;
  const auto& exps = monomial_exponents();
  for (int n = 0; n < kFeatureCount; ++n)
    f[n] = px[exps[n][0]] * py[exps[n][1]] * pt[exps[n][2]];
  return f;
}

struct VelocityModel {
  // Row d holds the 19 coefficients of executed-velocity component d.
  Eigen::Matrix<double, 3, kFeatureCount> coeffs =
      Eigen::Matrix<double, 3, kFeatureCount>::Zero();

  BodyVelocity predict(const Action& a) const {
    return BodyVelocity::from_vec(coeffs * expand_features(a));
  }

  // Sets the coefficient of a_x^i a_y^j a_theta^l for output dimension d.
  void set_term(int d, int i, int j, int l, double value) {
    const auto& exps = monomial_exponents();
    for (int n = 0; n < kFeatureCount; ++n)
      if (exps[n][0] == i && exps[n][1] == j && exps[n][2] == l) {
        coeffs(d, n) = value;
        return;
      }
    throw InvalidInput("set_term: exponents outside the degree-3 basis");
  }
};

struct IdentificationDataset {
  std::vector<std::pair<Action, BodyVelocity>> samples;

  std::size_t size() const { return samples.size(); }
};

// Least squares through a rank-revealing orthogonal factorization. Solving
// the normal equations explicitly would square the condition number of the
// feature matrix, so the QR path is used instead.
inline VelocityModel fit(const IdentificationDataset& data) {
  const int n = static_cast<int>(data.size());
  if (n < kFeatureCount)
    throw DegenerateData("fit: needs at least " + std::to_string(kFeatureCount) +
                         " samples, got " + std::to_string(n));
  Eigen::MatrixXd phi(n, kFeatureCount);
  Eigen::MatrixXd v(n, 3);
  for (int r = 0; r < n; ++r) {
    phi.row(r) = expand_features(data.samples[r].first).transpose();
    v.row(r) = data.samples[r].second.vec().transpose();
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
  if (qr.rank() < kFeatureCount)
    throw DegenerateData("fit: feature matrix is rank-deficient (rank " +
                         std::to_string(qr.rank()) + " of " +
                         std::to_string(kFeatureCount) +
                         "); the command samples do not excite all monomials");
  Eigen::MatrixXd sol = qr.solve(v);  // 19 x 3
  VelocityModel m;
  m.coeffs = sol.transpose();
  return m;
}

// Per-dimension root-mean-square residual of the model on a dataset.
inline std::array<double, 3> rms_residuals(const VelocityModel& m,
                                           const IdentificationDataset& data) {
  if (data.size() == 0) throw InvalidInput("rms_residuals: empty dataset");
  Eigen::Vector3d acc = Eigen::Vector3d::Zero();
  for (const auto& [a, v] : data.samples) {
    Eigen::Vector3d r = v.vec() - m.predict(a).vec();
    acc += r.cwiseProduct(r);
  }
  acc /= static_cast<double>(data.size());
  return {std::sqrt(acc[0]), std::sqrt(acc[1]), std::sqrt(acc[2])};
}

// Regular command grid, x-major iteration (a_x outer, then a_y, a_theta
// innermost), endpoints always included.
inline std::vector<Action> make_grid(const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
                                     const std::array<int, 3>& counts) {
  for (int d = 0; d < 3; ++d) {
    if (counts[d] < 2)
      throw InvalidInput("make_grid: counts must be >= 2 per axis");
    if (!(lo[d] < hi[d]))
      throw InvalidInput("make_grid: each axis needs lo < hi");
  }
  std::vector<Action> grid;
  grid.reserve(static_cast<std::size_t>(counts[0]) * counts[1] * counts[2]);
  auto coord = [&](int d, int k) {
    return lo[d] + (hi[d] - lo[d]) * static_cast<double>(k) / (counts[d] - 1);
  };
  for (int ix = 0; ix < counts[0]; ++ix)
    for (int iy = 0; iy < counts[1]; ++iy)
      for (int it = 0; it < counts[2]; ++it)
        grid.push_back({coord(0, ix), coord(1, iy), coord(2, it)});
  return grid;
}

inline std::vector<Action> make_grid(const ActionRanges& r, const std::array<int, 3>& counts) {
  return make_grid(r.lo, r.hi, counts);
}

// ---------------------------------------------------------------------------
// Model serialization: {"order": 3, "monomials": [[i,j,l], ...],
// "coeffs": [[19 x_coeffs], [19 y_coeffs], [19 theta_coeffs]]}.

inline nlohmann::json model_to_json(const VelocityModel& m) {
  nlohmann::json j;
  j["order"] = 3;
  auto mono = nlohmann::json::array();
  for (const auto& e : monomial_exponents()) mono.push_back({e[0], e[1], e[2]});
  j["monomials"] = mono;
  auto coeffs = nlohmann::json::array();
  for (int d = 0; d < 3; ++d) {
    auto row = nlohmann::json::array();
    for (int n = 0; n < kFeatureCount; ++n) row.push_back(m.coeffs(d, n));
    coeffs.push_back(row);
  }
  j["coeffs"] = coeffs;
  return j;
}

inline VelocityModel model_from_json(const nlohmann::json& j) {
  try {
    if (j.at("order").get<int>() != 3)
      throw ConfigError("model: unsupported order " + j.at("order").dump());
    const auto& mono = j.at("monomials");
    if (mono.size() != kFeatureCount)
      throw ConfigError("model: expected 19 monomials, got " + std::to_string(mono.size()));
    const auto& exps = monomial_exponents();
    for (int n = 0; n < kFeatureCount; ++n)
      for (int d = 0; d < 3; ++d)
        if (mono[n][d].get<int>() != exps[n][d])
          throw ConfigError("model: monomial ordering mismatch at index " + std::to_string(n));
    const auto& coeffs = j.at("coeffs");
    if (coeffs.size() != 3)
      throw ConfigError("model: expected 3 coefficient rows");
    VelocityModel m;
    for (int d = 0; d < 3; ++d) {
      if (coeffs[d].size() != kFeatureCount)
        throw ConfigError("model: coefficient row " + std::to_string(d) +
                          " has size " + std::to_string(coeffs[d].size()));
      for (int n = 0; n < kFeatureCount; ++n) m.coeffs(d, n) = coeffs[d][n].get<double>();
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("model: malformed JSON: ") + e.what());
  }
}

inline void save_model(const VelocityModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("save_model: cannot write '" + path + "'");
  out << model_to_json(m).dump(2) << '\n';
}

inline VelocityModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("load_model: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("load_model: '" + path + "': " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------
// Dataset CSV: header a_x,a_y,a_theta,v_x,v_y,v_theta, one sample per row.

inline const std::vector<std::string>& dataset_csv_header() {
  static const std::vector<std::string> h = {"a_x", "a_y", "a_theta", "v_x", "v_y", "v_theta"};
  return h;
}

inline IdentificationDataset dataset_from_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  int ca[3] = {t.column("a_x"), t.column("a_y"), t.column("a_theta")};
  int cv[3] = {t.column("v_x"), t.column("v_y"), t.column("v_theta")};
  IdentificationDataset d;
  d.samples.reserve(t.rows.size());
  for (const auto& row : t.rows)
    d.samples.push_back({Action{row[ca[0]], row[ca[1]], row[ca[2]]},
                         BodyVelocity{row[cv[0]], row[cv[1]], row[cv[2]]}});
  return d;
}

inline void dataset_to_csv(const IdentificationDataset& d, const std::string& path) {
  std::vector<std::vector<double>> rows;
  rows.reserve(d.size());
  for (const auto& [a, v] : d.samples)
    rows.push_back({a.ax, a.ay, a.atheta, v.vx, v.vy, v.vtheta});
  write_csv(path, dataset_csv_header(), rows);
}

// ---------------------------------------------------------------------------
// Synthetic data. The default ground truth is a plausible legged platform:
// forward commands execute faster than backward ones (even-power term in
// a_x), lateral and yaw a little under-actuated, mild cross-coupling.

inline VelocityModel default_ground_truth_model() {
  VelocityModel m;
  m.set_term(0, 1, 0, 0, 0.90);
  m.set_term(0, 2, 0, 0, 0.05);
  m.set_term(0, 3, 0, 0, -0.02);
  m.set_term(0, 0, 1, 1, 0.02);
  m.set_term(1, 0, 1, 0, 0.85);
  m.set_term(1, 0, 3, 0, -0.03);
  m.set_term(1, 1, 1, 0, 0.02);
  m.set_term(1, 1, 0, 1, -0.01);
  m.set_term(2, 0, 0, 1, 0.95);
  m.set_term(2, 0, 0, 3, -0.04);
  m.set_term(2, 1, 0, 1, 0.03);
  return m;
}

// Executes each grid command under `truth` and adds i.i.d. Gaussian noise of
// std `noise_sigma` to every measured velocity component.
inline IdentificationDataset synthesize_dataset(const VelocityModel& truth,
                                                const std::vector<Action>& commands,
                                                double noise_sigma, Rng& rng) {
  if (noise_sigma < 0.0) throw InvalidInput("synthesize_dataset: negative noise sigma");
  IdentificationDataset d;
  d.samples.reserve(commands.size());
  for (const Action& a : commands) {
    Eigen::Vector3d v = truth.predict(a).vec();
    if (noise_sigma > 0.0)
      for (int k = 0; k < 3; ++k) v[k] += noise_sigma * rng.normal();
    d.samples.push_back({a, BodyVelocity::from_vec(v)});
  }
  return d;
}

}  // namespace stagerl
