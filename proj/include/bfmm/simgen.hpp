#pragma once

// Simulation scenarios: three covariance designs crossed with 0/20/40%
// detection-limit censoring of X3-X5.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "bfmm/data.hpp"
#include "bfmm/errors.hpp"
#include "bfmm/kernels.hpp"
#include "bfmm/model.hpp"
#include "bfmm/rng.hpp"

namespace bfmm {

enum class ScenarioTag { DataEEI, DataEEE, DataVVV };

inline std::string to_string(ScenarioTag t) {
  switch (t) {
    case ScenarioTag::DataEEI: return "eei";
    case ScenarioTag::DataEEE: return "eee";
    case ScenarioTag::DataVVV: return "vvv";
  }
  return "?";
}

inline ScenarioTag parse_scenario(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "eei") return ScenarioTag::DataEEI;
  if (s == "eee") return ScenarioTag::DataEEE;
  if (s == "vvv") return ScenarioTag::DataVVV;
  throw ValidationError("unknown scenario '" + s + "' (expected eei, eee or vvv)");
}

/// Covariance structure a scenario was generated under.
inline Structure matching_structure(ScenarioTag t) {
  switch (t) {
    case ScenarioTag::DataEEI: return Structure::EEI;
    case ScenarioTag::DataEEE: return Structure::EEE;
    case ScenarioTag::DataVVV: return Structure::VVV;
  }
  return Structure::EEI;
}

struct ScenarioSpec {
  ScenarioTag tag = ScenarioTag::DataEEI;
  int n = 1000;
  int censor_level = 0;  // 0, 20 or 40
  std::uint64_t seed = 1;
};

enum class VariableRole { dominant, weak, noise };

inline std::string to_string(VariableRole r) {
  switch (r) {
    case VariableRole::dominant: return "dominant";
    case VariableRole::weak: return "weak";
    case VariableRole::noise: return "noise";
  }
  return "?";
}

struct PlantedTruth {
  std::vector<int> labels;            // 0-based
  Vector tau;                         // 3
  Matrix mu;                          // 7 x 3, raw units
  std::vector<Matrix> sigma;          // one per cluster, raw units
  std::vector<Matrix> theta;          // per categorical X8..X14, 3 x L; X8/X11 rows are approximate
  std::vector<VariableRole> roles;    // X1..X14
};

struct SimulatedData {
  MixedDataset data;
  PlantedTruth truth;
};

namespace sim {

inline Matrix sigma_ind() {
  Vector d(7);
  d << 8, 4, 4, 4, 6, 6, 6;
  return d.asDiagonal();
}

inline Matrix sigma_cor1() {
  Vector d(7);
  d << 3, 7, 3, 3, 5, 7, 7;
  return Matrix(d.asDiagonal()) + Matrix::Ones(7, 7);
}

// Explicit matrix: diagonal (4,8,8,4,6,8,10), off-diagonal 2.
inline Matrix sigma_cor2() {
  Vector d(7);
  d << 2, 6, 6, 2, 4, 6, 8;
  return Matrix(d.asDiagonal()) + 2.0 * Matrix::Ones(7, 7);
}

inline Matrix cluster_means() {
  Matrix mu(7, 3);
  mu.col(0) << 5, 6, 0, 0, 0, 0, 0;
  mu.col(1) << 5, 0, 7, -3, -0.5, -0.2, 0;
  mu.col(2) << 0, 6, 7, 3, 0.5, 0.2, 0;
  return mu;
}

inline std::vector<Matrix> cluster_covariances(ScenarioTag t) {
  switch (t) {
    case ScenarioTag::DataEEI: return {sigma_ind(), sigma_ind(), sigma_ind()};
    case ScenarioTag::DataEEE: return {sigma_cor2(), sigma_cor2(), sigma_cor2()};
    case ScenarioTag::DataVVV: return {sigma_cor2(), sigma_ind(), sigma_cor1()};
  }
  return {};
}

inline Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace sim

/// Categorical probabilities of X9, X10, X12, X13, X14 per cluster (rows).
inline std::vector<Matrix> planted_multinomials() {
  return {
      sim::rows({{.6, .2, .2}, {.2, .6, .2}, {.2, .2, .6}}),
      sim::rows({{.5, .3, .1, .1}, {.1, .5, .3, .1}, {.1, .1, .5, .3}}),
      sim::rows({{1. / 3, 1. / 3, 1. / 3}, {1. / 3, 1. / 3, 1. / 3}, {1. / 3, 1. / 3, 1. / 3}}),
      sim::rows({{.25, .25, .25, .25}, {.25, .25, .25, .25}, {.25, .25, .25, .25}}),
      sim::rows({{.1, .2, .3, .4}, {.1, .2, .3, .4}, {.1, .2, .3, .4}}),
  };
}

inline std::vector<VariableRole> planted_roles() {
  using R = VariableRole;
  return {R::dominant, R::dominant, R::dominant, R::dominant, R::weak,     R::noise,  R::noise,
          R::dominant, R::dominant, R::dominant, R::noise,    R::noise,    R::noise,  R::noise};
}

/// Censors X3, X4, X5 (0-based columns 2..4 by default) of a raw table at the
/// empirical lower/upper percentiles of each raw column: level 20 uses
/// P10/P90, level 40 uses P20/P80.
inline RawTable apply_censoring(RawTable raw, int level, const std::vector<std::size_t>& columns = {2, 3, 4}) {
  if (level == 0) return raw;
  if (level != 20 && level != 40) throw ValidationError("censoring level must be 0, 20 or 40");
  const double lo_pct = level == 20 ? 10.0 : 20.0;
  const double hi_pct = 100.0 - lo_pct;
  const auto n = static_cast<std::size_t>(raw.continuous.rows());
  const auto q = static_cast<std::size_t>(raw.continuous.cols());
  if (raw.marks.empty()) raw.marks.assign(n * q, CensorMark{});
  for (std::size_t m : columns) {
    if (m >= q) throw ValidationError("censoring column out of range");
    std::vector<double> col(n);
    for (std::size_t i = 0; i < n; ++i) col[i] = raw.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
    const double lo = percentile(col, lo_pct);
    const double hi = percentile(col, hi_pct);
    for (std::size_t i = 0; i < n; ++i) {
      double& v = raw.continuous(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(m));
      if (v < lo) {
        raw.marks[i * q + m] = {CensorKind::left_censored, lo};
        v = lo;
      } else if (v > hi) {
        raw.marks[i * q + m] = {CensorKind::right_censored, hi};
        v = hi;
      }
    }
  }
  return raw;
}

/// Draws one scenario. Continuous columns are standardized by build_dataset
/// after censoring; X8/X11 use the raw continuous values in their logistic
/// links.
inline SimulatedData generate(const ScenarioSpec& spec) {
  if (spec.n < 1) throw ValidationError("n must be positive");
  if (spec.censor_level != 0 && spec.censor_level != 20 && spec.censor_level != 40) {
    throw ValidationError("censoring level must be 0, 20 or 40");
  }
  RngStream root(spec.seed);
  RngStream r_label = root.derive(1), r_cont = root.derive(2), r_cat = root.derive(3);

  SimulatedData out;
  PlantedTruth& truth = out.truth;
  truth.tau = Vector(3);
  truth.tau << 0.5, 0.3, 0.2;
  truth.mu = sim::cluster_means();
  truth.sigma = sim::cluster_covariances(spec.tag);
  truth.roles = planted_roles();
  const auto multinomials = planted_multinomials();

  const auto n = static_cast<std::size_t>(spec.n);
  truth.labels.resize(n);
  const std::vector<double> tau_w{0.5, 0.3, 0.2};
  for (std::size_t i = 0; i < n; ++i) truth.labels[i] = static_cast<int>(draw_categorical(tau_w, r_label));

  std::vector<CholeskyFactor> chol;
  for (const auto& s : truth.sigma) chol.push_back(cholesky(s, "planted covariance"));

  RawTable raw;
  for (int k = 1; k <= 7; ++k) raw.continuous_names.push_back("X" + std::to_string(k));
  for (int k = 8; k <= 14; ++k) raw.categorical_names.push_back("X" + std::to_string(k));
  raw.continuous.resize(static_cast<Eigen::Index>(n), 7);
  raw.categorical_tokens.assign(7, std::vector<std::string>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const int g = truth.labels[i];
    raw.continuous.row(static_cast<Eigen::Index>(i)) =
        draw_mvn(truth.mu.col(g), chol[static_cast<std::size_t>(g)], r_cont).transpose();
  }
  auto token = [](std::size_t level) { return std::to_string(level + 1); };
  for (std::size_t i = 0; i < n; ++i) {
    const int g = truth.labels[i];
    const auto x = raw.continuous.row(static_cast<Eigen::Index>(i));
    const double p8 = sim::logistic(0.1 * x[2] + 0.5 * x[3]);
    const double p11 = sim::logistic(0.1 * x[5] + 0.5 * x[6]);
    // Binary variables: level "1" = event, "2" = no event.
    raw.categorical_tokens[0][i] = token(r_cat.uniform() < p8 ? 0 : 1);
    const std::size_t multi_cols[] = {1, 2, 4, 5, 6};
    for (std::size_t k = 0; k < 5; ++k) {
      const Vector w = multinomials[k].row(g).transpose();
      raw.categorical_tokens[multi_cols[k]][i] =
          token(draw_categorical(std::span<const double>(w.data(), static_cast<std::size_t>(w.size())), r_cat));
    }
    raw.categorical_tokens[3][i] = token(r_cat.uniform() < p11 ? 0 : 1);
  }
  truth.theta = {sim::rows({{.5, .5}, {.3, .7}, {.9, .1}}), multinomials[0], multinomials[1],
                 sim::rows({{.5, .5}, {.5, .5}, {.5, .5}}), multinomials[2], multinomials[3],
                 multinomials[4]};
  raw = apply_censoring(std::move(raw), spec.censor_level);
  out.data = build_dataset(raw);
  return out;
}

}  // namespace bfmm
