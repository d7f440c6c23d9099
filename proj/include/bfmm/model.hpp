#pragma once

// Parameter containers, prior defaults and bootstrap K-means initialization.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bfmm/data.hpp"
#include "bfmm/errors.hpp"
#include "bfmm/kernels.hpp"
#include "bfmm/rng.hpp"

namespace bfmm {

inline constexpr int kMaxClusters = 12;

enum class Structure { EEI, EEE, VVV };

inline std::string to_string(Structure s) {
  switch (s) {
    case Structure::EEI: return "EEI";
    case Structure::EEE: return "EEE";
    case Structure::VVV: return "VVV";
  }
  return "?";
}

inline Structure parse_structure(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (s == "EEI") return Structure::EEI;
  if (s == "EEE") return Structure::EEE;
  if (s == "VVV") return Structure::VVV;
  throw ValidationError("unknown covariance structure '" + s + "'");
}

/// Covariance payload for one of the three structures.
///
/// EEI keeps q variances shared by all clusters, EEE one shared matrix and
/// VVV one matrix per cluster.
struct CovarianceSet {
  Structure structure = Structure::EEI;
  Vector variances;             // EEI
  std::vector<Matrix> matrices; // EEE: 1, VVV: G

  static CovarianceSet eei(Vector v) {
    CovarianceSet c;
    c.structure = Structure::EEI;
    c.variances = std::move(v);
    return c;
  }
  static CovarianceSet eee(Matrix s) {
    CovarianceSet c;
    c.structure = Structure::EEE;
    c.matrices.push_back(std::move(s));
    return c;
  }
  static CovarianceSet vvv(std::vector<Matrix> s) {
    CovarianceSet c;
    c.structure = Structure::VVV;
    c.matrices = std::move(s);
    return c;
  }

  /// Full covariance of cluster g.
  Matrix cluster(std::size_t g) const {
    switch (structure) {
      case Structure::EEI: return variances.asDiagonal();
      case Structure::EEE: return matrices.front();
      case Structure::VVV: return matrices.at(g);
    }
    return {};
  }

  bool cluster_specific() const { return structure == Structure::VVV; }
};

/// tau, mu, Sigma and theta of a G-component mixture.
struct MixtureParameters {
  Vector tau;                  // G
  Matrix mu;                   // q x G
  CovarianceSet sigma;
  std::vector<Matrix> theta;   // per categorical variable: G x L_m, rows sum to 1

  std::size_t G() const { return static_cast<std::size_t>(tau.size()); }
};

/// Full Gibbs state: parameters plus latent assignments, importance
/// indicators, spike-and-slab hyper-states and imputed censored cells.
struct ModelState {
  MixtureParameters params;
  std::vector<int> z;          // hard labels 0..G-1 (one-hot rows)
  Eigen::MatrixXi delta;       // M x G, entries 0/1
  double sigma2_delta0 = 0.0;
  Vector p1;                   // q
  Vector p2;                   // M - q
  std::vector<double> imputed; // aligned with MixedDataset::censored_cells()

  std::size_t G() const { return params.G(); }

  std::vector<int> cluster_sizes() const {
    std::vector<int> n(G(), 0);
    for (int g : z) ++n[static_cast<std::size_t>(g)];
    return n;
  }

  /// n x G one-hot membership matrix.
  Matrix one_hot() const {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(z.size()),
                              static_cast<Eigen::Index>(G()));
    for (std::size_t i = 0; i < z.size(); ++i) out(static_cast<Eigen::Index>(i), z[i]) = 1.0;
    return out;
  }
};

struct EeiPrior {
  double a_tilde = 2.0;
  double b_tilde = 1.0;
};

struct InverseWishartPrior {
  double nu = 0.0;
  Matrix scale;  // S in Sigma ~ IW(nu, S^{-1})
};

/// Fixed prior constants.
struct Hyperparameters {
  int G = 1;
  Vector delta_dirichlet;       // G
  double omega = 100.0;
  int k_percentile = 75;
  double a_delta0 = 2.0;
  double b_delta0 = 0.005;
  double a_p1 = 1.0, b_p1 = 1.0;
  double a_p2 = 1.0, b_p2 = 1.0;
  std::vector<Vector> alpha_slab;   // all-ones, length L_m
  std::vector<Vector> alpha_spike;  // (C / n) * level counts
  double spike_concentration = 1000.0;
  EeiPrior eei;
  InverseWishartPrior eee;                  // nu0, S0
  std::vector<InverseWishartPrior> vvv;     // nu_g, S_g
  Vector marginal_mean;                     // x-bar_m, zero after standardization
  /// Drop the 1/2 on the quadratic term of the spike-variance rate.
  bool paper_literal_a10 = false;
};

struct InitResult {
  MixtureParameters params;
  std::vector<int> z;
};

// ---------------------------------------------------------------------------

/// Percentile with linear interpolation between order statistics.
inline double percentile(std::vector<double> v, double pct) {
  if (v.empty()) throw ValidationError("percentile of empty set");
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * pct / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Slab/spike variance ratio from initial cluster means: the squared ratio of
/// the mean magnitude above the k-th percentile to the mean magnitude at or
/// below the 25th percentile, clamped to at least 1.0001.
inline double compute_omega(const Matrix& mu0, int k_percentile) {
  if (k_percentile < 60 || k_percentile > 90) {
    throw ValidationError("k percentile must lie in [60, 90]");
  }
  std::vector<double> mag;
  mag.reserve(static_cast<std::size_t>(mu0.size()));
  for (Eigen::Index j = 0; j < mu0.cols(); ++j) {
    for (Eigen::Index i = 0; i < mu0.rows(); ++i) mag.push_back(std::abs(mu0(i, j)));
  }
  const double pk = percentile(mag, k_percentile);
  const double p25 = percentile(mag, 25.0);
  double hi_sum = 0.0, lo_sum = 0.0;
  int hi_n = 0, lo_n = 0;
  for (double v : mag) {
    if (v >= pk) {
      hi_sum += v;
      ++hi_n;
    }
    if (v <= p25) {
      lo_sum += v;
      ++lo_n;
    }
  }
  const double lo_mean = lo_n ? lo_sum / lo_n : 0.0;
  if (!(lo_mean > 0.0)) {
    warn("omega: lower-quartile mean magnitude is zero; using omega = 100");
    return 100.0;
  }
  const double ratio = (hi_sum / hi_n) / lo_mean;
  return std::max(ratio * ratio, 1.0001);
}

/// Empirical covariance with the n - 1 denominator.
inline Matrix empirical_covariance(const Matrix& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  return centered.transpose() * centered / static_cast<double>(x.rows() - 1);
}

struct KMeansOptions {
  int resamples = 50;
  int max_iterations = 100;
};

namespace detail {

inline double sq_dist(const Matrix& x, Eigen::Index i, const Matrix& c, Eigen::Index g) {
  return (x.row(i) - c.row(g)).squaredNorm();
}

inline std::vector<int> nearest_centroid(const Matrix& x, const Matrix& centroids) {
  std::vector<int> label(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < centroids.rows(); ++g) {
      const double d = sq_dist(x, i, centroids, g);
      if (d < best) {
        best = d;
        label[static_cast<std::size_t>(i)] = static_cast<int>(g);
      }
    }
  }
  return label;
}

inline double within_ss(const Matrix& x, const Matrix& centroids) {
  double ss = 0.0;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index g = 0; g < centroids.rows(); ++g) best = std::min(best, sq_dist(x, i, centroids, g));
    ss += best;
  }
  return ss;
}

// k-means++ seeding followed by Lloyd iterations on `x` (rows are points).
inline Matrix lloyd_kmeans(const Matrix& x, int G, int max_iterations, RngStream& rng) {
  const Eigen::Index n = x.rows();
  Matrix c(G, x.cols());
  std::vector<double> d2(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  Eigen::Index first = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
  c.row(0) = x.row(std::min(first, n - 1));
  for (int g = 1; g < G; ++g) {
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(d2[static_cast<std::size_t>(i)], sq_dist(x, i, c, g - 1));
    }
    double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    Eigen::Index pick = 0;
    if (total > 0.0) {
      pick = static_cast<Eigen::Index>(draw_categorical(d2, rng));
    } else {
      pick = static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n));
      pick = std::min(pick, n - 1);
    }
    c.row(g) = x.row(pick);
  }
  std::vector<int> label = nearest_centroid(x, c);
  for (int it = 0; it < max_iterations; ++it) {
    Matrix sum = Matrix::Zero(G, x.cols());
    std::vector<int> count(static_cast<std::size_t>(G), 0);
    for (Eigen::Index i = 0; i < n; ++i) {
      sum.row(label[static_cast<std::size_t>(i)]) += x.row(i);
      ++count[static_cast<std::size_t>(label[static_cast<std::size_t>(i)])];
    }
    for (int g = 0; g < G; ++g) {
      if (count[static_cast<std::size_t>(g)] > 0) c.row(g) = sum.row(g) / count[static_cast<std::size_t>(g)];
    }
    std::vector<int> next = nearest_centroid(x, c);
    if (next == label) break;
    label = std::move(next);
  }
  return c;
}

}  // namespace detail

/// Covariance estimate per structure from hard labels, falling back toward the
/// pooled covariance for clusters too small to estimate their own.
inline CovarianceSet empirical_covariance_set(const Matrix& x, const std::vector<int>& z,
                                              int G, Structure structure) {
  const Eigen::Index q = x.cols();
  const auto n = static_cast<double>(x.rows());
  Matrix means = Matrix::Zero(G, q);
  std::vector<double> count(static_cast<std::size_t>(G), 0.0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    means.row(z[static_cast<std::size_t>(i)]) += x.row(i);
    count[static_cast<std::size_t>(z[static_cast<std::size_t>(i)])] += 1.0;
  }
  for (int g = 0; g < G; ++g) {
    if (count[static_cast<std::size_t>(g)] > 0) means.row(g) /= count[static_cast<std::size_t>(g)];
  }
  std::vector<Matrix> scatter(static_cast<std::size_t>(G), Matrix::Zero(q, q));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const int g = z[static_cast<std::size_t>(i)];
    const Eigen::RowVectorXd r = x.row(i) - means.row(g);
    scatter[static_cast<std::size_t>(g)] += r.transpose() * r;
  }
  Matrix pooled = Matrix::Zero(q, q);
  for (const auto& s : scatter) pooled += s;
  pooled /= std::max(n - G, 1.0);
  const Matrix total = empirical_covariance(x);
  // Guard against a singular pooled estimate.
  pooled = 0.99 * pooled + 0.01 * Matrix(total.diagonal().asDiagonal());
  switch (structure) {
    case Structure::EEI: return CovarianceSet::eei(pooled.diagonal());
    case Structure::EEE: return CovarianceSet::eee(pooled);
    case Structure::VVV: {
      std::vector<Matrix> per(static_cast<std::size_t>(G));
      for (int g = 0; g < G; ++g) {
        const double ng = count[static_cast<std::size_t>(g)];
        // Shrink toward the pooled estimate with weight q+1 pseudo-observations.
        const double w = static_cast<double>(q + 1);
        per[static_cast<std::size_t>(g)] = (scatter[static_cast<std::size_t>(g)] + w * pooled) / (ng + w);
      }
      return CovarianceSet::vvv(std::move(per));
    }
  }
  return {};
}

/// Bootstrap K-means on the continuous block (censored cells at their
/// bounds): Lloyd K-means on `resamples` bootstrap samples, keep the centroid
/// set with the lowest within-cluster sum of squares on the full data, assign
/// every row to its nearest centroid.
inline InitResult bootstrap_kmeans_init(const MixedDataset& ds, int G, Structure structure,
                                        const KMeansOptions& opts, RngStream& rng) {
  if (opts.resamples < 1) throw ValidationError("bootstrap K-means needs at least one resample");
  if (G < 1 || G > kMaxClusters) throw ValidationError("G must lie in [1, 12]");
  if (static_cast<std::size_t>(G) > ds.n()) throw ValidationError("G exceeds the number of observations");
  const Matrix& x = ds.continuous;
  const Eigen::Index n = x.rows();

  Matrix best;
  double best_ss = std::numeric_limits<double>::infinity();
  for (int b = 0; b < opts.resamples; ++b) {
    Matrix boot(n, x.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto pick = std::min<Eigen::Index>(
          static_cast<Eigen::Index>(rng.uniform() * static_cast<double>(n)), n - 1);
      boot.row(i) = x.row(pick);
    }
    Matrix c = detail::lloyd_kmeans(boot, G, opts.max_iterations, rng);
    const double ss = detail::within_ss(x, c);
    if (ss < best_ss) {
      best_ss = ss;
      best = std::move(c);
    }
  }

  std::vector<int> z = detail::nearest_centroid(x, best);
  auto sizes = [&] {
    std::vector<int> s(static_cast<std::size_t>(G), 0);
    for (int g : z) ++s[static_cast<std::size_t>(g)];
    return s;
  };
  for (int attempt = 0;; ++attempt) {
    auto s = sizes();
    auto empty = std::find(s.begin(), s.end(), 0);
    if (empty == s.end()) break;
    if (attempt == 1) throw ValidationError("bootstrap K-means left an empty cluster after re-seeding");
    // Re-seed every empty centroid at the point farthest from its centroid.
    for (int g = 0; g < G; ++g) {
      if (s[static_cast<std::size_t>(g)] != 0) continue;
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = detail::sq_dist(x, i, best, z[static_cast<std::size_t>(i)]);
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      best.row(g) = x.row(far);
      z[static_cast<std::size_t>(far)] = g;
    }
    z = detail::nearest_centroid(x, best);
  }

  InitResult init;
  init.z = z;
  // Means of the full-data clusters induced by the selected centroids.
  Matrix centroid_means = Matrix::Zero(G, x.cols());
  {
    const auto s0 = sizes();
    for (Eigen::Index i = 0; i < n; ++i) centroid_means.row(z[static_cast<std::size_t>(i)]) += x.row(i);
    for (int g = 0; g < G; ++g) centroid_means.row(g) /= s0[static_cast<std::size_t>(g)];
  }
  init.params.mu = centroid_means.transpose();
  init.params.sigma = empirical_covariance_set(x, z, G, structure);
  const auto s = sizes();
  init.params.tau.resize(G);
  for (int g = 0; g < G; ++g) init.params.tau[g] = static_cast<double>(s[static_cast<std::size_t>(g)]) / static_cast<double>(n);
  for (std::size_t c = 0; c < ds.num_categorical(); ++c) {
    Matrix theta = Matrix::Ones(G, ds.levels[c]);  // add-one smoothing
    for (Eigen::Index i = 0; i < n; ++i) {
      theta(z[static_cast<std::size_t>(i)], ds.categorical(i, static_cast<Eigen::Index>(c)) - 1) += 1.0;
    }
    for (int g = 0; g < G; ++g) theta.row(g) /= theta.row(g).sum();
    init.params.theta.push_back(std::move(theta));
  }
  return init;
}

struct PriorOptions {
  double spike_concentration = 1000.0;
  double a_delta0 = 2.0;
  double b_delta0 = 0.005;
  double a_p1 = 1.0, b_p1 = 1.0, a_p2 = 1.0, b_p2 = 1.0;
  double a_tilde = 2.0, b_tilde = 1.0;
  std::optional<double> omega;  // overrides the data-adaptive rule
  bool paper_literal_a10 = false;
};

inline Hyperparameters default_hyperparameters(const MixedDataset& ds, int G, int k_percentile,
                                               const InitResult& init,
                                               const PriorOptions& opts = {}) {
  if (G < 1 || G > kMaxClusters) throw ValidationError("G must lie in [1, 12]");
  if (static_cast<std::size_t>(G) > ds.n()) throw ValidationError("G exceeds the number of observations");
  if (k_percentile < 60 || k_percentile > 90) throw ValidationError("k percentile must lie in [60, 90]");
  Hyperparameters h;
  h.G = G;
  h.k_percentile = k_percentile;
  h.delta_dirichlet = Vector::Constant(G, 1.0 / G);
  h.a_delta0 = opts.a_delta0;
  h.b_delta0 = opts.b_delta0;
  h.a_p1 = opts.a_p1;
  h.b_p1 = opts.b_p1;
  h.a_p2 = opts.a_p2;
  h.b_p2 = opts.b_p2;
  h.eei = {opts.a_tilde, opts.b_tilde};
  h.spike_concentration = opts.spike_concentration;
  h.paper_literal_a10 = opts.paper_literal_a10;
  h.omega = opts.omega ? *opts.omega : compute_omega(init.params.mu, k_percentile);
  if (!(h.omega > 1.0)) throw ValidationError("omega must exceed 1");

  const auto q = static_cast<double>(ds.q());
  const Matrix s = empirical_covariance(ds.continuous) / std::pow(static_cast<double>(G), 2.0 / q);
  h.eee = {q + 2.0, s};
  h.vvv.assign(static_cast<std::size_t>(G), InverseWishartPrior{q + 2.0, s});
  const double scale = opts.spike_concentration / static_cast<double>(ds.n());
  for (std::size_t c = 0; c < ds.num_categorical(); ++c) {
    h.alpha_slab.push_back(Vector::Ones(ds.levels[c]));
    h.alpha_spike.push_back(scale * ds.level_counts(c));
  }
  h.marginal_mean = ds.marginal_means();
  return h;
}

/// Gibbs starting state: initialization parameters, every indicator in the
/// slab, spike variance at its prior mean and inclusion probabilities 1/2.
inline ModelState initial_state(const MixedDataset& ds, const InitResult& init,
                                const Hyperparameters& h) {
  ModelState s;
  s.params = init.params;
  s.z = init.z;
  s.delta = Eigen::MatrixXi::Ones(static_cast<Eigen::Index>(ds.M()), h.G);
  s.sigma2_delta0 = h.a_delta0 > 1.0 ? h.b_delta0 / (h.a_delta0 - 1.0) : h.b_delta0;
  s.p1 = Vector::Constant(static_cast<Eigen::Index>(ds.q()), 0.5);
  s.p2 = Vector::Constant(static_cast<Eigen::Index>(ds.num_categorical()), 0.5);
  for (const auto& cell : ds.censored_cells()) s.imputed.push_back(cell.bound);
  return s;
}

/// Continuous block with the state's imputed values substituted.
inline Matrix current_continuous(const MixedDataset& ds, const std::vector<double>& imputed) {
  Matrix u = ds.continuous;
  const auto cells = ds.censored_cells();
  for (std::size_t k = 0; k < cells.size() && k < imputed.size(); ++k) {
    u(static_cast<Eigen::Index>(cells[k].row), static_cast<Eigen::Index>(cells[k].col)) = imputed[k];
  }
  return u;
}

/// n x G matrix of log(tau_g f_g(x_i)) where f_g is the cluster's normal
/// density times its categorical probabilities.
inline Matrix component_log_densities(const Matrix& u, const Eigen::MatrixXi& categorical,
                                      const MixtureParameters& p) {
  const auto G = static_cast<Eigen::Index>(p.G());
  const Eigen::Index n = u.rows();
  Matrix out(n, G);
  const bool shared = !p.sigma.cluster_specific();
  std::optional<CholeskyFactor> shared_chol;
  if (shared) shared_chol = cholesky(p.sigma.cluster(0), "cluster covariance");
  for (Eigen::Index g = 0; g < G; ++g) {
    const CholeskyFactor chol =
        shared ? *shared_chol : cholesky(p.sigma.cluster(static_cast<std::size_t>(g)), "cluster covariance");
    const Matrix linv = chol.lower.triangularView<Eigen::Lower>().solve(
        Matrix::Identity(u.cols(), u.cols()));
    const Matrix centered = u.rowwise() - p.mu.col(g).transpose();
    const Matrix white = centered * linv.transpose();
    const double log_tau = p.tau[g] > 0.0 ? std::log(p.tau[g]) : -std::numeric_limits<double>::infinity();
    const double c = -0.5 * (static_cast<double>(u.cols()) * kLog2Pi + chol.log_det) + log_tau;
    out.col(g) = (-0.5 * white.rowwise().squaredNorm()).array() + c;
  }
  for (std::size_t m = 0; m < p.theta.size(); ++m) {
    const Matrix log_theta = p.theta[m].array().max(1e-300).log().matrix();
    for (Eigen::Index i = 0; i < n; ++i) {
      const int level = categorical(i, static_cast<Eigen::Index>(m)) - 1;
      out.row(i) += log_theta.col(level).transpose();
    }
  }
  return out;
}

/// Row-normalized membership probabilities from log weights; returns the
/// index of a row whose weights are all -inf, if any.
inline std::optional<Eigen::Index> normalize_rows(Matrix& logw) {
  for (Eigen::Index i = 0; i < logw.rows(); ++i) {
    const double mx = logw.row(i).maxCoeff();
    if (!std::isfinite(mx)) return i;
    logw.row(i) = (logw.row(i).array() - mx).exp();
    logw.row(i) /= logw.row(i).sum();
  }
  return std::nullopt;
}

}  // namespace bfmm
