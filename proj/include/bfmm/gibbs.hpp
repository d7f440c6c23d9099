#pragma once

// Gibbs sampler for the spike-and-slab mixed-data mixture: censored-cell
// imputation, every full-conditional update, and the chain driver.

#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "bfmm/data.hpp"
#include "bfmm/errors.hpp"
#include "bfmm/kernels.hpp"
#include "bfmm/model.hpp"
#include "bfmm/rng.hpp"

namespace bfmm {

/// Blocks held fixed at their current value (used by oracle tests and for
/// ablations). Everything is sampled by default.
struct FrozenBlocks {
  bool covariance = false;
  bool means = false;
  bool theta = false;
  bool delta = false;
  bool spike_variance = false;
  bool inclusion = false;
  bool tau = false;
  bool z = false;
};

struct ChainConfig {
  int T = 500;
  int t_star = 200;
  std::uint64_t seed = 1;
  int chain_id = 0;
  bool store_traces = true;
  bool impute = true;
  bool store_membership = true;
  FrozenBlocks frozen;
  /// Called after every iteration with (t, state, P^(t)).
  std::function<void(int, const ModelState&, const Matrix&)> observer;
};

/// Retained (post burn-in) iterations of one chain.
struct ChainTrace {
  std::vector<int> iterations;      // 1-based iteration index t > t*
  std::vector<ModelState> states;   // empty when store_traces is false
  std::vector<Matrix> membership;   // P^(t), n x G, rows on the simplex
  ModelState final_state;

  std::size_t size() const { return iterations.size(); }
};

struct ChainFailure {
  int iteration = 0;
  std::string cause;
};

using ChainOutcome = std::variant<ChainTrace, ChainFailure>;

/// Per-phase stream tags; each (chain, phase) owns an independent stream.
enum class Phase : std::uint64_t {
  impute = 1,
  covariance,
  means,
  theta,
  delta,
  spike_variance,
  inclusion,
  tau,
  z,
};

struct ConditionalMoments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Mean and variance of x_im given the other continuous coordinates of row i
/// under its cluster's normal (Schur complement of Sigma_g).
inline ConditionalMoments conditional_moments(const MixtureParameters& p, std::size_t g,
                                              const Vector& row, std::size_t m) {
  const Matrix sigma = p.sigma.cluster(g);
  const auto q = static_cast<Eigen::Index>(sigma.rows());
  const auto mi = static_cast<Eigen::Index>(m);
  const auto gi = static_cast<Eigen::Index>(g);
  if (q == 1) return {p.mu(0, gi), sigma(0, 0)};
  std::vector<Eigen::Index> rest;
  for (Eigen::Index k = 0; k < q; ++k) {
    if (k != mi) rest.push_back(k);
  }
  const auto r = static_cast<Eigen::Index>(rest.size());
  Matrix s_rr(r, r);
  Vector s_mr(r), d(r);
  for (Eigen::Index a = 0; a < r; ++a) {
    s_mr[a] = sigma(mi, rest[static_cast<std::size_t>(a)]);
    d[a] = row[rest[static_cast<std::size_t>(a)]] - p.mu(rest[static_cast<std::size_t>(a)], gi);
    for (Eigen::Index b = 0; b < r; ++b) {
      s_rr(a, b) = sigma(rest[static_cast<std::size_t>(a)], rest[static_cast<std::size_t>(b)]);
    }
  }
  const CholeskyFactor chol = cholesky(s_rr, "cluster covariance (conditional block)");
  const Vector beta = chol.lower.transpose().triangularView<Eigen::Upper>().solve(chol.solve_lower(s_mr));
  const double var = sigma(mi, mi) - s_mr.dot(beta);
  if (!(var > 0.0)) throw FactorizationError("cluster covariance: non-positive conditional variance");
  return {p.mu(mi, gi) + beta.dot(d), var};
}

/// Redraws every censored cell from its cluster's conditional normal truncated
/// to the censored side of its bound. Updates `u` in place (cells in the same
/// row see each other's new values) and returns the imputed values.
inline std::vector<double> impute_censored(const MixedDataset& ds, Matrix& u,
                                           const ModelState& state, RngStream& rng) {
  const auto cells = ds.censored_cells();
  std::vector<double> out;
  out.reserve(cells.size());
  for (const auto& cell : cells) {
    const auto g = static_cast<std::size_t>(state.z[cell.row]);
    const Vector row = u.row(static_cast<Eigen::Index>(cell.row)).transpose();
    const ConditionalMoments cm = conditional_moments(state.params, g, row, cell.col);
    const TruncationSide side = cell.kind == CensorKind::left_censored
                                    ? TruncationSide::below_bound
                                    : TruncationSide::above_bound;
    const double x = draw_truncated_normal(cm.mean, std::sqrt(cm.variance), cell.bound, side, rng);
    u(static_cast<Eigen::Index>(cell.row), static_cast<Eigen::Index>(cell.col)) = x;
    out.push_back(x);
  }
  return out;
}

namespace detail {

struct ClusterSums {
  std::vector<int> n;  // n_g
  Matrix sum;          // q x G, sum of u_i over cluster g
};

inline ClusterSums cluster_sums(const Matrix& u, const std::vector<int>& z, std::size_t G) {
  ClusterSums s;
  s.n.assign(G, 0);
  s.sum = Matrix::Zero(u.cols(), static_cast<Eigen::Index>(G));
  for (Eigen::Index i = 0; i < u.rows(); ++i) {
    const int g = z[static_cast<std::size_t>(i)];
    ++s.n[static_cast<std::size_t>(g)];
    s.sum.col(g) += u.row(i).transpose();
  }
  return s;
}

inline double slab_or_spike_variance(const ModelState& s, const Hyperparameters& h,
                                     Eigen::Index m, Eigen::Index g) {
  return (s.delta(m, g) == 1 ? h.omega : 1.0) * s.sigma2_delta0;
}

}  // namespace detail

/// Conjugate covariance update for the configured structure.
inline CovarianceSet update_covariance(const Matrix& u, const ModelState& state,
                                       const Hyperparameters& h, RngStream& rng) {
  const auto& p = state.params;
  const Eigen::Index n = u.rows();
  const Eigen::Index q = u.cols();
  switch (p.sigma.structure) {
    case Structure::EEI: {
      Vector rate = Vector::Constant(q, h.eei.b_tilde);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int g = state.z[static_cast<std::size_t>(i)];
        rate += 0.5 * (u.row(i).transpose() - p.mu.col(g)).array().square().matrix();
      }
      Vector v(q);
      const double shape = h.eei.a_tilde + 0.5 * static_cast<double>(n);
      for (Eigen::Index m = 0; m < q; ++m) v[m] = draw_inverse_gamma(shape, rate[m], rng);
      return CovarianceSet::eei(std::move(v));
    }
    case Structure::EEE: {
      Matrix scale = h.eee.scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector r = u.row(i).transpose() - p.mu.col(state.z[static_cast<std::size_t>(i)]);
        scale.noalias() += r * r.transpose();
      }
      return CovarianceSet::eee(draw_inverse_wishart(h.eee.nu + static_cast<double>(n), scale, rng));
    }
    case Structure::VVV: {
      const auto G = p.G();
      std::vector<Matrix> scale(G);
      std::vector<int> count(G, 0);
      for (std::size_t g = 0; g < G; ++g) scale[g] = h.vvv[g].scale;
      for (Eigen::Index i = 0; i < n; ++i) {
        const auto g = static_cast<std::size_t>(state.z[static_cast<std::size_t>(i)]);
        const Vector r = u.row(i).transpose() - p.mu.col(static_cast<Eigen::Index>(g));
        scale[g].noalias() += r * r.transpose();
        ++count[g];
      }
      std::vector<Matrix> out(G);
      for (std::size_t g = 0; g < G; ++g) {
        out[g] = draw_inverse_wishart(h.vvv[g].nu + count[g], scale[g], rng);
      }
      return CovarianceSet::vvv(std::move(out));
    }
  }
  return p.sigma;
}

/// Normal full conditional of one mean entry given everything else,
/// including the other entries of the same cluster's mean.
inline ConditionalMoments mean_full_conditional(const ModelState& state, const Hyperparameters& h,
                                                const detail::ClusterSums& sums,
                                                const Matrix& precision, const Matrix& mu,
                                                Eigen::Index m, Eigen::Index g) {
  const double v = detail::slab_or_spike_variance(state, h, m, g);
  const double xbar = h.marginal_mean.size() ? h.marginal_mean[m] : 0.0;
  const double ng = sums.n[static_cast<std::size_t>(g)];
  if (state.params.sigma.structure == Structure::EEI) {
    const double s2 = state.params.sigma.variances[m];
    const double denom = s2 + ng * v;
    return {(xbar * s2 + v * sums.sum(m, g)) / denom, v * s2 / denom};
  }
  double w = 0.0;
  for (Eigen::Index p = 0; p < mu.rows(); ++p) {
    if (p != m) w += precision(m, p) * (sums.sum(p, g) - ng * mu(p, g));
  }
  const double lmm = precision(m, m);
  const double denom = 1.0 + ng * lmm * v;
  return {(xbar + v * (lmm * sums.sum(m, g) + w)) / denom, v / denom};
}

/// Cluster means, drawn coordinate by coordinate in (g, m) order.
inline Matrix update_means(const Matrix& u, const ModelState& state, const Hyperparameters& h,
                           RngStream& rng) {
  const auto& p = state.params;
  const auto G = p.G();
  const detail::ClusterSums sums = detail::cluster_sums(u, state.z, G);
  Matrix mu = p.mu;
  std::vector<Matrix> precision(G);
  if (p.sigma.structure != Structure::EEI) {
    if (p.sigma.cluster_specific()) {
      for (std::size_t g = 0; g < G; ++g) precision[g] = cholesky(p.sigma.cluster(g), "cluster covariance").inverse();
    } else {
      const Matrix shared = cholesky(p.sigma.cluster(0), "shared covariance").inverse();
      for (auto& m : precision) m = shared;
    }
  }
  for (std::size_t g = 0; g < G; ++g) {
    const auto gi = static_cast<Eigen::Index>(g);
    for (Eigen::Index m = 0; m < mu.rows(); ++m) {
      const ConditionalMoments cm = mean_full_conditional(state, h, sums, precision[g], mu, m, gi);
      mu(m, gi) = cm.mean + std::sqrt(cm.variance) * rng.normal();
    }
  }
  return mu;
}

/// Dirichlet update of every theta_mg: spike or slab prior by Delta_mg plus
/// within-cluster level counts.
inline std::vector<Matrix> update_theta(const MixedDataset& ds, const ModelState& state,
                                        const Hyperparameters& h, RngStream& rng) {
  const auto G = static_cast<Eigen::Index>(state.G());
  const auto q = static_cast<Eigen::Index>(ds.q());
  std::vector<Matrix> out;
  for (std::size_t c = 0; c < ds.num_categorical(); ++c) {
    Matrix counts = Matrix::Zero(G, ds.levels[c]);
    for (std::size_t i = 0; i < ds.n(); ++i) {
      counts(state.z[i], ds.categorical(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) - 1) += 1.0;
    }
    Matrix theta(G, ds.levels[c]);
    for (Eigen::Index g = 0; g < G; ++g) {
      const Vector& prior = state.delta(q + static_cast<Eigen::Index>(c), g) == 1 ? h.alpha_slab[c] : h.alpha_spike[c];
      theta.row(g) = draw_dirichlet(prior + counts.row(g).transpose(), rng).transpose();
    }
    out.push_back(std::move(theta));
  }
  return out;
}

namespace detail {

// P(Delta = 1) from the two log-weights.
inline double inclusion_probability(double log_slab, double log_spike) {
  if (log_slab == log_spike) return 0.5;
  if (!std::isfinite(log_slab) && !std::isfinite(log_spike)) return 0.5;
  const double d = log_spike - log_slab;
  if (d > 0) {
    const double e = std::exp(-d);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(d));
}

inline double safe_log(double x) {
  return x > 0.0 ? std::log(x) : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Probability that Delta_mg = 1 given the rest (rows m < q continuous).
inline double delta_inclusion_probability(const ModelState& state, const Hyperparameters& h,
                                          Eigen::Index m, Eigen::Index g) {
  const auto q = state.params.mu.rows();
  if (m < q) {
    const double xbar = h.marginal_mean.size() ? h.marginal_mean[m] : 0.0;
    const double d = state.params.mu(m, g) - xbar;
    const double ls = detail::safe_log(state.p1[m]) + normal_logpdf(d, 0.0, h.omega * state.sigma2_delta0);
    const double l0 = detail::safe_log(1.0 - state.p1[m]) + normal_logpdf(d, 0.0, state.sigma2_delta0);
    return detail::inclusion_probability(ls, l0);
  }
  const auto c = static_cast<std::size_t>(m - q);
  const Vector theta = state.params.theta[c].row(g).transpose();
  const double ls = detail::safe_log(state.p2[static_cast<Eigen::Index>(c)]) + log_dirichlet_density(theta, h.alpha_slab[c]);
  const double l0 = detail::safe_log(1.0 - state.p2[static_cast<Eigen::Index>(c)]) + log_dirichlet_density(theta, h.alpha_spike[c]);
  return detail::inclusion_probability(ls, l0);
}

inline Eigen::MatrixXi update_delta(const ModelState& state, const Hyperparameters& h, RngStream& rng) {
  Eigen::MatrixXi out = state.delta;
  for (Eigen::Index m = 0; m < out.rows(); ++m) {
    for (Eigen::Index g = 0; g < out.cols(); ++g) {
      out(m, g) = rng.uniform() < delta_inclusion_probability(state, h, m, g) ? 1 : 0;
    }
  }
  return out;
}

struct InverseGammaParams {
  double shape = 0.0;
  double rate = 0.0;
};

/// Conditional of the spike variance. The quadratic term carries a factor
/// 1/2 unless h.paper_literal_a10 is set.
inline InverseGammaParams spike_variance_posterior(const ModelState& state, const Hyperparameters& h) {
  double count = 0.0, quad = 0.0;
  const auto& mu = state.params.mu;
  for (Eigen::Index m = 0; m < mu.rows(); ++m) {
    const double xbar = h.marginal_mean.size() ? h.marginal_mean[m] : 0.0;
    for (Eigen::Index g = 0; g < mu.cols(); ++g) {
      if (state.delta(m, g) == 0) {
        count += 1.0;
        quad += (mu(m, g) - xbar) * (mu(m, g) - xbar);
      }
    }
  }
  return {h.a_delta0 + 0.5 * count, h.b_delta0 + (h.paper_literal_a10 ? 1.0 : 0.5) * quad};
}

inline double update_spike_variance(const ModelState& state, const Hyperparameters& h, RngStream& rng) {
  const InverseGammaParams post = spike_variance_posterior(state, h);
  return draw_inverse_gamma(post.shape, post.rate, rng);
}

/// Beta updates of p1 (continuous rows) and p2 (categorical rows).
inline std::pair<Vector, Vector> update_inclusion_probs(const ModelState& state, const Hyperparameters& h,
                                                        RngStream& rng) {
  const auto q = state.params.mu.rows();
  const auto M = state.delta.rows();
  const auto G = static_cast<double>(state.delta.cols());
  Vector p1(q), p2(M - q);
  for (Eigen::Index m = 0; m < M; ++m) {
    const double on = state.delta.row(m).sum();
    if (m < q) {
      p1[m] = draw_beta(h.a_p1 + on, h.b_p1 + G - on, rng);
    } else {
      p2[m - q] = draw_beta(h.a_p2 + on, h.b_p2 + G - on, rng);
    }
  }
  return {p1, p2};
}

inline Vector update_tau(const ModelState& state, const Hyperparameters& h, RngStream& rng) {
  Vector alpha = h.delta_dirichlet;
  for (int g : state.z) alpha[g] += 1.0;
  return draw_dirichlet(alpha, rng);
}

struct MembershipDraw {
  std::vector<int> z;
  Matrix probabilities;  // n x G
};

/// Membership probabilities for every row (log space, soft-maxed), then a
/// categorical draw per row.
inline MembershipDraw update_z(const MixedDataset& ds, const Matrix& u, const ModelState& state,
                               RngStream& rng) {
  MembershipDraw out;
  out.probabilities = component_log_densities(u, ds.categorical, state.params);
  if (auto bad = normalize_rows(out.probabilities)) {
    throw NumericError("membership: every cluster has zero density for row " + std::to_string(*bad));
  }
  out.z.resize(ds.n());
  const auto G = out.probabilities.cols();
  std::vector<double> w(static_cast<std::size_t>(G));
  for (std::size_t i = 0; i < ds.n(); ++i) {
    for (Eigen::Index g = 0; g < G; ++g) w[static_cast<std::size_t>(g)] = out.probabilities(static_cast<Eigen::Index>(i), g);
    out.z[i] = static_cast<int>(draw_categorical(w, rng));
  }
  return out;
}

/// Runs one chain from `start`. Per iteration: impute, covariance, means,
/// theta, delta, spike variance, inclusion probabilities, tau, z.
inline ChainOutcome run_chain(const MixedDataset& ds, const Hyperparameters& h, ModelState start,
                              const ChainConfig& cfg) {
  if (cfg.T < 1 || cfg.t_star < 0 || cfg.t_star >= cfg.T) {
    throw ValidationError("chain config requires 0 <= t_star < T");
  }
  const RngStream root = RngStream(cfg.seed).derive(static_cast<std::uint64_t>(cfg.chain_id));
  auto stream = [&](Phase p) { return root.derive(static_cast<std::uint64_t>(p)); };
  RngStream r_impute = stream(Phase::impute), r_cov = stream(Phase::covariance),
            r_mean = stream(Phase::means), r_theta = stream(Phase::theta),
            r_delta = stream(Phase::delta), r_spike = stream(Phase::spike_variance),
            r_incl = stream(Phase::inclusion), r_tau = stream(Phase::tau), r_z = stream(Phase::z);

  ModelState s = std::move(start);
  Matrix u = current_continuous(ds, s.imputed);
  const bool has_censoring = !s.imputed.empty();
  ChainTrace trace;
  const auto& f = cfg.frozen;
  int t = 0;
  try {
    for (t = 1; t <= cfg.T; ++t) {
      if (cfg.impute && has_censoring) s.imputed = impute_censored(ds, u, s, r_impute);
      if (!f.covariance) s.params.sigma = update_covariance(u, s, h, r_cov);
      if (!f.means) s.params.mu = update_means(u, s, h, r_mean);
      if (!f.theta) s.params.theta = update_theta(ds, s, h, r_theta);
      if (!f.delta) s.delta = update_delta(s, h, r_delta);
      if (!f.spike_variance) s.sigma2_delta0 = update_spike_variance(s, h, r_spike);
      if (!f.inclusion) std::tie(s.p1, s.p2) = update_inclusion_probs(s, h, r_incl);
      if (!f.tau) s.params.tau = update_tau(s, h, r_tau);
      MembershipDraw md = update_z(ds, u, s, r_z);
      if (!f.z) s.z = std::move(md.z);
      if (cfg.observer) cfg.observer(t, s, md.probabilities);
      if (t > cfg.t_star) {
        trace.iterations.push_back(t);
        if (cfg.store_membership) trace.membership.push_back(std::move(md.probabilities));
        if (cfg.store_traces) trace.states.push_back(s);
      }
    }
  } catch (const Error& e) {
    return ChainFailure{t, e.what()};
  }
  trace.final_state = std::move(s);
  return trace;
}

}  // namespace bfmm
