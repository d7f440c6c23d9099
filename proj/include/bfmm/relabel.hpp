#pragma once

// Label-switching correction by Kullback-Leibler relabeling of membership
// matrices, and application of the chosen permutations to a chain trace.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "bfmm/errors.hpp"
#include "bfmm/gibbs.hpp"
#include "bfmm/kernels.hpp"

namespace bfmm {

/// Bijection on cluster indices. mapping[j] is the old cluster placed at new
/// position j; an old label a becomes inverse()[a].
struct Permutation {
  std::vector<int> mapping;

  static Permutation identity(std::size_t G) {
    Permutation p;
    p.mapping.resize(G);
    std::iota(p.mapping.begin(), p.mapping.end(), 0);
    return p;
  }

  std::size_t size() const { return mapping.size(); }

  bool is_identity() const {
    for (std::size_t j = 0; j < mapping.size(); ++j) {
      if (mapping[j] != static_cast<int>(j)) return false;
    }
    return true;
  }

  Permutation inverse() const {
    Permutation p;
    p.mapping.resize(mapping.size());
    for (std::size_t j = 0; j < mapping.size(); ++j) {
      p.mapping[static_cast<std::size_t>(mapping[j])] = static_cast<int>(j);
    }
    return p;
  }

  /// (this o other): apply `other` first, then this.
  Permutation after(const Permutation& other) const {
    Permutation p;
    p.mapping.resize(mapping.size());
    for (std::size_t j = 0; j < mapping.size(); ++j) {
      p.mapping[j] = other.mapping[static_cast<std::size_t>(mapping[j])];
    }
    return p;
  }

  bool valid() const {
    std::vector<bool> seen(mapping.size(), false);
    for (int v : mapping) {
      if (v < 0 || static_cast<std::size_t>(v) >= mapping.size() || seen[static_cast<std::size_t>(v)]) return false;
      seen[static_cast<std::size_t>(v)] = true;
    }
    return true;
  }

  friend bool operator==(const Permutation&, const Permutation&) = default;
};

/// Columns of `m` reordered so new column j is old column mapping[j].
inline Matrix permute_columns(const Matrix& m, const Permutation& p) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t j = 0; j < p.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = m.col(p.mapping[j]);
  return out;
}

inline Matrix permute_rows(const Matrix& m, const Permutation& p) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t j = 0; j < p.size(); ++j) out.row(static_cast<Eigen::Index>(j)) = m.row(p.mapping[j]);
  return out;
}

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// O(G^3)). Returns assignment[row] = column.
inline std::vector<int> solve_assignment(const Matrix& cost) {
  const auto n = static_cast<std::size_t>(cost.rows());
  if (cost.cols() != cost.rows()) throw ValidationError("assignment: cost matrix must be square");
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based potentials formulation.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assignment(n);
  for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = static_cast<int>(j - 1);
  return assignment;
}

/// Permutation minimizing sum_j cost(j, mapping[j]). Exhaustive for G <= 7
/// (first minimum in lexicographic order), assignment solver above that.
inline Permutation best_permutation(const Matrix& cost) {
  const auto G = static_cast<std::size_t>(cost.rows());
  if (G <= 7) {
    Permutation cur = Permutation::identity(G);
    Permutation best = cur;
    double best_cost = std::numeric_limits<double>::infinity();
    do {
      double c = 0.0;
      for (std::size_t j = 0; j < G; ++j) c += cost(static_cast<Eigen::Index>(j), cur.mapping[j]);
      if (c < best_cost) {
        best_cost = c;
        best = cur;
      }
    } while (std::next_permutation(cur.mapping.begin(), cur.mapping.end()));
    return best;
  }
  Permutation p;
  p.mapping = solve_assignment(cost);
  return p;
}

struct RelabelResult {
  std::vector<Permutation> permutations;
  std::vector<double> objective;  // after each outer pass; objective[0] at identity
  int passes = 0;
};

struct RelabelOptions {
  int max_passes = 100;
  double tolerance = 1e-8;
  double clamp = 1e-12;
};

namespace detail {

inline void check_simplex_rows(const Matrix& p, std::size_t t) {
  for (Eigen::Index i = 0; i < p.rows(); ++i) {
    const double s = p.row(i).sum();
    if (!(std::abs(s - 1.0) < 1e-6) || (p.row(i).array() < 0.0).any()) {
      throw ValidationError("relabel: row " + std::to_string(i) + " of membership matrix " +
                            std::to_string(t) + " is not on the simplex");
    }
  }
}

inline Matrix averaged_membership(const std::vector<Matrix>& P, const std::vector<Permutation>& perms) {
  Matrix q = Matrix::Zero(P.front().rows(), P.front().cols());
  for (std::size_t t = 0; t < P.size(); ++t) q += permute_columns(P[t], perms[t]);
  return q / static_cast<double>(P.size());
}

inline double kl_objective(const std::vector<Matrix>& P, const std::vector<Permutation>& perms,
                           const Matrix& log_q) {
  double total = 0.0;
  for (std::size_t t = 0; t < P.size(); ++t) {
    for (std::size_t j = 0; j < perms[t].size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      const auto a = perms[t].mapping[j];
      for (Eigen::Index i = 0; i < P[t].rows(); ++i) {
        const double p = P[t](i, a);
        if (p > 0.0) total += p * (std::log(p) - log_q(i, jj));
      }
    }
  }
  return total;
}

inline Matrix clamped_log(const Matrix& q, double clamp) {
  return q.array().max(clamp).log().matrix();
}

}  // namespace detail

/// Coordinate descent on sum_t KL(P_t permuted || Q): alternately set Q to
/// the average of the permuted matrices and choose each iteration's
/// permutation against Q. Stops when the objective improves by less than
/// the tolerance.
inline RelabelResult kl_relabel(const std::vector<Matrix>& P, const RelabelOptions& opts = {}) {
  RelabelResult r;
  if (P.empty()) return r;
  const auto G = static_cast<std::size_t>(P.front().cols());
  for (std::size_t t = 0; t < P.size(); ++t) {
    if (P[t].rows() != P.front().rows() || static_cast<std::size_t>(P[t].cols()) != G) {
      throw ValidationError("relabel: membership matrices differ in shape");
    }
    detail::check_simplex_rows(P[t], t);
  }
  r.permutations.assign(P.size(), Permutation::identity(G));
  Matrix log_q = detail::clamped_log(detail::averaged_membership(P, r.permutations), opts.clamp);
  r.objective.push_back(detail::kl_objective(P, r.permutations, log_q));
  if (G == 1) return r;
  for (int pass = 1; pass <= opts.max_passes; ++pass) {
    for (std::size_t t = 0; t < P.size(); ++t) {
      // cost(j, a) = -sum_i P_t(i, a) log Q(i, j)
      const Matrix cost = -(log_q.transpose() * P[t]);
      r.permutations[t] = best_permutation(cost);
    }
    log_q = detail::clamped_log(detail::averaged_membership(P, r.permutations), opts.clamp);
    r.objective.push_back(detail::kl_objective(P, r.permutations, log_q));
    r.passes = pass;
    const double prev = r.objective[r.objective.size() - 2];
    if (prev - r.objective.back() < opts.tolerance) break;
  }
  return r;
}

/// Permutes every cluster-indexed quantity of a state.
inline void permute_state(ModelState& s, const Permutation& p) {
  const Permutation inv = p.inverse();
  auto& par = s.params;
  Vector tau(par.tau.size());
  for (std::size_t j = 0; j < p.size(); ++j) tau[static_cast<Eigen::Index>(j)] = par.tau[p.mapping[j]];
  par.tau = std::move(tau);
  par.mu = permute_columns(par.mu, p);
  if (par.sigma.cluster_specific()) {
    std::vector<Matrix> m(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) m[j] = par.sigma.matrices[static_cast<std::size_t>(p.mapping[j])];
    par.sigma.matrices = std::move(m);
  }
  for (auto& th : par.theta) th = permute_rows(th, p);
  Eigen::MatrixXi d(s.delta.rows(), s.delta.cols());
  for (std::size_t j = 0; j < p.size(); ++j) d.col(static_cast<Eigen::Index>(j)) = s.delta.col(p.mapping[j]);
  s.delta = std::move(d);
  for (int& z : s.z) z = inv.mapping[static_cast<std::size_t>(z)];
}

/// Applies one permutation per retained iteration to states and membership.
inline ChainTrace apply_relabel(ChainTrace trace, const std::vector<Permutation>& perms) {
  if (perms.size() != trace.size()) throw ValidationError("relabel: permutation count differs from trace length");
  for (std::size_t t = 0; t < perms.size(); ++t) {
    if (!perms[t].valid()) throw ValidationError("relabel: invalid permutation");
    if (t < trace.membership.size()) trace.membership[t] = permute_columns(trace.membership[t], perms[t]);
    if (t < trace.states.size()) permute_state(trace.states[t], perms[t]);
  }
  return trace;
}

}  // namespace bfmm
