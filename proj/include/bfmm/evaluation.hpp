#pragma once

// Likelihoods, free-parameter counts, BIC/ICL, adjusted Rand index and the
// Brooks-Gelman multivariate potential scale reduction factor.

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "bfmm/errors.hpp"
#include "bfmm/kernels.hpp"
#include "bfmm/model.hpp"

namespace bfmm {

/// sum_i log sum_g tau_g f_g(x_i).
inline double observed_loglik(const Matrix& u, const Eigen::MatrixXi& categorical,
                              const MixtureParameters& p) {
  const Matrix lw = component_log_densities(u, categorical, p);
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(lw.cols()));
  for (Eigen::Index i = 0; i < lw.rows(); ++i) {
    for (Eigen::Index g = 0; g < lw.cols(); ++g) row[static_cast<std::size_t>(g)] = lw(i, g);
    total += log_sum_exp(row);
  }
  return total;
}

/// sum_i log(tau_{z_i} f_{z_i}(x_i)) for hard labels z (0-based).
inline double complete_loglik(const Matrix& u, const Eigen::MatrixXi& categorical,
                              const MixtureParameters& p, const std::vector<int>& z) {
  const Matrix lw = component_log_densities(u, categorical, p);
  if (z.size() != static_cast<std::size_t>(lw.rows())) throw ValidationError("complete_loglik: label count mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) total += lw(static_cast<Eigen::Index>(i), z[i]);
  return total;
}

inline int degrees_of_freedom(Structure s, int G, int q, const std::vector<int>& levels) {
  if (G < 1 || q < 0) throw ValidationError("degrees_of_freedom: G >= 1 and q >= 0 required");
  int cat = 0;
  for (int L : levels) cat += L - 1;
  const int full = q * (q + 1) / 2;
  switch (s) {
    case Structure::EEI: return (G - 1) + q + G * (q + cat);
    case Structure::EEE: return (G - 1) + full + G * (q + cat);
    case Structure::VVV: return (G - 1) + G * (q + full + cat);
  }
  return 0;
}

/// -sum_i sum_g z_ig log z_ig with 0 log 0 = 0.
inline double entropy_term(const Matrix& probs) {
  double e = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    for (Eigen::Index g = 0; g < probs.cols(); ++g) {
      const double v = probs(i, g);
      if (v > 0.0) e -= v * std::log(v);
    }
  }
  return e;
}

struct ModelScore {
  int G = 1;
  Structure structure = Structure::EEI;
  double loglik_observed = 0.0;
  double loglik_complete = 0.0;
  int dof = 0;
  double bic = 0.0;
  double icl = 0.0;
  double entropy = 0.0;
};

inline ModelScore score_model(Structure s, int G, double loglik_observed, double loglik_complete,
                              int dof, std::size_t n, const Matrix& posterior_probs) {
  ModelScore m;
  m.G = G;
  m.structure = s;
  m.loglik_observed = loglik_observed;
  m.loglik_complete = loglik_complete;
  m.dof = dof;
  m.bic = -2.0 * loglik_observed + dof * std::log(static_cast<double>(n));
  m.entropy = entropy_term(posterior_probs);
  m.icl = m.bic + m.entropy;
  return m;
}

/// Contingency table of two labelings (labels remapped to 0..K-1 in order of
/// first appearance).
inline Eigen::MatrixXd contingency_table(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) throw ValidationError("label vectors differ in length");
  std::map<int, int> ia, ib;
  for (int v : a) ia.emplace(v, static_cast<int>(ia.size()));
  for (int v : b) ib.emplace(v, static_cast<int>(ib.size()));
  // Re-index in sorted label order for a stable layout.
  int k = 0;
  for (auto& [label, idx] : ia) idx = k++;
  k = 0;
  for (auto& [label, idx] : ib) idx = k++;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(ia.size()),
                                            static_cast<Eigen::Index>(ib.size()));
  for (std::size_t i = 0; i < a.size(); ++i) t(ia[a[i]], ib[b[i]]) += 1.0;
  return t;
}

/// Hubert-Arabie adjusted Rand index.
inline double adjusted_rand_index(const std::vector<int>& a, const std::vector<int>& b) {
  const Eigen::MatrixXd t = contingency_table(a, b);
  auto c2 = [](double x) { return x * (x - 1.0) / 2.0; };
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) sum_ij += c2(t(i, j));
  }
  for (Eigen::Index i = 0; i < t.rows(); ++i) sum_a += c2(t.row(i).sum());
  for (Eigen::Index j = 0; j < t.cols(); ++j) sum_b += c2(t.col(j).sum());
  const double total = c2(static_cast<double>(a.size()));
  // Scaled by 2 * total so every term is an integer and small examples come out exact.
  const double num = 2.0 * sum_ij * total - 2.0 * sum_a * sum_b;
  const double den = (sum_a + sum_b) * total - 2.0 * sum_a * sum_b;
  if (den == 0.0) return 1.0;  // both partitions trivial and identical in structure
  return num / den;
}

struct ConvergenceReport {
  double mpsrf = 0.0;
  std::size_t chains = 0;
  std::size_t length = 0;     // retained iterations per chain
  std::size_t dimension = 0;
  Matrix within;              // W
  Matrix between_over_n;      // B / n
  Matrix chain_means;         // m x d
  bool ridged = false;
};

/// Brooks-Gelman MPSRF. Each chain is an (iterations x parameters) matrix.
inline ConvergenceReport mpsrf(const std::vector<Matrix>& chains) {
  if (chains.size() < 2) throw ValidationError("mpsrf needs at least two chains");
  const auto n = chains.front().rows();
  const auto d = chains.front().cols();
  if (n < 2 || d < 1) throw ValidationError("mpsrf needs at least two iterations and one parameter");
  for (const auto& c : chains) {
    if (c.rows() != n || c.cols() != d) throw ValidationError("mpsrf: chains differ in shape");
  }
  const auto m = static_cast<Eigen::Index>(chains.size());
  ConvergenceReport r;
  r.chains = chains.size();
  r.length = static_cast<std::size_t>(n);
  r.dimension = static_cast<std::size_t>(d);
  r.chain_means.resize(m, d);
  r.within = Matrix::Zero(d, d);
  for (Eigen::Index j = 0; j < m; ++j) {
    const Eigen::RowVectorXd mean = chains[static_cast<std::size_t>(j)].colwise().mean();
    r.chain_means.row(j) = mean;
    const Matrix c = chains[static_cast<std::size_t>(j)].rowwise() - mean;
    r.within += c.transpose() * c;
  }
  r.within /= static_cast<double>(m * (n - 1));
  const Eigen::RowVectorXd grand = r.chain_means.colwise().mean();
  const Matrix cm = r.chain_means.rowwise() - grand;
  r.between_over_n = cm.transpose() * cm / static_cast<double>(m - 1);

  Matrix w = 0.5 * (r.within + r.within.transpose());
  Eigen::LLT<Matrix> llt(w);
  if (llt.info() != Eigen::Success || llt.matrixL().toDenseMatrix().diagonal().minCoeff() <= 0.0) {
    const double ridge = 1e-10 * w.trace() / static_cast<double>(d);
    w.diagonal().array() += ridge;
    llt.compute(w);
    r.ridged = true;
    if (!(ridge > 0.0) || llt.info() != Eigen::Success) {
      throw NumericError("mpsrf: within-chain covariance is singular");
    }
  }
  // Eigenvalues of W^{-1} B/n via the symmetric form L^{-1} (B/n) L^{-T}.
  const Matrix L = llt.matrixL();
  const Matrix a = L.triangularView<Eigen::Lower>().solve(r.between_over_n);
  const Matrix s = L.triangularView<Eigen::Lower>().solve(a.transpose());
  const Matrix sym = 0.5 * (s + s.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym, Eigen::EigenvaluesOnly);
  const double lambda = std::max(es.eigenvalues().maxCoeff(), 0.0);
  const double nn = static_cast<double>(n);
  const double mm = static_cast<double>(m);
  r.mpsrf = (nn - 1.0) / nn + ((mm + 1.0) / mm) * lambda;
  return r;
}

}  // namespace bfmm
