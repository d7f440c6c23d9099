#pragma once

// Posterior summaries of relabeled traces, MAP assignment, and pooling of
// several chains' summaries.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bfmm/errors.hpp"
#include "bfmm/evaluation.hpp"
#include "bfmm/gibbs.hpp"
#include "bfmm/model.hpp"
#include "bfmm/relabel.hpp"

namespace bfmm {

struct FitResult {
  Structure structure = Structure::EEI;
  int G = 1;
  Vector tau_hat;
  Matrix mu_hat;                    // q x G
  CovarianceSet sigma_hat;
  std::vector<Matrix> theta_hat;    // per categorical variable, G x L
  std::vector<int> z_hat;           // 0-based
  Matrix posterior_probs;           // n x G, plug-in
  Vector importance;                // M
  Matrix importance_by_cluster;     // M x G
  std::vector<double> imputed_mean; // aligned with censored_cells()
  double sigma2_delta0_mean = 0.0;
  std::size_t draws = 0;
  std::map<std::string, double> diagnostics;

  MixtureParameters params() const { return {tau_hat, mu_hat, sigma_hat, theta_hat}; }
};

/// Index of the row maximum; ties go to the lowest index.
inline int argmax_row(const Matrix& m, Eigen::Index i) {
  int best = 0;
  for (Eigen::Index g = 1; g < m.cols(); ++g) {
    if (m(i, g) > m(i, best)) best = static_cast<int>(g);
  }
  return best;
}

/// Plug-in membership probabilities and MAP labels from fixed parameters.
inline void assign_map(const MixedDataset& ds, const Matrix& u, FitResult& r) {
  r.posterior_probs = component_log_densities(u, ds.categorical, r.params());
  if (auto bad = normalize_rows(r.posterior_probs)) {
    throw NumericError("MAP assignment: zero density for row " + std::to_string(*bad));
  }
  r.z_hat.resize(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i) r.z_hat[i] = argmax_row(r.posterior_probs, static_cast<Eigen::Index>(i));
}

/// Continuous block with censored cells at their posterior-mean imputations
/// (or at the bound when `bound_substitution` is set).
inline Matrix plugin_continuous(const MixedDataset& ds, const FitResult& r, bool bound_substitution = false) {
  if (bound_substitution) return ds.continuous;
  return current_continuous(ds, r.imputed_mean);
}

/// Post burn-in averages of an (already relabeled) trace plus the MAP
/// assignment under the averaged parameters.
inline FitResult summarize(const ChainTrace& trace, const MixedDataset& ds) {
  if (trace.states.empty()) throw ValidationError("summarize: trace holds no states");
  const auto T = static_cast<double>(trace.states.size());
  const ModelState& first = trace.states.front();
  FitResult r;
  r.structure = first.params.sigma.structure;
  r.G = static_cast<int>(first.G());
  r.draws = trace.states.size();
  r.tau_hat = Vector::Zero(first.params.tau.size());
  r.mu_hat = Matrix::Zero(first.params.mu.rows(), first.params.mu.cols());
  r.importance_by_cluster = Matrix::Zero(first.delta.rows(), first.delta.cols());
  r.imputed_mean.assign(first.imputed.size(), 0.0);
  for (const auto& th : first.params.theta) r.theta_hat.push_back(Matrix::Zero(th.rows(), th.cols()));
  Vector var_sum;
  std::vector<Matrix> mat_sum;
  if (r.structure == Structure::EEI) {
    var_sum = Vector::Zero(first.params.sigma.variances.size());
  } else {
    for (const auto& m : first.params.sigma.matrices) mat_sum.push_back(Matrix::Zero(m.rows(), m.cols()));
  }
  for (const auto& s : trace.states) {
    r.tau_hat += s.params.tau;
    r.mu_hat += s.params.mu;
    r.importance_by_cluster += s.delta.cast<double>();
    r.sigma2_delta0_mean += s.sigma2_delta0;
    for (std::size_t k = 0; k < s.imputed.size(); ++k) r.imputed_mean[k] += s.imputed[k];
    for (std::size_t c = 0; c < s.params.theta.size(); ++c) r.theta_hat[c] += s.params.theta[c];
    if (r.structure == Structure::EEI) {
      var_sum += s.params.sigma.variances;
    } else {
      for (std::size_t g = 0; g < mat_sum.size(); ++g) mat_sum[g] += s.params.sigma.matrices[g];
    }
  }
  r.tau_hat /= T;
  r.mu_hat /= T;
  r.importance_by_cluster /= T;
  r.sigma2_delta0_mean /= T;
  for (double& v : r.imputed_mean) v /= T;
  for (auto& th : r.theta_hat) th /= T;
  if (r.structure == Structure::EEI) {
    r.sigma_hat = CovarianceSet::eei(var_sum / T);
  } else {
    for (auto& m : mat_sum) m /= T;
    r.sigma_hat = r.structure == Structure::EEE ? CovarianceSet::eee(mat_sum.front())
                                                : CovarianceSet::vvv(std::move(mat_sum));
  }
  r.importance = r.importance_by_cluster.rowwise().mean();
  assign_map(ds, plugin_continuous(ds, r), r);
  return r;
}

/// Relabels cluster-indexed fields of a summary: new cluster j is old
/// cluster mapping[j].
inline FitResult permute_result(FitResult r, const Permutation& p) {
  const Permutation inv = p.inverse();
  Vector tau(r.tau_hat.size());
  for (std::size_t j = 0; j < p.size(); ++j) tau[static_cast<Eigen::Index>(j)] = r.tau_hat[p.mapping[j]];
  r.tau_hat = std::move(tau);
  r.mu_hat = permute_columns(r.mu_hat, p);
  if (r.sigma_hat.cluster_specific()) {
    std::vector<Matrix> m(p.size());
    for (std::size_t j = 0; j < p.size(); ++j) m[j] = r.sigma_hat.matrices[static_cast<std::size_t>(p.mapping[j])];
    r.sigma_hat.matrices = std::move(m);
  }
  for (auto& th : r.theta_hat) th = permute_rows(th, p);
  r.importance_by_cluster = permute_columns(r.importance_by_cluster, p);
  if (r.posterior_probs.size()) r.posterior_probs = permute_columns(r.posterior_probs, p);
  for (int& z : r.z_hat) z = inv.mapping[static_cast<std::size_t>(z)];
  return r;
}

/// Permutation of `labels` maximizing agreement with `reference`
/// (mapping[j] = label of `labels` that becomes j).
inline Permutation align_labels(const std::vector<int>& labels, const std::vector<int>& reference, int G) {
  if (labels.size() != reference.size()) throw ValidationError("align_labels: length mismatch");
  Matrix cost = Matrix::Zero(G, G);  // cost(j, a) = -#{i: ref = j, label = a}
  for (std::size_t i = 0; i < labels.size(); ++i) cost(reference[i], labels[i]) -= 1.0;
  return best_permutation(cost);
}

struct PooledResult {
  FitResult result;
  std::vector<std::size_t> included;
  std::vector<std::size_t> excluded;
  std::vector<Permutation> alignment;  // per input result, to the reference labels
  std::vector<double> ari_to_reference;
};

/// Aligns every result to results[reference] by hard labels, drops results
/// whose ARI against the reference is negative, and averages the rest.
inline PooledResult pool_chains(const std::vector<FitResult>& results, std::size_t reference,
                                const MixedDataset& ds, bool bound_substitution = false) {
  if (results.empty()) throw ValidationError("pool_chains: no results");
  if (reference >= results.size()) throw ValidationError("pool_chains: bad reference index");
  const FitResult& ref = results[reference];
  PooledResult out;
  std::vector<FitResult> aligned;
  for (std::size_t k = 0; k < results.size(); ++k) {
    const FitResult& r = results[k];
    if (r.G != ref.G || r.structure != ref.structure || r.z_hat.size() != ref.z_hat.size()) {
      throw ValidationError("pool_chains: results differ in G, structure or dataset");
    }
    const Permutation p = align_labels(r.z_hat, ref.z_hat, ref.G);
    out.alignment.push_back(p);
    const double ari = adjusted_rand_index(r.z_hat, ref.z_hat);
    out.ari_to_reference.push_back(ari);
    if (ari < 0.0) {
      warn("chain " + std::to_string(k) + " excluded from pooling: ARI against reference is " + std::to_string(ari));
      out.excluded.push_back(k);
      continue;
    }
    out.included.push_back(k);
    aligned.push_back(permute_result(r, p));
  }
  // Weighted by retained draws so pooling equals averaging all draws.
  double total = 0.0;
  for (const auto& a : aligned) total += static_cast<double>(std::max<std::size_t>(a.draws, 1));
  FitResult pooled = aligned.front();
  auto w = [&](const FitResult& a) { return static_cast<double>(std::max<std::size_t>(a.draws, 1)) / total; };
  pooled.tau_hat.setZero();
  pooled.mu_hat.setZero();
  pooled.importance_by_cluster.setZero();
  pooled.sigma2_delta0_mean = 0.0;
  std::fill(pooled.imputed_mean.begin(), pooled.imputed_mean.end(), 0.0);
  for (auto& th : pooled.theta_hat) th.setZero();
  if (pooled.structure == Structure::EEI) {
    pooled.sigma_hat.variances.setZero();
  } else {
    for (auto& m : pooled.sigma_hat.matrices) m.setZero();
  }
  pooled.draws = 0;
  for (const auto& a : aligned) {
    const double wk = w(a);
    pooled.draws += a.draws;
    pooled.tau_hat += wk * a.tau_hat;
    pooled.mu_hat += wk * a.mu_hat;
    pooled.importance_by_cluster += wk * a.importance_by_cluster;
    pooled.sigma2_delta0_mean += wk * a.sigma2_delta0_mean;
    for (std::size_t k = 0; k < a.imputed_mean.size(); ++k) pooled.imputed_mean[k] += wk * a.imputed_mean[k];
    for (std::size_t c = 0; c < a.theta_hat.size(); ++c) pooled.theta_hat[c] += wk * a.theta_hat[c];
    if (pooled.structure == Structure::EEI) {
      pooled.sigma_hat.variances += wk * a.sigma_hat.variances;
    } else {
      for (std::size_t g = 0; g < a.sigma_hat.matrices.size(); ++g) {
        pooled.sigma_hat.matrices[g] += wk * a.sigma_hat.matrices[g];
      }
    }
  }
  pooled.importance = pooled.importance_by_cluster.rowwise().mean();
  pooled.diagnostics.clear();
  pooled.diagnostics["chains_pooled"] = static_cast<double>(out.included.size());
  pooled.diagnostics["chains_excluded"] = static_cast<double>(out.excluded.size());
  assign_map(ds, plugin_continuous(ds, pooled, bound_substitution), pooled);
  out.result = std::move(pooled);
  return out;
}

}  // namespace bfmm
