#pragma once

// Multi-chain fitting (init, sampling, relabeling, pooling, scoring) and
// model selection over a grid of (G, structure).

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "bfmm/errors.hpp"
#include "bfmm/evaluation.hpp"
#include "bfmm/gibbs.hpp"
#include "bfmm/model.hpp"
#include "bfmm/relabel.hpp"
#include "bfmm/summary.hpp"

namespace bfmm {

/// Raised when every chain of a fit failed.
class AllChainsFailed : public Error {
 public:
  using Error::Error;
};

struct FitOptions {
  Structure structure = Structure::EEI;
  int G = 3;
  int chains = 4;
  int T = 500;
  int t_star = 200;
  std::uint64_t seed = 1;
  int k_percentile = 75;
  PriorOptions prior;
  KMeansOptions kmeans;
  unsigned threads = 0;             // 0: hardware concurrency
  bool likelihood_bound_substitution = false;
  bool keep_traces = false;         // keep relabeled traces in the report
};

struct ChainStatus {
  int chain_id = 0;
  bool failed = false;
  int failure_iteration = 0;
  std::string cause;
  int relabel_passes = 0;
  double relabel_objective = 0.0;
};

struct FitReport {
  FitOptions options;
  Hyperparameters hyper;
  std::vector<ChainStatus> chains;
  std::vector<FitResult> per_chain;        // successful chains, chain order
  std::vector<int> per_chain_id;
  int reference_chain = 0;
  std::optional<PooledResult> pooled;
  std::optional<ConvergenceReport> convergence;
  ModelScore score;
  std::vector<ChainTrace> traces;          // relabeled, aligned; only with keep_traces

  std::size_t failures() const {
    return static_cast<std::size_t>(std::count_if(chains.begin(), chains.end(),
                                                  [](const ChainStatus& c) { return c.failed; }));
  }
  const FitResult& result() const { return pooled->result; }
};

/// Monitored vector for MPSRF: mu entries, log variances (EEI) or log
/// diagonals of every covariance matrix, and logit tau (omitted when G = 1).
inline Vector monitored_parameters(const ModelState& s) {
  const auto& p = s.params;
  std::vector<double> v(p.mu.data(), p.mu.data() + p.mu.size());
  if (p.sigma.structure == Structure::EEI) {
    for (Eigen::Index m = 0; m < p.sigma.variances.size(); ++m) v.push_back(std::log(p.sigma.variances[m]));
  } else {
    for (const auto& mat : p.sigma.matrices) {
      for (Eigen::Index m = 0; m < mat.rows(); ++m) v.push_back(std::log(mat(m, m)));
    }
  }
  if (p.G() > 1) {
    for (Eigen::Index g = 0; g < p.tau.size(); ++g) {
      const double t = std::clamp(p.tau[g], 1e-300, 1.0 - 1e-16);
      v.push_back(std::log(t) - std::log1p(-t));
    }
  }
  return Eigen::Map<Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Matrix monitored_trace(const ChainTrace& trace) {
  if (trace.states.empty()) return {};
  const Vector first = monitored_parameters(trace.states.front());
  Matrix out(static_cast<Eigen::Index>(trace.states.size()), first.size());
  for (std::size_t t = 0; t < trace.states.size(); ++t) {
    out.row(static_cast<Eigen::Index>(t)) = monitored_parameters(trace.states[t]).transpose();
  }
  return out;
}

/// Runs fn(0..count-1) on up to `threads` workers.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < count; k = next++) fn(k);
    });
  }
  for (auto& t : pool) t.join();
}

/// Initialization stream of chain c; distinct from its sampling streams.
inline RngStream init_stream(std::uint64_t seed, int chain_id) {
  return RngStream(seed).derive(0x1000 + static_cast<std::uint64_t>(chain_id));
}

/// Fits one (G, structure) model with several independent chains. Each chain
/// gets its own bootstrap K-means start; hyperparameters come from chain 0's
/// start so every chain samples the same posterior.
inline FitReport fit_model(const MixedDataset& ds, const FitOptions& opt) {
  if (opt.chains < 1) throw ValidationError("at least one chain is required");
  if (opt.T < 1 || opt.t_star < 0 || opt.t_star >= opt.T) throw ValidationError("require 0 <= t_star < T");
  FitReport rep;
  rep.options = opt;
  const auto C = static_cast<std::size_t>(opt.chains);
  std::vector<InitResult> inits(C);
  for (std::size_t c = 0; c < C; ++c) {
    RngStream rng = init_stream(opt.seed, static_cast<int>(c));
    inits[c] = bootstrap_kmeans_init(ds, opt.G, opt.structure, opt.kmeans, rng);
  }
  rep.hyper = default_hyperparameters(ds, opt.G, opt.k_percentile, inits[0], opt.prior);

  std::vector<ChainOutcome> outcomes(C);
  parallel_for(C, opt.threads, [&](std::size_t c) {
    ChainConfig cfg;
    cfg.T = opt.T;
    cfg.t_star = opt.t_star;
    cfg.seed = opt.seed;
    cfg.chain_id = static_cast<int>(c);
    cfg.store_traces = true;
    outcomes[c] = run_chain(ds, rep.hyper, initial_state(ds, inits[c], rep.hyper), cfg);
  });

  std::vector<ChainTrace> relabeled;
  for (std::size_t c = 0; c < C; ++c) {
    ChainStatus st;
    st.chain_id = static_cast<int>(c);
    if (auto* f = std::get_if<ChainFailure>(&outcomes[c])) {
      st.failed = true;
      st.failure_iteration = f->iteration;
      st.cause = f->cause;
      rep.chains.push_back(st);
      continue;
    }
    auto& trace = std::get<ChainTrace>(outcomes[c]);
    const RelabelResult rl = kl_relabel(trace.membership);
    st.relabel_passes = rl.passes;
    st.relabel_objective = rl.objective.back();
    ChainTrace t = apply_relabel(std::move(trace), rl.permutations);
    try {
      rep.per_chain.push_back(summarize(t, ds));
    } catch (const Error& e) {
      st.failed = true;
      st.cause = std::string("summary: ") + e.what();
      rep.chains.push_back(st);
      continue;
    }
    rep.per_chain_id.push_back(static_cast<int>(c));
    relabeled.push_back(std::move(t));
    rep.chains.push_back(st);
  }
  if (rep.per_chain.empty()) {
    std::string causes;
    for (const auto& s : rep.chains) causes += "\n  chain " + std::to_string(s.chain_id) + ": " + s.cause;
    throw AllChainsFailed("all chains failed:" + causes);
  }

  // Reference for alignment: the chain whose own summary fits best.
  std::size_t reference = 0;
  double best_ll = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < rep.per_chain.size(); ++k) {
    const FitResult& r = rep.per_chain[k];
    const double ll = observed_loglik(plugin_continuous(ds, r, opt.likelihood_bound_substitution),
                                      ds.categorical, r.params());
    rep.per_chain[k].diagnostics["loglik_observed"] = ll;
    if (ll > best_ll) {
      best_ll = ll;
      reference = k;
    }
  }
  rep.reference_chain = rep.per_chain_id[reference];
  rep.pooled = pool_chains(rep.per_chain, reference, ds, opt.likelihood_bound_substitution);

  // Align each chain's relabeled trace to the reference chain for MPSRF.
  std::vector<Matrix> monitored;
  for (std::size_t k = 0; k < relabeled.size(); ++k) {
    const Permutation& p = rep.pooled->alignment[k];
    if (!p.is_identity()) {
      relabeled[k] = apply_relabel(std::move(relabeled[k]), std::vector<Permutation>(relabeled[k].size(), p));
    }
    if (std::find(rep.pooled->included.begin(), rep.pooled->included.end(), k) != rep.pooled->included.end()) {
      monitored.push_back(monitored_trace(relabeled[k]));
    }
  }
  if (monitored.size() >= 2 && monitored.front().rows() >= 2) {
    try {
      rep.convergence = mpsrf(monitored);
    } catch (const Error& e) {
      warn(std::string("MPSRF unavailable: ") + e.what());
    }
  }

  const FitResult& r = rep.pooled->result;
  const Matrix u = plugin_continuous(ds, r, opt.likelihood_bound_substitution);
  const MixtureParameters params = r.params();
  const double llo = observed_loglik(u, ds.categorical, params);
  const double llc = complete_loglik(u, ds.categorical, params, r.z_hat);
  rep.score = score_model(opt.structure, opt.G, llo, llc,
                          degrees_of_freedom(opt.structure, opt.G, static_cast<int>(ds.q()), ds.levels),
                          ds.n(), r.posterior_probs);
  if (opt.keep_traces) rep.traces = std::move(relabeled);
  return rep;
}

struct SelectionEntry {
  int G = 1;
  Structure structure = Structure::EEI;
  std::optional<ModelScore> score;
  bool failed = false;
  std::string cause;
  std::size_t chain_failures = 0;
};

/// Fits every (G, structure) cell and ranks by ICL, then BIC (lower is
/// better). Failed cells are kept, flagged, and ranked last.
inline std::vector<SelectionEntry> model_select(const MixedDataset& ds, const std::vector<int>& grid,
                                                const std::vector<Structure>& structures,
                                                const FitOptions& base) {
  if (grid.empty() || structures.empty()) throw ValidationError("model selection grid is empty");
  std::vector<SelectionEntry> out;
  for (Structure s : structures) {
    for (int G : grid) {
      SelectionEntry e;
      e.G = G;
      e.structure = s;
      FitOptions o = base;
      o.G = G;
      o.structure = s;
      try {
        FitReport rep = fit_model(ds, o);
        e.score = rep.score;
        e.chain_failures = rep.failures();
      } catch (const Error& err) {
        e.failed = true;
        e.cause = err.what();
      }
      out.push_back(std::move(e));
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const SelectionEntry& a, const SelectionEntry& b) {
    if (a.failed != b.failed) return !a.failed;
    if (a.failed) return false;
    if (a.score->icl != b.score->icl) return a.score->icl < b.score->icl;
    return a.score->bic < b.score->bic;
  });
  return out;
}

}  // namespace bfmm
