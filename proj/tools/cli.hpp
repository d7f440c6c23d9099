#pragma once

// Command-line front end: simulate, fit, select, evaluate.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "bfmm/bfmm.hpp"

namespace bfmm::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kUsage = 2, kFailure = 3, kIo = 4 };

/// Options shared by fit and select. Every field can also come from a
/// key = value config file whose keys are the long flag names.
struct RunConfig {
  std::string data;
  std::string structure = "EEI";
  int G = 3;
  std::string grid = "1,2,3,4,5";
  std::string structures = "EEI,EEE,VVV";
  int chains = 4;
  int T = 500;
  std::optional<int> t_star;
  int k_percentile = 75;
  std::uint64_t seed = 1;
  unsigned threads = 0;
  std::string out = ".";
  bool save_traces = false;
  std::string likelihood = "posterior_mean";
  std::optional<double> omega;
  double spike_concentration = 1000.0;
  double a_delta0 = 2.0, b_delta0 = 0.005;
  double a_p1 = 1.0, b_p1 = 1.0, a_p2 = 1.0, b_p2 = 1.0;
  double a_tilde = 2.0, b_tilde = 1.0;
  bool paper_literal_a10 = false;
  int kmeans_resamples = 50;
  int kmeans_iterations = 100;

  /// Burn-in default: 200 at T = 500, otherwise T / 2.
  int burn_in() const { return t_star ? *t_star : (T == 500 ? 200 : T / 2); }

  FitOptions fit_options() const {
    FitOptions o;
    o.structure = parse_structure(structure);
    o.G = G;
    o.chains = chains;
    o.T = T;
    o.t_star = burn_in();
    o.seed = seed;
    o.k_percentile = k_percentile;
    o.threads = threads;
    o.keep_traces = save_traces;
    if (likelihood != "posterior_mean" && likelihood != "bound") {
      throw ValidationError("likelihood must be 'posterior_mean' or 'bound'");
    }
    o.likelihood_bound_substitution = likelihood == "bound";
    o.prior.omega = omega;
    o.prior.spike_concentration = spike_concentration;
    o.prior.a_delta0 = a_delta0;
    o.prior.b_delta0 = b_delta0;
    o.prior.a_p1 = a_p1;
    o.prior.b_p1 = b_p1;
    o.prior.a_p2 = a_p2;
    o.prior.b_p2 = b_p2;
    o.prior.a_tilde = a_tilde;
    o.prior.b_tilde = b_tilde;
    o.prior.paper_literal_a10 = paper_literal_a10;
    o.kmeans.resamples = kmeans_resamples;
    o.kmeans.max_iterations = kmeans_iterations;
    return o;
  }
};

namespace detail {

inline void add_run_options(CLI::App& app, RunConfig& c) {
  app.add_option("--data", c.data, "dataset spec file")->required();
  app.add_option("--chains", c.chains, "independent chains")->check(CLI::Range(1, 64));
  app.add_option("--T", c.T, "total Gibbs iterations")->check(CLI::PositiveNumber);
  app.add_option("--t_star", c.t_star, "burn-in iterations (default 200 when T = 500, else T/2)");
  app.add_option("--k_percentile", c.k_percentile, "percentile k of the omega rule")->check(CLI::Range(60, 90));
  app.add_option("--seed", c.seed, "root seed");
  app.add_option("--threads", c.threads, "worker threads (0: all cores)");
  app.add_option("--out", c.out, "output directory");
  app.add_option("--likelihood", c.likelihood, "censored cells in likelihoods: posterior_mean or bound")
      ->check(CLI::IsMember({"posterior_mean", "bound"}));
  app.add_option("--omega", c.omega, "fixed slab/spike variance ratio");
  app.add_option("--spike_concentration", c.spike_concentration, "C in the categorical spike prior");
  app.add_option("--a_delta0", c.a_delta0);
  app.add_option("--b_delta0", c.b_delta0);
  app.add_option("--a_p1", c.a_p1);
  app.add_option("--b_p1", c.b_p1);
  app.add_option("--a_p2", c.a_p2);
  app.add_option("--b_p2", c.b_p2);
  app.add_option("--a_tilde", c.a_tilde);
  app.add_option("--b_tilde", c.b_tilde);
  app.add_option("--paper_literal_a10", c.paper_literal_a10, "drop the 1/2 on the spike-variance rate");
  app.add_option("--kmeans_resamples", c.kmeans_resamples)->check(CLI::PositiveNumber);
  app.add_option("--kmeans_iterations", c.kmeans_iterations)->check(CLI::PositiveNumber);
  app.add_option("--config", "key = value file with defaults for any long option");
}

/// Expands `--config FILE` into `--key=value` arguments placed right after
/// the subcommand, so explicit flags given later take precedence.
inline std::vector<std::string> expand_config(std::vector<std::string> args) {
  for (std::size_t k = 1; k < args.size(); ++k) {
    std::string path;
    if (args[k] == "--config" && k + 1 < args.size()) {
      path = args[k + 1];
    } else if (args[k].rfind("--config=", 0) == 0) {
      path = args[k].substr(9);
    } else {
      continue;
    }
    const auto kv = read_key_values(path);
    std::vector<std::string> injected;
    for (const auto& [key, value] : kv) injected.push_back("--" + key + "=" + value);
    const std::size_t at = std::min<std::size_t>(2, args.size());
    args.insert(args.begin() + static_cast<std::ptrdiff_t>(at), injected.begin(), injected.end());
    break;
  }
  return args;
}

inline std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& tok : bfmm::detail::split(s, ',')) {
    int v = 0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size()) {
      throw ValidationError("malformed integer list '" + s + "'");
    }
    out.push_back(v);
  }
  return out;
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream f(p);
  if (!f) throw IoError("cannot write " + p.string());
  return f;
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec || !fs::is_directory(p)) throw IoError("cannot create output directory " + p.string());
}

inline void write_manifest_common(std::ostream& m, const RunConfig& c, const MixedDataset& ds) {
  m << "data = " << c.data << '\n';
  m << "dataset_hash = " << hex64(dataset_hash(ds)) << '\n';
  m << "seed = " << c.seed << '\n';
  m << "chains = " << c.chains << '\n';
  m << "T = " << c.T << '\n';
  m << "t_star = " << c.burn_in() << '\n';
  m << "k_percentile = " << c.k_percentile << '\n';
  m << "likelihood = " << c.likelihood << '\n';
  if (c.omega) m << "omega = " << fmt(*c.omega) << '\n';
  m << "spike_concentration = " << fmt(c.spike_concentration) << '\n';
  m << "a_delta0 = " << fmt(c.a_delta0) << '\n' << "b_delta0 = " << fmt(c.b_delta0) << '\n';
  m << "a_p1 = " << fmt(c.a_p1) << '\n' << "b_p1 = " << fmt(c.b_p1) << '\n';
  m << "a_p2 = " << fmt(c.a_p2) << '\n' << "b_p2 = " << fmt(c.b_p2) << '\n';
  m << "a_tilde = " << fmt(c.a_tilde) << '\n' << "b_tilde = " << fmt(c.b_tilde) << '\n';
  m << "paper_literal_a10 = " << (c.paper_literal_a10 ? "true" : "false") << '\n';
  m << "kmeans_resamples = " << c.kmeans_resamples << '\n';
  m << "kmeans_iterations = " << c.kmeans_iterations << '\n';
}

inline void write_matrix(std::ostream& o, const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) o << (j ? "," : "") << fmt(m(i, j));
    o << '\n';
  }
}

inline int cmd_simulate(const std::string& scenario, int censor, int n, std::uint64_t seed,
                        const std::string& out_dir, std::ostream& out) {
  ScenarioSpec spec;
  spec.tag = parse_scenario(scenario);
  spec.censor_level = censor;
  spec.n = n;
  spec.seed = seed;
  const SimulatedData sim = generate(spec);
  const fs::path dir(out_dir);
  ensure_dir(dir);
  {
    auto f = open_out(dir / "dataset.csv");
    emit_csv(sim.data, f);
  }
  {
    auto f = open_out(dir / "truth.csv");
    f << "row,cluster\n";
    for (std::size_t i = 0; i < sim.truth.labels.size(); ++i) f << i + 1 << ',' << sim.truth.labels[i] + 1 << '\n';
  }
  {
    auto f = open_out(dir / "manifest.txt");
    emit_ingest_spec(sim.data, "dataset.csv", f);
    f << "truth = truth.csv\n";
    f << "scenario = " << to_string(spec.tag) << '\n';
    f << "censor = " << censor << '\n';
    f << "n = " << n << '\n';
    f << "seed = " << seed << '\n';
    for (VariableRole role : {VariableRole::dominant, VariableRole::weak, VariableRole::noise}) {
      std::string names;
      for (std::size_t k = 0; k < sim.truth.roles.size(); ++k) {
        if (sim.truth.roles[k] != role) continue;
        if (!names.empty()) names += ',';
        names += "X" + std::to_string(k + 1);
      }
      f << to_string(role) << " = " << names << '\n';
    }
  }
  out << "wrote " << (dir / "dataset.csv").string() << ", " << (dir / "truth.csv").string() << ", "
      << (dir / "manifest.txt").string() << '\n';
  return kOk;
}

inline void write_fit_outputs(const RunConfig& c, const MixedDataset& ds, const FitReport& rep) {
  const fs::path dir(c.out);
  ensure_dir(dir);
  const FitResult& r = rep.result();
  {
    auto f = open_out(dir / "assignments.csv");
    f << "row,cluster";
    for (int g = 0; g < r.G; ++g) f << ",p" << g + 1;
    f << '\n';
    for (std::size_t i = 0; i < ds.n(); ++i) {
      f << i + 1 << ',' << r.z_hat[i] + 1;
      for (int g = 0; g < r.G; ++g) f << ',' << fmt(r.posterior_probs(static_cast<Eigen::Index>(i), g));
      f << '\n';
    }
  }
  {
    auto f = open_out(dir / "importance.csv");
    f << "variable,importance\n";
    for (std::size_t m = 0; m < ds.M(); ++m) f << ds.column_names[m] << ',' << fmt(r.importance[static_cast<Eigen::Index>(m)]) << '\n';
  }
  {
    auto f = open_out(dir / "parameters.txt");
    f << "# posterior means; continuous parameters in standardized units\n";
    f << "structure = " << to_string(r.structure) << "\nG = " << r.G << "\n\n[tau]\n";
    write_matrix(f, r.tau_hat.transpose());
    f << "\n[mu] rows = continuous variables, columns = clusters\n";
    write_matrix(f, r.mu_hat);
    if (r.structure == Structure::EEI) {
      f << "\n[variances]\n";
      write_matrix(f, r.sigma_hat.variances.transpose());
    } else {
      for (std::size_t g = 0; g < r.sigma_hat.matrices.size(); ++g) {
        f << "\n[sigma" << (r.structure == Structure::VVV ? " cluster " + std::to_string(g + 1) : std::string()) << "]\n";
        write_matrix(f, r.sigma_hat.matrices[g]);
      }
    }
    for (std::size_t cc = 0; cc < r.theta_hat.size(); ++cc) {
      f << "\n[theta " << ds.column_names[ds.q() + cc] << "] levels:";
      for (const auto& name : ds.level_names[cc]) f << ' ' << name;
      f << '\n';
      write_matrix(f, r.theta_hat[cc]);
    }
  }
  {
    auto f = open_out(dir / "diagnostics.txt");
    f << "structure = " << to_string(rep.options.structure) << '\n';
    f << "G = " << rep.options.G << '\n';
    f << "omega = " << fmt(rep.hyper.omega) << '\n';
    f << "mpsrf = " << (rep.convergence ? fmt(rep.convergence->mpsrf) : std::string("NA")) << '\n';
    f << "loglik_observed = " << fmt(rep.score.loglik_observed) << '\n';
    f << "loglik_complete = " << fmt(rep.score.loglik_complete) << '\n';
    f << "dof = " << rep.score.dof << '\n';
    f << "bic = " << fmt(rep.score.bic) << '\n';
    f << "icl = " << fmt(rep.score.icl) << '\n';
    f << "chain_failures = " << rep.failures() << '\n';
    for (const auto& s : rep.chains) {
      f << "chain " << s.chain_id << ": " << (s.failed ? "failed" : "ok");
      if (s.failed) f << " at iteration " << s.failure_iteration << ": " << s.cause;
      else f << ", relabel passes " << s.relabel_passes;
      f << '\n';
    }
    for (std::size_t k : rep.pooled->excluded) f << "chain " << rep.per_chain_id[k] << " excluded from pooling\n";
  }
  {
    auto f = open_out(dir / "manifest.txt");
    f << "command = fit\nstructure = " << to_string(rep.options.structure) << "\nG = " << rep.options.G << '\n';
    write_manifest_common(f, c, ds);
  }
  if (c.save_traces) {
    for (std::size_t k = 0; k < rep.traces.size(); ++k) {
      auto f = open_out(dir / ("trace_chain" + std::to_string(rep.per_chain_id[k]) + ".csv"));
      write_trace_csv(rep.traces[k], f);
    }
  }
}

inline MixedDataset load_dataset(const std::string& spec_path) {
  return ingest(load_ingest_spec(spec_path));
}

inline int cmd_fit(const RunConfig& c, std::ostream& out) {
  const MixedDataset ds = load_dataset(c.data);
  const FitOptions o = c.fit_options();
  const FitReport rep = fit_model(ds, o);
  write_fit_outputs(c, ds, rep);
  out << "fit " << to_string(o.structure) << " G=" << o.G << ": BIC " << fmt(rep.score.bic) << ", ICL "
      << fmt(rep.score.icl) << ", MPSRF " << (rep.convergence ? fmt(rep.convergence->mpsrf) : std::string("NA"))
      << ", failed chains " << rep.failures() << "/" << o.chains << '\n';
  return kOk;
}

inline int cmd_select(const RunConfig& c, std::ostream& out) {
  const std::vector<int> grid = parse_int_list(c.grid);
  std::vector<Structure> structures;
  for (const auto& s : bfmm::detail::split(c.structures, ',')) structures.push_back(parse_structure(s));
  for (int G : grid) {
    if (G < 1 || G > kMaxClusters) throw ValidationError("grid values must lie in [1, 12]");
  }
  const MixedDataset ds = load_dataset(c.data);
  const auto table = model_select(ds, grid, structures, c.fit_options());
  const fs::path dir(c.out);
  ensure_dir(dir);
  auto f = open_out(dir / "selection.csv");
  f << "rank,G,structure,bic,icl,loglik_observed,dof,failed,chain_failures,cause\n";
  for (std::size_t k = 0; k < table.size(); ++k) {
    const auto& e = table[k];
    f << k + 1 << ',' << e.G << ',' << to_string(e.structure) << ',';
    if (e.score) {
      f << fmt(e.score->bic) << ',' << fmt(e.score->icl) << ',' << fmt(e.score->loglik_observed) << ',' << e.score->dof;
    } else {
      f << "NA,NA,NA,NA";
    }
    std::string cause = e.cause;
    for (char& ch : cause) {
      if (ch == ',' || ch == '\n') ch = ';';
    }
    f << ',' << (e.failed ? 1 : 0) << ',' << e.chain_failures << ',' << cause << '\n';
  }
  {
    auto m = open_out(dir / "manifest.txt");
    m << "command = select\ngrid = " << c.grid << "\nstructures = " << c.structures << '\n';
    write_manifest_common(m, c, ds);
  }
  if (!table.empty() && !table.front().failed) {
    out << "best by ICL: " << to_string(table.front().structure) << " G=" << table.front().G << '\n';
  }
  bool all_failed = std::all_of(table.begin(), table.end(), [](const SelectionEntry& e) { return e.failed; });
  return all_failed ? kFailure : kOk;
}

/// Reads the `cluster` column of a CSV with a header row.
inline std::vector<int> read_cluster_column(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty file");
  const auto header = bfmm::detail::split(line, ',');
  const auto it = std::find(header.begin(), header.end(), "cluster");
  if (it == header.end()) throw ParseError(path + ": no 'cluster' column");
  const auto col = static_cast<std::size_t>(it - header.begin());
  std::vector<int> labels;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (bfmm::detail::trim(line).empty()) continue;
    ++row;
    const auto cells = bfmm::detail::split(line, ',');
    int v = 0;
    if (col >= cells.size()) throw ParseError(path + ": row " + std::to_string(row) + " is short");
    const auto& tok = cells[col];
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size()) {
      throw ParseError(path + ": row " + std::to_string(row) + ": bad cluster label '" + tok + "'");
    }
    labels.push_back(v);
  }
  return labels;
}

inline int cmd_evaluate(const std::string& assignments, const std::string& truth, std::ostream& out) {
  const auto a = read_cluster_column(assignments);
  const auto b = read_cluster_column(truth);
  if (a.size() != b.size()) {
    throw ValidationError("row counts differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  out << "ARI = " << fmt(adjusted_rand_index(a, b)) << '\n';
  const Eigen::MatrixXd t = contingency_table(a, b);
  std::vector<int> la(a.begin(), a.end()), lb(b.begin(), b.end());
  std::sort(la.begin(), la.end());
  la.erase(std::unique(la.begin(), la.end()), la.end());
  std::sort(lb.begin(), lb.end());
  lb.erase(std::unique(lb.begin(), lb.end()), lb.end());
  out << "confusion (rows = assignments, columns = truth)\n";
  out << "cluster";
  for (int v : lb) out << ',' << v;
  out << '\n';
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    out << la[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < t.cols(); ++j) out << ',' << static_cast<long long>(t(i, j));
    out << '\n';
  }
  out << "sizes (assignments)";
  for (Eigen::Index i = 0; i < t.rows(); ++i) out << ' ' << la[static_cast<std::size_t>(i)] << ':' << static_cast<long long>(t.row(i).sum());
  out << "\nsizes (truth)";
  for (Eigen::Index j = 0; j < t.cols(); ++j) out << ' ' << lb[static_cast<std::size_t>(j)] << ':' << static_cast<long long>(t.col(j).sum());
  out << '\n';
  return kOk;
}

}  // namespace detail

/// Entry point; returns the process exit code.
inline int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  try {
    args = detail::expand_config(raw_args);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  }
  CLI::App app{"Bayesian finite mixture clustering of mixed continuous/categorical data"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::string scenario = "eei", sim_out = ".";
  int censor = 0, n = 1000;
  std::uint64_t sim_seed = 1;
  auto* sim = app.add_subcommand("simulate", "generate a simulation scenario");
  sim->add_option("--scenario", scenario, "eei, eee or vvv")->check(CLI::IsMember({"eei", "eee", "vvv"}, CLI::ignore_case));
  sim->add_option("--censor", censor, "censoring level: 0, 20 or 40")->check(CLI::IsMember({0, 20, 40}));
  sim->add_option("--n", n, "observations")->check(CLI::PositiveNumber);
  sim->add_option("--seed", sim_seed, "seed");
  sim->add_option("--out", sim_out, "output directory");

  RunConfig fit_cfg;
  auto* fit = app.add_subcommand("fit", "fit one model with several chains");
  detail::add_run_options(*fit, fit_cfg);
  fit->add_option("--structure", fit_cfg.structure, "EEI, EEE or VVV")->check(CLI::IsMember({"EEI", "EEE", "VVV"}, CLI::ignore_case));
  fit->add_option("--G", fit_cfg.G, "number of clusters")->check(CLI::Range(1, kMaxClusters));
  fit->add_flag("--save_traces", fit_cfg.save_traces, "write one trace CSV per chain");

  RunConfig sel_cfg;
  auto* sel = app.add_subcommand("select", "rank a grid of models by ICL then BIC");
  detail::add_run_options(*sel, sel_cfg);
  sel->add_option("--grid", sel_cfg.grid, "comma-separated G values");
  sel->add_option("--structures", sel_cfg.structures, "comma-separated structures");

  std::string assignments, truth;
  auto* ev = app.add_subcommand("evaluate", "compare assignments with reference labels");
  ev->add_option("--assignments", assignments)->required();
  ev->add_option("--truth", truth)->required();

  std::vector<std::string> cli_args(args.rbegin(), args.rend());
  if (!cli_args.empty()) cli_args.pop_back();  // program name
  try {
    app.parse(cli_args);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    const int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? kOk : kUsage;
  }
  try {
    if (*sim) return detail::cmd_simulate(scenario, censor, n, sim_seed, sim_out, out);
    if (*fit) return detail::cmd_fit(fit_cfg, out);
    if (*sel) return detail::cmd_select(sel_cfg, out);
    if (*ev) return detail::cmd_evaluate(assignments, truth, out);
  } catch (const AllChainsFailed& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}

inline int run(int argc, char** argv) {
  return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}

}  // namespace bfmm::cli
