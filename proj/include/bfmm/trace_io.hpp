#pragma once

// Text output helpers: 6-significant-digit formatting, dataset hashing and a
// columnar dump of retained chain iterations.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bfmm/data.hpp"
#include "bfmm/gibbs.hpp"

namespace bfmm {

/// Number with 6 significant digits.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

/// FNV-1a over the dataset's canonical CSV rendering.
inline std::uint64_t dataset_hash(const MixedDataset& ds) {
  std::ostringstream os;
  emit_csv(ds, os);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// One row per retained iteration: tau, mu, covariance entries (variances for
/// EEI, upper triangles otherwise), theta, Delta and the spike variance.
inline void write_trace_csv(const ChainTrace& trace, std::ostream& out) {
  if (trace.states.empty()) {
    out << "iteration\n";
    return;
  }
  const ModelState& s0 = trace.states.front();
  const auto G = static_cast<Eigen::Index>(s0.G());
  const auto q = s0.params.mu.rows();
  std::vector<std::string> cols{"iteration"};
  for (Eigen::Index g = 0; g < G; ++g) cols.push_back("tau_" + std::to_string(g + 1));
  for (Eigen::Index g = 0; g < G; ++g) {
    for (Eigen::Index m = 0; m < q; ++m) cols.push_back("mu_" + std::to_string(m + 1) + "_" + std::to_string(g + 1));
  }
  const auto& sig = s0.params.sigma;
  if (sig.structure == Structure::EEI) {
    for (Eigen::Index m = 0; m < q; ++m) cols.push_back("var_" + std::to_string(m + 1));
  } else {
    for (std::size_t k = 0; k < sig.matrices.size(); ++k) {
      for (Eigen::Index a = 0; a < q; ++a) {
        for (Eigen::Index b = a; b < q; ++b) {
          cols.push_back("sigma_" + std::to_string(k + 1) + "_" + std::to_string(a + 1) + "_" + std::to_string(b + 1));
        }
      }
    }
  }
  for (std::size_t c = 0; c < s0.params.theta.size(); ++c) {
    for (Eigen::Index g = 0; g < G; ++g) {
      for (Eigen::Index l = 0; l < s0.params.theta[c].cols(); ++l) {
        cols.push_back("theta_" + std::to_string(c + 1) + "_" + std::to_string(g + 1) + "_" + std::to_string(l + 1));
      }
    }
  }
  for (Eigen::Index m = 0; m < s0.delta.rows(); ++m) {
    for (Eigen::Index g = 0; g < G; ++g) cols.push_back("delta_" + std::to_string(m + 1) + "_" + std::to_string(g + 1));
  }
  cols.push_back("sigma2_delta0");
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  for (std::size_t t = 0; t < trace.states.size(); ++t) {
    const ModelState& s = trace.states[t];
    out << trace.iterations[t];
    for (Eigen::Index g = 0; g < G; ++g) out << ',' << fmt(s.params.tau[g]);
    for (Eigen::Index g = 0; g < G; ++g) {
      for (Eigen::Index m = 0; m < q; ++m) out << ',' << fmt(s.params.mu(m, g));
    }
    if (s.params.sigma.structure == Structure::EEI) {
      for (Eigen::Index m = 0; m < q; ++m) out << ',' << fmt(s.params.sigma.variances[m]);
    } else {
      for (const auto& mat : s.params.sigma.matrices) {
        for (Eigen::Index a = 0; a < q; ++a) {
          for (Eigen::Index b = a; b < q; ++b) out << ',' << fmt(mat(a, b));
        }
      }
    }
    for (const auto& th : s.params.theta) {
      for (Eigen::Index g = 0; g < G; ++g) {
        for (Eigen::Index l = 0; l < th.cols(); ++l) out << ',' << fmt(th(g, l));
      }
    }
    for (Eigen::Index m = 0; m < s.delta.rows(); ++m) {
      for (Eigen::Index g = 0; g < G; ++g) out << ',' << s.delta(m, g);
    }
    out << ',' << fmt(s.sigma2_delta0) << '\n';
  }
}

}  // namespace bfmm
