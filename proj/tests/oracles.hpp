#pragma once

// Closed-form reference values computed independently of the library code
// paths they check, plus a sample-moment accumulator with Monte-Carlo
// standard errors.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

namespace oracle {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Moments {
  double mean = 0.0;
  double variance = 0.0;
};

/// Sample mean/variance with standard errors of both.
class Sample {
 public:
  void add(double x) { xs_.push_back(x); }
  std::size_t size() const { return xs_.size(); }

  double mean() const {
    double s = 0.0;
    for (double x : xs_) s += x;
    return s / static_cast<double>(xs_.size());
  }
  double variance() const {
    const double m = mean();
    double s = 0.0;
    for (double x : xs_) s += (x - m) * (x - m);
    return s / static_cast<double>(xs_.size() - 1);
  }
  double se_mean() const { return std::sqrt(variance() / static_cast<double>(xs_.size())); }
  // Asymptotic sd of the sample variance: sqrt((m4 - s^4) / N).
  double se_variance() const {
    const double m = mean();
    double m2 = 0.0, m4 = 0.0;
    for (double x : xs_) {
      const double d = (x - m) * (x - m);
      m2 += d;
      m4 += d * d;
    }
    const auto n = static_cast<double>(xs_.size());
    m2 /= n;
    m4 /= n;
    return std::sqrt(std::max(m4 - m2 * m2, 0.0) / n);
  }

 private:
  std::vector<double> xs_;
};

/// Outcome of comparing a sample to analytic moments.
struct Check {
  std::string name;
  double sample_mean = 0.0, analytic_mean = 0.0, se_mean = 0.0;
  double sample_var = 0.0, analytic_var = 0.0, se_var = 0.0;
  double z_mean = 0.0, z_var = 0.0;
  bool pass = false;
};

inline Check compare(const std::string& name, const Sample& s, Moments a, double k = 4.0) {
  Check c;
  c.name = name;
  c.sample_mean = s.mean();
  c.analytic_mean = a.mean;
  c.se_mean = s.se_mean();
  c.sample_var = s.variance();
  c.analytic_var = a.variance;
  c.se_var = s.se_variance();
  auto z = [](double diff, double se) {
    if (se > 0.0) return std::abs(diff) / se;
    return diff == 0.0 ? 0.0 : 1e300;
  };
  // A degenerate sample (se = 0) must match exactly; tolerate round-off.
  c.z_mean = std::abs(c.sample_mean - a.mean) < 1e-12 ? 0.0 : z(c.sample_mean - a.mean, c.se_mean);
  c.z_var = std::abs(c.sample_var - a.variance) < 1e-12 ? 0.0 : z(c.sample_var - a.variance, c.se_var);
  c.pass = c.z_mean <= k && c.z_var <= k;
  return c;
}

// ---------------------------------------------------------------------------
// Distributions

inline double phi(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
inline double upper_tail(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

inline Moments inverse_gamma(double a, double b) {
  return {b / (a - 1.0), b * b / ((a - 1.0) * (a - 1.0) * (a - 2.0))};
}

inline Moments beta(double a, double b) {
  const double s = a + b;
  return {a / s, a * b / (s * s * (s + 1.0))};
}

inline Moments dirichlet(const Vector& alpha, Eigen::Index k) {
  const double a0 = alpha.sum();
  const double m = alpha[k] / a0;
  return {m, m * (1.0 - m) / (a0 + 1.0)};
}

/// Entry (i, j) of IW(nu, Psi) with E = Psi / (nu - d - 1).
inline Moments inverse_wishart(double nu, const Matrix& psi, Eigen::Index i, Eigen::Index j) {
  const double d = static_cast<double>(psi.rows());
  const double a = nu - d;
  const double mean = psi(i, j) / (a - 1.0);
  const double var = ((a + 1.0) * psi(i, j) * psi(i, j) + (a - 1.0) * psi(i, i) * psi(j, j)) /
                     (a * (a - 1.0) * (a - 1.0) * (a - 3.0));
  return {mean, var};
}

/// N(mu, sigma^2) conditioned on x > bound (above = true) or x < bound.
inline Moments truncated_normal(double mu, double sigma, double bound, bool above) {
  if (above) {
    const double a = (bound - mu) / sigma;
    const double lam = phi(a) / upper_tail(a);
    return {mu + sigma * lam, sigma * sigma * (1.0 + a * lam - lam * lam)};
  }
  const double b = (bound - mu) / sigma;
  const double lam = phi(b) / upper_tail(-b);
  return {mu - sigma * lam, sigma * sigma * (1.0 - b * lam - lam * lam)};
}

inline Moments bernoulli(double p) { return {p, p * (1.0 - p)}; }

inline double normal_pdf(double x, double mean, double var) {
  return std::exp(-0.5 * (x - mean) * (x - mean) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

/// Multivariate normal density through an explicit inverse and determinant.
inline double mvn_pdf(const Vector& x, const Vector& mean, const Matrix& cov) {
  const Vector d = x - mean;
  const double quad = d.dot(cov.inverse() * d);
  const double k = static_cast<double>(x.size());
  return std::exp(-0.5 * quad) / std::sqrt(std::pow(2.0 * std::numbers::pi, k) * cov.determinant());
}

inline double dirichlet_pdf(const Vector& theta, const Vector& alpha) {
  double norm = std::tgamma(alpha.sum());
  double dens = 1.0;
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    norm /= std::tgamma(alpha[k]);
    dens *= std::pow(theta[k], alpha[k] - 1.0);
  }
  return norm * dens;
}

/// Conditional of coordinate m of a Gaussian given the others, from the
/// precision matrix: var = 1 / Lambda_mm, mean = mu_m - sum_k Lambda_mk (x_k - mu_k) / Lambda_mm.
inline Moments gaussian_conditional(const Vector& mu, const Matrix& precision, const Vector& x,
                                    Eigen::Index m) {
  double s = 0.0;
  for (Eigen::Index k = 0; k < mu.size(); ++k) {
    if (k != m) s += precision(m, k) * (x[k] - mu[k]);
  }
  return {mu[m] - s / precision(m, m), 1.0 / precision(m, m)};
}

// ---------------------------------------------------------------------------
// Counting

inline double choose2(double x) { return x * (x - 1.0) / 2.0; }

/// ARI by explicit pair enumeration.
inline double ari_bruteforce(const std::vector<int>& a, const std::vector<int>& b) {
  const std::size_t n = a.size();
  double both = 0.0, only_a = 0.0, only_b = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool sa = a[i] == a[j];
      const bool sb = b[i] == b[j];
      pairs += 1.0;
      if (sa && sb) both += 1.0;
      if (sa) only_a += 1.0;
      if (sb) only_b += 1.0;
    }
  }
  const double expected = only_a * only_b / pairs;
  const double max_index = 0.5 * (only_a + only_b);
  return (both - expected) / (max_index - expected);
}

/// Free parameters counted one by one: mixing weights, means, covariance
/// entries and categorical probabilities (each simplex loses one).
inline int count_free_parameters(int structure /*0 EEI, 1 EEE, 2 VVV*/, int G, int q,
                                 const std::vector<int>& levels) {
  int count = 0;
  for (int g = 1; g < G; ++g) ++count;                      // tau
  for (int g = 0; g < G; ++g) for (int m = 0; m < q; ++m) ++count;  // mu
  auto symmetric = [&] {
    int c = 0;
    for (int a = 0; a < q; ++a) for (int b = a; b < q; ++b) ++c;
    return c;
  };
  if (structure == 0) count += q;
  if (structure == 1) count += symmetric();
  if (structure == 2) for (int g = 0; g < G; ++g) count += symmetric();
  for (int g = 0; g < G; ++g) {
    for (int L : levels) for (int l = 1; l < L; ++l) ++count;
  }
  return count;
}

}  // namespace oracle
