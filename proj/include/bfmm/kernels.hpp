#pragma once

// Random-variate generators and log densities used by the Gibbs sampler.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bfmm/errors.hpp"
#include "bfmm/rng.hpp"

namespace bfmm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

/// Lower Cholesky factor of a symmetric positive definite matrix.
struct CholeskyFactor {
  Matrix lower;
  double log_det = 0.0;  // log |A|

  std::size_t dim() const { return static_cast<std::size_t>(lower.rows()); }

  /// Solves L y = b.
  Vector solve_lower(const Vector& b) const {
    return lower.triangularView<Eigen::Lower>().solve(b);
  }

  Matrix inverse() const {
    Matrix linv = lower.triangularView<Eigen::Lower>().solve(
        Matrix::Identity(lower.rows(), lower.cols()));
    return linv.transpose() * linv;
  }
};

/// Cholesky with a single jitter retry of 1e-8 * trace / dim on the diagonal.
/// `role` names the matrix in the error message.
inline CholeskyFactor cholesky(const Matrix& a, std::string_view role) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw FactorizationError(std::string(role) + ": matrix is not square");
  }
  if (!a.allFinite()) {
    throw FactorizationError(std::string(role) + ": matrix has non-finite entries");
  }
  const double scale = std::max(a.cwiseAbs().maxCoeff(), 1.0);
  if (!a.isApprox(a.transpose(), 1e-10) &&
      (a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw FactorizationError(std::string(role) + ": matrix is not symmetric");
  }
  Matrix sym = 0.5 * (a + a.transpose());
  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() != Eigen::Success) {
    const double jitter = 1e-8 * sym.trace() / static_cast<double>(sym.rows());
    if (jitter > 0.0) {
      sym.diagonal().array() += jitter;
      llt.compute(sym);
    }
    if (jitter <= 0.0 || llt.info() != Eigen::Success) {
      throw FactorizationError(std::string(role) +
                               ": matrix is not positive definite");
    }
  }
  CholeskyFactor f;
  f.lower = llt.matrixL();
  f.log_det = 2.0 * f.lower.diagonal().array().log().sum();
  return f;
}

inline Vector draw_mvn(const Vector& mean, const CholeskyFactor& cov,
                       RngStream& rng) {
  if (static_cast<std::size_t>(mean.size()) != cov.dim()) {
    throw ParameterError("draw_mvn: mean and covariance dimensions differ");
  }
  Vector e(mean.size());
  for (Eigen::Index k = 0; k < e.size(); ++k) e[k] = rng.normal();
  return mean + cov.lower * e;
}

inline Vector draw_mvn(const Vector& mean, const Matrix& cov, RngStream& rng) {
  return draw_mvn(mean, cholesky(cov, "mvn covariance"), rng);
}

inline double draw_gamma(double shape, double rate, RngStream& rng) {
  if (!(shape > 0.0) || !(rate > 0.0)) {
    throw ParameterError("gamma: shape and rate must be positive");
  }
  return rng.gamma(shape) / rate;
}

inline double draw_inverse_gamma(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("inverse gamma: a and b must be positive");
  }
  double g = 0.0;
  while (g <= 0.0) g = rng.gamma(a);
  return b / g;
}

inline double draw_beta(double a, double b, RngStream& rng) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw ParameterError("beta: parameters must be positive");
  }
  const double x = rng.gamma(a);
  const double y = rng.gamma(b);
  if (x + y <= 0.0) return a >= b ? 1.0 : 0.0;
  return x / (x + y);
}

/// Inverse-Wishart with density proportional to
/// |S|^{-(df+d+1)/2} exp(-tr(scale S^{-1}) / 2), so E[S] = scale / (df - d - 1).
/// Drawn by Bartlett-decomposing Wishart(df, scale^{-1}) and inverting.
inline Matrix draw_inverse_wishart(double df, const Matrix& scale, RngStream& rng) {
  const auto d = scale.rows();
  if (!(df > static_cast<double>(d) - 1.0)) {
    throw ParameterError("inverse Wishart: df must exceed dim - 1");
  }
  const CholeskyFactor scale_chol = cholesky(scale, "inverse-Wishart scale");
  // scale = C C'. If X ~ W(df, I) then C^{-T} X C^{-1} ~ W(df, scale^{-1}),
  // so S = C X^{-1} C'. With Bartlett X = A A', S = (C A^{-T})(C A^{-T})'.
  Matrix a = Matrix::Zero(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    a(i, i) = std::sqrt(2.0 * rng.gamma(0.5 * (df - static_cast<double>(i))));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Matrix a_inv = a.triangularView<Eigen::Lower>().solve(Matrix::Identity(d, d));
  const Matrix factor = scale_chol.lower * a_inv.transpose();
  Matrix s = factor * factor.transpose();
  return 0.5 * (s + s.transpose());
}

/// Dirichlet draw computed in log space so tiny concentrations cannot
/// underflow every component to zero.
inline Vector draw_dirichlet(const Vector& alpha, RngStream& rng) {
  if (alpha.size() == 0) throw ParameterError("dirichlet: empty alpha");
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    if (!(alpha[k] > 0.0)) {
      throw ParameterError("dirichlet: every alpha must be positive");
    }
  }
  Vector log_g(alpha.size());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    if (alpha[k] < 1.0) {
      // G(a) = G(a + 1) * U^{1/a}
      const double g = rng.gamma(alpha[k] + 1.0);
      log_g[k] = std::log(g) + std::log(rng.uniform()) / alpha[k];
    } else {
      double g = 0.0;
      while (g <= 0.0) g = rng.gamma(alpha[k]);
      log_g[k] = std::log(g);
    }
  }
  const double mx = log_g.maxCoeff();
  Vector w = (log_g.array() - mx).exp().matrix();
  w /= w.sum();
  return w;
}

inline double normal_upper_tail(double x) {
  return 0.5 * boost::math::erfc(x / std::numbers::sqrt2);
}

inline double normal_cdf(double x) { return normal_upper_tail(-x); }

inline double normal_logpdf(double x, double mean, double var) {
  const double d = x - mean;
  return -0.5 * (kLog2Pi + std::log(var) + d * d / var);
}

enum class TruncationSide { below_bound, above_bound };

namespace detail {

// Standard normal conditioned on z > alpha.
inline double draw_std_normal_above(double alpha, RngStream& rng) {
  if (alpha <= 4.0) {
    const double mass = normal_upper_tail(alpha);
    for (;;) {
      const double p = rng.uniform() * mass;
      const double z = std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * p);
      if (z > alpha && std::isfinite(z)) return z;
    }
  }
  if (normal_upper_tail(alpha) < 1e-300) {
    throw NumericError(
        "truncated normal: truncation mass below 1e-300 (bound " +
        std::to_string(alpha) +
        " sd into the tail); rescale the variable or its detection limit");
  }
  // Robert (1995) exponential proposal with the optimal rate.
  const double rate = 0.5 * (alpha + std::sqrt(alpha * alpha + 4.0));
  for (;;) {
    const double z = alpha - std::log(rng.uniform()) / rate;
    const double accept = std::exp(-0.5 * (z - rate) * (z - rate));
    if (rng.uniform() <= accept && z > alpha) return z;
  }
}

}  // namespace detail

/// Normal(mu, sigma^2) restricted to one side of `bound`.
/// below_bound draws satisfy x < bound, above_bound draws satisfy x > bound.
inline double draw_truncated_normal(double mu, double sigma, double bound,
                                    TruncationSide side, RngStream& rng) {
  if (!(sigma > 0.0)) throw ParameterError("truncated normal: sigma must be positive");
  if (side == TruncationSide::above_bound) {
    const double alpha = (bound - mu) / sigma;
    double x = mu + sigma * detail::draw_std_normal_above(alpha, rng);
    // Guard the strict inequality against round-off in mu + sigma * z.
    if (!(x > bound)) x = std::nextafter(bound, std::numeric_limits<double>::infinity());
    return x;
  }
  const double alpha = (mu - bound) / sigma;
  double x = mu - sigma * detail::draw_std_normal_above(alpha, rng);
  if (!(x < bound)) x = std::nextafter(bound, -std::numeric_limits<double>::infinity());
  return x;
}

inline double logpdf_mvn(const Vector& x, const Vector& mean,
                         const CholeskyFactor& cov) {
  if (x.size() != mean.size() || static_cast<std::size_t>(x.size()) != cov.dim()) {
    throw ParameterError("logpdf_mvn: dimension mismatch");
  }
  const Vector r = cov.solve_lower(x - mean);
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + cov.log_det +
                 r.squaredNorm());
}

inline double logpdf_mvn(const Vector& x, const Vector& mean, const Matrix& cov) {
  return logpdf_mvn(x, mean, cholesky(cov, "mvn covariance"));
}

/// log Dir(theta; alpha). Zero components only contribute when alpha_k != 1.
inline double log_dirichlet_density(const Vector& theta, const Vector& alpha) {
  double lp = std::lgamma(alpha.sum());
  for (Eigen::Index k = 0; k < alpha.size(); ++k) {
    lp -= std::lgamma(alpha[k]);
    if (alpha[k] != 1.0) {
      lp += (alpha[k] - 1.0) * std::log(std::max(theta[k], 1e-300));
    }
  }
  return lp;
}

/// Index drawn with probability weights[i] / sum(weights).
inline std::size_t draw_categorical(std::span<const double> weights, RngStream& rng) {
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0 || !std::isfinite(w)) {
      throw ParameterError("categorical: weights must be finite and nonnegative");
    }
    total += w;
  }
  if (!(total > 0.0)) throw NumericError("categorical: all weights are zero");
  const double u = rng.uniform() * total;
  double acc = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (weights[k] > 0.0) last_positive = k;
    acc += weights[k];
    if (u < acc && weights[k] > 0.0) return k;
  }
  return last_positive;
}

/// Normalizes log weights with log-sum-exp; returns false when every entry is -inf.
inline bool softmax_in_place(std::span<double> log_w) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : log_w) mx = std::max(mx, v);
  if (!std::isfinite(mx)) return false;
  double total = 0.0;
  for (double& v : log_w) {
    v = std::exp(v - mx);
    total += v;
  }
  for (double& v : log_w) v /= total;
  return true;
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

}  // namespace bfmm
