#include <gtest/gtest.h>

#include "bfmm/evaluation.hpp"
#include "oracles.hpp"

using namespace bfmm;

namespace {

const std::vector<int> kLevels{2, 3, 4, 2, 3, 4, 4};

TEST(Dof, SimulationDesign) {
  EXPECT_EQ(degrees_of_freedom(Structure::VVV, 3, 7, kLevels), 152);
  EXPECT_EQ(degrees_of_freedom(Structure::EEE, 3, 7, kLevels), 96);
  EXPECT_EQ(degrees_of_freedom(Structure::EEI, 3, 7, kLevels), 75);
  EXPECT_EQ(degrees_of_freedom(Structure::EEI, 1, 2, {}), 4);
}

TEST(Dof, MatchesParameterCount) {
  const std::vector<std::vector<int>> level_sets{{}, {2}, {3, 5}, {2, 2, 4, 6}};
  for (int G = 1; G <= 5; ++G) {
    for (int q = 1; q <= 8; ++q) {
      for (const auto& levels : level_sets) {
        EXPECT_EQ(degrees_of_freedom(Structure::EEI, G, q, levels), oracle::count_free_parameters(0, G, q, levels));
        EXPECT_EQ(degrees_of_freedom(Structure::EEE, G, q, levels), oracle::count_free_parameters(1, G, q, levels));
        EXPECT_EQ(degrees_of_freedom(Structure::VVV, G, q, levels), oracle::count_free_parameters(2, G, q, levels));
      }
    }
  }
  EXPECT_THROW(degrees_of_freedom(Structure::EEI, 0, 3, {}), ValidationError);
}

TEST(Ari, Examples) {
  EXPECT_NEAR(adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}), -0.5, 1e-12);
  EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 1, 2}, {0, 0, 1, 1, 2}), 1.0);
  EXPECT_DOUBLE_EQ(adjusted_rand_index({0, 0, 1, 1, 2}, {7, 7, 3, 3, 5}), 1.0);
}

TEST(Ari, MatchesPairEnumeration) {
  RngStream rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<int> a(40), b(40);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = static_cast<int>(rng.uniform() * 3);
      b[i] = rng.uniform() < 0.6 ? a[i] : static_cast<int>(rng.uniform() * 4);
    }
    const double lib = adjusted_rand_index(a, b);
    EXPECT_NEAR(lib, oracle::ari_bruteforce(a, b), 1e-12);
    EXPECT_NEAR(lib, adjusted_rand_index(b, a), 1e-12);
    std::vector<int> relabeled(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) relabeled[i] = (b[i] + 2) % 4;
    EXPECT_NEAR(lib, adjusted_rand_index(a, relabeled), 1e-12);
  }
  EXPECT_THROW(adjusted_rand_index({0, 1}, {0}), ValidationError);
}

TEST(Ari, ContingencyCounts) {
  const Eigen::MatrixXd t = contingency_table({0, 0, 1, 1, 1}, {1, 0, 0, 0, 1});
  ASSERT_EQ(t.rows(), 2);
  ASSERT_EQ(t.cols(), 2);
  EXPECT_DOUBLE_EQ(t.sum(), 5.0);
  EXPECT_DOUBLE_EQ(t(0, 0), 1.0);  // sorted label order
  EXPECT_DOUBLE_EQ(t(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(t(1, 1), 1.0);
}

TEST(Entropy, Bounds) {
  EXPECT_DOUBLE_EQ(entropy_term(Matrix::Identity(4, 4)), 0.0);
  EXPECT_NEAR(entropy_term(Matrix::Constant(10, 3, 1.0 / 3.0)), 10.0 * std::log(3.0), 1e-12);
}

MixtureParameters one_normal() {
  MixtureParameters p;
  p.tau = Vector::Ones(1);
  p.mu = Matrix::Zero(1, 1);
  p.sigma = CovarianceSet::eei(Vector::Ones(1));
  return p;
}

TEST(Loglik, StandardNormalAtMean) {
  const Eigen::MatrixXi cat(1, 0);
  EXPECT_NEAR(observed_loglik(Matrix::Zero(1, 1), cat, one_normal()), -0.9189385, 1e-7);
  EXPECT_NEAR(complete_loglik(Matrix::Zero(1, 1), cat, one_normal(), {0}), -0.9189385, 1e-7);
}

TEST(Loglik, MixtureMatchesDirectSum) {
  MixtureParameters p;
  p.tau = (Vector(2) << 0.4, 0.6).finished();
  p.mu = (Matrix(2, 2) << -1, 1, 0.5, 0).finished();
  p.sigma = CovarianceSet::vvv({(Matrix(2, 2) << 1, 0.3, 0.3, 2).finished(), (Matrix(2, 2) << 0.5, -0.1, -0.1, 1).finished()});
  p.theta = {(Matrix(2, 3) << 0.2, 0.3, 0.5, 0.6, 0.3, 0.1).finished()};
  RngStream rng(1);
  Matrix u(20, 2);
  Eigen::MatrixXi cat(20, 1);
  for (int i = 0; i < 20; ++i) {
    u.row(i) << rng.normal(), rng.normal();
    cat(i, 0) = 1 + i % 3;
  }
  double expected = 0.0;
  std::vector<int> z(20);
  double complete = 0.0;
  for (int i = 0; i < 20; ++i) {
    double f[2];
    for (int g = 0; g < 2; ++g) {
      f[g] = p.tau[g] * oracle::mvn_pdf(u.row(i).transpose(), p.mu.col(g), p.sigma.cluster(static_cast<std::size_t>(g))) *
             p.theta[0](g, cat(i, 0) - 1);
    }
    expected += std::log(f[0] + f[1]);
    z[static_cast<std::size_t>(i)] = i % 2;
    complete += std::log(f[i % 2]);
  }
  EXPECT_NEAR(observed_loglik(u, cat, p), expected, 1e-9);
  EXPECT_NEAR(complete_loglik(u, cat, p, z), complete, 1e-9);
  EXPECT_LE(complete_loglik(u, cat, p, z), observed_loglik(u, cat, p));
}

TEST(Score, BicAndIcl) {
  const Matrix probs = (Matrix(2, 2) << 0.5, 0.5, 1.0, 0.0).finished();
  const ModelScore s = score_model(Structure::EEE, 2, -100.0, -101.0, 10, 50, probs);
  EXPECT_NEAR(s.bic, 200.0 + 10.0 * std::log(50.0), 1e-12);
  EXPECT_NEAR(s.entropy, std::log(2.0), 1e-12);
  EXPECT_NEAR(s.icl, s.bic + std::log(2.0), 1e-12);
}

std::vector<Matrix> normal_chains(int m, int n, int d, double spread, std::uint64_t seed) {
  RngStream rng(seed);
  std::vector<Matrix> out;
  for (int j = 0; j < m; ++j) {
    Matrix c(n, d);
    for (int t = 0; t < n; ++t) {
      for (int k = 0; k < d; ++k) c(t, k) = spread * j + rng.normal();
    }
    out.push_back(c);
  }
  return out;
}

TEST(Mpsrf, IdenticalChains) {
  const auto base = normal_chains(1, 500, 3, 0.0, 2);
  const ConvergenceReport r = mpsrf({base[0], base[0], base[0]});
  EXPECT_NEAR(r.mpsrf, 499.0 / 500.0, 1e-10);
}

TEST(Mpsrf, UnivariateMatchesPsrf) {
  const auto chains = normal_chains(4, 300, 1, 0.2, 5);
  const double n = 300, m = 4;
  std::vector<double> means;
  double w = 0.0;
  for (const auto& c : chains) {
    const double mean = c.col(0).mean();
    means.push_back(mean);
    w += (c.col(0).array() - mean).square().sum() / (n - 1) / m;
  }
  double grand = 0.0;
  for (double x : means) grand += x / m;
  double b_over_n = 0.0;
  for (double x : means) b_over_n += (x - grand) * (x - grand) / (m - 1);
  const double psrf = (n - 1) / n + (m + 1) / m * b_over_n / w;
  EXPECT_NEAR(mpsrf(chains).mpsrf, psrf, 1e-10);
}

TEST(Mpsrf, Calibration) {
  EXPECT_LT(mpsrf(normal_chains(4, 2000, 3, 0.0, 7)).mpsrf, 1.01);
  EXPECT_GT(mpsrf(normal_chains(4, 2000, 3, 2.0, 7)).mpsrf, 1.5);
}

TEST(Mpsrf, Errors) {
  EXPECT_THROW(mpsrf({Matrix::Zero(10, 2)}), ValidationError);
  EXPECT_THROW(mpsrf({Matrix::Zero(10, 2), Matrix::Zero(11, 2)}), ValidationError);
}

}  // namespace
