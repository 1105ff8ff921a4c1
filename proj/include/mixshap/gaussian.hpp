#pragma once

#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mixshap/rng.hpp"

namespace mixshap {

double normal_pdf(double x);
double normal_cdf(double x);
double normal_quantile(double p);

/// Multivariate normal N(mu, sigma); sigma must be symmetric and positive definite.
struct MvnSpec {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;

  MvnSpec() = default;
  MvnSpec(Eigen::VectorXd mean, Eigen::MatrixXd cov);

  [[nodiscard]] int dim() const { return static_cast<int>(mu.size()); }

  /// Zero mean, unit variances, all pairwise correlations rho.
  static MvnSpec equicorrelated(int d, double rho);
};

/// Box (lower, upper]; entries may be infinite.
struct Rectangle {
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;

  Rectangle() = default;
  Rectangle(Eigen::VectorXd lo, Eigen::VectorXd hi);
  [[nodiscard]] int dim() const { return static_cast<int>(lower.size()); }
};

/// Conditional distribution of the complement of `given` once the given
/// coordinates are fixed. The regression map and covariance are computed once;
/// `mean_at` is cheap.
class GaussianConditioner {
 public:
  GaussianConditioner(const MvnSpec& spec, std::vector<int> given);

  [[nodiscard]] const std::vector<int>& given() const { return given_; }
  [[nodiscard]] const std::vector<int>& free() const { return free_; }
  [[nodiscard]] Eigen::VectorXd mean_at(std::span<const double> given_values) const;
  [[nodiscard]] const Eigen::MatrixXd& covariance() const { return cov_; }
  /// Lower Cholesky factor of covariance(); empty when nothing is free.
  [[nodiscard]] const Eigen::MatrixXd& cholesky() const { return chol_; }
  [[nodiscard]] MvnSpec at(std::span<const double> given_values) const;

 private:
  std::vector<int> given_;
  std::vector<int> free_;
  Eigen::VectorXd mu_free_;
  Eigen::VectorXd mu_given_;
  Eigen::MatrixXd regression_;  // Sigma_BA Sigma_AA^{-1}
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd chol_;
};

/// Standard Gaussian conditioning; the result is over the complement of
/// `given` in ascending index order. Throws SingularBlock.
MvnSpec conditional_mvn(const MvnSpec& spec, std::span<const int> given, std::span<const double> values);

/// K x d matrix of draws mu + L z. Throws CholeskyFailure.
Eigen::MatrixXd sample_mvn(const MvnSpec& spec, int K, Rng& rng);

enum class RectangleMethod {
  Auto,             // quadrature for d <= 3, one-factor integral when applicable, QMC otherwise
  Quadrature,       // d <= 3 only
  QuasiMonteCarlo,  // randomised lattice rule on the separation-of-variables integrand
  OneFactor,        // equicorrelated (rho >= 0) covariance only
};

struct ProbabilityEstimate {
  double value = 0.0;
  double error = 0.0;
  bool converged = true;  // false: accuracy target not reached, value is the best estimate
};

inline constexpr double kDefaultRectangleAccuracy = 1e-5;
inline constexpr int kMaxRectangleDim = 12;

/// P(lower < X <= upper) for X ~ spec.
ProbabilityEstimate mvn_rectangle_prob(const MvnSpec& spec, const Rectangle& rect,
                                       double accuracy = kDefaultRectangleAccuracy,
                                       RectangleMethod method = RectangleMethod::Auto);

/// P(X > h, Y > k) for a standard bivariate normal with correlation r.
double bvn_upper(double h, double k, double r);

/// Adaptive 21-point Gauss-Kronrod integration to absolute tolerance `tol`;
/// infinite bounds are mapped by a tangent substitution. Throws MaxSubdivisionsExceeded.
double integrate_1d(const std::function<double(double)>& f, double lower, double upper, double tol = 1e-10,
                    int max_subdivisions = 2000);

}  // namespace mixshap
