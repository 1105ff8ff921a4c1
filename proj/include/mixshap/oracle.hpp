#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixshap/gaussian.hpp"
#include "mixshap/samplers.hpp"
#include "mixshap/shapley.hpp"
#include "mixshap/tabular.hpp"

namespace mixshap {

/// Gaussian vector with selected coordinates discretised at fixed cut-offs:
/// x_j = l when v_l < x~_j <= v_{l+1}. Continuous features have no cut-offs.
struct ThresholdGaussianSpec {
  MvnSpec mvn;
  std::vector<std::vector<double>> cutoffs;  // per feature; empty = continuous
  std::vector<std::string> names;            // defaults to x1..xM

  ThresholdGaussianSpec() = default;
  ThresholdGaussianSpec(MvnSpec mvn, std::vector<std::vector<double>> cutoffs, std::vector<std::string> names = {});

  /// Equicorrelated standard Gaussian; the first n_cat features are categorical
  /// with the shared cut-off vector, the rest continuous.
  static ThresholdGaussianSpec equicorrelated(int n_cat, int n_cont, double rho, const std::vector<double>& cutoffs);

  [[nodiscard]] int M() const { return mvn.dim(); }
  [[nodiscard]] bool is_categorical(int j) const { return !cutoffs[static_cast<std::size_t>(j)].empty(); }
  [[nodiscard]] int levels(int j) const { return static_cast<int>(cutoffs[static_cast<std::size_t>(j)].size()) - 1; }
  [[nodiscard]] bool all_categorical() const;
  [[nodiscard]] FeatureSchema schema() const;
  /// (v_l, v_{l+1}] for level l of categorical feature j.
  [[nodiscard]] std::pair<double, double> interval(int j, int level) const;
  [[nodiscard]] int level_of(int j, double latent) const;

  [[nodiscard]] MixedTable sample(int n, Rng& rng) const;
  void validate() const;
};

/// f(x) = alpha + sum_cat beta_j[level] + sum_cont gamma_j x_j, level 1 the reference.
struct LinearModelSpec {
  double alpha = 0.0;
  std::vector<std::vector<double>> beta;  // per feature: L entries (beta[0] = 0) or empty
  std::vector<double> gamma;              // per feature; 0 for categorical features

  [[nodiscard]] double predict(RowView row) const;
  /// The same model read off a one-hot encoded row (see one_hot_schema).
  [[nodiscard]] double predict_onehot(RowView encoded) const;
  [[nodiscard]] PredictFn predictor() const;
  [[nodiscard]] PredictFn onehot_predictor() const;
  void validate(const FeatureSchema& schema) const;

  static LinearModelSpec zeros(const FeatureSchema& schema);
};

LinearModelSpec linear_model_from_json(const nlohmann::json& j, const FeatureSchema& schema);
nlohmann::json linear_model_to_json(const LinearModelSpec& model, const FeatureSchema& schema);

inline constexpr double kZeroProbability = 1e-12;
inline constexpr double kOracleQuadratureTol = 1e-7;
/// Largest joint probability table the categorical oracle materialises.
inline constexpr std::int64_t kMaxJointCells = std::int64_t{1} << 24;

/// E[f | x_S = x*_S] for an all-categorical distribution by enumerating the
/// levels of the unseen features; each conditional probability is the ratio of
/// two rectangle probabilities. Feasible for |Sbar| <= 6.
double exact_conditional_expectation_categorical(const ThresholdGaussianSpec& dist, const PredictFn& model, Coalition S,
                                                 RowView x_star, double accuracy = kDefaultRectangleAccuracy);

/// Joint probability mass of an all-categorical threshold-Gaussian
/// distribution, stored over every level combination. Conditional
/// expectations for all 2^M coalitions of one observation cost a single pass
/// over the table.
class CategoricalOracle {
 public:
  explicit CategoricalOracle(ThresholdGaussianSpec dist, double accuracy = kDefaultRectangleAccuracy);

  [[nodiscard]] const ThresholdGaussianSpec& dist() const { return dist_; }
  [[nodiscard]] std::int64_t cell_count() const { return static_cast<std::int64_t>(pmf_.size()); }
  /// Cell index -> dense row of levels.
  [[nodiscard]] std::vector<double> cell_row(std::int64_t cell) const;
  [[nodiscard]] double cell_probability(std::int64_t cell) const { return pmf_[static_cast<std::size_t>(cell)]; }
  [[nodiscard]] double probability(RowView levels) const;

  /// Values of f at every cell.
  [[nodiscard]] std::vector<double> tabulate(const PredictFn& model) const;
  /// v(S) for all coalitions; `values` from tabulate().
  [[nodiscard]] ContributionVector contributions(const std::vector<double>& values, RowView x_star) const;
  [[nodiscard]] double conditional_expectation(const std::vector<double>& values, Coalition S, RowView x_star) const;

  /// The T most probable cells (all when T >= cell count) with probabilities
  /// renormalised to sum to 1, ordered by decreasing probability.
  [[nodiscard]] std::pair<std::vector<std::int64_t>, std::vector<double>> top_cells(std::int64_t T) const;

 private:
  ThresholdGaussianSpec dist_;
  std::vector<std::int64_t> stride_;
  std::vector<double> pmf_;
};

/// Conditional expectations of a linear model under a mixed threshold-Gaussian
/// distribution. The continuous part of x*_S is conditioned on analytically;
/// the categorical part enters through its cut-off box, with the univariate
/// expectations obtained by 1-D integration of the density of x~_j against the
/// box probability given x~_j.
class MixedOracle {
 public:
  MixedOracle(ThresholdGaussianSpec dist, LinearModelSpec model, double quad_tol = kOracleQuadratureTol,
              double accuracy = kDefaultRectangleAccuracy);

  [[nodiscard]] double conditional_expectation(Coalition S, RowView x_star) const;
  /// E[x_j | x_S] for continuous j, P(x_j = l | x_S) for categorical j (j not in S).
  [[nodiscard]] double feature_expectation(Coalition S, RowView x_star, int j, int level = 0) const;
  [[nodiscard]] ContributionVector contributions(RowView x_star) const;

  [[nodiscard]] const ThresholdGaussianSpec& dist() const { return dist_; }
  [[nodiscard]] const LinearModelSpec& model() const { return model_; }

 private:
  ThresholdGaussianSpec dist_;
  LinearModelSpec model_;
  double quad_tol_;
  double accuracy_;
};

/// exact_conditional_expectation_mixed: one-off form of MixedOracle.
double exact_conditional_expectation_mixed(const ThresholdGaussianSpec& dist, const LinearModelSpec& model,
                                           Coalition S, RowView x_star);

/// Shapley values from exact contributions, solved by weighted least squares
/// and cross-checked against the direct sum.
ShapleyResult true_shapley(const ContributionVector& v, RowView x_star, const FeatureSchema& schema);
ShapleyResult true_shapley(const ThresholdGaussianSpec& dist, const LinearModelSpec& model, RowView x_star);

/// (1/M) sum_j sum_i w_i |phi_true,j(x_i) - phi_est,j(x_i)|. Throws LengthMismatch.
double weighted_mae(const std::vector<ShapleyResult>& truth, const std::vector<ShapleyResult>& estimate,
                    const std::vector<double>& weights);

}  // namespace mixshap
