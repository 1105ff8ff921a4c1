#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "mixshap/tabular.hpp"

namespace mixshap {

enum class TestKind { Asymptotic, MonteCarlo };

struct CtreeConfig {
  double alpha = 0.5;  // reject the global null (and split) when p < alpha
  int min_node = 7;    // minimum rows per child
  int max_depth = -1;  // -1: unlimited
  TestKind test = TestKind::Asymptotic;
  int permutations = 9999;  // MonteCarlo only
  std::uint64_t seed = 0;   // MonteCarlo only

  void validate() const;
};

struct SplitRule {
  enum class Kind { ContinuousThreshold, CategorySubset };
  Kind kind = Kind::ContinuousThreshold;
  double threshold = 0.0;         // value <= threshold goes left
  std::vector<int> left_levels;   // levels seen at fit time going left
  std::vector<int> right_levels;  // levels seen at fit time going right
};

struct CtreeNode {
  int id = 0;
  int depth = 0;
  int n = 0;
  double p_value = 1.0;  // Bonferroni-adjusted global p-value at this node
  int feature = -1;      // split column in table coordinates; -1 for leaves
  SplitRule rule;
  int left = -1;
  int right = -1;
  std::vector<int> rows;  // training rows; populated for leaves only

  [[nodiscard]] bool is_leaf() const { return feature < 0; }
};

/// Fitted recursive partition. Predictors and responses are columns of the
/// training table; routing takes a full-width row in the same coordinates.
class CtreeModel {
 public:
  CtreeModel() = default;
  CtreeModel(std::vector<CtreeNode> nodes, std::vector<int> predictors, std::vector<int> responses, int n_train);

  [[nodiscard]] const std::vector<CtreeNode>& nodes() const { return nodes_; }
  [[nodiscard]] const CtreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  [[nodiscard]] const std::vector<int>& predictors() const { return predictors_; }
  [[nodiscard]] const std::vector<int>& responses() const { return responses_; }
  [[nodiscard]] int n_train() const { return n_train_; }

  [[nodiscard]] bool is_root_only() const { return nodes_.size() == 1; }
  [[nodiscard]] std::vector<int> leaves() const;
  [[nodiscard]] int depth() const;

  /// Leaf id for a row. A categorical level never seen at a split goes to the
  /// larger child, or throws UnseenLevel when `strict`.
  [[nodiscard]] int route(RowView row, bool strict = false) const;
  [[nodiscard]] const std::vector<int>& leaf_rows(int leaf) const;

  [[nodiscard]] nlohmann::json to_json() const;

 private:
  std::vector<CtreeNode> nodes_;
  std::vector<int> predictors_;
  std::vector<int> responses_;
  int n_train_ = 0;
};

/// Grows a conditional inference tree on `table` with the given predictor and
/// response columns.
CtreeModel fit_ctree(const MixedTable& table, std::vector<int> predictors, std::vector<int> responses,
                     const CtreeConfig& cfg);

/// Two-table form: predictors and response must be row aligned (RowMisalignment otherwise).
CtreeModel fit_ctree(const MixedTable& predictors, const MixedTable& response, const CtreeConfig& cfg);

/// Pseudo-inverse of a symmetric PSD matrix with its numerical rank.
struct PseudoInverse {
  Eigen::MatrixXd matrix;
  int rank = 0;
};
PseudoInverse symmetric_pinv(const Eigen::MatrixXd& m, double rel_tol = 1e-10);

/// Influence-function transform of a column: the value itself for continuous
/// columns, level indicators for categorical columns.
Eigen::MatrixXd influence_matrix(const MixedTable& table, std::span<const int> rows, std::span<const int> columns);

/// P-value for independence between one column x and a multivariate response
/// Y, from the standardised linear statistic sum_i g(x_i) h(y_i)^T.
/// Constant columns give p = 1.
double independence_test(const MixedTable& table, std::span<const int> rows, int x_column,
                         std::span<const int> response_columns, TestKind test = TestKind::Asymptotic,
                         int permutations = 9999, std::uint64_t seed = 0);

}  // namespace mixshap
