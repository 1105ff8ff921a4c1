#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "mixshap/ctree.hpp"
#include "mixshap/gaussian.hpp"
#include "mixshap/shapley.hpp"
#include "mixshap/tabular.hpp"

namespace mixshap {

/// Model under explanation: full dense row in, finite prediction out.
using PredictFn = std::function<double(RowView)>;

enum class SamplerKind { Independence, Empirical, Gaussian, Ctree };

struct ConditionalSamplerSpec {
  SamplerKind kind = SamplerKind::Independence;
  int K = 500;

  double sigma = 0.1;  // empirical: kernel bandwidth
  double eta = 0.95;   // empirical: retained weight mass

  /// Gaussian: fixed parameters; estimated from the training table when empty.
  Eigen::VectorXd gaussian_mu;
  Eigen::MatrixXd gaussian_sigma;

  CtreeConfig ctree;

  static ConditionalSamplerSpec independence(int K = 500);
  static ConditionalSamplerSpec empirical(double sigma = 0.1, double eta = 0.95);
  static ConditionalSamplerSpec gaussian_kind(int K = 100);
  static ConditionalSamplerSpec ctree_kind(double alpha = 0.5, int min_node = 7, int K = 500);

  void validate() const;
};

/// Rows are full-width dense rows (x*_S spliced with sampled x_Sbar).
struct WeightedSampleSet {
  std::vector<std::vector<double>> rows;
  std::vector<double> weights;
};

/// K x M row-major block of dense rows.
using SampleBlock = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class FittedSampler {
 public:
  FittedSampler(ConditionalSamplerSpec spec, MixedTable train);
  ~FittedSampler();
  FittedSampler(FittedSampler&&) noexcept;
  FittedSampler& operator=(FittedSampler&&) noexcept;

  [[nodiscard]] const ConditionalSamplerSpec& spec() const { return spec_; }
  [[nodiscard]] SamplerKind kind() const { return spec_.kind; }
  [[nodiscard]] const MixedTable& train() const { return train_; }
  [[nodiscard]] int M() const { return train_.width(); }
  /// Gaussian kind only.
  [[nodiscard]] const MvnSpec& mvn() const;

  /// K full rows whose S columns equal x_star. S = full gives K copies of
  /// x_star; S = empty gives K unconditional draws.
  [[nodiscard]] SampleBlock sample_conditional(Coalition S, RowView x_star, int K, Rng& rng) const;

  /// The conditional distribution as an explicit weighted row set: leaf or
  /// training rows with equal weights, or the truncated empirical kernel
  /// weights. Not available for the Gaussian kind.
  [[nodiscard]] WeightedSampleSet conditional_distribution(Coalition S, RowView x_star) const;

  /// Tree for coalition S (predictors S, responses Sbar), fitted on first use.
  /// Throws UnfittedCoalition for the empty and full coalitions.
  [[nodiscard]] const CtreeModel& tree(Coalition S) const;
  /// Fits every tree up front (timing runs separate fitting from explaining).
  void prefit_all(int threads = 1) const;
  [[nodiscard]] int fitted_tree_count() const;

 private:
  struct Cache;
  [[nodiscard]] std::vector<int> rows_for(Coalition S, RowView x_star) const;
  [[nodiscard]] std::vector<std::pair<int, double>> empirical_weights(Coalition S, RowView x_star) const;

  ConditionalSamplerSpec spec_;
  MixedTable train_;
  std::unique_ptr<Cache> cache_;
};

/// Throws SchemaUnsupported when the kind cannot handle the schema
/// (Gaussian and empirical need all-continuous features) and DegenerateCovariance
/// when the Gaussian covariance is not positive definite.
FittedSampler fit_sampler(const ConditionalSamplerSpec& spec, const MixedTable& train);

/// Monte Carlo contribution function: v(S) is the mean prediction over K
/// conditional samples; v(full) = f(x*) exactly. The empirical kind uses its
/// weighted average instead of sampling. Each coalition draws from its own
/// stream derive_seed(seed, {mask}).
ContributionVector estimate_contributions(const FittedSampler& sampler, const PredictFn& model, RowView x_star, int K,
                                          std::uint64_t seed);

/// Exact expectation under the sampler's discrete conditional distribution
/// (full enumeration instead of K draws). Not available for the Gaussian kind.
ContributionVector expected_contributions(const FittedSampler& sampler, const PredictFn& model, RowView x_star);

}  // namespace mixshap
