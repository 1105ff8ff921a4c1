#include "mixshap/samplers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <string>

#include "mixshap/error.hpp"
#include "mixshap/parallel.hpp"

namespace mixshap {
namespace {

template <class T>
struct LazySlot {
  std::once_flag once;
  std::unique_ptr<T> value;
};

template <class T, class Make>
const T& lazy_get(LazySlot<T>& slot, Make&& make) {
  std::call_once(slot.once, [&] { slot.value = std::make_unique<T>(make()); });
  return *slot.value;
}

// Whitened S columns of the training table for the empirical kernel.
struct WhitenedColumns {
  Eigen::MatrixXd whiten;  // L^{-1} where L L^T = Cov(S columns)
  Eigen::MatrixXd rows;    // n x |S|, whitened training rows
};

Eigen::MatrixXd column_block(const MixedTable& t, const std::vector<int>& cols) {
  Eigen::MatrixXd out(t.n(), static_cast<Eigen::Index>(cols.size()));
  for (int i = 0; i < t.n(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k) out(i, static_cast<Eigen::Index>(k)) = t.at(i, cols[k]);
  return out;
}

Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd c = x.rowwise() - x.colwise().mean();
  return c.transpose() * c / std::max<double>(1.0, static_cast<double>(x.rows()) - 1.0);
}

void check_prediction(double y) {
  if (!std::isfinite(y)) throw Error(ErrorCode::NonFinitePrediction, "model returned a non-finite prediction");
}

}  // namespace

struct FittedSampler::Cache {
  explicit Cache(int M) {
    const std::size_t count = std::size_t{1} << M;
    trees = std::make_unique<LazySlot<CtreeModel>[]>(count);
    conditioners = std::make_unique<LazySlot<GaussianConditioner>[]>(count);
    whitened = std::make_unique<LazySlot<WhitenedColumns>[]>(count);
  }
  std::unique_ptr<LazySlot<CtreeModel>[]> trees;
  std::unique_ptr<LazySlot<GaussianConditioner>[]> conditioners;
  std::unique_ptr<LazySlot<WhitenedColumns>[]> whitened;
  std::atomic<int> fitted{0};
  MvnSpec mvn;
};

ConditionalSamplerSpec ConditionalSamplerSpec::independence(int K) {
  ConditionalSamplerSpec s;
  s.kind = SamplerKind::Independence;
  s.K = K;
  return s;
}

ConditionalSamplerSpec ConditionalSamplerSpec::empirical(double sigma, double eta) {
  ConditionalSamplerSpec s;
  s.kind = SamplerKind::Empirical;
  s.sigma = sigma;
  s.eta = eta;
  return s;
}

ConditionalSamplerSpec ConditionalSamplerSpec::gaussian_kind(int K) {
  ConditionalSamplerSpec s;
  s.kind = SamplerKind::Gaussian;
  s.K = K;
  return s;
}

ConditionalSamplerSpec ConditionalSamplerSpec::ctree_kind(double alpha, int min_node, int K) {
  ConditionalSamplerSpec s;
  s.kind = SamplerKind::Ctree;
  s.ctree.alpha = alpha;
  s.ctree.min_node = min_node;
  s.K = K;
  return s;
}

void ConditionalSamplerSpec::validate() const {
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  if (kind == SamplerKind::Empirical) {
    if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "empirical bandwidth must be > 0");
    if (!(eta > 0.0 && eta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "empirical mass must lie in (0, 1]");
  }
  if (kind == SamplerKind::Ctree) ctree.validate();
}

FittedSampler::FittedSampler(ConditionalSamplerSpec spec, MixedTable train)
    : spec_(std::move(spec)), train_(std::move(train)) {
  spec_.validate();
  if (train_.n() < 1) throw Error(ErrorCode::InvalidArgument, "training table is empty");
  if (train_.width() > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "too many features for a sampler");
  const bool needs_continuous = spec_.kind == SamplerKind::Gaussian || spec_.kind == SamplerKind::Empirical;
  if (needs_continuous && !train_.schema().all_continuous())
    throw Error(ErrorCode::SchemaUnsupported, "this sampler needs all-continuous features; one-hot encode first");
  cache_ = std::make_unique<Cache>(train_.width());

  if (spec_.kind == SamplerKind::Gaussian) {
    const int d = train_.width();
    Eigen::VectorXd mu = spec_.gaussian_mu;
    Eigen::MatrixXd sigma = spec_.gaussian_sigma;
    if (mu.size() == 0 && sigma.size() == 0) {
      std::vector<int> all(static_cast<std::size_t>(d));
      std::iota(all.begin(), all.end(), 0);
      const Eigen::MatrixXd x = column_block(train_, all);
      mu = x.colwise().mean().transpose();
      sigma = sample_covariance(x);
    }
    if (mu.size() != d || sigma.rows() != d || sigma.cols() != d)
      throw Error(ErrorCode::InvalidArgument, "Gaussian parameters do not match the feature count");
    try {
      cache_->mvn = MvnSpec(std::move(mu), std::move(sigma));
    } catch (const Error& e) {
      throw Error(ErrorCode::DegenerateCovariance, e.what());
    }
  }
}

FittedSampler::~FittedSampler() = default;
FittedSampler::FittedSampler(FittedSampler&&) noexcept = default;
FittedSampler& FittedSampler::operator=(FittedSampler&&) noexcept = default;

const MvnSpec& FittedSampler::mvn() const {
  if (spec_.kind != SamplerKind::Gaussian) throw Error(ErrorCode::InvalidArgument, "not a Gaussian sampler");
  return cache_->mvn;
}

const CtreeModel& FittedSampler::tree(Coalition S) const {
  const int M = train_.width();
  if (S.empty() || S.is_full(M) || S.mask > Coalition::full_mask(M))
    throw Error(ErrorCode::UnfittedCoalition, "no tree for coalition mask " + std::to_string(S.mask));
  return lazy_get(cache_->trees[S.mask], [&] {
    auto model = fit_ctree(train_, S.indices(), S.complement(M).indices(), spec_.ctree);
    cache_->fitted.fetch_add(1);
    return model;
  });
}

void FittedSampler::prefit_all(int threads) const {
  if (spec_.kind != SamplerKind::Ctree) return;
  const int M = train_.width();
  const int count = (1 << M) - 2;
  parallel_for(count, threads, [&](int i) { (void)tree(Coalition{static_cast<std::uint32_t>(i + 1)}); });
}

int FittedSampler::fitted_tree_count() const { return cache_->fitted.load(); }

std::vector<int> FittedSampler::rows_for(Coalition S, RowView x_star) const {
  if (spec_.kind == SamplerKind::Ctree && !S.empty() && !S.is_full(M())) {
    const CtreeModel& t = tree(S);
    return t.leaf_rows(t.route(x_star));
  }
  std::vector<int> all(static_cast<std::size_t>(train_.n()));
  std::iota(all.begin(), all.end(), 0);
  return all;
}

std::vector<std::pair<int, double>> FittedSampler::empirical_weights(Coalition S, RowView x_star) const {
  const int n = train_.n();
  std::vector<std::pair<int, double>> out;
  if (S.empty()) {
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out.emplace_back(i, 1.0 / n);
    return out;
  }
  const std::vector<int> cols = S.indices();
  const auto& w = lazy_get(cache_->whitened[S.mask], [&] {
    WhitenedColumns wc;
    const Eigen::MatrixXd x = column_block(train_, cols);
    Eigen::LLT<Eigen::MatrixXd> llt(sample_covariance(x));
    if (llt.info() != Eigen::Success)
      throw Error(ErrorCode::DegenerateCovariance, "training covariance of the conditioning columns is singular");
    const Eigen::MatrixXd l = llt.matrixL();
    wc.whiten = l.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(l.rows(), l.cols()));
    wc.rows = x * wc.whiten.transpose();
    return wc;
  });
  Eigen::VectorXd xs(static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) xs(static_cast<Eigen::Index>(k)) = x_star[static_cast<std::size_t>(cols[k])];
  const Eigen::RowVectorXd z = (w.whiten * xs).transpose();

  // Scaled squared Mahalanobis distance, Gaussian kernel.
  const double s = static_cast<double>(cols.size());
  std::vector<double> logw(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double d2 = (w.rows.row(i) - z).squaredNorm() / s;
    logw[static_cast<std::size_t>(i)] = -d2 / (2.0 * spec_.sigma * spec_.sigma);
  }
  const double top = *std::max_element(logw.begin(), logw.end());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return logw[static_cast<std::size_t>(a)] > logw[static_cast<std::size_t>(b)];
  });
  double total = 0.0;
  for (double lw : logw) total += std::exp(lw - top);
  double kept = 0.0;
  for (int i : order) {
    const double wi = std::exp(logw[static_cast<std::size_t>(i)] - top);
    out.emplace_back(i, wi);
    kept += wi;
    if (kept >= spec_.eta * total) break;
  }
  for (auto& [i, wi] : out) wi /= kept;
  return out;
}

SampleBlock FittedSampler::sample_conditional(Coalition S, RowView x_star, int K, Rng& rng) const {
  const int M = train_.width();
  if (static_cast<int>(x_star.size()) != M) throw Error(ErrorCode::ArityMismatch, "x_star has the wrong width");
  if (K < 1) throw Error(ErrorCode::InvalidArgument, "K must be >= 1");
  SampleBlock out(K, M);
  for (int k = 0; k < K; ++k)
    for (int j = 0; j < M; ++j) out(k, j) = x_star[static_cast<std::size_t>(j)];
  if (S.is_full(M)) return out;
  const std::vector<int> free = S.complement(M).indices();

  switch (spec_.kind) {
    case SamplerKind::Independence:
    case SamplerKind::Ctree: {
      const std::vector<int> rows = rows_for(S, x_star);
      std::uniform_int_distribution<int> pick(0, static_cast<int>(rows.size()) - 1);
      for (int k = 0; k < K; ++k) {
        const int r = rows[static_cast<std::size_t>(pick(rng))];
        for (int j : free) out(k, j) = train_.at(r, j);
      }
      break;
    }
    case SamplerKind::Empirical: {
      const auto weights = empirical_weights(S, x_star);
      std::vector<double> w;
      w.reserve(weights.size());
      for (const auto& p : weights) w.push_back(p.second);
      std::discrete_distribution<int> pick(w.begin(), w.end());
      for (int k = 0; k < K; ++k) {
        const int r = weights[static_cast<std::size_t>(pick(rng))].first;
        for (int j : free) out(k, j) = train_.at(r, j);
      }
      break;
    }
    case SamplerKind::Gaussian: {
      if (S.empty()) {
        const Eigen::MatrixXd draws = sample_mvn(cache_->mvn, K, rng);
        for (int k = 0; k < K; ++k)
          for (int j = 0; j < M; ++j) out(k, j) = draws(k, j);
        break;
      }
      const auto& cond = lazy_get(cache_->conditioners[S.mask],
                                  [&] { return GaussianConditioner(cache_->mvn, S.indices()); });
      std::vector<double> given;
      for (int j : cond.given()) given.push_back(x_star[static_cast<std::size_t>(j)]);
      const Eigen::VectorXd mean = cond.mean_at(given);
      std::normal_distribution<double> normal;
      Eigen::VectorXd z(mean.size());
      for (int k = 0; k < K; ++k) {
        for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
        const Eigen::VectorXd x = mean + cond.cholesky() * z;
        for (std::size_t i = 0; i < cond.free().size(); ++i) out(k, cond.free()[i]) = x(static_cast<Eigen::Index>(i));
      }
      break;
    }
  }
  return out;
}

WeightedSampleSet FittedSampler::conditional_distribution(Coalition S, RowView x_star) const {
  const int M = train_.width();
  if (static_cast<int>(x_star.size()) != M) throw Error(ErrorCode::ArityMismatch, "x_star has the wrong width");
  if (spec_.kind == SamplerKind::Gaussian)
    throw Error(ErrorCode::InvalidArgument, "the Gaussian sampler has no discrete conditional distribution");
  WeightedSampleSet out;
  const std::vector<double> base(x_star.begin(), x_star.end());
  if (S.is_full(M)) {
    out.rows.push_back(base);
    out.weights.push_back(1.0);
    return out;
  }
  std::vector<std::pair<int, double>> weighted;
  if (spec_.kind == SamplerKind::Empirical) {
    weighted = empirical_weights(S, x_star);
  } else {
    const std::vector<int> rows = rows_for(S, x_star);
    for (int r : rows) weighted.emplace_back(r, 1.0 / static_cast<double>(rows.size()));
  }
  const std::vector<int> free = S.complement(M).indices();
  out.rows.reserve(weighted.size());
  for (const auto& [r, w] : weighted) {
    std::vector<double> row = base;
    for (int j : free) row[static_cast<std::size_t>(j)] = train_.at(r, j);
    out.rows.push_back(std::move(row));
    out.weights.push_back(w);
  }
  return out;
}

FittedSampler fit_sampler(const ConditionalSamplerSpec& spec, const MixedTable& train) {
  return FittedSampler(spec, train);
}

ContributionVector estimate_contributions(const FittedSampler& sampler, const PredictFn& model, RowView x_star, int K,
                                          std::uint64_t seed) {
  const int M = sampler.M();
  validate_dense_row(sampler.train().schema(), x_star);
  const std::uint32_t count = 1U << M;
  std::vector<double> v(count);
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    const Coalition S{mask};
    if (S.is_full(M)) {
      v[mask] = model(x_star);
      check_prediction(v[mask]);
      continue;
    }
    if (sampler.kind() == SamplerKind::Empirical) {
      const WeightedSampleSet set = sampler.conditional_distribution(S, x_star);
      double acc = 0.0;
      for (std::size_t k = 0; k < set.rows.size(); ++k) {
        const double y = model(set.rows[k]);
        check_prediction(y);
        acc += set.weights[k] * y;
      }
      v[mask] = acc;
      continue;
    }
    Rng rng(derive_seed(seed, {mask}));
    const SampleBlock block = sampler.sample_conditional(S, x_star, K, rng);
    double acc = 0.0;
    for (int k = 0; k < K; ++k) {
      const double y = model(RowView(block.row(k).data(), static_cast<std::size_t>(M)));
      check_prediction(y);
      acc += y;
    }
    v[mask] = acc / K;
  }
  return ContributionVector(M, std::move(v));
}

ContributionVector expected_contributions(const FittedSampler& sampler, const PredictFn& model, RowView x_star) {
  const int M = sampler.M();
  validate_dense_row(sampler.train().schema(), x_star);
  const std::uint32_t count = 1U << M;
  std::vector<double> v(count);
  for (std::uint32_t mask = 0; mask < count; ++mask) {
    const WeightedSampleSet set = sampler.conditional_distribution(Coalition{mask}, x_star);
    double acc = 0.0;
    for (std::size_t k = 0; k < set.rows.size(); ++k) {
      const double y = model(set.rows[k]);
      check_prediction(y);
      acc += set.weights[k] * y;
    }
    v[mask] = acc;
  }
  return ContributionVector(M, std::move(v));
}

}  // namespace mixshap
