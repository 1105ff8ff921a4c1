#include "mixshap/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/quadrature/gauss.hpp>

#include "mixshap/error.hpp"

namespace mixshap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
// Standardised integration range for the latent variable; the normal density
// beyond it is below 1e-22.
constexpr double kLatentRange = 10.0;

double interval_prob(double a, double b) {
  if (!(a < b)) return 0.0;
  if (a > 0) return normal_cdf(-a) - normal_cdf(-b);
  return normal_cdf(b) - normal_cdf(a);
}

MvnSpec sub_spec(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma, const std::vector<int>& idx) {
  const auto k = static_cast<Eigen::Index>(idx.size());
  MvnSpec out;
  out.mu.resize(k);
  out.sigma.resize(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    out.mu(a) = mu(idx[static_cast<std::size_t>(a)]);
    for (Eigen::Index b = 0; b < k; ++b) out.sigma(a, b) = sigma(idx[static_cast<std::size_t>(a)], idx[static_cast<std::size_t>(b)]);
  }
  return out;
}

double box_probability(const MvnSpec& spec, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi, double accuracy) {
  if (spec.dim() == 0) return 1.0;
  if (spec.dim() == 1) {
    const double sd = std::sqrt(spec.sigma(0, 0));
    return interval_prob((lo(0) - spec.mu(0)) / sd, (hi(0) - spec.mu(0)) / sd);
  }
  return mvn_rectangle_prob(spec, Rectangle(lo, hi), accuracy).value;
}

// Equicorrelation (rho >= 0) of a covariance, if it has that structure.
bool equicorrelation(const MvnSpec& spec, double* rho) {
  const int d = spec.dim();
  if (d < 2) {
    *rho = 0.0;
    return true;
  }
  const Eigen::VectorXd sd = spec.sigma.diagonal().cwiseSqrt();
  const double r = spec.sigma(0, 1) / (sd(0) * sd(1));
  if (r < 0.0 || r >= 1.0) return false;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j)
      if (std::abs(spec.sigma(i, j) / (sd(i) * sd(j)) - r) > 1e-12) return false;
  *rho = r;
  return true;
}

}  // namespace

// ---------------------------------------------------------------------------
// ThresholdGaussianSpec

ThresholdGaussianSpec::ThresholdGaussianSpec(MvnSpec m, std::vector<std::vector<double>> cuts,
                                             std::vector<std::string> nm)
    : mvn(std::move(m)), cutoffs(std::move(cuts)), names(std::move(nm)) {
  if (names.empty())
    for (int j = 0; j < mvn.dim(); ++j) names.push_back("x" + std::to_string(j + 1));
  validate();
}

ThresholdGaussianSpec ThresholdGaussianSpec::equicorrelated(int n_cat, int n_cont, double rho,
                                                            const std::vector<double>& cuts) {
  const int M = n_cat + n_cont;
  if (n_cat < 0 || n_cont < 0 || M < 1) throw Error(ErrorCode::InvalidArgument, "need at least one feature");
  if (!(rho < 1.0) || (M > 1 && !(rho > -1.0 / (M - 1))))
    throw Error(ErrorCode::NonPDCovariance, "equicorrelation " + std::to_string(rho) + " is not positive definite");
  std::vector<std::vector<double>> all(static_cast<std::size_t>(M));
  for (int j = 0; j < n_cat; ++j) all[static_cast<std::size_t>(j)] = cuts;
  return ThresholdGaussianSpec(MvnSpec::equicorrelated(M, rho), std::move(all));
}

void ThresholdGaussianSpec::validate() const {
  const int M = mvn.dim();
  if (M < 1) throw Error(ErrorCode::InvalidArgument, "empty distribution");
  if (static_cast<int>(cutoffs.size()) != M || static_cast<int>(names.size()) != M)
    throw Error(ErrorCode::LengthMismatch, "cut-offs and names must have one entry per feature");
  for (int j = 0; j < M; ++j) {
    const auto& c = cutoffs[static_cast<std::size_t>(j)];
    if (c.empty()) continue;
    if (c.size() < 3) throw Error(ErrorCode::InvalidArgument, "a categorical feature needs at least 2 levels");
    if (c.front() != -kInf || c.back() != kInf)
      throw Error(ErrorCode::InvalidArgument, "cut-off vectors must start at -inf and end at +inf");
    for (std::size_t k = 1; k < c.size(); ++k)
      if (!(c[k - 1] < c[k])) throw Error(ErrorCode::InvalidArgument, "cut-offs must be strictly increasing");
  }
}

bool ThresholdGaussianSpec::all_categorical() const {
  return std::all_of(cutoffs.begin(), cutoffs.end(), [](const auto& c) { return !c.empty(); });
}

FeatureSchema ThresholdGaussianSpec::schema() const {
  std::vector<FeatureSpec> out;
  for (int j = 0; j < M(); ++j)
    out.push_back(is_categorical(j) ? FeatureSpec::categorical(names[static_cast<std::size_t>(j)], levels(j))
                                    : FeatureSpec::continuous(names[static_cast<std::size_t>(j)]));
  return FeatureSchema(std::move(out));
}

std::pair<double, double> ThresholdGaussianSpec::interval(int j, int level) const {
  const auto& c = cutoffs[static_cast<std::size_t>(j)];
  if (level < 1 || level > levels(j)) throw Error(ErrorCode::LevelOutOfRange, "level out of range");
  return {c[static_cast<std::size_t>(level - 1)], c[static_cast<std::size_t>(level)]};
}

int ThresholdGaussianSpec::level_of(int j, double latent) const {
  const auto& c = cutoffs[static_cast<std::size_t>(j)];
  const auto it = std::lower_bound(c.begin() + 1, c.end() - 1, latent);
  return static_cast<int>(it - (c.begin() + 1)) + 1;
}

MixedTable ThresholdGaussianSpec::sample(int n, Rng& rng) const {
  const Eigen::MatrixXd latent = sample_mvn(mvn, n, rng);
  const int M = mvn.dim();
  std::vector<double> data(static_cast<std::size_t>(n) * static_cast<std::size_t>(M));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < M; ++j)
      data[static_cast<std::size_t>(i) * M + j] = is_categorical(j) ? level_of(j, latent(i, j)) : latent(i, j);
  return MixedTable::from_dense(schema(), std::move(data));
}

// ---------------------------------------------------------------------------
// LinearModelSpec

double LinearModelSpec::predict(RowView row) const {
  double y = alpha;
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (!beta[j].empty())
      y += beta[j][static_cast<std::size_t>(std::lround(row[j])) - 1];
    else
      y += gamma[j] * row[j];
  }
  return y;
}

double LinearModelSpec::predict_onehot(RowView encoded) const {
  double y = alpha;
  std::size_t col = 0;
  for (std::size_t j = 0; j < gamma.size(); ++j) {
    if (beta[j].empty()) {
      y += gamma[j] * encoded[col++];
      continue;
    }
    y += beta[j][0];
    for (std::size_t l = 1; l < beta[j].size(); ++l) y += (beta[j][l] - beta[j][0]) * encoded[col++];
  }
  return y;
}

PredictFn LinearModelSpec::predictor() const {
  return [m = *this](RowView r) { return m.predict(r); };
}

PredictFn LinearModelSpec::onehot_predictor() const {
  return [m = *this](RowView r) { return m.predict_onehot(r); };
}

void LinearModelSpec::validate(const FeatureSchema& schema) const {
  const auto M = static_cast<std::size_t>(schema.size());
  if (beta.size() != M || gamma.size() != M)
    throw Error(ErrorCode::LengthMismatch, "model coefficients do not match the feature count");
  if (!std::isfinite(alpha)) throw Error(ErrorCode::InvalidArgument, "non-finite intercept");
  for (std::size_t j = 0; j < M; ++j) {
    const auto& f = schema[static_cast<int>(j)];
    if (f.is_categorical()) {
      if (static_cast<int>(beta[j].size()) != f.levels || gamma[j] != 0.0)
        throw Error(ErrorCode::LengthMismatch, "categorical feature '" + f.name + "' needs one beta per level");
    } else if (!beta[j].empty()) {
      throw Error(ErrorCode::KindMismatch, "continuous feature '" + f.name + "' cannot have level coefficients");
    }
    for (double b : beta[j])
      if (!std::isfinite(b)) throw Error(ErrorCode::InvalidArgument, "non-finite coefficient");
    if (!std::isfinite(gamma[j])) throw Error(ErrorCode::InvalidArgument, "non-finite coefficient");
  }
}

LinearModelSpec LinearModelSpec::zeros(const FeatureSchema& schema) {
  LinearModelSpec m;
  for (int j = 0; j < schema.size(); ++j) {
    m.beta.emplace_back(schema[j].is_categorical() ? static_cast<std::size_t>(schema[j].levels) : 0, 0.0);
    m.gamma.push_back(0.0);
  }
  return m;
}

LinearModelSpec linear_model_from_json(const nlohmann::json& j, const FeatureSchema& schema) {
  LinearModelSpec m = LinearModelSpec::zeros(schema);
  try {
    m.alpha = j.value("intercept", 0.0);
    if (j.contains("categorical")) {
      for (const auto& [name, levels] : j.at("categorical").items()) {
        const int f = schema.index_of(name);
        if (f < 0) throw Error(ErrorCode::InvalidSchema, "model names unknown feature '" + name + "'");
        if (!schema[f].is_categorical())
          throw Error(ErrorCode::KindMismatch, "feature '" + name + "' is continuous in the schema");
        for (const auto& [label, beta] : levels.items())
          m.beta[static_cast<std::size_t>(f)][static_cast<std::size_t>(schema.level_of(f, label) - 1)] =
              beta.get<double>();
      }
    }
    if (j.contains("continuous")) {
      for (const auto& [name, gamma] : j.at("continuous").items()) {
        const int f = schema.index_of(name);
        if (f < 0) throw Error(ErrorCode::InvalidSchema, "model names unknown feature '" + name + "'");
        if (schema[f].is_categorical())
          throw Error(ErrorCode::KindMismatch, "feature '" + name + "' is categorical in the schema");
        m.gamma[static_cast<std::size_t>(f)] = gamma.get<double>();
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("linear model: ") + e.what());
  }
  m.validate(schema);
  return m;
}

nlohmann::json linear_model_to_json(const LinearModelSpec& model, const FeatureSchema& schema) {
  model.validate(schema);
  nlohmann::json cat = nlohmann::json::object(), cont = nlohmann::json::object();
  for (int f = 0; f < schema.size(); ++f) {
    if (schema[f].is_categorical()) {
      nlohmann::json levels = nlohmann::json::object();
      for (int l = 1; l <= schema[f].levels; ++l)
        levels[schema.label_of(f, l)] = model.beta[static_cast<std::size_t>(f)][static_cast<std::size_t>(l - 1)];
      cat[schema[f].name] = levels;
    } else {
      cont[schema[f].name] = model.gamma[static_cast<std::size_t>(f)];
    }
  }
  return {{"intercept", model.alpha}, {"categorical", cat}, {"continuous", cont}};
}

// ---------------------------------------------------------------------------
// All-categorical oracle

double exact_conditional_expectation_categorical(const ThresholdGaussianSpec& dist, const PredictFn& model, Coalition S,
                                                 RowView x_star, double accuracy) {
  const int M = dist.M();
  if (!dist.all_categorical()) throw Error(ErrorCode::SchemaUnsupported, "all features must be categorical");
  validate_dense_row(dist.schema(), x_star);
  if (S.is_full(M)) return model(x_star);
  const std::vector<int> given = S.indices();
  const std::vector<int> free = S.complement(M).indices();
  if (free.size() > 6) throw Error(ErrorCode::Infeasible, "more than 6 unseen categorical features");

  std::vector<int> all(static_cast<std::size_t>(M));
  std::iota(all.begin(), all.end(), 0);
  auto box = [&](const std::vector<int>& idx, RowView levels) {
    Eigen::VectorXd lo(static_cast<Eigen::Index>(idx.size())), hi(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
      const auto [a, b] = dist.interval(idx[k], static_cast<int>(std::lround(levels[static_cast<std::size_t>(idx[k])])));
      lo(static_cast<Eigen::Index>(k)) = a;
      hi(static_cast<Eigen::Index>(k)) = b;
    }
    return box_probability(sub_spec(dist.mvn.mu, dist.mvn.sigma, idx), lo, hi, accuracy);
  };

  const double p_given = box(given, x_star);
  if (p_given < kZeroProbability)
    throw Error(ErrorCode::ZeroProbabilityCondition, "conditioning event has probability below 1e-12");

  std::vector<double> row(x_star.begin(), x_star.end());
  for (int j : free) row[static_cast<std::size_t>(j)] = 1;
  double acc = 0.0;
  while (true) {
    acc += model(row) * box(all, row);
    std::size_t k = 0;
    for (; k < free.size(); ++k) {
      auto& cell = row[static_cast<std::size_t>(free[k])];
      if (cell < dist.levels(free[k])) {
        cell += 1;
        break;
      }
      cell = 1;
    }
    if (k == free.size()) break;
  }
  return acc / p_given;
}

CategoricalOracle::CategoricalOracle(ThresholdGaussianSpec dist, double accuracy) : dist_(std::move(dist)) {
  dist_.validate();
  if (!dist_.all_categorical()) throw Error(ErrorCode::SchemaUnsupported, "all features must be categorical");
  const int M = dist_.M();
  if (M > kMaxRectangleDim)
    throw Error(ErrorCode::Infeasible, "exact categorical oracle supports at most " + std::to_string(kMaxRectangleDim) +
                                           " features, got " + std::to_string(M));
  std::int64_t cells = 1;
  for (int j = 0; j < M; ++j) {
    stride_.push_back(cells);
    cells *= dist_.levels(j);
    if (cells > kMaxJointCells)
      throw Error(ErrorCode::Infeasible, "joint level table exceeds " + std::to_string(kMaxJointCells) + " cells");
  }
  pmf_.assign(static_cast<std::size_t>(cells), 0.0);

  double rho = 0.0;
  if (equicorrelation(dist_.mvn, &rho)) {
    // One-factor form: x~_j = mu_j + sd_j (sqrt(rho) z + sqrt(1 - rho) e_j); every
    // cell probability is a 1-D integral over z of a product of interval
    // probabilities, evaluated on a shared composite Gauss-Legendre grid.
    constexpr int kPanels = 40;
    using Rule = boost::math::quadrature::gauss<double, 20>;
    std::vector<double> z, w;
    const double width = 2.0 * kLatentRange / kPanels;
    for (int p = 0; p < kPanels; ++p) {
      const double mid = -kLatentRange + (p + 0.5) * width;
      for (std::size_t k = 0; k < Rule::abscissa().size(); ++k) {
        for (double sign : {-1.0, 1.0}) {
          if (Rule::abscissa()[k] == 0.0 && sign > 0) continue;  // centre node listed once
          z.push_back(mid + sign * 0.5 * width * Rule::abscissa()[k]);
          w.push_back(0.5 * width * Rule::weights()[k] * normal_pdf(z.back()));
        }
      }
    }
    const std::size_t nodes = z.size();
    const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
    // q[j][l][k]: P(x_j = l | z_k)
    std::vector<std::vector<std::vector<double>>> q(static_cast<std::size_t>(M));
    for (int j = 0; j < M; ++j) {
      const double mu = dist_.mvn.mu(j), sd = std::sqrt(dist_.mvn.sigma(j, j));
      for (int l = 1; l <= dist_.levels(j); ++l) {
        const auto [lo, hi] = dist_.interval(j, l);
        std::vector<double> col(nodes);
        for (std::size_t k = 0; k < nodes; ++k)
          col[k] = interval_prob(((lo - mu) / sd - a * z[k]) / b, ((hi - mu) / sd - a * z[k]) / b);
        q[static_cast<std::size_t>(j)].push_back(std::move(col));
      }
    }
    // Depth-first over features from the slowest-varying one, carrying the
    // running product at every node.
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(M) + 1, std::vector<double>(nodes));
    partial[static_cast<std::size_t>(M)] = w;
    auto recurse = [&](auto&& self, int j, std::int64_t offset) -> void {
      const auto& above = partial[static_cast<std::size_t>(j) + 1];
      auto& here = partial[static_cast<std::size_t>(j)];
      for (int l = 1; l <= dist_.levels(j); ++l) {
        const auto& ql = q[static_cast<std::size_t>(j)][static_cast<std::size_t>(l - 1)];
        const std::int64_t cell = offset + (l - 1) * stride_[static_cast<std::size_t>(j)];
        if (j == 0) {
          double s = 0.0;
          for (std::size_t k = 0; k < nodes; ++k) s += above[k] * ql[k];
          pmf_[static_cast<std::size_t>(cell)] = s;
        } else {
          for (std::size_t k = 0; k < nodes; ++k) here[k] = above[k] * ql[k];
          self(self, j - 1, cell);
        }
      }
    };
    recurse(recurse, M - 1, 0);
  } else {
    for (std::int64_t c = 0; c < cells; ++c) {
      const auto row = cell_row(c);
      Eigen::VectorXd lo(M), hi(M);
      for (int j = 0; j < M; ++j) {
        const auto [a, b] = dist_.interval(j, static_cast<int>(row[static_cast<std::size_t>(j)]));
        lo(j) = a;
        hi(j) = b;
      }
      pmf_[static_cast<std::size_t>(c)] = box_probability(dist_.mvn, lo, hi, accuracy);
    }
  }
}

std::vector<double> CategoricalOracle::cell_row(std::int64_t cell) const {
  std::vector<double> row(static_cast<std::size_t>(dist_.M()));
  for (int j = 0; j < dist_.M(); ++j) {
    row[static_cast<std::size_t>(j)] = static_cast<double>(cell % dist_.levels(j) + 1);
    cell /= dist_.levels(j);
  }
  return row;
}

double CategoricalOracle::probability(RowView levels) const {
  validate_dense_row(dist_.schema(), levels);
  std::int64_t cell = 0;
  for (int j = 0; j < dist_.M(); ++j)
    cell += (std::lround(levels[static_cast<std::size_t>(j)]) - 1) * stride_[static_cast<std::size_t>(j)];
  return pmf_[static_cast<std::size_t>(cell)];
}

std::vector<double> CategoricalOracle::tabulate(const PredictFn& model) const {
  std::vector<double> values(pmf_.size());
  std::vector<double> row(static_cast<std::size_t>(dist_.M()), 1.0);
  for (std::size_t c = 0; c < pmf_.size(); ++c) {
    values[c] = model(row);
    for (int j = 0; j < dist_.M(); ++j) {
      auto& cell = row[static_cast<std::size_t>(j)];
      if (cell < dist_.levels(j)) {
        cell += 1;
        break;
      }
      cell = 1;
    }
  }
  return values;
}

ContributionVector CategoricalOracle::contributions(const std::vector<double>& values, RowView x_star) const {
  const int M = dist_.M();
  if (values.size() != pmf_.size()) throw Error(ErrorCode::LengthMismatch, "values do not match the level table");
  validate_dense_row(dist_.schema(), x_star);
  const std::size_t count = std::size_t{1} << M;
  std::vector<double> num(count, 0.0), den(count, 0.0);

  // Agreement mask of each cell with x*, maintained incrementally.
  std::vector<int> row(static_cast<std::size_t>(M), 1);
  std::vector<int> target(static_cast<std::size_t>(M));
  std::uint32_t agree = 0;
  for (int j = 0; j < M; ++j) {
    target[static_cast<std::size_t>(j)] = static_cast<int>(std::lround(x_star[static_cast<std::size_t>(j)]));
    if (target[static_cast<std::size_t>(j)] == 1) agree |= 1U << j;
  }
  std::int64_t self_cell = 0;
  for (int j = 0; j < M; ++j) self_cell += (target[static_cast<std::size_t>(j)] - 1) * stride_[static_cast<std::size_t>(j)];

  for (std::size_t c = 0; c < pmf_.size(); ++c) {
    num[agree] += pmf_[c] * values[c];
    den[agree] += pmf_[c];
    for (int j = 0; j < M; ++j) {
      auto& cell = row[static_cast<std::size_t>(j)];
      cell = cell < dist_.levels(j) ? cell + 1 : 1;
      if (cell == target[static_cast<std::size_t>(j)])
        agree |= 1U << j;
      else
        agree &= ~(1U << j);
      if (cell != 1) break;
    }
  }
  // Superset sums: v(S) aggregates every cell agreeing with x* on S.
  for (int j = 0; j < M; ++j) {
    const std::uint32_t bit = 1U << j;
    for (std::uint32_t a = 0; a < count; ++a) {
      if (a & bit) continue;
      num[a] += num[a | bit];
      den[a] += den[a | bit];
    }
  }
  std::vector<double> v(count);
  for (std::size_t s = 0; s < count; ++s) {
    if (den[s] < kZeroProbability)
      throw Error(ErrorCode::ZeroProbabilityCondition, "conditioning event has probability below 1e-12");
    v[s] = num[s] / den[s];
  }
  v.back() = values[static_cast<std::size_t>(self_cell)];
  return ContributionVector(M, std::move(v));
}

double CategoricalOracle::conditional_expectation(const std::vector<double>& values, Coalition S,
                                                  RowView x_star) const {
  if (values.size() != pmf_.size()) throw Error(ErrorCode::LengthMismatch, "values do not match the level table");
  validate_dense_row(dist_.schema(), x_star);
  const std::vector<int> given = S.indices();
  double num = 0.0, den = 0.0;
  for (std::size_t c = 0; c < pmf_.size(); ++c) {
    bool match = true;
    for (int j : given) {
      const auto level = (static_cast<std::int64_t>(c) / stride_[static_cast<std::size_t>(j)]) % dist_.levels(j) + 1;
      if (level != std::lround(x_star[static_cast<std::size_t>(j)])) {
        match = false;
        break;
      }
    }
    if (!match) continue;
    num += pmf_[c] * values[c];
    den += pmf_[c];
  }
  if (den < kZeroProbability)
    throw Error(ErrorCode::ZeroProbabilityCondition, "conditioning event has probability below 1e-12");
  return num / den;
}

std::pair<std::vector<std::int64_t>, std::vector<double>> CategoricalOracle::top_cells(std::int64_t T) const {
  if (T < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  std::vector<std::int64_t> order(pmf_.size());
  std::iota(order.begin(), order.end(), std::int64_t{0});
  const auto keep = std::min<std::int64_t>(T, static_cast<std::int64_t>(order.size()));
  auto by_prob = [&](std::int64_t a, std::int64_t b) {
    const double pa = pmf_[static_cast<std::size_t>(a)], pb = pmf_[static_cast<std::size_t>(b)];
    return pa != pb ? pa > pb : a < b;
  };
  std::partial_sort(order.begin(), order.begin() + keep, order.end(), by_prob);
  order.resize(static_cast<std::size_t>(keep));
  std::vector<double> w;
  double total = 0.0;
  for (auto c : order) {
    w.push_back(pmf_[static_cast<std::size_t>(c)]);
    total += w.back();
  }
  for (double& x : w) x /= total;
  return {order, w};
}

// ---------------------------------------------------------------------------
// Mixed oracle

MixedOracle::MixedOracle(ThresholdGaussianSpec dist, LinearModelSpec model, double quad_tol, double accuracy)
    : dist_(std::move(dist)), model_(std::move(model)), quad_tol_(quad_tol), accuracy_(accuracy) {
  dist_.validate();
  model_.validate(dist_.schema());
  if (dist_.M() > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "too many features");
}

double MixedOracle::feature_expectation(Coalition S, RowView x_star, int j, int level) const {
  const int M = dist_.M();
  if (S.contains(j)) throw Error(ErrorCode::InvalidArgument, "feature is in the conditioning set");
  std::vector<int> s_cont, s_cat;
  for (int k : S.indices()) (dist_.is_categorical(k) ? s_cat : s_cont).push_back(k);

  // Condition on the continuous part of x*_S exactly.
  Eigen::VectorXd mu = dist_.mvn.mu;
  Eigen::MatrixXd sigma = dist_.mvn.sigma;
  std::vector<int> position(static_cast<std::size_t>(M));
  std::iota(position.begin(), position.end(), 0);
  if (!s_cont.empty()) {
    GaussianConditioner cond(dist_.mvn, s_cont);
    std::vector<double> values;
    for (int k : s_cont) values.push_back(x_star[static_cast<std::size_t>(k)]);
    mu = cond.mean_at(values);
    sigma = cond.covariance();
    std::fill(position.begin(), position.end(), -1);
    for (std::size_t i = 0; i < cond.free().size(); ++i) position[static_cast<std::size_t>(cond.free()[i])] = static_cast<int>(i);
  }

  const double mj = mu(position[static_cast<std::size_t>(j)]);
  const double sj = std::sqrt(sigma(position[static_cast<std::size_t>(j)], position[static_cast<std::size_t>(j)]));
  double u_lo = -kLatentRange, u_hi = kLatentRange;
  if (dist_.is_categorical(j)) {
    const auto [a, b] = dist_.interval(j, level);
    u_lo = std::max(u_lo, (a - mj) / sj);
    u_hi = std::min(u_hi, (b - mj) / sj);
  }

  if (s_cat.empty()) {
    if (!dist_.is_categorical(j)) return mj;
    return interval_prob(u_lo, u_hi);
  }

  // Box of the categorical part of x*_S, jointly with x~_j.
  std::vector<int> idx{position[static_cast<std::size_t>(j)]};
  Eigen::VectorXd lo(static_cast<Eigen::Index>(s_cat.size())), hi(static_cast<Eigen::Index>(s_cat.size()));
  for (std::size_t k = 0; k < s_cat.size(); ++k) {
    idx.push_back(position[static_cast<std::size_t>(s_cat[k])]);
    const auto [a, b] = dist_.interval(s_cat[k], static_cast<int>(std::lround(x_star[static_cast<std::size_t>(s_cat[k])])));
    lo(static_cast<Eigen::Index>(k)) = a;
    hi(static_cast<Eigen::Index>(k)) = b;
  }
  const MvnSpec joint = sub_spec(mu, sigma, idx);
  std::vector<int> box_idx(s_cat.size());
  std::iota(box_idx.begin(), box_idx.end(), 1);
  const MvnSpec box_marginal = sub_spec(joint.mu, joint.sigma, box_idx);
  const double p_box = box_probability(box_marginal, lo, hi, accuracy_);
  if (p_box < kZeroProbability)
    throw Error(ErrorCode::ZeroProbabilityCondition, "conditioning event has probability below 1e-12");

  // Box given x~_j = mj + sj u.
  const GaussianConditioner given_j(joint, {0});
  auto box_given = [&](double u) {
    const double x = mj + sj * u;
    MvnSpec c = given_j.at(std::span<const double>(&x, 1));
    return box_probability(c, lo, hi, accuracy_);
  };
  const double tol = quad_tol_ * std::max(p_box, 1e-6);
  double integral = 0.0;
  if (dist_.is_categorical(j)) {
    if (!(u_lo < u_hi)) return 0.0;
    integral = integrate_1d([&](double u) { return normal_pdf(u) * box_given(u); }, u_lo, u_hi, tol);
  } else {
    integral = integrate_1d([&](double u) { return (mj + sj * u) * normal_pdf(u) * box_given(u); }, u_lo, u_hi, tol);
  }
  return integral / p_box;
}

double MixedOracle::conditional_expectation(Coalition S, RowView x_star) const {
  const int M = dist_.M();
  validate_dense_row(dist_.schema(), x_star);
  if (S.is_full(M)) return model_.predict(x_star);
  double y = model_.alpha;
  for (int j = 0; j < M; ++j) {
    const auto& beta = model_.beta[static_cast<std::size_t>(j)];
    if (S.contains(j)) {
      y += dist_.is_categorical(j) ? beta[static_cast<std::size_t>(std::lround(x_star[static_cast<std::size_t>(j)])) - 1]
                                   : model_.gamma[static_cast<std::size_t>(j)] * x_star[static_cast<std::size_t>(j)];
      continue;
    }
    if (dist_.is_categorical(j)) {
      for (int l = 1; l <= dist_.levels(j); ++l)
        if (beta[static_cast<std::size_t>(l - 1)] != 0.0)
          y += beta[static_cast<std::size_t>(l - 1)] * feature_expectation(S, x_star, j, l);
    } else if (model_.gamma[static_cast<std::size_t>(j)] != 0.0) {
      y += model_.gamma[static_cast<std::size_t>(j)] * feature_expectation(S, x_star, j);
    }
  }
  return y;
}

ContributionVector MixedOracle::contributions(RowView x_star) const {
  const int M = dist_.M();
  std::vector<double> v(std::size_t{1} << M);
  for (std::uint32_t mask = 0; mask < v.size(); ++mask) v[mask] = conditional_expectation(Coalition{mask}, x_star);
  return ContributionVector(M, std::move(v));
}

double exact_conditional_expectation_mixed(const ThresholdGaussianSpec& dist, const LinearModelSpec& model,
                                           Coalition S, RowView x_star) {
  return MixedOracle(dist, model).conditional_expectation(S, x_star);
}

// ---------------------------------------------------------------------------

ShapleyResult true_shapley(const ContributionVector& v, RowView x_star, const FeatureSchema& schema) {
  ShapleyResult wls = kernel_shap_solve(v);
  const ShapleyResult direct = shapley_direct(v);
  double gap = std::abs(wls.phi0 - direct.phi0);
  for (std::size_t j = 0; j < wls.phi.size(); ++j) gap = std::max(gap, std::abs(wls.phi[j] - direct.phi[j]));
  const double scale = 1.0 + std::abs(v.full()) + std::abs(v.none());
  if (gap > 1e-8 * scale)
    throw Error(ErrorCode::SingularSystem, "least-squares and direct Shapley values disagree by " + std::to_string(gap));
  wls.x_star = MixedRow::from_dense(schema, x_star);
  wls.predicted = v.full();
  return wls;
}

ShapleyResult true_shapley(const ThresholdGaussianSpec& dist, const LinearModelSpec& model, RowView x_star) {
  if (dist.all_categorical()) {
    const CategoricalOracle oracle(dist);
    return true_shapley(oracle.contributions(oracle.tabulate(model.predictor()), x_star), x_star, dist.schema());
  }
  const MixedOracle oracle(dist, model);
  return true_shapley(oracle.contributions(x_star), x_star, dist.schema());
}

double weighted_mae(const std::vector<ShapleyResult>& truth, const std::vector<ShapleyResult>& estimate,
                    const std::vector<double>& weights) {
  if (truth.size() != estimate.size() || truth.size() != weights.size())
    throw Error(ErrorCode::LengthMismatch, "truth, estimates and weights must have equal length");
  if (truth.empty()) throw Error(ErrorCode::LengthMismatch, "no observations");
  const double wsum = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (std::abs(wsum - 1.0) > 1e-9) throw Error(ErrorCode::InvalidArgument, "weights must sum to 1");
  const std::size_t M = truth.front().phi.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i].phi.size() != M || estimate[i].phi.size() != M)
      throw Error(ErrorCode::LengthMismatch, "Shapley vectors differ in length");
    double row = 0.0;
    for (std::size_t j = 0; j < M; ++j) row += std::abs(truth[i].phi[j] - estimate[i].phi[j]);
    acc += weights[i] * row;
  }
  return acc / static_cast<double>(M);
}

}  // namespace mixshap
