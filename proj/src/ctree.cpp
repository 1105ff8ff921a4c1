#include "mixshap/ctree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/special_functions/gamma.hpp>

#include "mixshap/error.hpp"
#include "mixshap/rng.hpp"

namespace mixshap {
namespace {

constexpr int kExhaustiveLevelLimit = 10;

struct Statistic {
  double value = 0.0;
  int df = 0;
};

// Response side of the node: centred influence matrix and pinv of its covariance.
struct ResponseBlock {
  Eigen::MatrixXd centred;  // n x q
  PseudoInverse v_pinv;     // of V = centred^T centred / n
};

ResponseBlock response_block(const MixedTable& table, std::span<const int> rows, std::span<const int> responses) {
  ResponseBlock b;
  b.centred = influence_matrix(table, rows, responses);
  const auto n = static_cast<double>(rows.size());
  b.centred.rowwise() -= b.centred.colwise().mean();
  b.v_pinv = symmetric_pinv(b.centred.transpose() * b.centred / n);
  return b;
}

// Levels present among `rows` for a categorical column, ascending.
std::vector<int> present_levels(const MixedTable& table, std::span<const int> rows, int column) {
  std::vector<char> seen(static_cast<std::size_t>(table.schema()[column].levels) + 1, 0);
  for (int r : rows) seen[static_cast<std::size_t>(std::lround(table.at(r, column)))] = 1;
  std::vector<int> out;
  for (std::size_t l = 1; l < seen.size(); ++l)
    if (seen[l]) out.push_back(static_cast<int>(l));
  return out;
}

Eigen::MatrixXd predictor_matrix(const MixedTable& table, std::span<const int> rows, int column) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  if (!table.schema()[column].is_categorical()) {
    Eigen::MatrixXd g(n, 1);
    for (Eigen::Index i = 0; i < n; ++i) g(i, 0) = table.at(rows[static_cast<std::size_t>(i)], column);
    return g;
  }
  const auto levels = present_levels(table, rows, column);
  std::vector<int> slot(static_cast<std::size_t>(table.schema()[column].levels) + 1, -1);
  for (std::size_t k = 0; k < levels.size(); ++k) slot[static_cast<std::size_t>(levels[k])] = static_cast<int>(k);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(levels.size()));
  for (Eigen::Index i = 0; i < n; ++i)
    g(i, slot[static_cast<std::size_t>(std::lround(table.at(rows[static_cast<std::size_t>(i)], column)))]) = 1.0;
  return g;
}

bool is_constant(const MixedTable& table, std::span<const int> rows, int column) {
  const double first = table.at(rows.front(), column);
  return std::all_of(rows.begin(), rows.end(), [&](int r) { return table.at(r, column) == first; });
}

// Quadratic form of the linear statistic, Cov(vec T) = V (x) A with A built from g.
Statistic quadratic_statistic(const Eigen::MatrixXd& g, const ResponseBlock& resp, PseudoInverse* a_pinv_out) {
  const auto n = static_cast<double>(g.rows());
  Eigen::MatrixXd gc = g.rowwise() - g.colwise().mean();
  const Eigen::MatrixXd a = (n / (n - 1.0)) * (gc.transpose() * gc);
  PseudoInverse a_pinv = symmetric_pinv(a);
  const Eigen::MatrixXd d = g.transpose() * resp.centred;  // T - E[T]
  Statistic s;
  s.df = a_pinv.rank * resp.v_pinv.rank;
  if (s.df > 0) s.value = (d.transpose() * a_pinv.matrix * d * resp.v_pinv.matrix).trace();
  if (a_pinv_out != nullptr) *a_pinv_out = std::move(a_pinv);
  return s;
}

double chi_squared_upper(double stat, int df) {
  if (df <= 0) return 1.0;
  if (stat <= 0.0) return 1.0;
  return boost::math::gamma_q(0.5 * df, 0.5 * stat);
}

double column_p_value(const MixedTable& table, std::span<const int> rows, int column, const ResponseBlock& resp,
                      TestKind test, int permutations, std::uint64_t seed) {
  if (rows.size() < 2 || is_constant(table, rows, column) || resp.v_pinv.rank == 0) return 1.0;
  const Eigen::MatrixXd g = predictor_matrix(table, rows, column);
  PseudoInverse a_pinv;
  const Statistic observed = quadratic_statistic(g, resp, &a_pinv);
  if (observed.df == 0) return 1.0;
  if (test == TestKind::Asymptotic) return chi_squared_upper(observed.value, observed.df);

  // A is permutation invariant; only the pairing of g rows with responses changes.
  Rng rng(seed);
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(g.rows()));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Eigen::MatrixXd gp(g.rows(), g.cols());
  int exceed = 0;
  const double threshold = observed.value * (1.0 - 1e-12);
  for (int b = 0; b < permutations; ++b) {
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Eigen::Index i = 0; i < g.rows(); ++i) gp.row(i) = g.row(perm[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd d = gp.transpose() * resp.centred;
    const double c = (d.transpose() * a_pinv.matrix * d * resp.v_pinv.matrix).trace();
    if (c >= threshold) ++exceed;
  }
  return (1.0 + exceed) / (1.0 + permutations);
}

struct SplitCandidate {
  bool found = false;
  double statistic = -1.0;
  SplitRule rule;
};

// Two-sample statistic D^T V^+ D / (n_L n_R / (n - 1)), D = sum over the left group of centred h.
double two_sample(const Eigen::VectorXd& left_sum, int n_left, int n, const Eigen::MatrixXd& v_pinv) {
  const double scale = static_cast<double>(n_left) * static_cast<double>(n - n_left) / (n - 1.0);
  return left_sum.dot(v_pinv * left_sum) / scale;
}

SplitCandidate best_continuous_split(const MixedTable& table, std::span<const int> rows, int column,
                                     const ResponseBlock& resp, int min_node) {
  const int n = static_cast<int>(rows.size());
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return table.at(rows[static_cast<std::size_t>(a)], column) < table.at(rows[static_cast<std::size_t>(b)], column);
  });
  SplitCandidate best;
  Eigen::VectorXd left = Eigen::VectorXd::Zero(resp.centred.cols());
  for (int k = 0; k + 1 < n; ++k) {
    const int i = order[static_cast<std::size_t>(k)];
    left += resp.centred.row(i).transpose();
    const int n_left = k + 1;
    const double x = table.at(rows[static_cast<std::size_t>(i)], column);
    const double next = table.at(rows[static_cast<std::size_t>(order[static_cast<std::size_t>(k + 1)])], column);
    if (next == x) continue;
    if (n_left < min_node || n - n_left < min_node) continue;
    const double stat = two_sample(left, n_left, n, resp.v_pinv.matrix);
    if (stat > best.statistic) {
      best.found = true;
      best.statistic = stat;
      best.rule.kind = SplitRule::Kind::ContinuousThreshold;
      best.rule.threshold = 0.5 * (x + next);
      if (!(best.rule.threshold < next)) best.rule.threshold = x;
    }
  }
  return best;
}

SplitCandidate best_categorical_split(const MixedTable& table, std::span<const int> rows, int column,
                                      const ResponseBlock& resp, int min_node) {
  const int n = static_cast<int>(rows.size());
  const auto levels = present_levels(table, rows, column);
  const int k = static_cast<int>(levels.size());
  SplitCandidate best;
  if (k < 2) return best;

  std::vector<int> slot(static_cast<std::size_t>(table.schema()[column].levels) + 1, -1);
  for (int i = 0; i < k; ++i) slot[static_cast<std::size_t>(levels[static_cast<std::size_t>(i)])] = i;
  Eigen::MatrixXd level_sum = Eigen::MatrixXd::Zero(k, resp.centred.cols());
  std::vector<int> level_n(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < n; ++i) {
    const int s = slot[static_cast<std::size_t>(std::lround(table.at(rows[static_cast<std::size_t>(i)], column)))];
    level_sum.row(s) += resp.centred.row(i);
    ++level_n[static_cast<std::size_t>(s)];
  }

  auto consider = [&](const std::vector<char>& goes_left) {
    Eigen::VectorXd left = Eigen::VectorXd::Zero(resp.centred.cols());
    int n_left = 0;
    for (int i = 0; i < k; ++i) {
      if (!goes_left[static_cast<std::size_t>(i)]) continue;
      left += level_sum.row(i).transpose();
      n_left += level_n[static_cast<std::size_t>(i)];
    }
    if (n_left < min_node || n - n_left < min_node) return;
    const double stat = two_sample(left, n_left, n, resp.v_pinv.matrix);
    if (stat > best.statistic) {
      best.found = true;
      best.statistic = stat;
      best.rule.kind = SplitRule::Kind::CategorySubset;
      best.rule.left_levels.clear();
      best.rule.right_levels.clear();
      for (int i = 0; i < k; ++i)
        (goes_left[static_cast<std::size_t>(i)] ? best.rule.left_levels : best.rule.right_levels)
            .push_back(levels[static_cast<std::size_t>(i)]);
    }
  };

  std::vector<char> goes_left(static_cast<std::size_t>(k), 0);
  if (k <= kExhaustiveLevelLimit) {
    // The first present level always goes left; every other subset is tried.
    const std::uint32_t count = 1U << (k - 1);
    for (std::uint32_t mask = 0; mask + 1 < count; ++mask) {
      goes_left[0] = 1;
      for (int i = 1; i < k; ++i) goes_left[static_cast<std::size_t>(i)] = (mask >> (i - 1)) & 1U;
      consider(goes_left);
    }
    return best;
  }

  // Many levels: order levels along the leading direction of their whitened
  // mean responses and scan contiguous cut points.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> vs(resp.v_pinv.matrix);
  const Eigen::MatrixXd whiten = vs.eigenvectors() * vs.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                                 vs.eigenvectors().transpose();
  Eigen::MatrixXd w(k, resp.centred.cols());
  for (int i = 0; i < k; ++i) w.row(i) = (whiten * level_sum.row(i).transpose()).transpose() / std::sqrt(level_n[static_cast<std::size_t>(i)]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> between(w.transpose() * w);
  const Eigen::VectorXd dir = between.eigenvectors().col(between.eigenvectors().cols() - 1);
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> score(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i)
    score[static_cast<std::size_t>(i)] = (whiten * level_sum.row(i).transpose()).dot(dir) / level_n[static_cast<std::size_t>(i)];
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return score[static_cast<std::size_t>(a)] < score[static_cast<std::size_t>(b)]; });
  std::fill(goes_left.begin(), goes_left.end(), 0);
  for (int cut = 0; cut + 1 < k; ++cut) {
    goes_left[static_cast<std::size_t>(order[static_cast<std::size_t>(cut)])] = 1;
    consider(goes_left);
  }
  return best;
}

class TreeBuilder {
 public:
  TreeBuilder(const MixedTable& table, const std::vector<int>& predictors, const std::vector<int>& responses,
              const CtreeConfig& cfg)
      : table_(table), predictors_(predictors), responses_(responses), cfg_(cfg) {}

  std::vector<CtreeNode> build() {
    std::vector<int> rows(static_cast<std::size_t>(table_.n()));
    std::iota(rows.begin(), rows.end(), 0);
    grow(std::move(rows), 0, derive_seed(cfg_.seed, {1}));
    return std::move(nodes_);
  }

 private:
  int grow(std::vector<int> rows, int depth, std::uint64_t node_key) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    nodes_.back().id = id;
    nodes_.back().depth = depth;
    nodes_.back().n = static_cast<int>(rows.size());

    auto make_leaf = [&]() {
      nodes_[static_cast<std::size_t>(id)].rows = std::move(rows);
      return id;
    };

    const int n = static_cast<int>(rows.size());
    if (predictors_.empty() || responses_.empty() || n < 2 * cfg_.min_node || n < 2) return make_leaf();
    if (cfg_.max_depth >= 0 && depth >= cfg_.max_depth) return make_leaf();

    const ResponseBlock resp = response_block(table_, rows, responses_);
    if (resp.v_pinv.rank == 0) return make_leaf();

    // Step 1: feature selection from the per-predictor tests alone.
    std::vector<double> p(predictors_.size());
    for (std::size_t j = 0; j < predictors_.size(); ++j)
      p[j] = column_p_value(table_, rows, predictors_[j], resp, cfg_.test, cfg_.permutations,
                            derive_seed(node_key, {static_cast<std::uint64_t>(j)}));
    const double min_p = *std::min_element(p.begin(), p.end());
    const double global_p = std::min(1.0, static_cast<double>(predictors_.size()) * min_p);
    nodes_[static_cast<std::size_t>(id)].p_value = global_p;
    if (!(global_p < cfg_.alpha)) return make_leaf();

    // Step 2: split point for the selected feature. If the most significant
    // feature has no admissible split, the next one in p-value order is used.
    std::vector<std::size_t> order(predictors_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });
    for (std::size_t j : order) {
      if (!(p[j] < 1.0)) break;
      const int column = predictors_[j];
      const SplitCandidate split = table_.schema()[column].is_categorical()
                                       ? best_categorical_split(table_, rows, column, resp, cfg_.min_node)
                                       : best_continuous_split(table_, rows, column, resp, cfg_.min_node);
      if (!split.found) continue;

      std::vector<int> left_rows, right_rows;
      for (int r : rows) (goes_left(split.rule, table_.at(r, column)) ? left_rows : right_rows).push_back(r);
      rows.clear();
      rows.shrink_to_fit();
      nodes_[static_cast<std::size_t>(id)].feature = column;
      nodes_[static_cast<std::size_t>(id)].rule = split.rule;
      const int left = grow(std::move(left_rows), depth + 1, derive_seed(node_key, {0x4c}));
      const int right = grow(std::move(right_rows), depth + 1, derive_seed(node_key, {0x52}));
      nodes_[static_cast<std::size_t>(id)].left = left;
      nodes_[static_cast<std::size_t>(id)].right = right;
      return id;
    }
    return make_leaf();
  }

  static bool goes_left(const SplitRule& rule, double value) {
    if (rule.kind == SplitRule::Kind::ContinuousThreshold) return value <= rule.threshold;
    const int level = static_cast<int>(std::lround(value));
    return std::find(rule.left_levels.begin(), rule.left_levels.end(), level) != rule.left_levels.end();
  }

  const MixedTable& table_;
  const std::vector<int>& predictors_;
  const std::vector<int>& responses_;
  const CtreeConfig& cfg_;
  std::vector<CtreeNode> nodes_;
};

}  // namespace

void CtreeConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0, 1)");
  if (min_node < 1) throw Error(ErrorCode::InvalidArgument, "min_node must be >= 1");
  if (test == TestKind::MonteCarlo && permutations < 99)
    throw Error(ErrorCode::InvalidArgument, "MonteCarlo test needs >= 99 permutations");
}

PseudoInverse symmetric_pinv(const Eigen::MatrixXd& m, double rel_tol) {
  PseudoInverse out;
  out.matrix = Eigen::MatrixXd::Zero(m.rows(), m.cols());
  if (m.size() == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  if (!(top > 0.0)) return out;
  const double cut = rel_tol * top;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) > cut) {
      out.matrix += (1.0 / ev(i)) * es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
      ++out.rank;
    }
  }
  return out;
}

Eigen::MatrixXd influence_matrix(const MixedTable& table, std::span<const int> rows, std::span<const int> columns) {
  Eigen::Index width = 0;
  for (int c : columns) width += table.schema()[c].is_categorical() ? table.schema()[c].levels : 1;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    Eigen::Index offset = 0;
    for (int c : columns) {
      const double v = table.at(rows[i], c);
      if (table.schema()[c].is_categorical()) {
        h(static_cast<Eigen::Index>(i), offset + std::lround(v) - 1) = 1.0;
        offset += table.schema()[c].levels;
      } else {
        h(static_cast<Eigen::Index>(i), offset++) = v;
      }
    }
  }
  return h;
}

double independence_test(const MixedTable& table, std::span<const int> rows, int x_column,
                         std::span<const int> response_columns, TestKind test, int permutations, std::uint64_t seed) {
  if (rows.size() < 2) return 1.0;
  const ResponseBlock resp = response_block(table, rows, response_columns);
  return column_p_value(table, rows, x_column, resp, test, permutations, seed);
}

CtreeModel::CtreeModel(std::vector<CtreeNode> nodes, std::vector<int> predictors, std::vector<int> responses,
                       int n_train)
    : nodes_(std::move(nodes)), predictors_(std::move(predictors)), responses_(std::move(responses)), n_train_(n_train) {}

std::vector<int> CtreeModel::leaves() const {
  std::vector<int> out;
  for (const auto& nd : nodes_)
    if (nd.is_leaf()) out.push_back(nd.id);
  return out;
}

int CtreeModel::depth() const {
  int d = 0;
  for (const auto& nd : nodes_) d = std::max(d, nd.depth);
  return d;
}

int CtreeModel::route(RowView row, bool strict) const {
  int id = 0;
  while (true) {
    const CtreeNode& nd = nodes_[static_cast<std::size_t>(id)];
    if (nd.is_leaf()) return id;
    const double v = row[static_cast<std::size_t>(nd.feature)];
    bool left = false;
    if (nd.rule.kind == SplitRule::Kind::ContinuousThreshold) {
      left = v <= nd.rule.threshold;
    } else {
      const int level = static_cast<int>(std::lround(v));
      const auto& l = nd.rule.left_levels;
      const auto& r = nd.rule.right_levels;
      if (std::find(l.begin(), l.end(), level) != l.end()) {
        left = true;
      } else if (std::find(r.begin(), r.end(), level) != r.end()) {
        left = false;
      } else {
        if (strict)
          throw Error(ErrorCode::UnseenLevel, "level " + std::to_string(level) + " was not seen at node " +
                                                  std::to_string(id));
        left = node(nd.left).n >= node(nd.right).n;
      }
    }
    id = left ? nd.left : nd.right;
  }
}

const std::vector<int>& CtreeModel::leaf_rows(int leaf) const {
  const auto& nd = node(leaf);
  if (!nd.is_leaf()) throw Error(ErrorCode::InvalidArgument, "node " + std::to_string(leaf) + " is not a leaf");
  if (nd.rows.empty()) throw Error(ErrorCode::EmptyLeaf, "leaf " + std::to_string(leaf) + " has no rows");
  return nd.rows;
}

nlohmann::json CtreeModel::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& nd : nodes_) {
    nlohmann::json j{{"id", nd.id}, {"depth", nd.depth}, {"n", nd.n}, {"p_value", nd.p_value}};
    if (nd.is_leaf()) {
      j["leaf"] = true;
      j["rows"] = nd.rows;
    } else {
      j["leaf"] = false;
      j["feature"] = nd.feature;
      if (nd.rule.kind == SplitRule::Kind::ContinuousThreshold) {
        j["rule"] = {{"type", "threshold"}, {"threshold", nd.rule.threshold}};
      } else {
        j["rule"] = {{"type", "subset"}, {"left_levels", nd.rule.left_levels}, {"right_levels", nd.rule.right_levels}};
      }
      j["left"] = nd.left;
      j["right"] = nd.right;
    }
    nodes.push_back(std::move(j));
  }
  return {{"predictors", predictors_}, {"responses", responses_}, {"n_train", n_train_}, {"nodes", nodes}};
}

CtreeModel fit_ctree(const MixedTable& table, std::vector<int> predictors, std::vector<int> responses,
                     const CtreeConfig& cfg) {
  cfg.validate();
  if (table.n() < 1) throw Error(ErrorCode::InvalidArgument, "cannot fit a tree on an empty table");
  for (int c : predictors)
    if (c < 0 || c >= table.width()) throw Error(ErrorCode::InvalidArgument, "predictor column out of range");
  for (int c : responses)
    if (c < 0 || c >= table.width()) throw Error(ErrorCode::InvalidArgument, "response column out of range");
  TreeBuilder builder(table, predictors, responses, cfg);
  auto nodes = builder.build();
  return CtreeModel(std::move(nodes), std::move(predictors), std::move(responses), table.n());
}

CtreeModel fit_ctree(const MixedTable& predictors, const MixedTable& response, const CtreeConfig& cfg) {
  if (predictors.n() != response.n())
    throw Error(ErrorCode::RowMisalignment, std::to_string(predictors.n()) + " predictor rows vs " +
                                                std::to_string(response.n()) + " response rows");
  std::vector<FeatureSpec> specs = predictors.schema().features();
  for (const auto& f : response.schema().features()) {
    FeatureSpec copy = f;
    if (predictors.schema().index_of(copy.name) >= 0) copy.name += "_response";
    specs.push_back(copy);
  }
  const int p = predictors.width(), q = response.width();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(predictors.n()) * static_cast<std::size_t>(p + q));
  for (int i = 0; i < predictors.n(); ++i) {
    const auto a = predictors.row(i);
    const auto b = response.row(i);
    data.insert(data.end(), a.begin(), a.end());
    data.insert(data.end(), b.begin(), b.end());
  }
  const MixedTable joined = MixedTable::from_dense(FeatureSchema(std::move(specs)), std::move(data));
  std::vector<int> pred(static_cast<std::size_t>(p)), resp(static_cast<std::size_t>(q));
  std::iota(pred.begin(), pred.end(), 0);
  std::iota(resp.begin(), resp.end(), p);
  return fit_ctree(joined, std::move(pred), std::move(resp), cfg);
}

}  // namespace mixshap
