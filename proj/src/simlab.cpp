#include "mixshap/simlab.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <sstream>

#include <fmt/format.h>

#include "mixshap/error.hpp"
#include "mixshap/parallel.hpp"
#include "mixshap/tabular_io.hpp"

namespace mixshap {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool needs_onehot(const MethodSpec& m, const FeatureSchema& schema) {
  return m.kind == MethodKind::CtreeOnehot || (m.onehot && schema.n_categorical() > 0);
}

nlohmann::json cutoffs_to_json(const std::vector<double>& c) {
  nlohmann::json out = nlohmann::json::array();
  for (double v : c) {
    if (v == -kInf)
      out.push_back("-inf");
    else if (v == kInf)
      out.push_back("inf");
    else
      out.push_back(v);
  }
  return out;
}

}  // namespace

std::vector<double> cutoffs_from_json(const nlohmann::json& j) {
  std::vector<double> out;
  for (const auto& c : j) {
    if (c.is_string()) {
      const auto s = c.get<std::string>();
      if (s == "-inf" || s == "-Inf")
        out.push_back(-kInf);
      else if (s == "inf" || s == "Inf" || s == "+inf")
        out.push_back(kInf);
      else
        throw Error(ErrorCode::ParseError, "bad cut-off '" + s + "'");
    } else {
      out.push_back(c.get<double>());
    }
  }
  if (out.empty() || out.front() != -kInf) out.insert(out.begin(), -kInf);
  if (out.back() != kInf) out.push_back(kInf);
  return out;
}

ThresholdGaussianSpec threshold_gaussian_from_json(const nlohmann::json& j) {
  try {
    if (j.contains("equicorrelated")) {
      const auto& e = j.at("equicorrelated");
      const std::vector<double> c = e.contains("cutoffs") ? cutoffs_from_json(e.at("cutoffs"))
                                                           : std::vector<double>{-kInf, 0.0, 1.0, kInf};
      return ThresholdGaussianSpec::equicorrelated(e.value("n_cat", 0), e.value("n_cont", 0), e.value("rho", 0.0), c);
    }
    const auto mu = j.at("mu").get<std::vector<double>>();
    const auto rows = j.at("sigma").get<std::vector<std::vector<double>>>();
    const int d = static_cast<int>(mu.size());
    if (static_cast<int>(rows.size()) != d) throw Error(ErrorCode::ArityMismatch, "sigma must be d x d");
    Eigen::MatrixXd sigma(d, d);
    for (int r = 0; r < d; ++r) {
      if (static_cast<int>(rows[static_cast<std::size_t>(r)].size()) != d)
        throw Error(ErrorCode::ArityMismatch, "sigma must be d x d");
      for (int c = 0; c < d; ++c) sigma(r, c) = rows[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
    }
    std::vector<std::vector<double>> cutoffs(static_cast<std::size_t>(d));
    if (j.contains("cutoffs")) {
      const auto& cj = j.at("cutoffs");
      if (static_cast<int>(cj.size()) != d) throw Error(ErrorCode::ArityMismatch, "one cut-off list per feature");
      for (int k = 0; k < d; ++k)
        if (!cj[static_cast<std::size_t>(k)].empty())
          cutoffs[static_cast<std::size_t>(k)] = cutoffs_from_json(cj[static_cast<std::size_t>(k)]);
    }
    std::vector<std::string> names;
    if (j.contains("names")) names = j.at("names").get<std::vector<std::string>>();
    return ThresholdGaussianSpec(MvnSpec(Eigen::Map<const Eigen::VectorXd>(mu.data(), d), sigma), cutoffs, names);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("distribution: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Methods

MethodSpec MethodSpec::independence(int K) {
  MethodSpec m;
  m.kind = MethodKind::Independence;
  m.K = K;
  return m;
}

MethodSpec MethodSpec::empirical(double sigma, double eta) {
  MethodSpec m;
  m.kind = MethodKind::Empirical;
  m.onehot = true;
  m.sigma = sigma;
  m.eta = eta;
  return m;
}

MethodSpec MethodSpec::gaussian(int K) {
  MethodSpec m;
  m.kind = MethodKind::Gaussian;
  m.onehot = true;
  m.K = K;
  return m;
}

MethodSpec MethodSpec::ctree(double alpha, int K) {
  MethodSpec m;
  m.kind = MethodKind::Ctree;
  m.alpha = alpha;
  m.K = K;
  return m;
}

MethodSpec MethodSpec::ctree_onehot(double alpha, int K) {
  MethodSpec m = ctree(alpha, K);
  m.kind = MethodKind::CtreeOnehot;
  m.onehot = true;
  return m;
}

MethodSpec MethodSpec::oracle() {
  MethodSpec m;
  m.kind = MethodKind::Oracle;
  return m;
}

std::string MethodSpec::label() const {
  switch (kind) {
    case MethodKind::Independence:
      return "independence";
    case MethodKind::Empirical:
      return onehot ? "empirical" : "empirical(raw)";
    case MethodKind::Gaussian:
      return fmt::format("gaussian({}){}", K, onehot ? "" : "(raw)");
    case MethodKind::Ctree:
      return onehot ? "ctree(onehot)" : "ctree";
    case MethodKind::CtreeOnehot:
      return "ctree-onehot";
    case MethodKind::Oracle:
      return "oracle";
  }
  return "unknown";
}

ConditionalSamplerSpec MethodSpec::sampler_spec() const {
  switch (kind) {
    case MethodKind::Independence:
      return ConditionalSamplerSpec::independence(K);
    case MethodKind::Empirical:
      return ConditionalSamplerSpec::empirical(sigma, eta);
    case MethodKind::Gaussian:
      return ConditionalSamplerSpec::gaussian_kind(K);
    case MethodKind::Ctree:
    case MethodKind::CtreeOnehot:
      return ConditionalSamplerSpec::ctree_kind(alpha, min_node, K);
    case MethodKind::Oracle:
      break;
  }
  throw Error(ErrorCode::InvalidArgument, "the oracle method has no sampler");
}

MethodSpec method_from_json(const nlohmann::json& j) {
  try {
    const std::string name = j.is_string() ? j.get<std::string>() : j.at("name").get<std::string>();
    MethodSpec m;
    if (name == "independence") {
      m = MethodSpec::independence();
    } else if (name == "empirical") {
      m = MethodSpec::empirical();
    } else if (name == "gaussian") {
      m = MethodSpec::gaussian();
    } else if (name == "ctree") {
      m = MethodSpec::ctree();
    } else if (name == "ctree_onehot" || name == "ctree-onehot") {
      m = MethodSpec::ctree_onehot();
    } else if (name == "oracle") {
      m = MethodSpec::oracle();
    } else {
      throw Error(ErrorCode::ParseError, "unknown method '" + name + "'");
    }
    if (j.is_object()) {
      m.K = j.value("K", m.K);
      m.onehot = j.value("onehot", m.onehot);
      m.alpha = j.value("alpha", m.alpha);
      m.min_node = j.value("min_node", m.min_node);
      m.sigma = j.value("sigma", m.sigma);
      m.eta = j.value("eta", m.eta);
      if (m.kind == MethodKind::CtreeOnehot) m.onehot = true;
    }
    if (m.K < 1) throw Error(ErrorCode::ParseError, "method K must be >= 1");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("method: ") + e.what());
  }
}

nlohmann::json method_to_json(const MethodSpec& m) {
  static const char* names[] = {"independence", "empirical", "gaussian", "ctree", "ctree_onehot", "oracle"};
  nlohmann::json j{{"name", names[static_cast<int>(m.kind)]}, {"label", m.label()}};
  switch (m.kind) {
    case MethodKind::Independence:
      j["K"] = m.K;
      break;
    case MethodKind::Empirical:
      j["sigma"] = m.sigma;
      j["eta"] = m.eta;
      j["onehot"] = m.onehot;
      break;
    case MethodKind::Gaussian:
      j["K"] = m.K;
      j["onehot"] = m.onehot;
      break;
    case MethodKind::Ctree:
    case MethodKind::CtreeOnehot:
      j["K"] = m.K;
      j["alpha"] = m.alpha;
      j["min_node"] = m.min_node;
      j["onehot"] = m.onehot;
      break;
    case MethodKind::Oracle:
      break;
  }
  return j;
}

// ---------------------------------------------------------------------------
// Experiment spec

ThresholdGaussianSpec ExperimentSpec::distribution() const {
  return ThresholdGaussianSpec::equicorrelated(n_cat, n_cont, rho, cutoffs);
}

void ExperimentSpec::validate() const {
  if (n_cat < 0 || n_cont < 0 || M() < 1) throw Error(ErrorCode::InvalidArgument, "need at least one feature");
  if (M() > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "at most 20 features");
  if (n_train < 2) throw Error(ErrorCode::InvalidArgument, "n_train must be >= 2");
  if (T < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  if (!(noise_sd >= 0.0)) throw Error(ErrorCode::InvalidArgument, "noise_sd must be >= 0");
  if (methods.empty()) throw Error(ErrorCode::InvalidArgument, "experiment '" + name + "' lists no methods");
  (void)distribution();  // cut-offs and positive definiteness
}

nlohmann::json experiment_to_json(const ExperimentSpec& spec) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& m : spec.methods) methods.push_back(method_to_json(m));
  return {{"name", spec.name},
          {"M", spec.M()},
          {"L", spec.L()},
          {"n_cat", spec.n_cat},
          {"n_cont", spec.n_cont},
          {"rho", spec.rho},
          {"cutoffs", cutoffs_to_json(spec.cutoffs)},
          {"n_train", spec.n_train},
          {"T", spec.T},
          {"seed", spec.seed},
          {"coef_seed", spec.coef_seed},
          {"replicate", spec.replicate},
          {"noise_sd", spec.noise_sd},
          {"methods", methods}};
}

// ---------------------------------------------------------------------------
// Data and model

MixedTable simulate_mixed_data(const ExperimentSpec& spec, Rng& rng) {
  return spec.distribution().sample(spec.n_train, rng);
}

LinearModelSpec fit_linear_model(const MixedTable& table, const std::vector<double>& y, bool* rank_deficient) {
  const FeatureSchema& schema = table.schema();
  if (static_cast<int>(y.size()) != table.n()) throw Error(ErrorCode::LengthMismatch, "response length differs from rows");
  const GroupMap groups = one_hot_groups(schema);
  const int width = groups.width();
  const int p = width + 1;
  Eigen::MatrixXd X(table.n(), p);
  for (int i = 0; i < table.n(); ++i) {
    X(i, 0) = 1.0;
    const auto row = one_hot_encode_row(schema, table.row(i));
    for (int k = 0; k < width; ++k) X(i, k + 1) = row[static_cast<std::size_t>(k)];
  }
  const Eigen::Map<const Eigen::VectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  Eigen::VectorXd b;
  const bool deficient = qr.rank() < p;
  if (deficient) {
    b = Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>(X).solve(yv);
  } else {
    b = qr.solve(yv);
  }
  if (rank_deficient != nullptr) *rank_deficient = deficient;

  LinearModelSpec m = LinearModelSpec::zeros(schema);
  m.alpha = b(0);
  for (int j = 0; j < schema.size(); ++j) {
    const auto& cols = groups.groups[static_cast<std::size_t>(j)];
    if (schema[j].is_categorical()) {
      for (std::size_t k = 0; k < cols.size(); ++k) m.beta[static_cast<std::size_t>(j)][k + 1] = b(cols[k] + 1);
    } else {
      m.gamma[static_cast<std::size_t>(j)] = b(cols.front() + 1);
    }
  }
  return m;
}

ResponseAndModel make_response_and_model(const MixedTable& table, const ExperimentSpec& spec, Rng& coef_rng,
                                         Rng& rng) {
  const FeatureSchema& schema = table.schema();
  std::normal_distribution<double> normal(0.0, 1.0);
  ResponseAndModel out;
  out.truth = LinearModelSpec::zeros(schema);
  out.truth.alpha = normal(coef_rng);
  for (int j = 0; j < schema.size(); ++j) {
    if (schema[j].is_categorical()) {
      for (int l = 2; l <= schema[j].levels; ++l)
        out.truth.beta[static_cast<std::size_t>(j)][static_cast<std::size_t>(l - 1)] = normal(coef_rng);
    } else {
      out.truth.gamma[static_cast<std::size_t>(j)] = normal(coef_rng);
    }
  }
  out.y.resize(static_cast<std::size_t>(table.n()));
  for (int i = 0; i < table.n(); ++i)
    out.y[static_cast<std::size_t>(i)] = out.truth.predict(table.row(i)) + spec.noise_sd * normal(rng);
  out.fitted = fit_linear_model(table, out.y, &out.rank_deficient);
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

const MethodResult* ExperimentResult::find(const std::string& label) const {
  for (const auto& m : methods)
    if (m.method == label) return &m;
  return nullptr;
}

FittedSampler fit_method(const MethodSpec& method, const MixedTable& train, int threads) {
  if (method.kind == MethodKind::Oracle) throw Error(ErrorCode::InvalidArgument, "oracle has no sampler");
  const MixedTable table = needs_onehot(method, train.schema()) ? one_hot_encode(train).table : train;
  FittedSampler sampler = fit_sampler(method.sampler_spec(), table);
  sampler.prefit_all(threads);
  return sampler;
}

ShapleyResult explain_observation(const MethodSpec& method, const FittedSampler& sampler, const LinearModelSpec& model,
                                  RowView x_star, const FeatureSchema& schema, std::uint64_t seed) {
  const int K = method.K;
  if (!needs_onehot(method, schema)) {
    const ContributionVector v = estimate_contributions(sampler, model.predictor(), x_star, K, seed);
    ShapleyResult r = kernel_shap_solve(v);
    r.x_star = MixedRow::from_dense(schema, x_star);
    r.predicted = v.full();
    return r;
  }
  GroupMap groups;
  (void)one_hot_schema(schema, &groups);
  const std::vector<double> encoded = one_hot_encode_row(schema, x_star);
  const ContributionVector v = estimate_contributions(sampler, model.onehot_predictor(), encoded, K, seed);
  const ShapleyResult enc = kernel_shap_solve(v);
  ShapleyResult r;
  r.phi0 = enc.phi0;
  r.phi = aggregate_onehot_shapley(enc.phi, groups);
  r.x_star = MixedRow::from_dense(schema, x_star);
  r.predicted = v.full();
  return r;
}

TestSet build_test_set(const ThresholdGaussianSpec& dist, const LinearModelSpec& model, int T, std::uint64_t seed,
                       int threads) {
  if (T < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
  const FeatureSchema schema = dist.schema();
  TestSet out;
  if (dist.all_categorical()) {
    const CategoricalOracle oracle(dist);
    auto [cells, weights] = oracle.top_cells(T);
    out.weights = std::move(weights);
    for (auto c : cells) out.rows.push_back(oracle.cell_row(c));
    const std::vector<double> values = oracle.tabulate(model.predictor());
    out.truth.resize(out.rows.size());
    parallel_for(static_cast<int>(out.rows.size()), threads, [&](int i) {
      const auto& row = out.rows[static_cast<std::size_t>(i)];
      out.truth[static_cast<std::size_t>(i)] = true_shapley(oracle.contributions(values, row), row, schema);
    });
    return out;
  }
  Rng test_rng = make_rng(seed, {4});
  const MixedTable test = dist.sample(T, test_rng);
  for (int i = 0; i < test.n(); ++i) {
    const auto r = test.row(i);
    out.rows.emplace_back(r.begin(), r.end());
  }
  out.weights.assign(out.rows.size(), 1.0 / static_cast<double>(out.rows.size()));
  const MixedOracle oracle(dist, model);
  out.truth.resize(out.rows.size());
  parallel_for(static_cast<int>(out.rows.size()), threads, [&](int i) {
    const auto& row = out.rows[static_cast<std::size_t>(i)];
    out.truth[static_cast<std::size_t>(i)] = true_shapley(oracle.contributions(row), row, schema);
  });
  return out;
}

MethodResult evaluate_method(const MethodSpec& method, const MixedTable& train, const LinearModelSpec& model,
                             const TestSet& test, std::uint64_t seed, int threads) {
  const FeatureSchema& schema = train.schema();
  MethodResult res;
  res.method = method.label();
  try {
    if (method.kind == MethodKind::Oracle) {
      res.phi = test.truth;
    } else {
      const auto t_fit = Clock::now();
      const FittedSampler sampler = fit_method(method, train, threads);
      res.fit_seconds = seconds_since(t_fit);

      const int T = static_cast<int>(test.rows.size());
      res.phi.resize(static_cast<std::size_t>(T));
      const auto t_explain = Clock::now();
      parallel_for(T, threads, [&](int i) {
        res.phi[static_cast<std::size_t>(i)] = explain_observation(
            method, sampler, model, test.rows[static_cast<std::size_t>(i)], schema,
            derive_seed(seed, {5, static_cast<std::uint64_t>(i)}));
      });
      res.explain_seconds_per_obs = seconds_since(t_explain) / T;
    }
    res.mae = weighted_mae(test.truth, res.phi, test.weights);
    res.ok = true;
  } catch (const Error& e) {
    res.ok = false;
    res.error = e.what();
    res.phi.clear();
  }
  return res;
}

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  spec.validate();
  ExperimentResult out;
  out.spec = spec;
  const ThresholdGaussianSpec dist = spec.distribution();

  Rng data_rng = make_rng(spec.seed, {1});
  const MixedTable train = dist.sample(spec.n_train, data_rng);
  Rng coef_rng = make_rng(spec.coef_seed, {2});
  Rng noise_rng = make_rng(spec.seed, {3});
  out.model = make_response_and_model(train, spec, coef_rng, noise_rng).fitted;
  const int threads = spec.timing ? 1 : spec.threads;

  TestSet test = build_test_set(dist, out.model, spec.T, spec.seed, threads);
  for (const MethodSpec& method : spec.methods)
    out.methods.push_back(evaluate_method(method, train, out.model, test, spec.seed, threads));
  out.test_rows = std::move(test.rows);
  out.weights = std::move(test.weights);
  out.truth = std::move(test.truth);
  return out;
}

// ---------------------------------------------------------------------------
// Grids

std::vector<ExperimentSpec> GridConfig::expand() const {
  std::vector<ExperimentSpec> out;
  for (std::size_t e = 0; e < experiments.size(); ++e) {
    const std::vector<double> grid_rhos = rhos.empty() ? std::vector<double>{experiments[e].rho} : rhos;
    for (std::size_t r = 0; r < grid_rhos.size(); ++r) {
      for (int rep = 0; rep < replicates; ++rep) {
        ExperimentSpec s = experiments[e];
        s.rho = grid_rhos[r];
        s.replicate = rep;
        s.seed = derive_seed(seed, {e, r, static_cast<std::uint64_t>(rep)});
        s.coef_seed = derive_seed(seed, {e, 0xc0ef, static_cast<std::uint64_t>(rep)});
        s.threads = threads;
        s.timing = timing;
        out.push_back(std::move(s));
      }
    }
  }
  return out;
}

GridConfig grid_from_json(const nlohmann::json& j) {
  GridConfig g;
  try {
    if (!j.is_object()) throw Error(ErrorCode::ParseError, "grid config must be a JSON object");
    g.seed = j.value("seed", std::uint64_t{1});
    g.replicates = j.value("replicates", 1);
    g.threads = j.value("threads", 1);
    g.timing = j.value("timing", false);
    if (j.contains("rhos")) g.rhos = j.at("rhos").get<std::vector<double>>();
    if (g.replicates < 1) throw Error(ErrorCode::ParseError, "replicates must be >= 1");
    const nlohmann::json defaults = j.value("defaults", nlohmann::json::object());
    for (const auto& e : j.at("experiments")) {
      nlohmann::json merged = defaults;
      merged.update(e);
      ExperimentSpec s;
      s.name = merged.value("name", "experiment");
      s.n_cat = merged.value("n_cat", s.n_cat);
      s.n_cont = merged.value("n_cont", s.n_cont);
      s.rho = merged.value("rho", 0.0);
      if (merged.contains("cutoffs")) s.cutoffs = cutoffs_from_json(merged.at("cutoffs"));
      s.n_train = merged.value("n_train", s.n_train);
      s.T = merged.value("T", s.n_cat == s.M() ? 2000 : 500);
      s.noise_sd = merged.value("noise_sd", s.noise_sd);
      for (const auto& m : merged.at("methods")) s.methods.push_back(method_from_json(m));
      s.validate();
      g.experiments.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("grid config: ") + e.what());
  }
  return g;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

int GridResult::failures() const {
  int n = 0;
  for (const auto& r : runs)
    for (const auto& m : r.methods) n += m.ok ? 0 : 1;
  return n;
}

GridResult run_grid(const GridConfig& grid) {
  GridResult out;
  std::vector<ExperimentSpec> specs = grid.expand();
  out.runs.resize(specs.size());
  if (grid.timing || grid.threads == 1 || specs.size() < 2) {
    for (std::size_t i = 0; i < specs.size(); ++i) out.runs[i] = run_experiment(specs[i]);
  } else {
    for (auto& s : specs) s.threads = 1;
    parallel_for(static_cast<int>(specs.size()), grid.threads,
                 [&](int i) { out.runs[static_cast<std::size_t>(i)] = run_experiment(specs[static_cast<std::size_t>(i)]); });
  }

  for (const auto& run : out.runs) {
    for (const auto& m : run.methods) {
      auto it = std::find_if(out.cells.begin(), out.cells.end(), [&](const GridCell& c) {
        return c.experiment == run.spec.name && c.rho == run.spec.rho && c.method == m.method;
      });
      if (it == out.cells.end()) {
        out.cells.push_back(GridCell{run.spec.name, run.spec.rho, m.method, {}, 0, 0.0, 0.0, 0.0});
        it = out.cells.end() - 1;
      }
      if (m.ok) {
        it->maes.push_back(m.mae);
        it->mean_fit_seconds += m.fit_seconds;
        it->mean_explain_seconds += m.explain_seconds_per_obs;
      } else {
        ++it->failures;
      }
    }
  }
  for (auto& c : out.cells) {
    const auto n = static_cast<double>(c.maes.size());
    c.median_mae = median(c.maes);
    if (n > 0) {
      c.mean_fit_seconds /= n;
      c.mean_explain_seconds /= n;
    }
  }
  return out;
}

std::string results_csv(const GridResult& grid) {
  std::ostringstream os;
  os << "experiment,M,L,n_cat,n_cont,rho,n_train,T,replicate,seed,method,status,mae\n";
  for (const auto& run : grid.runs) {
    const auto& s = run.spec;
    for (const auto& m : run.methods) {
      os << s.name << ',' << s.M() << ',' << s.L() << ',' << s.n_cat << ',' << s.n_cont << ',' << format_double(s.rho)
         << ',' << s.n_train << ',' << run.test_rows.size() << ',' << s.replicate << ',' << s.seed << ',' << m.method
         << ',' << (m.ok ? "ok" : "failed") << ',' << (m.ok ? format_double(m.mae) : "") << '\n';
    }
  }
  return os.str();
}

std::string timings_csv(const GridResult& grid) {
  std::ostringstream os;
  os << "experiment,rho,replicate,method,fit_seconds,explain_seconds_per_obs\n";
  for (const auto& run : grid.runs)
    for (const auto& m : run.methods)
      if (m.ok)
        os << run.spec.name << ',' << format_double(run.spec.rho) << ',' << run.spec.replicate << ',' << m.method << ','
           << fmt::format("{:.6g}", m.fit_seconds) << ',' << fmt::format("{:.6g}", m.explain_seconds_per_obs) << '\n';
  return os.str();
}

namespace {

struct Layout {
  std::vector<std::string> experiments;
  std::map<std::string, std::vector<double>> rhos;
  std::map<std::string, std::vector<std::string>> methods;
};

Layout layout_of(const GridResult& grid) {
  Layout l;
  for (const auto& c : grid.cells) {
    if (std::find(l.experiments.begin(), l.experiments.end(), c.experiment) == l.experiments.end())
      l.experiments.push_back(c.experiment);
    auto& r = l.rhos[c.experiment];
    if (std::find(r.begin(), r.end(), c.rho) == r.end()) r.push_back(c.rho);
    auto& m = l.methods[c.experiment];
    if (std::find(m.begin(), m.end(), c.method) == m.end()) m.push_back(c.method);
  }
  return l;
}

const GridCell* cell_of(const GridResult& grid, const std::string& e, double rho, const std::string& method) {
  for (const auto& c : grid.cells)
    if (c.experiment == e && c.rho == rho && c.method == method) return &c;
  return nullptr;
}

}  // namespace

std::string render_table(const GridResult& grid) {
  const Layout l = layout_of(grid);
  std::ostringstream os;
  for (const auto& e : l.experiments) {
    const auto& rhos = l.rhos.at(e);
    const auto& methods = l.methods.at(e);
    std::size_t w = 14;
    for (const auto& m : methods) w = std::max(w, m.size() + 2);
    os << e << '\n' << fmt::format("{:<{}}", "method", w);
    for (double r : rhos) os << fmt::format("{:>11}", fmt::format("rho={}", r));
    os << '\n';
    for (const auto& m : methods) {
      os << fmt::format("{:<{}}", m, w);
      for (double r : rhos) {
        const GridCell* c = cell_of(grid, e, r, m);
        if (c == nullptr || c->maes.empty()) {
          os << fmt::format("{:>11}", "failed");
          continue;
        }
        bool best = true;
        for (const auto& other : methods) {
          const GridCell* o = cell_of(grid, e, r, other);
          if (o != nullptr && !o->maes.empty() && o->median_mae < c->median_mae) best = false;
        }
        os << fmt::format("{:>11}", fmt::format("{:.4f}{}", c->median_mae, best ? "*" : " "));
      }
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

std::string plot_tsv(const GridResult& grid) {
  const Layout l = layout_of(grid);
  std::vector<std::string> all_methods;
  for (const auto& e : l.experiments)
    for (const auto& m : l.methods.at(e))
      if (std::find(all_methods.begin(), all_methods.end(), m) == all_methods.end()) all_methods.push_back(m);
  std::ostringstream os;
  os << "experiment\trho";
  for (const auto& m : all_methods) os << '\t' << m;
  os << '\n';
  for (const auto& e : l.experiments) {
    for (double r : l.rhos.at(e)) {
      os << e << '\t' << format_double(r);
      for (const auto& m : all_methods) {
        const GridCell* c = cell_of(grid, e, r, m);
        os << '\t' << (c == nullptr || c->maes.empty() ? "NA" : format_double(c->median_mae));
      }
      os << '\n';
    }
  }
  return os.str();
}

nlohmann::json results_json(const GridResult& grid) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& run : grid.runs) {
    nlohmann::json methods = nlohmann::json::array();
    for (const auto& m : run.methods) {
      nlohmann::json jm{{"method", m.method}, {"ok", m.ok}};
      if (m.ok) {
        jm["mae"] = m.mae;
        jm["fit_seconds"] = m.fit_seconds;
        jm["explain_seconds_per_obs"] = m.explain_seconds_per_obs;
      } else {
        jm["error"] = m.error;
      }
      methods.push_back(std::move(jm));
    }
    runs.push_back({{"spec", experiment_to_json(run.spec)},
                    {"n_test", run.test_rows.size()},
                    {"model", linear_model_to_json(run.model, run.spec.distribution().schema())},
                    {"methods", methods}});
  }
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& c : grid.cells)
    cells.push_back({{"experiment", c.experiment},
                     {"rho", c.rho},
                     {"method", c.method},
                     {"median_mae", c.maes.empty() ? nlohmann::json(nullptr) : nlohmann::json(c.median_mae)},
                     {"replicates", c.maes.size()},
                     {"failures", c.failures},
                     {"mean_fit_seconds", c.mean_fit_seconds},
                     {"mean_explain_seconds_per_obs", c.mean_explain_seconds}});
  return {{"runs", runs}, {"cells", cells}};
}

}  // namespace mixshap
