#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mixshap/error.hpp"
#include "mixshap/oracle.hpp"
#include "mixshap/parallel.hpp"
#include "mixshap/simlab.hpp"
#include "mixshap/tabular_io.hpp"

namespace fs = std::filesystem;

namespace mixshap::cli {
namespace {

constexpr double kEfficiencyTolerance = 1e-6;

int resolve_threads(const CommonOptions& opt, const nlohmann::json& cfg) {
  if (opt.threads > 0) return opt.threads;
  if (cfg.contains("threads")) return cfg.at("threads").get<int>();
  return default_thread_count();
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorCode::IoError, "cannot create output directory " + dir.string());
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed for " + path.string());
}

/// Relative paths in a config resolve against the config file's directory.
fs::path resolve(const fs::path& config, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : config.parent_path() / path;
}

nlohmann::json inline_or_file(const CommonOptions& opt, const nlohmann::json& value) {
  return value.is_string() ? load_json(resolve(opt.config, value.get<std::string>())) : value;
}

std::vector<MethodSpec> methods_of(const nlohmann::json& cfg) {
  std::vector<MethodSpec> out;
  if (cfg.contains("methods"))
    for (const auto& m : cfg.at("methods")) out.push_back(method_from_json(m));
  else if (cfg.contains("method"))
    out.push_back(method_from_json(cfg.at("method")));
  if (out.empty()) throw Error(ErrorCode::ParseError, "config lists no methods");
  return out;
}

struct Group {
  std::string name;
  std::vector<int> members;
};

/// [{"name": ..., "features": [feature names]}]
std::vector<Group> load_groups(const nlohmann::json& j, const FeatureSchema& schema) {
  std::vector<Group> out;
  const nlohmann::json& list = j.is_object() && j.contains("groups") ? j.at("groups") : j;
  for (const auto& g : list) {
    Group grp;
    grp.name = g.at("name").get<std::string>();
    for (const auto& f : g.at("features")) {
      const int idx = schema.index_of(f.get<std::string>());
      if (idx < 0) throw Error(ErrorCode::GroupIndexOutOfRange, "group '" + grp.name + "': unknown feature " + f.dump());
      grp.members.push_back(idx);
    }
    out.push_back(std::move(grp));
  }
  return out;
}

template <class Body>
int guarded(std::ostream& log, Body&& body) {
  try {
    return body();
  } catch (const Error& e) {
    log << "error: " << e.what() << '\n';
  } catch (const nlohmann::json::exception& e) {
    log << "error: ParseError: " << e.what() << '\n';
  } catch (const std::exception& e) {
    log << "error: " << e.what() << '\n';
  }
  return kFatal;
}

}  // namespace

int cmd_simulate(const CommonOptions& opt, std::ostream& log) {
  return guarded(log, [&] {
    const nlohmann::json cfg = load_json(opt.config);
    GridConfig grid = grid_from_json(cfg);
    if (opt.seed) grid.seed = *opt.seed;
    grid.threads = resolve_threads(opt, cfg);
    ensure_dir(opt.out);

    const GridResult result = run_grid(grid);
    write_file(opt.out / "results.csv", results_csv(result));
    write_file(opt.out / "timings.csv", timings_csv(result));
    write_file(opt.out / "results.json", results_json(result).dump(2) + "\n");
    write_file(opt.out / "table.txt", render_table(result));
    write_file(opt.out / "plot.tsv", plot_tsv(result));

    for (const auto& run : result.runs)
      for (const auto& m : run.methods)
        if (!m.ok)
          log << "warning: " << run.spec.name << " rho=" << format_double(run.spec.rho) << " rep=" << run.spec.replicate
              << " " << m.method << ": " << m.error << '\n';
    return result.failures() > 0 ? kPartial : kSuccess;
  });
}

int cmd_explain(const CommonOptions& opt, std::ostream& log) {
  return guarded(log, [&] {
    const nlohmann::json cfg = load_json(opt.config);
    const FeatureSchema schema = schema_from_json(inline_or_file(opt, cfg.at("schema")));
    const MixedTable train = load_csv(resolve(opt.config, cfg.at("train").get<std::string>()), schema);
    const MixedTable test = load_csv(resolve(opt.config, cfg.at("test").get<std::string>()), schema);
    const LinearModelSpec model = linear_model_from_json(inline_or_file(opt, cfg.at("model")), schema);
    const std::vector<MethodSpec> methods = methods_of(cfg);
    if (methods.size() != 1) throw Error(ErrorCode::ParseError, "explain takes exactly one method");
    MethodSpec method = methods.front();
    if (cfg.contains("K")) method.K = cfg.at("K").get<int>();
    if (cfg.contains("alpha")) method.alpha = cfg.at("alpha").get<double>();
    const std::uint64_t seed = opt.seed ? *opt.seed : cfg.value("seed", std::uint64_t{1});
    const int threads = resolve_threads(opt, cfg);
    std::vector<Group> groups;
    if (cfg.contains("groups")) groups = load_groups(inline_or_file(opt, cfg.at("groups")), schema);
    ensure_dir(opt.out);

    const FittedSampler sampler = fit_method(method, train, threads);
    std::vector<ShapleyResult> phi(static_cast<std::size_t>(test.n()));
    parallel_for(test.n(), threads, [&](int i) {
      phi[static_cast<std::size_t>(i)] = explain_observation(method, sampler, model, test.row(i), schema,
                                                             derive_seed(seed, {5, static_cast<std::uint64_t>(i)}));
    });

    const int M = schema.size();
    std::ostringstream csv;
    csv << "row,phi0";
    for (int j = 0; j < M; ++j) csv << ",phi_" << schema[j].name;
    csv << ",prediction,efficiency_error\n";
    double worst = 0.0;
    for (int i = 0; i < test.n(); ++i) {
      const ShapleyResult& r = phi[static_cast<std::size_t>(i)];
      csv << i + 1 << ',' << format_double(r.phi0);
      for (double p : r.phi) csv << ',' << format_double(p);
      const double err = r.efficiency_error();
      worst = std::max(worst, std::abs(err));
      csv << ',' << format_double(r.predicted) << ',' << format_double(err) << '\n';
    }
    write_file(opt.out / "shapley.csv", csv.str());
    if (worst > kEfficiencyTolerance) log << "warning: efficiency error " << format_double(worst) << " exceeds 1e-6\n";

    if (!groups.empty()) {
      std::vector<std::vector<int>> members;
      for (const auto& g : groups) members.push_back(g.members);
      std::ostringstream gcsv;
      gcsv << "row";
      for (const auto& g : groups) gcsv << ',' << g.name;
      for (const auto& g : groups) gcsv << ",rank_" << g.name;
      gcsv << '\n';
      for (int i = 0; i < test.n(); ++i) {
        const GroupedShapley gs = group_shapley(phi[static_cast<std::size_t>(i)], members);
        gcsv << i + 1;
        for (double v : gs.values) gcsv << ',' << format_double(v);
        for (int r : gs.ranks) gcsv << ',' << r;
        gcsv << '\n';
      }
      write_file(opt.out / "grouped.csv", gcsv.str());
    }
    return kSuccess;
  });
}

int cmd_oracle_compare(const CommonOptions& opt, std::ostream& log) {
  return guarded(log, [&] {
    const nlohmann::json cfg = load_json(opt.config);
    const ThresholdGaussianSpec dist = threshold_gaussian_from_json(inline_or_file(opt, cfg.at("distribution")));
    const FeatureSchema schema = dist.schema();
    const LinearModelSpec model = linear_model_from_json(inline_or_file(opt, cfg.at("model")), schema);
    const std::vector<MethodSpec> methods = methods_of(cfg);
    const std::uint64_t seed = opt.seed ? *opt.seed : cfg.value("seed", std::uint64_t{1});
    const int n_train = cfg.value("n_train", 1000);
    const int T = cfg.value("T", dist.all_categorical() ? 2000 : 500);
    const int threads = resolve_threads(opt, cfg);
    if (n_train < 2) throw Error(ErrorCode::InvalidArgument, "n_train must be >= 2");
    if (T < 1) throw Error(ErrorCode::InvalidArgument, "T must be >= 1");
    ensure_dir(opt.out);

    Rng data_rng = make_rng(seed, {1});
    const MixedTable train = dist.sample(n_train, data_rng);
    const TestSet test = build_test_set(dist, model, T, derive_seed(seed, {4}), threads);

    std::ostringstream per_obs;
    std::ostringstream mae;
    per_obs << "method,observation,weight,feature,phi_true,phi_estimate,abs_error\n";
    mae << "method,status,mae,error\n";
    int failures = 0;
    for (const MethodSpec& m : methods) {
      const MethodResult r = evaluate_method(m, train, model, test, seed, threads);
      if (!r.ok) {
        ++failures;
        log << "warning: " << r.method << ": " << r.error << '\n';
        std::string msg = r.error;
        for (char& c : msg)
          if (c == ',' || c == '\n') c = ';';
        mae << r.method << ",failed,NA," << msg << '\n';
        continue;
      }
      mae << r.method << ",ok," << format_double(r.mae) << ",\n";
      for (std::size_t i = 0; i < test.rows.size(); ++i)
        for (int j = 0; j < dist.M(); ++j) {
          const double t = test.truth[i].phi[static_cast<std::size_t>(j)];
          const double e = r.phi[i].phi[static_cast<std::size_t>(j)];
          per_obs << r.method << ',' << i + 1 << ',' << format_double(test.weights[i]) << ',' << schema[j].name << ','
                  << format_double(t) << ',' << format_double(e) << ',' << format_double(std::abs(t - e)) << '\n';
        }
    }
    write_file(opt.out / "per_observation.csv", per_obs.str());
    write_file(opt.out / "mae.csv", mae.str());
    return failures > 0 ? kPartial : kSuccess;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& log) {
  CLI::App app{"Conditional Shapley values for mixed categorical and continuous data", "mixshap"};
  app.require_subcommand(1);

  CommonOptions opt;
  std::uint64_t seed = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "Config JSON")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override the config seed");
    sub->add_option("--threads", opt.threads, "Worker threads (default: all cores)");
    sub->add_option("--out", opt.out, "Output directory")->capture_default_str();
  };
  CLI::App* simulate = app.add_subcommand("simulate", "Run a simulation grid");
  CLI::App* explain = app.add_subcommand("explain", "Explain CSV rows under a linear model");
  CLI::App* compare = app.add_subcommand("oracle-compare", "Compare estimators against exact Shapley values");
  for (CLI::App* sub : {simulate, explain, compare}) add_common(sub);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, log);
  } catch (const CLI::ParseError& e) {
    log << "error: " << e.what() << '\n';
    return kFatal;
  }
  for (CLI::App* sub : {simulate, explain, compare})
    if (sub->count("--seed") > 0) opt.seed = seed;

  if (simulate->parsed()) return cmd_simulate(opt, log);
  if (explain->parsed()) return cmd_explain(opt, log);
  return cmd_oracle_compare(opt, log);
}

}  // namespace mixshap::cli
