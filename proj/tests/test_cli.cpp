#include <filesystem>
#include <fstream>
#include <sstream>

#include "commands.hpp"
#include "doctest.h"
#include "mixshap/tabular_io.hpp"

namespace fs = std::filesystem;
using namespace mixshap;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("mixshap_cli_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void put(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int invoke(std::vector<std::string> args, std::string* err = nullptr) {
  args.insert(args.begin(), "mixshap");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, log;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, log);
  if (err) *err = log.str();
  return code;
}

std::vector<std::vector<std::string>> read_rows(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) rows.push_back(split_csv_line(line));
  return rows;
}

void write_explain_inputs(const fs::path& dir, const std::string& model) {
  put(dir / "schema.json", R"({"features": [
    {"name": "colour", "kind": "categorical", "levels": ["red", "green", "blue"]},
    {"name": "age", "kind": "continuous"},
    {"name": "size", "kind": "categorical", "levels": ["S", "L"]}]})");
  std::ostringstream train;
  train << "colour,age,size\n";
  const char* colours[] = {"red", "green", "blue"};
  for (int i = 0; i < 60; ++i) train << colours[i % 3] << ',' << 0.25 * (i % 11) << ',' << (i % 4 == 0 ? "L" : "S") << '\n';
  put(dir / "train.csv", train.str());
  put(dir / "test.csv", "colour,age,size\nblue,1.5,L\nred,0,S\ngreen,2.25,S\n");
  put(dir / "model.json", model);
}

}  // namespace

TEST_CASE("usage errors") {
  std::string err;
  CHECK(invoke({}, &err) == cli::kFatal);
  CHECK(err.rfind("error:", 0) == 0);
  CHECK(invoke({"simulate", "--config", "/nonexistent/grid.json"}, &err) == cli::kFatal);
}

TEST_CASE("simulate: malformed config") {
  const fs::path dir = scratch("malformed");
  put(dir / "grid.json", "{ not json");
  std::string err;
  CHECK(invoke({"simulate", "--config", (dir / "grid.json").string(), "--out", (dir / "out").string()}, &err) ==
        cli::kFatal);
  CHECK(err.find("error: ParseError") != std::string::npos);
}

TEST_CASE("simulate: partial failure and byte-identical reruns") {
  const fs::path dir = scratch("simulate");
  put(dir / "grid.json", R"({
    "seed": 5, "threads": 1,
    "experiments": [{"name": "tiny", "n_cat": 3, "rho": 0.5, "n_train": 120, "T": 8,
                     "methods": [{"name": "independence", "K": 20}, {"name": "gaussian", "onehot": false}, "oracle"]}]
  })");
  std::string err;
  const auto run_to = [&](const std::string& out) {
    return invoke({"simulate", "--config", (dir / "grid.json").string(), "--out", (dir / out).string()}, &err);
  };
  CHECK(run_to("a") == cli::kPartial);
  CHECK(err.find("warning:") != std::string::npos);
  CHECK(run_to("b") == cli::kPartial);
  for (const char* f : {"results.csv", "table.txt", "plot.tsv", "timings.csv", "results.json"}) CHECK(fs::exists(dir / "a" / f));
  CHECK(slurp(dir / "a" / "results.csv") == slurp(dir / "b" / "results.csv"));
  const auto rows = read_rows(dir / "a" / "results.csv");
  REQUIRE(rows.size() == 4);
  int ok = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) ok += rows[i][11] == "ok";
  CHECK(ok == 2);

  CHECK(invoke({"simulate", "--config", (dir / "grid.json").string(), "--out", (dir / "c").string(), "--seed", "6"}) ==
        cli::kPartial);
  CHECK(slurp(dir / "a" / "results.csv") != slurp(dir / "c" / "results.csv"));
}

TEST_CASE("explain: constant model gives zero attributions") {
  const fs::path dir = scratch("explain_const");
  write_explain_inputs(dir, R"({"intercept": 2.5})");
  put(dir / "explain.json",
      R"({"schema": "schema.json", "train": "train.csv", "test": "test.csv", "model": "model.json",
          "method": {"name": "ctree", "K": 40}, "seed": 1})");
  CHECK(invoke({"explain", "--config", (dir / "explain.json").string(), "--out", (dir / "out").string()}) ==
        cli::kSuccess);
  const auto rows = read_rows(dir / "out" / "shapley.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == std::vector<std::string>{"row", "phi0", "phi_colour", "phi_age", "phi_size", "prediction",
                                            "efficiency_error"});
  for (std::size_t i = 1; i < rows.size(); ++i) {
    CHECK(std::stod(rows[i][1]) == doctest::Approx(2.5));
    for (int j = 2; j <= 4; ++j) CHECK(std::abs(std::stod(rows[i][static_cast<std::size_t>(j)])) < 1e-12);
  }
}

TEST_CASE("explain: efficiency column and grouped ranks") {
  const fs::path dir = scratch("explain_groups");
  write_explain_inputs(dir, R"({"intercept": 1.0,
    "categorical": {"colour": {"green": 0.5, "blue": -2.0}, "size": {"L": 1.5}},
    "continuous": {"age": 0.8}})");
  put(dir / "groups.json", R"([{"name": "look", "features": ["colour", "size"]}, {"name": "time", "features": ["age"]}])");
  for (const char* method : {R"({"name": "independence", "K": 50})", R"({"name": "ctree-onehot", "K": 50})"}) {
    put(dir / "explain.json", std::string(R"({"schema": "schema.json", "train": "train.csv", "test": "test.csv",
        "model": "model.json", "groups": "groups.json", "method": )") + method + "}");
    CHECK(invoke({"explain", "--config", (dir / "explain.json").string(), "--out", (dir / "out").string()}) ==
          cli::kSuccess);
    const auto rows = read_rows(dir / "out" / "shapley.csv");
    // blue, 1.5, L: 1 - 2 + 1.2 + 1.5
    CHECK(std::stod(rows[1][5]) == doctest::Approx(1.7));
    for (std::size_t i = 1; i < rows.size(); ++i) CHECK(std::abs(std::stod(rows[i][6])) < 1e-6);
    const auto g = read_rows(dir / "out" / "grouped.csv");
    REQUIRE(g.size() == 4);
    CHECK(g[0] == std::vector<std::string>{"row", "look", "time", "rank_look", "rank_time"});
    for (std::size_t i = 1; i < g.size(); ++i) {
      const double look = std::abs(std::stod(g[i][1]));
      const double time = std::abs(std::stod(g[i][2]));
      CHECK(g[i][3] == (look >= time ? "1" : "2"));
      CHECK(g[i][4] == (look >= time ? "2" : "1"));
    }
  }

  put(dir / "bad.csv", "colour,age,size\npurple,1,S\n");
  put(dir / "explain.json", R"({"schema": "schema.json", "train": "train.csv", "test": "bad.csv",
      "model": "model.json", "method": "independence"})");
  std::string err;
  CHECK(invoke({"explain", "--config", (dir / "explain.json").string(), "--out", (dir / "out").string()}, &err) ==
        cli::kFatal);
  CHECK(err.find("LevelOutOfRange") != std::string::npos);
}

TEST_CASE("oracle-compare: self comparison, ordering and feasibility") {
  const fs::path dir = scratch("oracle");
  put(dir / "cmp.json", R"({
    "distribution": {"equicorrelated": {"n_cat": 3, "n_cont": 0, "rho": 0.8, "cutoffs": [0, 1]}},
    "model": {"intercept": 0.3, "categorical": {"x1": {"2": 1.1, "3": -0.4}, "x2": {"2": 0.7, "3": 1.9},
                                                "x3": {"2": -1.3, "3": 0.6}}},
    "methods": ["oracle", {"name": "ctree", "K": 200}, {"name": "independence", "K": 200}],
    "n_train": 1000, "T": 27, "seed": 2, "threads": 1})");
  CHECK(invoke({"oracle-compare", "--config", (dir / "cmp.json").string(), "--out", (dir / "out").string()}) ==
        cli::kSuccess);
  const auto mae = read_rows(dir / "out" / "mae.csv");
  REQUIRE(mae.size() == 4);
  CHECK(mae[1][0] == "oracle");
  CHECK(std::stod(mae[1][2]) == 0.0);
  CHECK(std::stod(mae[2][2]) < std::stod(mae[3][2]));
  CHECK(read_rows(dir / "out" / "per_observation.csv").size() == 1 + 3 * 27 * 3);

  put(dir / "big.json", R"({
    "distribution": {"equicorrelated": {"n_cat": 15, "n_cont": 0, "rho": 0.5, "cutoffs": [0, 1]}},
    "model": {"intercept": 0.0}, "methods": ["independence"], "T": 10})");
  std::string err;
  CHECK(invoke({"oracle-compare", "--config", (dir / "big.json").string(), "--out", (dir / "big").string()}, &err) ==
        cli::kFatal);
  CHECK(err.find("Infeasible") != std::string::npos);
}
