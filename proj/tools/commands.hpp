#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>

namespace mixshap::cli {

enum ExitCode : int { kSuccess = 0, kFatal = 1, kPartial = 2 };

struct CommonOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  int threads = 0;  // 0: all available cores
  std::filesystem::path out = ".";
};

/// Experiment grid -> results.csv, timings.csv, results.json, table.txt, plot.tsv.
int cmd_simulate(const CommonOptions& opt, std::ostream& log);

/// Training/test CSV + schema + linear model -> shapley.csv (and grouped.csv).
int cmd_explain(const CommonOptions& opt, std::ostream& log);

/// Threshold-Gaussian distribution + linear model + methods -> errors.csv, mae.csv.
int cmd_oracle_compare(const CommonOptions& opt, std::ostream& log);

/// Full command line, e.g. {"mixshap", "simulate", "--config", "grid.json"}.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& log);

}  // namespace mixshap::cli
