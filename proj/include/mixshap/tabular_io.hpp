#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixshap/tabular.hpp"

namespace mixshap {

/// {"features": [{"name": ..., "kind": "continuous"} |
///               {"name": ..., "kind": "categorical", "levels": [...]}]}
FeatureSchema schema_from_json(const nlohmann::json& doc);
nlohmann::json schema_to_json(const FeatureSchema& schema);
FeatureSchema load_schema(const std::filesystem::path& path);

/// CSV with a header row of feature names (any column order; extra columns are
/// an error). Categorical cells are matched by exact string against the
/// schema labels. Empty or NA cells are rejected.
MixedTable read_csv(std::istream& in, const FeatureSchema& schema);
MixedTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema);
void write_csv(std::ostream& out, const MixedTable& table);

std::vector<std::string> split_csv_line(const std::string& line);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

nlohmann::json load_json(const std::filesystem::path& path);

}  // namespace mixshap
