#include "mixshap/tabular_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mixshap/error.hpp"

namespace mixshap {

FeatureSchema schema_from_json(const nlohmann::json& doc) {
  try {
    std::vector<FeatureSpec> specs;
    for (const auto& f : doc.at("features")) {
      const auto name = f.at("name").get<std::string>();
      const auto kind = f.at("kind").get<std::string>();
      if (kind == "continuous") {
        specs.push_back(FeatureSpec::continuous(name));
      } else if (kind == "categorical") {
        const auto& levels = f.at("levels");
        std::vector<std::string> labels;
        if (levels.is_number_integer()) {
          specs.push_back(FeatureSpec::categorical(name, levels.get<int>()));
          continue;
        }
        for (const auto& l : levels) labels.push_back(l.is_string() ? l.get<std::string>() : l.dump());
        const int count = static_cast<int>(labels.size());
        specs.push_back(FeatureSpec::categorical(name, count, std::move(labels)));
      } else {
        throw Error(ErrorCode::InvalidSchema, "unknown feature kind '" + kind + "'");
      }
    }
    return FeatureSchema(std::move(specs));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("schema: ") + e.what());
  }
}

nlohmann::json schema_to_json(const FeatureSchema& schema) {
  nlohmann::json features = nlohmann::json::array();
  for (int j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    if (f.is_categorical()) {
      nlohmann::json levels = nlohmann::json::array();
      for (int l = 1; l <= f.levels; ++l) levels.push_back(schema.label_of(j, l));
      features.push_back({{"name", f.name}, {"kind", "categorical"}, {"levels", levels}});
    } else {
      features.push_back({{"name", f.name}, {"kind", "continuous"}});
    }
  }
  return {{"features", features}};
}

nlohmann::json load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
}

FeatureSchema load_schema(const std::filesystem::path& path) { return schema_from_json(load_json(path)); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cell += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cell));
      cell.clear();
    } else if (c != '\r') {
      cell += c;
    }
  }
  out.push_back(std::move(cell));
  return out;
}

MixedTable read_csv(std::istream& in, const FeatureSchema& schema) {
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::ParseError, "missing CSV header");
  const auto header = split_csv_line(line);
  if (static_cast<int>(header.size()) != schema.size())
    throw Error(ErrorCode::ArityMismatch, "CSV has " + std::to_string(header.size()) + " columns, schema has " +
                                              std::to_string(schema.size()));
  std::vector<int> column_of(header.size());
  std::vector<char> used(static_cast<std::size_t>(schema.size()), 0);
  for (std::size_t c = 0; c < header.size(); ++c) {
    const int j = schema.index_of(header[c]);
    if (j < 0) throw Error(ErrorCode::ParseError, "CSV column '" + header[c] + "' is not in the schema");
    if (used[static_cast<std::size_t>(j)]++) throw Error(ErrorCode::ParseError, "duplicate CSV column " + header[c]);
    column_of[c] = j;
  }

  std::vector<double> data;
  std::vector<double> row(static_cast<std::size_t>(schema.size()));
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw Error(ErrorCode::ArityMismatch, "line " + std::to_string(line_no) + " has " +
                                                std::to_string(cells.size()) + " cells");
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const int j = column_of[c];
      const auto& cell = cells[c];
      if (cell.empty() || cell == "NA" || cell == "NaN")
        throw Error(ErrorCode::ParseError, "missing value at line " + std::to_string(line_no));
      if (schema[j].is_categorical()) {
        row[static_cast<std::size_t>(j)] = schema.level_of(j, cell);
      } else {
        std::size_t pos = 0;
        double v = 0.0;
        try {
          v = std::stod(cell, &pos);
        } catch (const std::exception&) {
          pos = 0;
        }
        if (pos != cell.size())
          throw Error(ErrorCode::ParseError, "bad number '" + cell + "' at line " + std::to_string(line_no));
        row[static_cast<std::size_t>(j)] = v;
      }
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return MixedTable::from_dense(schema, std::move(data));
}

MixedTable load_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return read_csv(in, schema);
}

std::string format_double(double x) { return fmt::format("{}", x); }

void write_csv(std::ostream& out, const MixedTable& table) {
  const auto& schema = table.schema();
  for (int j = 0; j < schema.size(); ++j) out << (j ? "," : "") << schema[j].name;
  out << '\n';
  for (int i = 0; i < table.n(); ++i) {
    for (int j = 0; j < schema.size(); ++j) {
      if (j) out << ',';
      const double v = table.at(i, j);
      if (schema[j].is_categorical())
        out << schema.label_of(j, static_cast<int>(v));
      else
        out << format_double(v);
    }
    out << '\n';
  }
}

}  // namespace mixshap
