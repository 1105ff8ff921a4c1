#include "mixshap/tabular.hpp"

#include <bit>
#include <cmath>
#include <set>

#include "mixshap/error.hpp"

namespace mixshap {

FeatureSpec FeatureSpec::continuous(std::string name) {
  return FeatureSpec{std::move(name), FeatureKind::Continuous, 0, {}};
}

FeatureSpec FeatureSpec::categorical(std::string name, int levels, std::vector<std::string> labels) {
  return FeatureSpec{std::move(name), FeatureKind::Categorical, levels, std::move(labels)};
}

FeatureSchema::FeatureSchema(std::vector<FeatureSpec> features) : features_(std::move(features)) {
  std::set<std::string> seen;
  for (const auto& f : features_) {
    if (f.name.empty()) throw Error(ErrorCode::InvalidSchema, "feature name must be non-empty");
    if (!seen.insert(f.name).second) throw Error(ErrorCode::InvalidSchema, "duplicate feature name '" + f.name + "'");
    if (f.is_categorical()) {
      if (f.levels < 2) throw Error(ErrorCode::InvalidSchema, "categorical feature '" + f.name + "' needs >= 2 levels");
      if (!f.labels.empty() && static_cast<int>(f.labels.size()) != f.levels)
        throw Error(ErrorCode::InvalidSchema, "label count does not match levels for '" + f.name + "'");
      std::set<std::string> uniq(f.labels.begin(), f.labels.end());
      if (uniq.size() != f.labels.size())
        throw Error(ErrorCode::InvalidSchema, "duplicate level labels for '" + f.name + "'");
    }
  }
  if (features_.size() > static_cast<std::size_t>(kMaxFeatures))
    throw Error(ErrorCode::DimensionTooLarge, "at most 20 features are supported");
}

int FeatureSchema::index_of(const std::string& name) const {
  for (int j = 0; j < size(); ++j)
    if (features_[static_cast<std::size_t>(j)].name == name) return j;
  return -1;
}

bool FeatureSchema::all_categorical() const {
  for (const auto& f : features_)
    if (!f.is_categorical()) return false;
  return true;
}

bool FeatureSchema::all_continuous() const {
  for (const auto& f : features_)
    if (f.is_categorical()) return false;
  return true;
}

int FeatureSchema::n_categorical() const {
  int c = 0;
  for (const auto& f : features_) c += f.is_categorical() ? 1 : 0;
  return c;
}

int FeatureSchema::level_of(int j, const std::string& label) const {
  const auto& f = (*this)[j];
  if (!f.is_categorical()) throw Error(ErrorCode::KindMismatch, "feature '" + f.name + "' is continuous");
  if (f.labels.empty()) {
    // Unlabelled features accept the level number itself.
    try {
      std::size_t pos = 0;
      int level = std::stoi(label, &pos);
      if (pos == label.size() && level >= 1 && level <= f.levels) return level;
    } catch (const std::exception&) {
    }
  } else {
    for (std::size_t l = 0; l < f.labels.size(); ++l)
      if (f.labels[l] == label) return static_cast<int>(l) + 1;
  }
  throw Error(ErrorCode::LevelOutOfRange, "unknown level '" + label + "' for feature '" + f.name + "'");
}

std::string FeatureSchema::label_of(int j, int level) const {
  const auto& f = (*this)[j];
  if (level < 1 || level > f.levels) throw Error(ErrorCode::LevelOutOfRange, "level out of range");
  return f.labels.empty() ? std::to_string(level) : f.labels[static_cast<std::size_t>(level - 1)];
}

bool operator==(const FeatureSchema& a, const FeatureSchema& b) {
  if (a.size() != b.size()) return false;
  for (int j = 0; j < a.size(); ++j) {
    if (a[j].name != b[j].name || a[j].kind != b[j].kind || a[j].levels != b[j].levels) return false;
  }
  return true;
}

MixedRow MixedRow::from_dense(const FeatureSchema& schema, RowView dense) {
  if (static_cast<int>(dense.size()) != schema.size())
    throw Error(ErrorCode::ArityMismatch, "row has " + std::to_string(dense.size()) + " cells, schema has " +
                                              std::to_string(schema.size()));
  std::vector<CellValue> cells;
  cells.reserve(dense.size());
  for (int j = 0; j < schema.size(); ++j) {
    const double v = dense[static_cast<std::size_t>(j)];
    if (schema[j].is_categorical())
      cells.emplace_back(Cat{static_cast<int>(std::lround(v))});
    else
      cells.emplace_back(Cont{v});
  }
  return MixedRow(std::move(cells));
}

std::vector<double> MixedRow::dense() const {
  std::vector<double> out;
  out.reserve(cells_.size());
  for (const auto& c : cells_) {
    if (const auto* cont = std::get_if<Cont>(&c))
      out.push_back(cont->value);
    else
      out.push_back(static_cast<double>(std::get<Cat>(c).level));
  }
  return out;
}

bool operator==(const MixedRow& a, const MixedRow& b) {
  if (a.size() != b.size()) return false;
  for (int j = 0; j < a.size(); ++j) {
    const auto& x = a[j];
    const auto& y = b[j];
    if (x.index() != y.index()) return false;
    if (const auto* cx = std::get_if<Cont>(&x)) {
      if (cx->value != std::get<Cont>(y).value) return false;
    } else if (std::get<Cat>(x).level != std::get<Cat>(y).level) {
      return false;
    }
  }
  return true;
}

void validate_row(const FeatureSchema& schema, const MixedRow& row) {
  if (row.size() != schema.size())
    throw Error(ErrorCode::ArityMismatch,
                "row has " + std::to_string(row.size()) + " cells, schema has " + std::to_string(schema.size()));
  for (int j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    if (f.is_categorical()) {
      const auto* cat = std::get_if<Cat>(&row[j]);
      if (cat == nullptr) throw Error(ErrorCode::KindMismatch, "feature '" + f.name + "' expects a categorical cell");
      if (cat->level < 1 || cat->level > f.levels)
        throw Error(ErrorCode::LevelOutOfRange, "feature '" + f.name + "' level " + std::to_string(cat->level) +
                                                    " outside 1.." + std::to_string(f.levels));
    } else {
      const auto* cont = std::get_if<Cont>(&row[j]);
      if (cont == nullptr) throw Error(ErrorCode::KindMismatch, "feature '" + f.name + "' expects a continuous cell");
      if (!std::isfinite(cont->value))
        throw Error(ErrorCode::KindMismatch, "feature '" + f.name + "' has a non-finite value");
    }
  }
}

void validate_dense_row(const FeatureSchema& schema, RowView row) {
  if (static_cast<int>(row.size()) != schema.size())
    throw Error(ErrorCode::ArityMismatch,
                "row has " + std::to_string(row.size()) + " cells, schema has " + std::to_string(schema.size()));
  for (int j = 0; j < schema.size(); ++j) {
    const double v = row[static_cast<std::size_t>(j)];
    if (!std::isfinite(v)) throw Error(ErrorCode::KindMismatch, "non-finite cell for '" + schema[j].name + "'");
    if (schema[j].is_categorical()) {
      if (v != std::round(v)) throw Error(ErrorCode::KindMismatch, "fractional level for '" + schema[j].name + "'");
      if (v < 1 || v > schema[j].levels)
        throw Error(ErrorCode::LevelOutOfRange, "level outside 1.." + std::to_string(schema[j].levels) + " for '" +
                                                    schema[j].name + "'");
    }
  }
}

MixedTable::MixedTable(FeatureSchema schema, const std::vector<MixedRow>& rows)
    : schema_(std::move(schema)), n_(static_cast<int>(rows.size())) {
  data_.reserve(rows.size() * static_cast<std::size_t>(schema_.size()));
  for (const auto& r : rows) {
    validate_row(schema_, r);
    const auto d = r.dense();
    data_.insert(data_.end(), d.begin(), d.end());
  }
}

MixedTable MixedTable::from_dense(FeatureSchema schema, std::vector<double> data) {
  MixedTable t;
  const auto w = static_cast<std::size_t>(schema.size());
  if (w == 0 ? !data.empty() : data.size() % w != 0)
    throw Error(ErrorCode::ArityMismatch, "dense data size is not a multiple of the schema width");
  t.schema_ = std::move(schema);
  t.n_ = w == 0 ? 0 : static_cast<int>(data.size() / w);
  t.data_ = std::move(data);
  for (int i = 0; i < t.n_; ++i) validate_dense_row(t.schema_, t.row(i));
  return t;
}

RowView MixedTable::row(int i) const {
  const auto w = static_cast<std::size_t>(width());
  return RowView(data_.data() + static_cast<std::size_t>(i) * w, w);
}

int Coalition::size() const { return std::popcount(mask); }

std::vector<int> Coalition::indices() const {
  std::vector<int> out;
  for (std::uint32_t m = mask; m != 0; m &= m - 1) out.push_back(std::countr_zero(m));
  return out;
}

std::vector<Coalition> enumerate_coalitions(int M) {
  if (M > kMaxFeatures) throw Error(ErrorCode::DimensionTooLarge, "M=" + std::to_string(M) + " exceeds 20");
  if (M < 1) throw Error(ErrorCode::InvalidArgument, "M must be >= 1");
  const std::uint32_t count = 1U << M;
  std::vector<Coalition> out;
  out.reserve(count);
  for (std::uint32_t m = 0; m < count; ++m) out.push_back(Coalition{m});
  return out;
}

int GroupMap::width() const {
  int w = 0;
  for (const auto& g : groups) w += static_cast<int>(g.size());
  return w;
}

GroupMap one_hot_groups(const FeatureSchema& schema) {
  GroupMap map;
  int next = 0;
  for (int j = 0; j < schema.size(); ++j) {
    const int n = schema[j].is_categorical() ? schema[j].levels - 1 : 1;
    std::vector<int> cols(static_cast<std::size_t>(n));
    for (int& c : cols) c = next++;
    map.groups.push_back(std::move(cols));
  }
  return map;
}

FeatureSchema one_hot_schema(const FeatureSchema& schema, GroupMap* groups) {
  std::vector<FeatureSpec> out;
  GroupMap map;
  for (int j = 0; j < schema.size(); ++j) {
    const auto& f = schema[j];
    std::vector<int> cols;
    if (f.is_categorical()) {
      for (int l = 2; l <= f.levels; ++l) {
        cols.push_back(static_cast<int>(out.size()));
        out.push_back(FeatureSpec::continuous(f.name + "_" + schema.label_of(j, l)));
      }
    } else {
      cols.push_back(static_cast<int>(out.size()));
      out.push_back(FeatureSpec::continuous(f.name));
    }
    map.groups.push_back(std::move(cols));
  }
  if (groups != nullptr) *groups = std::move(map);
  if (static_cast<int>(out.size()) > kMaxFeatures)
    throw Error(ErrorCode::DimensionTooLarge, "one-hot width exceeds 20 columns");
  return FeatureSchema(std::move(out));
}

std::vector<double> one_hot_encode_row(const FeatureSchema& schema, RowView row) {
  std::vector<double> out;
  for (int j = 0; j < schema.size(); ++j) {
    const double v = row[static_cast<std::size_t>(j)];
    if (schema[j].is_categorical()) {
      const int level = static_cast<int>(std::lround(v));
      for (int l = 2; l <= schema[j].levels; ++l) out.push_back(level == l ? 1.0 : 0.0);
    } else {
      out.push_back(v);
    }
  }
  return out;
}

std::vector<double> one_hot_decode_row(const FeatureSchema& schema, RowView encoded) {
  std::vector<double> out;
  std::size_t k = 0;
  for (int j = 0; j < schema.size(); ++j) {
    if (schema[j].is_categorical()) {
      int level = 1;
      for (int l = 2; l <= schema[j].levels; ++l, ++k)
        if (encoded[k] > 0.5) level = l;
      out.push_back(static_cast<double>(level));
    } else {
      out.push_back(encoded[k++]);
    }
  }
  return out;
}

OneHotEncoding one_hot_encode(const MixedTable& table) {
  GroupMap groups;
  FeatureSchema encoded = one_hot_schema(table.schema(), &groups);
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(table.n()) * static_cast<std::size_t>(encoded.size()));
  for (int i = 0; i < table.n(); ++i) {
    const auto r = one_hot_encode_row(table.schema(), table.row(i));
    data.insert(data.end(), r.begin(), r.end());
  }
  return {MixedTable::from_dense(std::move(encoded), std::move(data)), std::move(groups)};
}

std::vector<double> aggregate_onehot_shapley(std::span<const double> phi, const GroupMap& groups) {
  std::vector<double> out(static_cast<std::size_t>(groups.n_groups()), 0.0);
  for (std::size_t j = 0; j < groups.groups.size(); ++j) {
    for (int k : groups.groups[j]) {
      if (k < 0 || static_cast<std::size_t>(k) >= phi.size())
        throw Error(ErrorCode::GroupIndexOutOfRange, "column " + std::to_string(k) + " outside phi of length " +
                                                         std::to_string(phi.size()));
      out[j] += phi[static_cast<std::size_t>(k)];
    }
  }
  return out;
}

}  // namespace mixshap
