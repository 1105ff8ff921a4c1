#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace mixshap {

/// Hard cap on the number of features; the coalition space grows as 2^M.
inline constexpr int kMaxFeatures = 20;

enum class FeatureKind { Continuous, Categorical };

struct FeatureSpec {
  std::string name;
  FeatureKind kind = FeatureKind::Continuous;
  int levels = 0;                   // L >= 2 for categorical features
  std::vector<std::string> labels;  // optional external labels for levels 1..L

  static FeatureSpec continuous(std::string name);
  static FeatureSpec categorical(std::string name, int levels, std::vector<std::string> labels = {});

  [[nodiscard]] bool is_categorical() const { return kind == FeatureKind::Categorical; }
};

/// Ordered feature list. Categorical levels are integers 1..L internally.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureSpec> features);

  [[nodiscard]] int size() const { return static_cast<int>(features_.size()); }
  [[nodiscard]] const FeatureSpec& operator[](int j) const { return features_[static_cast<std::size_t>(j)]; }
  [[nodiscard]] const std::vector<FeatureSpec>& features() const { return features_; }

  [[nodiscard]] int index_of(const std::string& name) const;  // -1 if absent
  [[nodiscard]] bool all_categorical() const;
  [[nodiscard]] bool all_continuous() const;
  [[nodiscard]] int n_categorical() const;

  /// Level (1-based) of an external label; throws LevelOutOfRange when unknown.
  [[nodiscard]] int level_of(int j, const std::string& label) const;
  [[nodiscard]] std::string label_of(int j, int level) const;

  friend bool operator==(const FeatureSchema& a, const FeatureSchema& b);

 private:
  std::vector<FeatureSpec> features_;
};

struct Cont {
  double value;
};
struct Cat {
  int level;
};
using CellValue = std::variant<Cont, Cat>;

/// Read-only dense view of a row: continuous values as-is, categorical cells
/// hold their level number.
using RowView = std::span<const double>;

class MixedRow {
 public:
  MixedRow() = default;
  explicit MixedRow(std::vector<CellValue> cells) : cells_(std::move(cells)) {}

  /// Builds a row from its dense form using the schema to type each cell.
  static MixedRow from_dense(const FeatureSchema& schema, RowView dense);

  [[nodiscard]] int size() const { return static_cast<int>(cells_.size()); }
  [[nodiscard]] const CellValue& operator[](int j) const { return cells_[static_cast<std::size_t>(j)]; }
  [[nodiscard]] const std::vector<CellValue>& cells() const { return cells_; }
  [[nodiscard]] std::vector<double> dense() const;

  friend bool operator==(const MixedRow& a, const MixedRow& b);

 private:
  std::vector<CellValue> cells_;
};

/// Throws ArityMismatch, KindMismatch or LevelOutOfRange.
void validate_row(const FeatureSchema& schema, const MixedRow& row);
void validate_dense_row(const FeatureSchema& schema, RowView row);

/// Immutable validated table stored row-major in dense form.
class MixedTable {
 public:
  MixedTable() = default;
  MixedTable(FeatureSchema schema, const std::vector<MixedRow>& rows);
  static MixedTable from_dense(FeatureSchema schema, std::vector<double> data);

  [[nodiscard]] const FeatureSchema& schema() const { return schema_; }
  [[nodiscard]] int n() const { return n_; }
  [[nodiscard]] int width() const { return schema_.size(); }
  [[nodiscard]] RowView row(int i) const;
  [[nodiscard]] double at(int i, int j) const {
    return data_[static_cast<std::size_t>(i) * static_cast<std::size_t>(width()) + static_cast<std::size_t>(j)];
  }
  [[nodiscard]] MixedRow mixed_row(int i) const { return MixedRow::from_dense(schema_, row(i)); }
  [[nodiscard]] const std::vector<double>& data() const { return data_; }

 private:
  FeatureSchema schema_;
  std::vector<double> data_;
  int n_ = 0;
};

/// Subset S of {0..M-1} as a bitmask.
struct Coalition {
  std::uint32_t mask = 0;

  [[nodiscard]] bool contains(int j) const { return (mask >> j) & 1U; }
  [[nodiscard]] int size() const;
  [[nodiscard]] Coalition complement(int M) const { return {~mask & full_mask(M)}; }
  [[nodiscard]] std::vector<int> indices() const;
  [[nodiscard]] bool empty() const { return mask == 0; }
  [[nodiscard]] bool is_full(int M) const { return mask == full_mask(M); }

  static std::uint32_t full_mask(int M) { return M >= 32 ? ~0U : ((1U << M) - 1U); }
  friend bool operator==(Coalition a, Coalition b) = default;
};

/// All 2^M coalitions in ascending mask order; throws DimensionTooLarge for M > 20.
std::vector<Coalition> enumerate_coalitions(int M);

/// For every original feature, the encoded column indices it maps to.
struct GroupMap {
  std::vector<std::vector<int>> groups;

  [[nodiscard]] int n_groups() const { return static_cast<int>(groups.size()); }
  [[nodiscard]] int width() const;
};

struct OneHotEncoding {
  MixedTable table;  // all-continuous
  GroupMap groups;
};

/// Level 1 is the reference (all zeros); levels 2..L get indicator columns.
OneHotEncoding one_hot_encode(const MixedTable& table);
FeatureSchema one_hot_schema(const FeatureSchema& schema, GroupMap* groups = nullptr);
/// Column groups of the encoding without building the encoded schema, so the
/// feature cap does not apply (regression designs may be wider).
GroupMap one_hot_groups(const FeatureSchema& schema);
std::vector<double> one_hot_encode_row(const FeatureSchema& schema, RowView row);
/// Inverse of one_hot_encode_row for well-formed indicator blocks.
std::vector<double> one_hot_decode_row(const FeatureSchema& schema, RowView encoded);

/// output[j] = sum of phi over groups[j]; throws GroupIndexOutOfRange.
std::vector<double> aggregate_onehot_shapley(std::span<const double> phi, const GroupMap& groups);

}  // namespace mixshap
