#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "divjudge/dataset.hpp"

namespace divjudge {

enum class ColumnKind { continuous, integer, binary, categorical };

std::string to_string(ColumnKind kind);

struct ColumnSchema {
  std::string name;
  ColumnKind kind = ColumnKind::continuous;
  /// Frozen first-appearance vocabulary (binary and categorical columns).
  /// May contain the reserved "<missing>" entry for categoricals whose real
  /// column had missing cells.
  std::vector<std::string> vocabulary;
  /// Numeric columns only: the real column had missing cells, so encoding
  /// appends a 0/1 missingness indicator.
  bool has_missing = false;
  /// Standardization statistics from the REAL dataset (numeric columns).
  double mean = 0.0;
  double stddev = 1.0;

  /// Encoded column block width under this schema.
  int width() const;
};

/// Name for the categorical vocabulary entry that represents missing cells.
inline constexpr const char* kMissingEntry = "<missing>";

struct Schema {
  std::vector<ColumnSchema> columns;
  std::vector<std::string> missing_tokens;
  int encoded_width() const;
};

struct RawTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string source_path;
  std::size_t n_rows() const { return rows.size(); }
  std::size_t n_cols() const { return header.size(); }
};

/// True when the trimmed cell equals one of the configured missing tokens.
bool is_missing_cell(const std::string& cell,
                     const std::vector<std::string>& missing_tokens);

/// Default missing markers: empty cell and the literal "?".
std::vector<std::string> default_missing_tokens();

/// Parses an RFC-4180-style CSV with a header row. Quoted fields may contain
/// commas, escaped quotes ("") and newlines; unquoted cells are trimmed of
/// surrounding whitespace; a leading UTF-8 BOM and blank lines are skipped.
/// Throws DataError on unreadable/empty files and on ragged rows (message
/// names the 1-based line number).
RawTable load_csv(const std::string& path);

/// In-memory variant used by tests and by load_csv itself.
RawTable parse_csv(const std::string& text, const std::string& source_label);

/// Derives a frozen schema from the REAL table: a column with exactly two
/// distinct non-missing values and no missing cells is binary; otherwise
/// all-numeric columns are integer (all integral, > 2 distinct) or
/// continuous; everything else is categorical with a first-appearance
/// vocabulary ("<missing>" inserted where a missing cell first appears).
/// Throws DataError on duplicate column names or a column with zero
/// non-missing cells.
Schema infer_schema(const RawTable& real,
                    const std::vector<std::string>& missing_tokens =
                        default_missing_tokens());

/// Per-column encoding diagnostics.
struct EncodeReport {
  /// Cells whose category was absent from the frozen vocabulary (mapped to
  /// an all-zero block, or 0.5 for binary columns).
  std::map<std::string, int> unknown_category_counts;
  /// Missing cells seen per column.
  std::map<std::string, int> missing_counts;
  int total_unknown() const;
  int total_missing() const;
  /// Human-readable summary, one line per affected column.
  std::string to_text() const;
};

struct EncodeResult {
  DatasetMatrix matrix;
  EncodeReport report;
};

/// Encodes a table against a frozen schema. Columns are matched by name, so
/// column order may differ from the schema. Throws DataError when a schema
/// column is absent, the table has extra columns, or a numeric cell fails to
/// parse.
EncodeResult encode_with_report(const RawTable& table, const Schema& schema);
DatasetMatrix encode(const RawTable& table, const Schema& schema);

/// Recovers the token encoded by a categorical one-hot block; returns the
/// empty string for an all-zero (unknown-category) block. Throws
/// std::invalid_argument for non-categorical columns or malformed blocks.
std::string decode_onehot(const ColumnSchema& column,
                          const Eigen::VectorXd& block);

}  // namespace divjudge
