#include "divjudge/tabular.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "divjudge/errors.hpp"

namespace divjudge {

namespace {

std::string trim(const std::string& s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end &&
         std::isspace(static_cast<unsigned char>(s[begin])) != 0) {
    ++begin;
  }
  while (end > begin &&
         std::isspace(static_cast<unsigned char>(s[end - 1])) != 0) {
    --end;
  }
  return s.substr(begin, end - begin);
}

bool is_all_whitespace(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) {
    return std::isspace(c) != 0;
  });
}

bool parse_finite_double(const std::string& cell, double* out) {
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    return false;
  }
  *out = value;
  return true;
}

/// Optional sign followed by digits only; excludes decimal/exponent forms.
bool is_integer_form(const std::string& cell) {
  std::size_t i = 0;
  if (i < cell.size() && (cell[i] == '+' || cell[i] == '-')) {
    ++i;
  }
  if (i >= cell.size()) {
    return false;
  }
  for (; i < cell.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(cell[i])) == 0) {
      return false;
    }
  }
  return true;
}

void check_unique_names(const std::vector<std::string>& names,
                        const std::string& what) {
  std::unordered_set<std::string> seen;
  for (const auto& name : names) {
    if (!seen.insert(name).second) {
      throw DataError(what + ": duplicate column name '" + name + "'");
    }
  }
}

}  // namespace

std::string to_string(ColumnKind kind) {
  switch (kind) {
    case ColumnKind::continuous:
      return "continuous";
    case ColumnKind::integer:
      return "integer";
    case ColumnKind::binary:
      return "binary";
    case ColumnKind::categorical:
      return "categorical";
  }
  return "unknown";
}

int ColumnSchema::width() const {
  switch (kind) {
    case ColumnKind::continuous:
    case ColumnKind::integer:
      return has_missing ? 2 : 1;
    case ColumnKind::binary:
      return 1;
    case ColumnKind::categorical:
      return static_cast<int>(vocabulary.size());
  }
  return 0;
}

int Schema::encoded_width() const {
  int total = 0;
  for (const auto& column : columns) {
    total += column.width();
  }
  return total;
}

bool is_missing_cell(const std::string& cell,
                     const std::vector<std::string>& missing_tokens) {
  const std::string trimmed = trim(cell);
  return std::find(missing_tokens.begin(), missing_tokens.end(), trimmed) !=
         missing_tokens.end();
}

std::vector<std::string> default_missing_tokens() { return {"", "?"}; }

RawTable parse_csv(const std::string& text, const std::string& source_label) {
  std::size_t pos = 0;
  // Skip a UTF-8 byte-order mark if present.
  if (text.size() >= 3 && text.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    pos = 3;
  }

  std::vector<std::vector<std::string>> records;
  std::vector<std::size_t> record_lines;
  std::vector<std::string> cells;
  std::string cell;
  bool in_quotes = false;
  bool cell_quoted = false;
  bool record_quoted = false;
  bool post_quote = false;
  std::size_t line = 1;
  std::size_t record_line = 1;

  const auto end_cell = [&]() {
    cells.push_back(cell_quoted ? cell : trim(cell));
    record_quoted = record_quoted || cell_quoted;
    cell.clear();
    cell_quoted = false;
    post_quote = false;
  };
  const auto end_record = [&]() {
    end_cell();
    const bool blank =
        cells.size() == 1 && !record_quoted && cells[0].empty();
    if (!blank) {
      records.push_back(std::move(cells));
      record_lines.push_back(record_line);
    }
    cells.clear();
    record_quoted = false;
  };

  for (; pos < text.size(); ++pos) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cell.push_back('"');
          ++pos;
        } else {
          in_quotes = false;
          post_quote = true;
        }
      } else {
        if (c == '\n') {
          ++line;
        }
        cell.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!cell_quoted && is_all_whitespace(cell)) {
          cell.clear();
          in_quotes = true;
          cell_quoted = true;
        } else {
          cell.push_back(c);
        }
        break;
      case ',':
        end_cell();
        break;
      case '\r':
        break;
      case '\n':
        end_record();
        ++line;
        record_line = line;
        break;
      default:
        if (post_quote && std::isspace(static_cast<unsigned char>(c)) != 0) {
          break;
        }
        cell.push_back(c);
        break;
    }
  }
  if (in_quotes) {
    throw DataError(source_label + ": unterminated quoted field starting near "
                                   "line " +
                    std::to_string(record_line));
  }
  if (!cell.empty() || cell_quoted || !cells.empty()) {
    end_record();
  }

  if (records.empty()) {
    throw DataError(source_label + ": file contains no CSV records");
  }

  RawTable table;
  table.source_path = source_label;
  table.header = std::move(records.front());
  if (records.size() == 1) {
    throw DataError(source_label + ": header only, no data rows");
  }
  table.rows.assign(std::make_move_iterator(records.begin() + 1),
                    std::make_move_iterator(records.end()));
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (table.rows[i].size() != table.header.size()) {
      throw DataError(source_label + ": line " +
                      std::to_string(record_lines[i + 1]) + ": expected " +
                      std::to_string(table.header.size()) + " cells, got " +
                      std::to_string(table.rows[i].size()));
    }
  }
  return table;
}

RawTable load_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("load_csv: cannot open '" + path + "'");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) {
    throw DataError("load_csv: read failure on '" + path + "'");
  }
  return parse_csv(buffer.str(), path);
}

Schema infer_schema(const RawTable& real,
                    const std::vector<std::string>& missing_tokens) {
  if (real.n_rows() == 0) {
    throw DataError("infer_schema: table '" + real.source_path +
                    "' has no data rows");
  }
  check_unique_names(real.header, "infer_schema");

  Schema schema;
  schema.missing_tokens = missing_tokens;
  schema.columns.reserve(real.n_cols());
  for (std::size_t j = 0; j < real.n_cols(); ++j) {
    ColumnSchema column;
    column.name = real.header[j];

    std::vector<std::string> distinct;
    std::set<std::string> seen;
    std::vector<double> numeric_values;
    bool all_numeric = true;
    bool all_integer_form = true;
    int n_missing = 0;
    // Vocabulary in first-appearance order, with the missing marker entering
    // at the position of the first missing cell.
    std::vector<std::string> vocab_with_missing;
    std::set<std::string> vocab_seen;
    for (const auto& row : real.rows) {
      const std::string& cell = row[j];
      if (is_missing_cell(cell, missing_tokens)) {
        ++n_missing;
        if (vocab_seen.insert(kMissingEntry).second) {
          vocab_with_missing.push_back(kMissingEntry);
        }
        continue;
      }
      if (vocab_seen.insert(cell).second) {
        vocab_with_missing.push_back(cell);
      }
      if (seen.insert(cell).second) {
        distinct.push_back(cell);
      }
      double value = 0.0;
      if (parse_finite_double(cell, &value)) {
        numeric_values.push_back(value);
      } else {
        all_numeric = false;
      }
      all_integer_form = all_integer_form && is_integer_form(cell);
    }

    if (distinct.empty()) {
      throw DataError("infer_schema: column '" + column.name +
                      "' has no non-missing values");
    }

    if (distinct.size() == 2 && n_missing == 0) {
      column.kind = ColumnKind::binary;
      column.vocabulary = distinct;
    } else if (all_numeric) {
      column.kind = (all_integer_form && distinct.size() > 2)
                        ? ColumnKind::integer
                        : ColumnKind::continuous;
      column.has_missing = n_missing > 0;
      const double n = static_cast<double>(numeric_values.size());
      double mean = 0.0;
      for (const double v : numeric_values) {
        mean += v;
      }
      mean /= n;
      column.mean = mean;
      double var = 0.0;
      for (const double v : numeric_values) {
        var += (v - mean) * (v - mean);
      }
      column.stddev =
          numeric_values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
      if (column.stddev < 1e-12) {
        column.stddev = 1.0;
      }
    } else {
      column.kind = ColumnKind::categorical;
      column.has_missing = n_missing > 0;
      column.vocabulary = std::move(vocab_with_missing);
    }
    schema.columns.push_back(std::move(column));
  }
  return schema;
}

int EncodeReport::total_unknown() const {
  int total = 0;
  for (const auto& [name, count] : unknown_category_counts) {
    total += count;
  }
  return total;
}

int EncodeReport::total_missing() const {
  int total = 0;
  for (const auto& [name, count] : missing_counts) {
    total += count;
  }
  return total;
}

std::string EncodeReport::to_text() const {
  if (unknown_category_counts.empty() && missing_counts.empty()) {
    return "no unknown categories or missing cells\n";
  }
  std::ostringstream out;
  for (const auto& [name, count] : unknown_category_counts) {
    out << "column '" << name << "': " << count
        << " cell(s) outside the frozen vocabulary\n";
  }
  for (const auto& [name, count] : missing_counts) {
    out << "column '" << name << "': " << count << " missing cell(s)\n";
  }
  return out.str();
}

EncodeResult encode_with_report(const RawTable& table, const Schema& schema) {
  check_unique_names(table.header, "encode");
  std::unordered_map<std::string, std::size_t> index_by_name;
  for (std::size_t j = 0; j < table.n_cols(); ++j) {
    index_by_name.emplace(table.header[j], j);
  }
  std::vector<std::size_t> table_col(schema.columns.size());
  for (std::size_t s = 0; s < schema.columns.size(); ++s) {
    const auto it = index_by_name.find(schema.columns[s].name);
    if (it == index_by_name.end()) {
      throw DataError("encode: table '" + table.source_path +
                      "' lacks schema column '" + schema.columns[s].name +
                      "'");
    }
    table_col[s] = it->second;
  }
  if (table.n_cols() != schema.columns.size()) {
    std::set<std::string> schema_names;
    for (const auto& column : schema.columns) {
      schema_names.insert(column.name);
    }
    for (const auto& name : table.header) {
      if (schema_names.count(name) == 0) {
        throw DataError("encode: table '" + table.source_path +
                        "' has column '" + name + "' absent from the schema");
      }
    }
  }

  EncodeResult result;
  result.matrix.label = table.source_path;
  const Eigen::Index n = static_cast<Eigen::Index>(table.n_rows());
  result.matrix.values =
      Eigen::MatrixXd::Zero(n, schema.encoded_width());

  Eigen::Index offset = 0;
  for (std::size_t s = 0; s < schema.columns.size(); ++s) {
    const ColumnSchema& column = schema.columns[s];
    const std::size_t j = table_col[s];
    const int width = column.width();
    for (Eigen::Index i = 0; i < n; ++i) {
      const std::string& cell = table.rows[static_cast<std::size_t>(i)][j];
      const bool missing = is_missing_cell(cell, schema.missing_tokens);
      switch (column.kind) {
        case ColumnKind::continuous:
        case ColumnKind::integer: {
          if (missing) {
            // Mean imputation: the standardized column mean is 0.
            result.matrix.values(i, offset) = 0.0;
            if (column.has_missing) {
              result.matrix.values(i, offset + 1) = 1.0;
            }
            ++result.report.missing_counts[column.name];
          } else {
            double value = 0.0;
            if (!parse_finite_double(cell, &value)) {
              throw DataError("encode: column '" + column.name + "', row " +
                              std::to_string(i + 1) + ": cell '" + cell +
                              "' is not numeric");
            }
            result.matrix.values(i, offset) =
                (value - column.mean) / column.stddev;
          }
          break;
        }
        case ColumnKind::binary: {
          if (missing) {
            result.matrix.values(i, offset) = 0.5;
            ++result.report.missing_counts[column.name];
          } else if (cell == column.vocabulary[0]) {
            result.matrix.values(i, offset) = 0.0;
          } else if (cell == column.vocabulary[1]) {
            result.matrix.values(i, offset) = 1.0;
          } else {
            result.matrix.values(i, offset) = 0.5;
            ++result.report.unknown_category_counts[column.name];
          }
          break;
        }
        case ColumnKind::categorical: {
          const std::string token = missing ? kMissingEntry : cell;
          if (missing) {
            ++result.report.missing_counts[column.name];
          }
          const auto it = std::find(column.vocabulary.begin(),
                                    column.vocabulary.end(), token);
          if (it != column.vocabulary.end()) {
            const Eigen::Index k = it - column.vocabulary.begin();
            result.matrix.values(i, offset + k) = 1.0;
          } else {
            // Unknown category: all-zero block, counted in the report.
            ++result.report.unknown_category_counts[column.name];
          }
          break;
        }
      }
    }
    offset += width;
  }
  return result;
}

DatasetMatrix encode(const RawTable& table, const Schema& schema) {
  return encode_with_report(table, schema).matrix;
}

std::string decode_onehot(const ColumnSchema& column,
                          const Eigen::VectorXd& block) {
  if (column.kind != ColumnKind::categorical) {
    throw std::invalid_argument("decode_onehot: column '" + column.name +
                                "' is not categorical");
  }
  if (block.size() != static_cast<Eigen::Index>(column.vocabulary.size())) {
    throw std::invalid_argument(
        "decode_onehot: block width " + std::to_string(block.size()) +
        " does not match vocabulary size " +
        std::to_string(column.vocabulary.size()));
  }
  Eigen::Index hot = -1;
  for (Eigen::Index k = 0; k < block.size(); ++k) {
    if (block[k] == 1.0) {
      if (hot >= 0) {
        throw std::invalid_argument(
            "decode_onehot: multiple active entries in block");
      }
      hot = k;
    } else if (block[k] != 0.0) {
      throw std::invalid_argument(
          "decode_onehot: block entries must be 0 or 1");
    }
  }
  if (hot < 0) {
    return "";
  }
  return column.vocabulary[static_cast<std::size_t>(hot)];
}

}  // namespace divjudge
