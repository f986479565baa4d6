#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "tapcast/error.hpp"

namespace tapcast::data {

// Multichannel series. channels[c][t] is channel c at timestep t.
struct SeriesDataset {
  std::string name;
  std::vector<std::string> channel_names;
  std::vector<std::vector<double>> channels;
  std::optional<std::vector<std::string>> timestamps;
  std::string frequency;

  std::size_t length() const { return channels.empty() ? 0 : channels.front().size(); }
  std::size_t channel_count() const { return channels.size(); }
};

struct CsvSchema {
  // Column holding timestamps. Used when present in the header; a missing
  // timestamp column is only an error when `require_timestamp` is set.
  std::string timestamp_column = "date";
  bool require_timestamp = false;
  // Value columns in the order to load them. Empty means every non-timestamp column.
  std::vector<std::string> value_columns;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = line.find(',', start);
    out.push_back(trim(line.substr(start, pos == std::string_view::npos ? std::string_view::npos
                                                                         : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::optional<double> parse_real(std::string_view s) {
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

}  // namespace detail

// Parses comma-separated text with a header row. Data rows are numbered from 1
// (the header is row 0) in error messages.
inline SeriesDataset parse_csv(std::istream& in, const CsvSchema& schema,
                               const std::string& source = "<stream>") {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line).empty()) {
    throw DataError(source + ": empty file");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  std::vector<std::string> header;
  for (auto f : detail::split_fields(line)) header.emplace_back(f);

  auto find_col = [&](const std::string& name) -> std::optional<std::size_t> {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
  };

  std::optional<std::size_t> ts_col;
  if (!schema.timestamp_column.empty()) ts_col = find_col(schema.timestamp_column);
  if (schema.require_timestamp && !ts_col) {
    throw SchemaError(source + ": missing timestamp column '" + schema.timestamp_column + "'");
  }

  std::vector<std::size_t> value_cols;
  SeriesDataset ds;
  if (schema.value_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (ts_col && c == *ts_col) continue;
      value_cols.push_back(c);
    }
  } else {
    for (const auto& name : schema.value_columns) {
      auto c = find_col(name);
      if (!c) throw SchemaError(source + ": missing column '" + name + "'");
      value_cols.push_back(*c);
    }
  }
  if (value_cols.empty()) throw SchemaError(source + ": no value columns");
  for (auto c : value_cols) ds.channel_names.push_back(header[c]);
  ds.channels.assign(value_cols.size(), {});
  if (ts_col) ds.timestamps.emplace();

  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    ++row;
    auto fields = detail::split_fields(line);
    if (fields.size() != header.size()) {
      throw DataError(source + ": row " + std::to_string(row) + " has " +
                      std::to_string(fields.size()) + " fields, header has " +
                      std::to_string(header.size()));
    }
    for (std::size_t i = 0; i < value_cols.size(); ++i) {
      const auto cell = fields[value_cols[i]];
      auto v = detail::parse_real(cell);
      if (!v) {
        throw DataError(source + ": row " + std::to_string(row) + ", column '" +
                        header[value_cols[i]] + "': cannot parse '" + std::string(cell) + "'");
      }
      if (!std::isfinite(*v)) {
        throw DataError(source + ": row " + std::to_string(row) + ", column '" +
                        header[value_cols[i]] + "': non-finite value '" + std::string(cell) + "'");
      }
      ds.channels[i].push_back(*v);
    }
    if (ts_col) ds.timestamps->emplace_back(fields[*ts_col]);
  }
  if (row == 0) throw DataError(source + ": no data rows");
  return ds;
}

inline SeriesDataset load_csv(const std::string& path, const CsvSchema& schema = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  auto ds = parse_csv(in, schema, path);
  auto slash = path.find_last_of('/');
  auto base = path.substr(slash == std::string::npos ? 0 : slash + 1);
  if (auto dot = base.rfind('.'); dot != std::string::npos) base.erase(dot);
  ds.name = base;
  return ds;
}

}  // namespace tapcast::data
