#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "medvar/errors.hpp"

namespace medvar {

// First physical line is the header; every data row must match its width.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(std::string_view name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return static_cast<int>(j);
    }
    return -1;
  }
};

// RFC 4180 parser: quoted fields may contain commas, newlines, and doubled
// quotes. Accepts LF and CRLF endings and a missing final newline; strips a
// UTF-8 byte-order mark. Errors carry 1-based physical line numbers.
inline CsvTable parse_csv(std::string_view text) {
  CsvTable table;
  std::size_t pos = 0;
  if (text.size() >= 3 && text.substr(0, 3) == "\xEF\xBB\xBF") pos = 3;

  std::size_t line = 1;
  std::vector<std::string> fields;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  const std::size_t n = text.size();

  auto end_field = [&]() {
    fields.push_back(std::move(field));
    field.clear();
  };
  auto end_row = [&](std::size_t at_line) {
    end_field();
    if (table.header.empty()) {
      table.header = std::move(fields);
    } else {
      if (fields.size() != table.header.size()) {
        throw DataError("csv line " + std::to_string(at_line) + ": expected " +
                        std::to_string(table.header.size()) + " fields, found " +
                        std::to_string(fields.size()));
      }
      table.rows.push_back(std::move(fields));
    }
    fields.clear();
    row_started = false;
  };

  while (pos < n) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < n && text[pos + 1] == '"') {
          field.push_back('"');
          pos += 2;
        } else {
          in_quotes = false;
          ++pos;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
        ++pos;
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty()) {
          throw DataError("csv line " + std::to_string(line) +
                          ": quote inside unquoted field");
        }
        in_quotes = true;
        row_started = true;
        ++pos;
        break;
      case ',':
        end_field();
        row_started = true;
        ++pos;
        break;
      case '\r':
        if (pos + 1 < n && text[pos + 1] == '\n') {
          end_row(line);
          ++line;
          pos += 2;
        } else {
          throw DataError("csv line " + std::to_string(line) +
                          ": bare carriage return");
        }
        break;
      case '\n':
        end_row(line);
        ++line;
        ++pos;
        break;
      default:
        field.push_back(c);
        row_started = true;
        ++pos;
        break;
    }
  }
  if (in_quotes) {
    throw DataError("csv: unterminated quoted field at end of input");
  }
  if (row_started || !field.empty() || !fields.empty()) end_row(line);

  if (table.header.empty()) throw DataError("csv: empty input");
  return table;
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open csv file: " + path);
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_csv(buffer.str());
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

inline std::string csv_escape(std::string_view field) {
  const bool needs_quotes =
      field.find_first_of(",\"\r\n") != std::string_view::npos;
  if (!needs_quotes) return std::string(field);
  std::string out;
  out.reserve(field.size() + 2);
  out.push_back('"');
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

inline std::string format_csv(const std::vector<std::string>& header,
                              const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream out;
  auto write_row = [&](const std::vector<std::string>& row) {
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (j) out << ',';
      out << csv_escape(row[j]);
    }
    out << '\n';
  };
  write_row(header);
  for (const auto& row : rows) write_row(row);
  return out.str();
}

inline void write_csv(const std::string& path,
                      const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write csv file: " + path);
  out << format_csv(header, rows);
  if (!out) throw DataError("failed writing csv file: " + path);
}

}  // namespace medvar
