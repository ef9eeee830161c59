#include "table.hpp"

#include <cmath>
#include <cstdlib>

#include "json.hpp"

namespace spdcbell_cli {

namespace {

using Json = nlohmann::ordered_json;

// Round-trip through the 12-digit text so JSON shows the same digits as CSV.
Json to_json(const Cell& cell) {
  if (std::holds_alternative<std::monostate>(cell)) return nullptr;
  if (const auto* d = std::get_if<double>(&cell)) {
    if (!std::isfinite(*d)) return format_double(*d);
    return std::strtod(format_double(*d).c_str(), nullptr);
  }
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return *i;
  return std::get<std::string>(cell);
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + '"';
}

}  // namespace

std::string format_cell(const Cell& cell) {
  if (std::holds_alternative<std::monostate>(cell)) return {};
  if (const auto* d = std::get_if<double>(&cell)) return format_double(*d);
  if (const auto* i = std::get_if<std::int64_t>(&cell)) return std::to_string(*i);
  return std::get<std::string>(cell);
}

void write_table(const Table& table, Format format, std::ostream& out) {
  if (format == Format::kJson) {
    Json doc;
    doc["command"] = table.command;
    Json meta = Json::object();
    for (const auto& [k, v] : table.metadata) meta[k] = v;
    doc["config"] = meta;
    doc["columns"] = table.columns;
    Json rows = Json::array();
    for (const auto& row : table.rows) {
      Json r = Json::object();
      for (std::size_t i = 0; i < table.columns.size() && i < row.size(); ++i) {
        r[table.columns[i]] = to_json(row[i]);
      }
      rows.push_back(std::move(r));
    }
    doc["rows"] = std::move(rows);
    Json summary = Json::object();
    for (const auto& [k, v] : table.summary) summary[k] = to_json(v);
    doc["summary"] = std::move(summary);
    out << doc.dump(2) << '\n';
    return;
  }
  out << "# spdcbell " << table.command;
  for (const auto& [k, v] : table.metadata) out << ' ' << k << '=' << v;
  out << '\n';
  for (std::size_t i = 0; i < table.columns.size(); ++i) {
    out << (i ? "," : "") << csv_field(table.columns[i]);
  }
  out << '\n';
  for (const auto& row : table.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      out << (i ? "," : "") << csv_field(format_cell(row[i]));
    }
    out << '\n';
  }
  for (const auto& [k, v] : table.summary) out << "# " << k << '=' << format_cell(v) << '\n';
}

}  // namespace spdcbell_cli
