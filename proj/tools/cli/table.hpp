#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "run_config.hpp"

namespace spdcbell_cli {

using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

struct Table {
  std::string command;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<std::string> columns;
  std::vector<std::vector<Cell>> rows;
  // Scalars that do not fit the row layout (e.g. a CHSH value built from all
  // rows). CSV puts them on trailing comment lines.
  std::vector<std::pair<std::string, Cell>> summary;
};

// CSV: "# spdcbell <command> key=value ..." line, header row, data rows,
// "# name=value" summary lines. JSON: one object with the same content.
// Doubles use 12 significant digits in both formats.
void write_table(const Table& table, Format format, std::ostream& out);

std::string format_cell(const Cell& cell);

}  // namespace spdcbell_cli
