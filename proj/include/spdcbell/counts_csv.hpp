#pragma once

// Counts CSV: header `setting,pattern,count`, data rows `11,5,1234`, and one
// `total,N` row after each setting's rows. `11,total,N` is accepted as well.
// Blank lines and lines starting with '#' are ignored. Patterns without a
// row have count zero.

#include <string>
#include <string_view>
#include <vector>

#include "spdcbell/estimation.hpp"

namespace spdcbell {

// Records in ascending setting order. Throws kInvalidArgument with the
// offending line number.
std::vector<CountRecord> parse_counts_csv(std::string_view text);

std::string format_counts_csv(const std::vector<CountRecord>& records);

}  // namespace spdcbell
