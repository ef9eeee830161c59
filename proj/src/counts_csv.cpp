#include "spdcbell/counts_csv.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <sstream>

#include "spdcbell/error.hpp"

namespace spdcbell {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return fields;
}

[[noreturn]] void fail(int line, const std::string& message) {
  throw_invalid_argument("counts CSV line " + std::to_string(line) + ": " + message);
}

std::uint64_t parse_count(std::string_view field, int line, const char* what) {
  std::uint64_t value = 0;
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (field.empty() || ec != std::errc() || ptr != end) {
    fail(line, std::string("invalid ") + what + " '" + std::string(field) + "'");
  }
  return value;
}

int parse_setting(std::string_view field, int line) {
  const auto v = parse_count(field, line, "setting");
  if (v != 11 && v != 12 && v != 21 && v != 22) {
    fail(line, "setting must be one of 11, 12, 21, 22");
  }
  return static_cast<int>(v);
}

struct Pending {
  CountRecord record;
  std::array<bool, kPatterns> seen{};
  bool has_total = false;
  int first_line = 0;
  int total_line = 0;
};

}  // namespace

std::vector<CountRecord> parse_counts_csv(std::string_view text) {
  std::map<int, Pending> records;
  std::optional<int> current;
  bool header_seen = false;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    const auto f = split(line);
    if (!header_seen) {
      if (f.size() == 3 && f[0] == "setting" && f[1] == "pattern" && f[2] == "count") {
        header_seen = true;
        continue;
      }
      fail(line_no, "expected header 'setting,pattern,count'");
    }
    if (f.size() == 2 && f[0] == "total") {
      if (!current) fail(line_no, "'total' row before any data row");
      auto& p = records[*current];
      if (p.has_total) fail(line_no, "second total for setting " + std::to_string(*current));
      p.record.total = parse_count(f[1], line_no, "total");
      p.has_total = true;
      p.total_line = line_no;
      continue;
    }
    if (f.size() != 3) fail(line_no, "expected 3 fields, found " + std::to_string(f.size()));
    const int setting = parse_setting(f[0], line_no);
    auto& p = records[setting];
    if (p.first_line == 0) {
      p.first_line = line_no;
      p.record.setting = setting;
    }
    current = setting;
    if (f[1] == "total") {
      if (p.has_total) fail(line_no, "second total for setting " + std::to_string(setting));
      p.record.total = parse_count(f[2], line_no, "total");
      p.has_total = true;
      p.total_line = line_no;
      continue;
    }
    const auto pattern = parse_count(f[1], line_no, "pattern");
    if (pattern >= static_cast<std::uint64_t>(kPatterns)) fail(line_no, "pattern must lie in 0..15");
    if (p.seen[pattern]) fail(line_no, "duplicate row for pattern " + std::to_string(pattern));
    p.seen[pattern] = true;
    p.record.counts[pattern] = parse_count(f[2], line_no, "count");
  }
  if (!header_seen) throw_invalid_argument("counts CSV: empty input");

  std::vector<CountRecord> out;
  for (const auto& [setting, p] : records) {
    if (!p.has_total) {
      fail(p.first_line, "setting " + std::to_string(setting) + " has no total row");
    }
    std::uint64_t sum = 0;
    for (auto c : p.record.counts) sum += c;
    if (sum != p.record.total) {
      fail(p.total_line, "setting " + std::to_string(setting) + ": counts sum to " +
                             std::to_string(sum) + " but total is " +
                             std::to_string(p.record.total));
    }
    out.push_back(p.record);
  }
  return out;
}

std::string format_counts_csv(const std::vector<CountRecord>& records) {
  std::vector<CountRecord> sorted = records;
  std::sort(sorted.begin(), sorted.end(),
            [](const CountRecord& a, const CountRecord& b) { return a.setting < b.setting; });
  std::ostringstream os;
  os << "setting,pattern,count\n";
  for (const auto& r : sorted) {
    r.validate();
    for (int k = 0; k < kPatterns; ++k) {
      os << r.setting << ',' << k << ',' << r.counts[static_cast<std::size_t>(k)] << '\n';
    }
    os << "total," << r.total << '\n';
  }
  return os.str();
}

}  // namespace spdcbell
