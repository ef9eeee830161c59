#include "run_config.hpp"

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

namespace spdcbell_cli {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

double parse_plain(std::string_view s) {
  const std::string str(trim(s));
  if (str.empty()) throw ConfigError("empty number");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(str.c_str(), &end);
  if (*end != '\0' || std::isnan(v) || errno == ERANGE) {
    throw ConfigError("invalid number '" + str + "'");
  }
  return v;
}

template <typename T>
T parse_integer(std::string_view s) {
  const auto t = trim(s);
  T value{};
  const auto* end = t.data() + t.size();
  const auto [ptr, ec] = std::from_chars(t.data(), end, value);
  if (t.empty() || ec != std::errc() || ptr != end) {
    throw ConfigError("invalid integer '" + std::string(t) + "'");
  }
  return value;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto at = s.find(sep, start);
    parts.push_back(trim(s.substr(start, at - start)));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

ConfigKey number_key(std::string name, std::string help, double& target) {
  return {std::move(name), std::move(help),
          [&target](std::string_view v) { target = parse_number(v); },
          [&target] { return format_double(target); }};
}

ConfigKey int_key(std::string name, std::string help, int& target) {
  return {std::move(name), std::move(help),
          [&target](std::string_view v) { target = parse_integer<int>(v); },
          [&target] { return std::to_string(target); }};
}

}  // namespace

RunConfig::RunConfig() {
  const double pi = std::numbers::pi;
  system.lambda1 = 0.62;
  system.lambda2 = 0.62;
  system.alice_angles[0] = 0.0;
  system.alice_angles[1] = pi / 5;
  system.bob_angles[0] = 3 * pi / 5;
  system.bob_angles[1] = -3 * pi / 5;
  for (double& e : system.efficiency) e = 1.0;
  system.dark_count = 0.0;
  spdcbell_search_options_default(&search);
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

double parse_number(std::string_view text) {
  const auto s = trim(text);
  const auto p = s.find("pi");
  if (p == std::string_view::npos) return parse_plain(s);
  auto head = trim(s.substr(0, p));
  const auto tail = trim(s.substr(p + 2));
  if (!head.empty() && head.back() == '*') head = trim(head.substr(0, head.size() - 1));
  double coefficient = 1.0;
  if (head == "-") {
    coefficient = -1.0;
  } else if (!head.empty() && head != "+") {
    coefficient = parse_plain(head);
  }
  double divisor = 1.0;
  if (!tail.empty()) {
    if (tail.front() != '/') throw ConfigError("invalid number '" + std::string(s) + "'");
    divisor = parse_plain(tail.substr(1));
    if (divisor == 0.0) throw ConfigError("division by zero in '" + std::string(s) + "'");
  }
  return coefficient * std::numbers::pi / divisor;
}

std::vector<ConfigKey> config_keys(RunConfig& c) {
  std::vector<ConfigKey> keys;
  auto& sys = c.system;
  keys.push_back(number_key("source.lambda1", "mean photon number of source 1", sys.lambda1));
  keys.push_back(number_key("source.lambda2", "mean photon number of source 2", sys.lambda2));
  keys.push_back({"source.lambda", "both mean photon numbers",
                  [&sys](std::string_view v) { sys.lambda1 = sys.lambda2 = parse_number(v); },
                  [&sys] { return format_double(sys.lambda1); }, false});
  keys.push_back(number_key("angles.a1", "Alice angle 1 (radians, pi allowed)", sys.alice_angles[0]));
  keys.push_back(number_key("angles.a2", "Alice angle 2", sys.alice_angles[1]));
  keys.push_back(number_key("angles.b1", "Bob angle 1", sys.bob_angles[0]));
  keys.push_back(number_key("angles.b2", "Bob angle 2", sys.bob_angles[1]));
  keys.push_back({"detectors.eta", "efficiency of all four detectors",
                  [&sys](std::string_view v) {
                    const double e = parse_number(v);
                    for (double& x : sys.efficiency) x = e;
                  },
                  [&sys] { return format_double(sys.efficiency[0]); }, false});
  for (int l = 0; l < 4; ++l) {
    keys.push_back(number_key("detectors.eta" + std::to_string(l + 1),
                              "efficiency of D" + std::to_string(l + 1), sys.efficiency[l]));
  }
  keys.push_back(number_key("detectors.nu", "dark-count probability per window", sys.dark_count));

  auto& s = c.search;
  keys.push_back(int_key("optimizer.restarts", "multi-start count", s.restarts));
  keys.push_back(number_key("optimizer.initial_step", "initial simplex size", s.initial_step));
  keys.push_back(number_key("optimizer.x_tolerance", "simplex size tolerance", s.x_tolerance));
  keys.push_back(number_key("optimizer.f_tolerance", "objective spread tolerance", s.f_tolerance));
  keys.push_back(int_key("optimizer.max_iterations", "iterations per restart", s.max_iterations));
  keys.push_back(number_key("optimizer.lambda_ceiling", "ceiling for uncapped lambdas",
                            s.lambda_ceiling));
  keys.push_back({"seed", "seed for restarts, bootstrap, sampling and verify",
                  [&c](std::string_view v) {
                    c.seed = parse_integer<std::uint64_t>(v);
                    c.search.seed = c.seed;
                  },
                  [&c] { return std::to_string(c.seed); }});

  keys.push_back(number_key("scan.lambda_min", "first lambda of scan-lambda", c.lambda_min));
  keys.push_back(number_key("scan.lambda_max", "last lambda of scan-lambda", c.lambda_max));
  keys.push_back(number_key("scan.lambda_step", "lambda grid step", c.lambda_step));
  keys.push_back(number_key("scan.eta_min", "first eta of scan-eta", c.eta_min));
  keys.push_back(number_key("scan.eta_max", "last eta of scan-eta", c.eta_max));
  keys.push_back(number_key("scan.eta_step", "eta grid step", c.eta_step));
  keys.push_back({"scan.lambda_cap", "comma-separated caps on both lambdas (inf: none)",
                  [&c](std::string_view v) {
                    std::vector<double> caps;
                    for (auto part : split(v, ',')) {
                      const double cap = parse_number(part);
                      if (!(cap > 0.0)) throw ConfigError("lambda cap must be > 0");
                      caps.push_back(cap);
                    }
                    c.lambda_caps = std::move(caps);
                  },
                  [&c] {
                    std::string out;
                    for (double cap : c.lambda_caps) {
                      if (!out.empty()) out += ',';
                      out += format_double(cap);
                    }
                    return out;
                  }});
  keys.push_back(number_key("optimize.lambda",
                            "optimize at this larger lambda (< 0: free lambdas)",
                            c.optimize_lambda));

  keys.push_back({"estimation.counts", "counts CSV path",
                  [&c](std::string_view v) { c.counts_path = std::string(v); },
                  [&c] { return c.counts_path; }});
  keys.push_back(int_key("estimation.setting", "setting record used by estimate",
                         c.estimate_setting));
  keys.push_back({"estimation.pairs", "detector pairs for estimate, e.g. 1:2,3:4",
                  [&c](std::string_view v) {
                    std::vector<std::pair<int, int>> pairs;
                    for (auto part : split(v, ',')) {
                      const auto ab = split(part, ':');
                      if (ab.size() != 2) throw ConfigError("pair must look like 1:2");
                      pairs.emplace_back(parse_integer<int>(ab[0]), parse_integer<int>(ab[1]));
                    }
                    c.pairs = std::move(pairs);
                  },
                  [&c] {
                    std::string out;
                    for (auto [a, b] : c.pairs) {
                      if (!out.empty()) out += ',';
                      out += std::to_string(a) + ':' + std::to_string(b);
                    }
                    return out;
                  }});
  keys.push_back(int_key("estimation.resamples", "bootstrap resamples (0: none)", c.resamples));

  keys.push_back(int_key("verify.configs", "random configurations compared", c.verify_configs));
  keys.push_back(int_key("verify.cutoff", "photon-number cutoff (0: automatic)", c.cutoff));
  keys.push_back(number_key("verify.lambda_max", "largest random lambda", c.verify_lambda_max));
  keys.push_back(number_key("verify.tolerance", "largest accepted difference", c.tolerance));

  keys.push_back({"simulate.counts_out", "write synthetic counts CSV here",
                  [&c](std::string_view v) { c.counts_out = std::string(v); },
                  [&c] { return c.counts_out; }, false});
  keys.push_back({"simulate.trials", "trials per setting for synthetic counts",
                  [&c](std::string_view v) { c.trials = parse_integer<std::uint64_t>(v); },
                  [&c] { return std::to_string(c.trials); }});
  keys.push_back({"simulate.sample", "draw counts instead of rounding (true/false)",
                  [&c](std::string_view v) {
                    if (v == "true" || v == "1") {
                      c.sample = true;
                    } else if (v == "false" || v == "0") {
                      c.sample = false;
                    } else {
                      throw ConfigError("expected true or false");
                    }
                  },
                  [&c] { return std::string(c.sample ? "true" : "false"); }});

  keys.push_back(int_key("jobs", "worker threads", c.jobs));
  keys.back().in_metadata = false;
  keys.push_back({"format", "csv or json",
                  [&c](std::string_view v) {
                    if (v == "csv") {
                      c.format = Format::kCsv;
                    } else if (v == "json") {
                      c.format = Format::kJson;
                    } else {
                      throw ConfigError("format must be csv or json");
                    }
                  },
                  [&c] { return std::string(c.format == Format::kCsv ? "csv" : "json"); }, false});
  keys.push_back({"out", "output path (default stdout)",
                  [&c](std::string_view v) { c.out = std::string(v); },
                  [&c] { return c.out; }, false});
  return keys;
}

void set_key(RunConfig& config, std::string_view key, std::string_view value,
             const std::string& origin) {
  for (auto& k : config_keys(config)) {
    if (k.name != key) continue;
    try {
      k.set(trim(value));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ": " + std::string(key) + ": " + e.what());
    }
    return;
  }
  throw ConfigError(origin + ": unknown key '" + std::string(key) + "'");
}

void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin) {
  std::set<std::string, std::less<>> seen;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected 'key = value'");
    const auto key = trim(line.substr(0, eq));
    const auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": missing key");
    if (!seen.insert(std::string(key)).second) {
      throw ConfigError(where + ": key '" + std::string(key) + "' given twice");
    }
    set_key(config, key, value, where);
  }
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  apply_config_text(config, buf.str(), path);
}

std::vector<std::pair<std::string, std::string>> resolved(RunConfig& config) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto& k : config_keys(config)) {
    if (k.in_metadata) out.emplace_back(k.name, k.get());
  }
  return out;
}

}  // namespace spdcbell_cli
