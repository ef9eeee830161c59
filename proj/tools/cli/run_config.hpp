#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spdcbell/spdcbell.h"

namespace spdcbell_cli {

// Raised for anything the user can fix in the command line or config file.
// Maps to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Format { kCsv, kJson };

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct RunConfig {
  std::string subcommand;

  spdcbell_config_values system{};
  spdcbell_search_options search{};
  std::uint64_t seed = 0;
  int jobs = 1;
  Format format = Format::kCsv;
  std::string out;

  double lambda_min = 0.01;
  double lambda_max = 1.50;
  double lambda_step = 0.01;
  double eta_min = 0.70;
  double eta_max = 1.00;
  double eta_step = 0.05;
  std::vector<double> lambda_caps{kInf};

  double optimize_lambda = -1.0;  // < 0: optimize both lambdas at fixed eta

  std::string counts_path;
  int estimate_setting = 11;
  std::vector<std::pair<int, int>> pairs{{1, 2}, {3, 4}};
  int resamples = 1000;

  int verify_configs = 50;
  int cutoff = 25;
  double verify_lambda_max = 0.3;
  double tolerance = 1e-6;

  std::string counts_out;
  std::uint64_t trials = 1000000;
  bool sample = false;

  RunConfig();
};

// Numbers with an optional multiple or fraction of pi: "0.3", "-3pi/5",
// "3*pi/5", "pi", "-pi/2", "0.5*pi". Also "inf".
double parse_number(std::string_view text);

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(std::string_view)> set;
  std::function<std::string()> get;
  bool in_metadata = true;
};

// Every settable key bound to `config`, in a fixed order.
std::vector<ConfigKey> config_keys(RunConfig& config);

// `key = value` lines; '#' starts a comment. Unknown keys, malformed values
// and repeated keys are reported with the line number.
void apply_config_text(RunConfig& config, std::string_view text, const std::string& origin);
void apply_config_file(RunConfig& config, const std::string& path);

// Sets one key; `origin` prefixes error messages ("--a1", "file.cfg:3").
void set_key(RunConfig& config, std::string_view key, std::string_view value,
             const std::string& origin);

// key=value pairs describing every metadata key.
std::vector<std::pair<std::string, std::string>> resolved(RunConfig& config);

std::string format_double(double v);

}  // namespace spdcbell_cli
