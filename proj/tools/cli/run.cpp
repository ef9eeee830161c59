#include "run.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "run_config.hpp"
#include "spdcbell/spdcbell.h"
#include "table.hpp"

namespace spdcbell_cli {

namespace {

class ApiError : public std::runtime_error {
 public:
  ApiError(spdcbell_status status, const std::string& message)
      : std::runtime_error(message), status_(status) {}
  spdcbell_status status() const { return status_; }

 private:
  spdcbell_status status_;
};

void check(spdcbell_status status, const std::string& context) {
  if (status != SPDCBELL_OK) {
    throw ApiError(status, context + ": " + spdcbell_last_error());
  }
}

struct ConfigDeleter {
  void operator()(spdcbell_config* c) const { spdcbell_config_destroy(c); }
};
struct ScanDeleter {
  void operator()(spdcbell_scan* s) const { spdcbell_scan_destroy(s); }
};
struct CountsDeleter {
  void operator()(spdcbell_counts* c) const { spdcbell_counts_destroy(c); }
};
using ConfigHandle = std::unique_ptr<spdcbell_config, ConfigDeleter>;
using ScanHandle = std::unique_ptr<spdcbell_scan, ScanDeleter>;
using CountsHandle = std::unique_ptr<spdcbell_counts, CountsDeleter>;

ConfigHandle make_config(const spdcbell_config_values& values) {
  spdcbell_config* raw = nullptr;
  check(spdcbell_config_create(&raw), "config");
  ConfigHandle handle(raw);
  check(spdcbell_config_set(handle.get(), &values), "config");
  return handle;
}

CountsHandle load_counts(const std::string& path) {
  if (path.empty()) throw ConfigError("no counts file given (--counts or estimation.counts)");
  spdcbell_counts* raw = nullptr;
  check(spdcbell_counts_load_csv(path.c_str(), &raw), "estimation");
  return CountsHandle(raw);
}

double common_efficiency(const RunConfig& c, const std::string& command) {
  const double eta = c.system.efficiency[0];
  for (double e : c.system.efficiency) {
    if (e != eta) {
      throw ConfigError(command + " needs one common efficiency (set detectors.eta or --eta)");
    }
  }
  return eta;
}

std::vector<double> grid(double min, double max, double step, const std::string& what) {
  std::size_t n = 0;
  check(spdcbell_make_grid(min, max, step, nullptr, 0, &n), what + " grid");
  std::vector<double> values(n);
  check(spdcbell_make_grid(min, max, step, values.data(), values.size(), &n), what + " grid");
  return values;
}

const std::vector<std::string> kOptimumColumns = {
    "S", "lambda1", "lambda2", "theta_a1", "theta_a2", "theta_b1", "theta_b2", "converged"};

void append_optimum(std::vector<Cell>& row, const spdcbell_optimum& o) {
  row.insert(row.end(), {o.s, o.lambda1, o.lambda2, o.alice_angles[0], o.alice_angles[1],
                         o.bob_angles[0], o.bob_angles[1], std::int64_t{o.converged}});
}

void append_blank_optimum(std::vector<Cell>& row) {
  row.insert(row.end(), kOptimumColumns.size(), std::monostate{});
}

std::vector<std::string> pattern_columns(const std::string& prefix) {
  std::vector<std::string> cols;
  for (int k = 0; k < SPDCBELL_PATTERNS; ++k) cols.push_back(prefix + std::to_string(k));
  return cols;
}

constexpr int kSettings[4] = {11, 12, 21, 22};

struct Outcome {
  Table table;
  int status = 0;
  std::string failure;  // reported on stderr when status != 0
  std::string note;     // short stdout line when the table goes to a file
};

Outcome cmd_simulate(RunConfig& c) {
  auto config = make_config(c.system);
  spdcbell_chsh_report report{};
  check(spdcbell_chsh(config.get(), nullptr, &report), "simulate");

  Outcome o;
  auto& t = o.table;
  t.columns = {"setting", "theta_a", "theta_b", "correlator"};
  for (auto& col : pattern_columns("p")) t.columns.push_back(col);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      std::vector<Cell> row{std::int64_t{kSettings[i * 2 + j]}, c.system.alice_angles[i],
                            c.system.bob_angles[j], report.correlator[i][j]};
      for (int k = 0; k < SPDCBELL_PATTERNS; ++k) row.emplace_back(report.distributions[i][j][k]);
      t.rows.push_back(std::move(row));
    }
  }
  t.summary.emplace_back("S", report.s);
  o.note = "S=" + format_double(report.s);

  if (!c.counts_out.empty()) {
    spdcbell_counts* raw = nullptr;
    check(spdcbell_synthesize_counts(config.get(), c.trials, c.sample ? 1 : 0, c.seed, &raw),
          "simulate");
    CountsHandle counts(raw);
    char* text = nullptr;
    check(spdcbell_counts_to_csv(counts.get(), &text), "simulate");
    std::unique_ptr<char, decltype(&spdcbell_free)> owned(text, &spdcbell_free);
    std::ofstream f(c.counts_out, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write counts file '" + c.counts_out + "'");
    f << "# spdcbell simulate counts";
    for (const auto& [k, v] : resolved(c)) f << ' ' << k << '=' << v;
    f << '\n' << text;
    if (!f) throw ConfigError("cannot write counts file '" + c.counts_out + "'");
  }
  return o;
}

Outcome scan_table(spdcbell_scan* scan, bool eta_scan) {
  Outcome o;
  auto& t = o.table;
  t.columns = eta_scan ? std::vector<std::string>{"eta", "lambda_cap"}
                       : std::vector<std::string>{"lambda"};
  t.columns.insert(t.columns.end(), kOptimumColumns.begin(), kOptimumColumns.end());
  if (eta_scan) t.columns.push_back("ratio");
  t.columns.push_back("error");
  int failed = 0;
  for (std::size_t i = 0; i < spdcbell_scan_size(scan); ++i) {
    spdcbell_scan_row r{};
    check(spdcbell_scan_row_get(scan, i, &r), "scan");
    std::vector<Cell> row;
    if (eta_scan) {
      row.insert(row.end(), {r.eta, r.lambda_cap});
    } else {
      row.emplace_back(r.lambda);
    }
    if (r.ok) {
      append_optimum(row, r.result);
      if (eta_scan) {
        row.emplace_back(r.result.lambda2 > 0.0 ? r.result.lambda1 / r.result.lambda2 : kInf);
      }
      row.emplace_back(std::string());
    } else {
      ++failed;
      append_blank_optimum(row);
      if (eta_scan) row.emplace_back(std::monostate{});
      row.emplace_back(std::string(spdcbell_scan_row_error(scan, i)));
    }
    t.rows.push_back(std::move(row));
  }
  if (failed > 0) {
    o.status = 1;
    o.failure = std::to_string(failed) + " scan row(s) failed; see the error column";
  }
  return o;
}

Outcome cmd_scan_lambda(RunConfig& c) {
  const double eta = common_efficiency(c, "scan-lambda");
  const auto lambdas = grid(c.lambda_min, c.lambda_max, c.lambda_step, "lambda");
  spdcbell_scan* raw = nullptr;
  check(spdcbell_scan_lambda(lambdas.data(), lambdas.size(), eta, c.system.dark_count, &c.search,
                             c.jobs, &raw),
        "scan-lambda");
  ScanHandle scan(raw);
  Outcome o = scan_table(scan.get(), false);
  // Grid point with the largest S.
  const std::vector<Cell>* best = nullptr;
  for (const auto& row : o.table.rows) {
    if (!std::holds_alternative<double>(row[1])) continue;
    if (best == nullptr || std::get<double>(row[1]) > std::get<double>((*best)[1])) best = &row;
  }
  if (best != nullptr) {
    o.table.summary.emplace_back("best_lambda", (*best)[0]);
    o.table.summary.emplace_back("best_S", (*best)[1]);
    o.note = "best_lambda=" + format_cell((*best)[0]) + " best_S=" + format_cell((*best)[1]);
  }
  return o;
}

Outcome cmd_scan_eta(RunConfig& c) {
  const auto etas = grid(c.eta_min, c.eta_max, c.eta_step, "eta");
  Outcome all;
  for (double cap : c.lambda_caps) {
    spdcbell_scan* raw = nullptr;
    check(spdcbell_scan_eta(etas.data(), etas.size(), cap, c.system.dark_count, &c.search,
                            c.jobs, &raw),
          "scan-eta");
    ScanHandle scan(raw);
    Outcome part = scan_table(scan.get(), true);
    if (all.table.columns.empty()) all.table.columns = part.table.columns;
    for (auto& row : part.table.rows) all.table.rows.push_back(std::move(row));
    if (part.status != 0) {
      all.status = part.status;
      all.failure = part.failure;
    }
  }
  all.note = std::to_string(all.table.rows.size()) + " rows";
  return all;
}

Outcome cmd_optimize(RunConfig& c) {
  const double eta = common_efficiency(c, "optimize");
  spdcbell_optimum opt{};
  Outcome o;
  auto& t = o.table;
  t.columns = {"mode", "lambda", "eta", "lambda_cap"};
  t.columns.insert(t.columns.end(), kOptimumColumns.begin(), kOptimumColumns.end());
  t.columns.insert(t.columns.end(), {"iterations", "evaluations", "best_restart"});
  std::vector<Cell> row;
  if (c.optimize_lambda >= 0.0) {
    check(spdcbell_maximize_at_lambda(c.optimize_lambda, eta, c.system.dark_count, &c.search,
                                      &opt),
          "optimize");
    row = {std::string("fixed-lambda"), c.optimize_lambda, eta, std::monostate{}};
  } else {
    const double cap = c.lambda_caps.front();
    check(spdcbell_maximize_at_eta(eta, cap, c.system.dark_count, &c.search, &opt), "optimize");
    row = {std::string("free-lambdas"), std::monostate{}, eta, cap};
  }
  append_optimum(row, opt);
  row.insert(row.end(), {std::int64_t{opt.iterations}, std::int64_t{opt.evaluations},
                         std::int64_t{opt.best_restart}});
  t.rows.push_back(std::move(row));
  o.note = "S=" + format_double(opt.s);
  return o;
}

Outcome cmd_estimate(RunConfig& c) {
  auto counts = load_counts(c.counts_path);
  Outcome o;
  auto& t = o.table;
  t.columns = {"setting",  "detector", "partner",          "coincidences", "singles",
               "partner_singles", "total", "eta", "singles_fraction", "lambda"};
  for (auto [a, b] : c.pairs) {
    spdcbell_pair_counts pc{};
    check(spdcbell_counts_pair(counts.get(), c.estimate_setting, a, b, &pc), "estimate");
    double eta_a = 0.0;
    double eta_b = 0.0;
    check(spdcbell_klyshko(static_cast<double>(pc.coincidences),
                           static_cast<double>(pc.singles_first),
                           static_cast<double>(pc.singles_second), &eta_a, &eta_b),
          "estimate (detectors " + std::to_string(a) + "," + std::to_string(b) + ")");
    const auto n = static_cast<double>(pc.total);
    const struct {
      int det, partner;
      std::uint64_t singles, partner_singles;
      double eta;
    } sides[2] = {{a, b, pc.singles_first, pc.singles_second, eta_a},
                  {b, a, pc.singles_second, pc.singles_first, eta_b}};
    for (const auto& s : sides) {
      const double f = static_cast<double>(s.singles) / n;
      double lambda = 0.0;
      check(spdcbell_lambda_from_singles(f, s.eta, &lambda),
            "estimate (detector " + std::to_string(s.det) + ")");
      t.rows.push_back({std::int64_t{c.estimate_setting}, std::int64_t{s.det},
                        std::int64_t{s.partner}, static_cast<std::int64_t>(pc.coincidences),
                        static_cast<std::int64_t>(s.singles),
                        static_cast<std::int64_t>(s.partner_singles),
                        static_cast<std::int64_t>(pc.total), s.eta, f, lambda});
    }
  }
  o.note = std::to_string(t.rows.size()) + " detectors estimated";
  return o;
}

Outcome cmd_compensate(RunConfig& c) {
  auto counts = load_counts(c.counts_path);
  const double* eta = c.system.efficiency;
  spdcbell_compensated_report comp{};
  check(spdcbell_compensated_chsh(counts.get(), eta, nullptr, &comp), "compensate");
  spdcbell_chsh_report raw{};
  check(spdcbell_empirical_chsh(counts.get(), nullptr, &raw), "compensate");

  Outcome o;
  auto& t = o.table;
  t.columns = {"setting", "correlator_raw", "correlator_compensated", "residual",
               "kkt_residual", "active", "ill_conditioned", "condition_estimate"};
  for (auto& col : pattern_columns("q")) t.columns.push_back(col);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const auto& r = comp.per_setting[i][j];
      std::int64_t active = 0;
      for (int k = 0; k < SPDCBELL_PATTERNS; ++k) active += r.active[k];
      std::vector<Cell> row{std::int64_t{kSettings[i * 2 + j]}, raw.correlator[i][j],
                            comp.report.correlator[i][j], r.residual, r.kkt_residual, active,
                            std::int64_t{r.ill_conditioned}, r.condition_estimate};
      for (int k = 0; k < SPDCBELL_PATTERNS; ++k) row.emplace_back(r.q[k]);
      t.rows.push_back(std::move(row));
    }
  }
  t.summary.emplace_back("S_raw", raw.s);
  t.summary.emplace_back("S_compensated", comp.report.s);
  t.summary.emplace_back("outside_validity", std::int64_t{comp.outside_validity});
  o.note = "S_raw=" + format_double(raw.s) + " S_compensated=" + format_double(comp.report.s);
  if (c.resamples > 0) {
    double mean = 0.0;
    double se = 0.0;
    check(spdcbell_bootstrap_compensated_chsh(counts.get(), eta, c.resamples, c.seed, nullptr,
                                              c.jobs, &mean, &se),
          "compensate (bootstrap)");
    t.summary.emplace_back("S_compensated_bootstrap_mean", mean);
    t.summary.emplace_back("S_compensated_bootstrap_se", se);
    t.summary.emplace_back("bootstrap_resamples", std::int64_t{c.resamples});
    o.note += " bootstrap_se=" + format_double(se);
  }
  return o;
}

Outcome cmd_verify(RunConfig& c) {
  if (c.verify_configs < 0) throw ConfigError("verify.configs must be >= 0");
  if (!(c.verify_lambda_max >= 0.0)) throw ConfigError("verify.lambda_max must be >= 0");
  Outcome o;
  auto& t = o.table;
  t.columns = {"config", "lambda1", "lambda2", "theta_a1", "theta_a2", "theta_b1", "theta_b2",
               "eta1", "eta2", "eta3", "eta4", "nu", "cutoff", "tail_deficit",
               "max_abs_diff", "pass"};
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double kDarkCounts[3] = {0.0, 1e-4, 1e-3};
  double worst = 0.0;
  int failures = 0;
  for (int n = 0; n <= c.verify_configs; ++n) {
    spdcbell_config_values v = c.system;
    if (n > 0) {
      v.lambda1 = c.verify_lambda_max * unit(rng);
      v.lambda2 = c.verify_lambda_max * unit(rng);
      for (double* a : {&v.alice_angles[0], &v.alice_angles[1], &v.bob_angles[0],
                        &v.bob_angles[1]}) {
        *a = std::numbers::pi * (2.0 * unit(rng) - 1.0);
      }
      for (double& e : v.efficiency) e = 0.3 + 0.7 * unit(rng);
      v.dark_count = kDarkCounts[static_cast<int>(3.0 * unit(rng)) % 3];
    }
    auto config = make_config(v);
    double diff = 0.0;
    double deficit = 0.0;
    int used = 0;
    // Row 0 is the configured system, compared at its automatic cutoff.
    const int cutoff = n == 0 ? 0 : c.cutoff;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        double g[SPDCBELL_PATTERNS];
        double f[SPDCBELL_PATTERNS];
        check(spdcbell_click_distribution(config.get(), i, j, g), "verify");
        check(spdcbell_oracle_click_distribution(config.get(), i, j, cutoff, f, &deficit, &used),
              "verify");
        for (int k = 0; k < SPDCBELL_PATTERNS; ++k) diff = std::max(diff, std::abs(g[k] - f[k]));
      }
    }
    const bool pass = diff <= c.tolerance;
    if (!pass) ++failures;
    worst = std::max(worst, diff);
    t.rows.push_back({n == 0 ? Cell(std::string("configured")) : Cell(std::int64_t{n}), v.lambda1,
                      v.lambda2, v.alice_angles[0], v.alice_angles[1], v.bob_angles[0],
                      v.bob_angles[1], v.efficiency[0], v.efficiency[1], v.efficiency[2],
                      v.efficiency[3], v.dark_count, std::int64_t{used}, deficit, diff,
                      std::int64_t{pass ? 1 : 0}});
  }
  t.summary.emplace_back("max_abs_diff", worst);
  t.summary.emplace_back("failures", std::int64_t{failures});
  o.note = "max_abs_diff=" + format_double(worst) + " failures=" + std::to_string(failures);
  if (failures > 0) {
    o.status = 1;
    o.failure = std::to_string(failures) + " configuration(s) differ by more than " +
                format_double(c.tolerance);
  }
  return o;
}

struct FlagBinding {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Simulate, optimize and analyze CHSH tests with SPDC photon-pair sources",
               "spdcbell"};
  app.set_version_flag("--version", std::string(spdcbell_version()));
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "config file with 'key = value' lines");
  std::deque<FlagBinding> bindings;
  auto bind = [&bindings](CLI::App* target, const std::string& flag, const std::string& key,
                          const std::string& help) {
    auto& b = bindings.emplace_back();
    b.key = key;
    b.option = target->add_option(flag, b.value, help + " [" + key + "]");
  };
  bool sample = false;

  bind(&app, "--seed", "seed", "random seed");
  bind(&app, "--jobs", "jobs", "worker threads");
  bind(&app, "--format", "format", "csv or json");
  bind(&app, "--out", "out", "output file (default stdout)");
  bind(&app, "--lambda1", "source.lambda1", "mean photon number of source 1");
  bind(&app, "--lambda2", "source.lambda2", "mean photon number of source 2");
  bind(&app, "--lambda", "source.lambda", "both mean photon numbers");
  bind(&app, "--a1", "angles.a1", "Alice angle 1 (radians; '3pi/5' accepted)");
  bind(&app, "--a2", "angles.a2", "Alice angle 2");
  bind(&app, "--b1", "angles.b1", "Bob angle 1");
  bind(&app, "--b2", "angles.b2", "Bob angle 2");
  bind(&app, "--eta", "detectors.eta", "efficiency of all detectors");
  for (int l = 1; l <= 4; ++l) {
    bind(&app, "--eta" + std::to_string(l), "detectors.eta" + std::to_string(l),
         "efficiency of D" + std::to_string(l));
  }
  bind(&app, "--nu", "detectors.nu", "dark-count probability");
  bind(&app, "--restarts", "optimizer.restarts", "optimizer restarts");

  auto* simulate = app.add_subcommand("simulate", "CHSH value and click distributions");
  bind(simulate, "--counts-out", "simulate.counts_out", "also write synthetic counts CSV");
  bind(simulate, "--trials", "simulate.trials", "trials per setting for --counts-out");
  simulate->add_flag("--sample", sample, "draw counts multinomially instead of rounding");

  auto* scan_l = app.add_subcommand("scan-lambda", "optimal S over a grid of the larger lambda");
  bind(scan_l, "--lambda-min", "scan.lambda_min", "first grid value");
  bind(scan_l, "--lambda-max", "scan.lambda_max", "last grid value");
  bind(scan_l, "--lambda-step", "scan.lambda_step", "grid step");

  auto* scan_e = app.add_subcommand("scan-eta", "optimal S over a grid of detector efficiency");
  bind(scan_e, "--eta-min", "scan.eta_min", "first grid value");
  bind(scan_e, "--eta-max", "scan.eta_max", "last grid value");
  bind(scan_e, "--eta-step", "scan.eta_step", "grid step");
  bind(scan_e, "--lambda-cap", "scan.lambda_cap", "caps on both lambdas, e.g. 0.01,0.1,inf");

  auto* optimize = app.add_subcommand("optimize", "single optimization");
  bind(optimize, "--at-lambda", "optimize.lambda", "fix the larger lambda");
  bind(optimize, "--lambda-cap", "scan.lambda_cap", "cap on both lambdas when free");

  auto* estimate = app.add_subcommand("estimate", "efficiencies and lambdas from counts");
  bind(estimate, "--counts", "estimation.counts", "counts CSV");
  bind(estimate, "--setting", "estimation.setting", "setting record to use");
  bind(estimate, "--pairs", "estimation.pairs", "detector pairs, e.g. 1:2,3:4");

  auto* compensate = app.add_subcommand("compensate", "loss-compensated CHSH from counts");
  bind(compensate, "--counts", "estimation.counts", "counts CSV");
  bind(compensate, "--resamples", "estimation.resamples", "bootstrap resamples (0: none)");

  auto* verify = app.add_subcommand("verify", "covariance vs photon-number cross-check");
  bind(verify, "--configs", "verify.configs", "random configurations");
  bind(verify, "--cutoff", "verify.cutoff", "photon-number cutoff");
  bind(verify, "--lambda-max", "verify.lambda_max", "largest random lambda");
  bind(verify, "--tolerance", "verify.tolerance", "largest accepted difference");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  RunConfig config;
  std::string command;
  try {
    if (!config_path.empty()) apply_config_file(config, config_path);
    for (const auto& b : bindings) {
      if (b.option->count() > 0) set_key(config, b.key, b.value, b.option->get_name());
    }
    if (sample) set_key(config, "simulate.sample", "true", "--sample");
    if (config.jobs < 1) throw ConfigError("jobs must be >= 1");
    command = app.get_subcommands().front()->get_name();
    config.subcommand = command;
    if (!config.out.empty()) {
      std::ofstream probe(config.out, std::ios::app);
      if (!probe) throw ConfigError("cannot write output file '" + config.out + "'");
    }

    Outcome o;
    if (command == "simulate") {
      o = cmd_simulate(config);
    } else if (command == "scan-lambda") {
      o = cmd_scan_lambda(config);
    } else if (command == "scan-eta") {
      o = cmd_scan_eta(config);
    } else if (command == "optimize") {
      o = cmd_optimize(config);
    } else if (command == "estimate") {
      o = cmd_estimate(config);
    } else if (command == "compensate") {
      o = cmd_compensate(config);
    } else {
      o = cmd_verify(config);
    }
    o.table.command = command;
    o.table.metadata = resolved(config);

    if (config.out.empty()) {
      write_table(o.table, config.format, out);
    } else {
      std::ofstream f(config.out, std::ios::binary | std::ios::trunc);
      write_table(o.table, config.format, f);
      if (!f) throw ConfigError("cannot write output file '" + config.out + "'");
      out << o.note << '\n';
    }
    if (o.status != 0) err << "spdcbell " << command << ": " << o.failure << '\n';
    return o.status;
  } catch (const ConfigError& e) {
    err << "spdcbell: configuration error: " << e.what() << '\n';
    return 2;
  } catch (const ApiError& e) {
    const bool user_error =
        e.status() == SPDCBELL_ERR_INVALID_ARGUMENT || e.status() == SPDCBELL_ERR_IO;
    err << "spdcbell " << command << ": " << (user_error ? "configuration error: " : "error: ")
        << e.what() << '\n';
    return user_error ? 2 : 1;
  } catch (const std::exception& e) {
    err << "spdcbell " << command << ": error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace spdcbell_cli
