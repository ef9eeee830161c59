#include "spdcbell/spdcbell.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <algorithm>
#include <map>
#include <memory>
#include <new>
#include <sstream>
#include <string>
#include <vector>

#include "spdcbell/bell.hpp"
#include "spdcbell/counts_csv.hpp"
#include "spdcbell/error.hpp"
#include "spdcbell/estimation.hpp"
#include "spdcbell/fock_oracle.hpp"
#include "spdcbell/optimizer.hpp"

struct spdcbell_config {
  spdcbell::SystemConfig value;
};

struct spdcbell_scan {
  std::vector<spdcbell::ScanRow> rows;
};

struct spdcbell_counts {
  std::map<int, spdcbell::CountRecord> records;
};

namespace {

using namespace spdcbell;

thread_local std::string g_last_error;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
spdcbell_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return SPDCBELL_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    switch (e.code()) {
      case ErrorCode::kInvalidArgument: return SPDCBELL_ERR_INVALID_ARGUMENT;
      case ErrorCode::kInvalidState: return SPDCBELL_ERR_INVALID_STATE;
      case ErrorCode::kNumericalFailure: return SPDCBELL_ERR_NUMERICAL;
    }
    return SPDCBELL_ERR_INTERNAL;
  } catch (const IoError& e) {
    g_last_error = e.what();
    return SPDCBELL_ERR_IO;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return SPDCBELL_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SPDCBELL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SPDCBELL_ERR_INTERNAL;
  }
}

template <typename T>
void require(const T* p, const char* name) {
  if (p == nullptr) throw_invalid_argument(std::string(name) + " must not be NULL");
}

void require_setting_index(int i, const char* name) {
  if (i != 0 && i != 1) throw_invalid_argument(std::string(name) + " must be 0 or 1");
}

OutcomeAssignment to_assignment(const spdcbell_assignment* a) {
  if (a == nullptr) return OutcomeAssignment::standard();
  OutcomeAssignment out;
  for (std::size_t k = 0; k < 4; ++k) {
    out.alice[k] = a->alice[k];
    out.bob[k] = a->bob[k];
  }
  out.validate();
  return out;
}

void copy_report(const ChshReport& r, spdcbell_chsh_report* out) {
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      out->correlator[i][j] = r.correlator[i][j];
      for (int k = 0; k < kPatterns; ++k) out->distributions[i][j][k] = r.distributions[i][j][k];
    }
  }
  out->s = r.s;
}

SearchOptions to_options(const spdcbell_search_options* o) {
  SearchOptions out;
  if (o == nullptr) return out;
  if (o->restarts < 1) throw_invalid_argument("search options: restarts must be >= 1");
  if (!(o->initial_step > 0.0)) throw_invalid_argument("search options: initial_step must be > 0");
  if (!(o->x_tolerance > 0.0) || !(o->f_tolerance > 0.0)) {
    throw_invalid_argument("search options: tolerances must be > 0");
  }
  if (o->max_iterations < 1) throw_invalid_argument("search options: max_iterations must be >= 1");
  if (!(o->lambda_ceiling > 0.0)) throw_invalid_argument("search options: lambda_ceiling must be > 0");
  out.restarts = o->restarts;
  out.seed = o->seed;
  out.local.initial_step.assign(1, o->initial_step);
  out.local.x_tolerance = o->x_tolerance;
  out.local.f_tolerance = o->f_tolerance;
  out.local.max_iterations = o->max_iterations;
  out.lambda_ceiling = o->lambda_ceiling;
  return out;
}

double to_cap(double cap) {
  if (std::isnan(cap)) throw_invalid_argument("lambda cap must not be NaN");
  return (cap < 0.0 || std::isinf(cap)) ? kNoCap : cap;
}

void copy_optimum(const OptimizationResult& r, spdcbell_optimum* out) {
  out->s = r.s;
  out->lambda1 = r.best.lambda1;
  out->lambda2 = r.best.lambda2;
  out->alice_angles[0] = r.best.alice_angles[0];
  out->alice_angles[1] = r.best.alice_angles[1];
  out->bob_angles[0] = r.best.bob_angles[0];
  out->bob_angles[1] = r.best.bob_angles[1];
  out->iterations = r.iterations;
  out->evaluations = r.evaluations;
  out->converged = r.converged ? 1 : 0;
  out->best_restart = r.best_restart;
}

void copy_compensation(const CompensationResult& r, spdcbell_compensation* out) {
  for (int k = 0; k < kPatterns; ++k) {
    out->q[k] = r.q_ideal[k];
    out->active[k] = r.active[static_cast<std::size_t>(k)] ? 1 : 0;
  }
  out->residual = r.residual;
  out->kkt_residual = r.kkt_residual;
  out->iterations = r.iterations;
  out->ill_conditioned = r.ill_conditioned ? 1 : 0;
  out->condition_estimate = r.condition_estimate;
}

std::vector<CountRecord> all_records(const spdcbell_counts* counts) {
  std::vector<CountRecord> out;
  for (const auto& [s, r] : counts->records) out.push_back(r);
  return out;
}

const CountRecord& record_of(const spdcbell_counts* counts, int setting) {
  const auto it = counts->records.find(setting);
  if (it == counts->records.end()) {
    throw_invalid_argument("no count record for setting " + std::to_string(setting));
  }
  return it->second;
}

}  // namespace

extern "C" {

const char* spdcbell_version(void) { return "0.1.0"; }

const char* spdcbell_last_error(void) { return g_last_error.c_str(); }

const char* spdcbell_status_name(spdcbell_status status) {
  switch (status) {
    case SPDCBELL_OK: return "ok";
    case SPDCBELL_ERR_INVALID_ARGUMENT: return "invalid argument";
    case SPDCBELL_ERR_INVALID_STATE: return "invalid state";
    case SPDCBELL_ERR_NUMERICAL: return "numerical failure";
    case SPDCBELL_ERR_IO: return "i/o error";
    case SPDCBELL_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

spdcbell_status spdcbell_config_create(spdcbell_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new spdcbell_config{};
  });
}

void spdcbell_config_destroy(spdcbell_config* config) { delete config; }

spdcbell_status spdcbell_config_set(spdcbell_config* config,
                                    const spdcbell_config_values* v) {
  return guarded([&] {
    require(config, "config");
    require(v, "values");
    SystemConfig c;
    c.lambda1 = v->lambda1;
    c.lambda2 = v->lambda2;
    c.alice_angles = {v->alice_angles[0], v->alice_angles[1]};
    c.bob_angles = {v->bob_angles[0], v->bob_angles[1]};
    for (std::size_t l = 0; l < 4; ++l) c.efficiency[l] = v->efficiency[l];
    c.dark_count = v->dark_count;
    c.validate();
    config->value = c;
  });
}

spdcbell_status spdcbell_config_get(const spdcbell_config* config,
                                    spdcbell_config_values* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const auto& c = config->value;
    out->lambda1 = c.lambda1;
    out->lambda2 = c.lambda2;
    out->alice_angles[0] = c.alice_angles[0];
    out->alice_angles[1] = c.alice_angles[1];
    out->bob_angles[0] = c.bob_angles[0];
    out->bob_angles[1] = c.bob_angles[1];
    for (std::size_t l = 0; l < 4; ++l) out->efficiency[l] = c.efficiency[l];
    out->dark_count = c.dark_count;
  });
}

void spdcbell_assignment_standard(spdcbell_assignment* out) {
  if (out == nullptr) return;
  const auto a = OutcomeAssignment::standard();
  for (std::size_t k = 0; k < 4; ++k) {
    out->alice[k] = a.alice[k];
    out->bob[k] = a.bob[k];
  }
}

spdcbell_status spdcbell_chsh(const spdcbell_config* config,
                              const spdcbell_assignment* assignment,
                              spdcbell_chsh_report* out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    const auto report = chsh_value(config->value, to_assignment(assignment));
    copy_report(report, out);
  });
}

spdcbell_status spdcbell_click_distribution(const spdcbell_config* config, int alice_setting,
                                            int bob_setting, double out[SPDCBELL_PATTERNS]) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    require_setting_index(alice_setting, "alice_setting");
    require_setting_index(bob_setting, "bob_setting");
    const auto d = setting_distribution(config->value, alice_setting, bob_setting);
    for (int k = 0; k < kPatterns; ++k) out[k] = d[k];
  });
}

spdcbell_status spdcbell_oracle_click_distribution(const spdcbell_config* config,
                                                   int alice_setting, int bob_setting,
                                                   int cutoff, double out[SPDCBELL_PATTERNS],
                                                   double* tail_deficit, int* cutoff_used) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    require_setting_index(alice_setting, "alice_setting");
    require_setting_index(bob_setting, "bob_setting");
    const int c = cutoff > 0 ? cutoff
                             : fock::default_cutoff(std::max(config->value.lambda1,
                                                             config->value.lambda2));
    const auto r = fock::oracle_click_distribution(config->value, alice_setting, bob_setting, c);
    for (int k = 0; k < kPatterns; ++k) out[k] = r.p[k];
    if (tail_deficit != nullptr) *tail_deficit = r.tail_deficit;
    if (cutoff_used != nullptr) *cutoff_used = c;
  });
}

void spdcbell_search_options_default(spdcbell_search_options* out) {
  if (out == nullptr) return;
  const SearchOptions d;
  out->restarts = d.restarts;
  out->seed = d.seed;
  out->initial_step = 0.25;
  out->x_tolerance = d.local.x_tolerance;
  out->f_tolerance = d.local.f_tolerance;
  out->max_iterations = d.local.max_iterations;
  out->lambda_ceiling = d.lambda_ceiling;
}

spdcbell_status spdcbell_maximize_at_lambda(double lambda, double eta, double nu,
                                            const spdcbell_search_options* options,
                                            spdcbell_optimum* out) {
  return guarded([&] {
    require(out, "out");
    copy_optimum(maximize_s_at_lambda(lambda, eta, nu, to_options(options)), out);
  });
}

spdcbell_status spdcbell_maximize_at_eta(double eta, double lambda_cap, double nu,
                                         const spdcbell_search_options* options,
                                         spdcbell_optimum* out) {
  return guarded([&] {
    require(out, "out");
    copy_optimum(maximize_s_at_eta(eta, to_cap(lambda_cap), nu, to_options(options)), out);
  });
}

spdcbell_status spdcbell_scan_lambda(const double* lambdas, size_t count, double eta, double nu,
                                     const spdcbell_search_options* options, int jobs,
                                     spdcbell_scan** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(lambdas, "lambdas");
    if (jobs < 1) throw_invalid_argument("jobs must be >= 1");
    auto scan = std::make_unique<spdcbell_scan>();
    scan->rows = scan_lambda(std::span<const double>(lambdas, count), eta, nu,
                             to_options(options), jobs);
    *out = scan.release();
  });
}

spdcbell_status spdcbell_scan_eta(const double* etas, size_t count, double lambda_cap, double nu,
                                  const spdcbell_search_options* options, int jobs,
                                  spdcbell_scan** out) {
  return guarded([&] {
    require(out, "out");
    if (count > 0) require(etas, "etas");
    if (jobs < 1) throw_invalid_argument("jobs must be >= 1");
    auto scan = std::make_unique<spdcbell_scan>();
    scan->rows = scan_eta(std::span<const double>(etas, count), to_cap(lambda_cap), nu,
                          to_options(options), jobs);
    *out = scan.release();
  });
}

size_t spdcbell_scan_size(const spdcbell_scan* scan) {
  return scan == nullptr ? 0 : scan->rows.size();
}

spdcbell_status spdcbell_scan_row_get(const spdcbell_scan* scan, size_t index,
                                      spdcbell_scan_row* out) {
  return guarded([&] {
    require(scan, "scan");
    require(out, "out");
    if (index >= scan->rows.size()) throw_invalid_argument("scan row index out of range");
    const auto& row = scan->rows[index];
    spdcbell_scan_row r{};
    r.lambda = row.lambda;
    r.eta = row.eta;
    r.lambda_cap = row.lambda_cap;
    r.ok = row.result.has_value() ? 1 : 0;
    if (row.result) copy_optimum(*row.result, &r.result);
    *out = r;
  });
}

const char* spdcbell_scan_row_error(const spdcbell_scan* scan, size_t index) {
  if (scan == nullptr || index >= scan->rows.size()) return "";
  return scan->rows[index].error.c_str();
}

void spdcbell_scan_destroy(spdcbell_scan* scan) { delete scan; }

spdcbell_status spdcbell_make_grid(double min, double max, double step, double* values,
                                   size_t capacity, size_t* count) {
  return guarded([&] {
    require(count, "count");
    if (capacity > 0) require(values, "values");
    const auto grid = make_grid(min, max, step);
    for (size_t i = 0; i < grid.size() && i < capacity; ++i) values[i] = grid[i];
    *count = grid.size();
  });
}

spdcbell_status spdcbell_klyshko(double coincidences, double singles_first, double singles_second,
                                 double* eta_first, double* eta_second) {
  return guarded([&] {
    require(eta_first, "eta_first");
    require(eta_second, "eta_second");
    const auto k = klyshko_efficiency(coincidences, singles_first, singles_second);
    *eta_first = k.eta_first;
    *eta_second = k.eta_second;
  });
}

spdcbell_status spdcbell_lambda_from_singles(double singles_fraction, double eta,
                                             double* lambda) {
  return guarded([&] {
    require(lambda, "lambda");
    *lambda = lambda_from_singles(singles_fraction, eta);
  });
}

spdcbell_status spdcbell_transmission_matrix(const double efficiency[SPDCBELL_DETECTORS],
                                             double out[SPDCBELL_PATTERNS * SPDCBELL_PATTERNS]) {
  return guarded([&] {
    require(efficiency, "efficiency");
    require(out, "out");
    const auto t = build_transmission_matrix(std::span<const double>(efficiency, 4));
    for (int i = 0; i < kPatterns; ++i) {
      for (int j = 0; j < kPatterns; ++j) out[i * kPatterns + j] = t(i, j);
    }
  });
}

spdcbell_status spdcbell_compensate(const double p[SPDCBELL_PATTERNS],
                                    const double efficiency[SPDCBELL_DETECTORS],
                                    spdcbell_compensation* out) {
  return guarded([&] {
    require(p, "p");
    require(efficiency, "efficiency");
    require(out, "out");
    ClickDistribution d;
    for (int k = 0; k < kPatterns; ++k) d[k] = p[k];
    const auto t = build_transmission_matrix(std::span<const double>(efficiency, 4));
    copy_compensation(compensate_distribution(d, t), out);
  });
}

spdcbell_status spdcbell_counts_create(spdcbell_counts** out) {
  return guarded([&] {
    require(out, "out");
    *out = new spdcbell_counts{};
  });
}

void spdcbell_counts_destroy(spdcbell_counts* counts) { delete counts; }

spdcbell_status spdcbell_counts_set(spdcbell_counts* counts, int setting,
                                    const uint64_t pattern_counts[SPDCBELL_PATTERNS],
                                    uint64_t total) {
  return guarded([&] {
    require(counts, "counts");
    require(pattern_counts, "pattern_counts");
    CountRecord r;
    r.setting = setting;
    for (int k = 0; k < kPatterns; ++k) r.counts[static_cast<std::size_t>(k)] = pattern_counts[k];
    r.total = total;
    r.validate();
    counts->records[setting] = r;
  });
}

spdcbell_status spdcbell_counts_parse_csv(const char* text, spdcbell_counts** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    auto c = std::make_unique<spdcbell_counts>();
    for (const auto& r : parse_counts_csv(text)) c->records[r.setting] = r;
    *out = c.release();
  });
}

spdcbell_status spdcbell_counts_load_csv(const char* path, spdcbell_counts** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string("cannot open counts file '") + path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    auto c = std::make_unique<spdcbell_counts>();
    try {
      for (const auto& r : parse_counts_csv(buf.str())) c->records[r.setting] = r;
    } catch (const Error& e) {
      throw Error(e.code(), std::string(path) + ": " + e.what());
    }
    *out = c.release();
  });
}

spdcbell_status spdcbell_counts_to_csv(const spdcbell_counts* counts, char** out) {
  return guarded([&] {
    require(counts, "counts");
    require(out, "out");
    const auto text = format_counts_csv(all_records(counts));
    char* buf = static_cast<char*>(std::malloc(text.size() + 1));
    if (buf == nullptr) throw std::bad_alloc();
    std::memcpy(buf, text.c_str(), text.size() + 1);
    *out = buf;
  });
}

void spdcbell_free(void* buffer) { std::free(buffer); }

size_t spdcbell_counts_settings(const spdcbell_counts* counts, int settings[4]) {
  if (counts == nullptr) return 0;
  size_t n = 0;
  for (const auto& [s, r] : counts->records) {
    if (settings != nullptr && n < 4) settings[n] = s;
    ++n;
  }
  return n;
}

spdcbell_status spdcbell_counts_get(const spdcbell_counts* counts, int setting,
                                    uint64_t pattern_counts[SPDCBELL_PATTERNS], uint64_t* total) {
  return guarded([&] {
    require(counts, "counts");
    require(pattern_counts, "pattern_counts");
    require(total, "total");
    const auto& r = record_of(counts, setting);
    for (int k = 0; k < kPatterns; ++k) pattern_counts[k] = r.counts[static_cast<std::size_t>(k)];
    *total = r.total;
  });
}

spdcbell_status spdcbell_counts_pair(const spdcbell_counts* counts, int setting,
                                     int first_detector, int second_detector,
                                     spdcbell_pair_counts* out) {
  return guarded([&] {
    require(counts, "counts");
    require(out, "out");
    const auto pc = pair_counts(record_of(counts, setting), first_detector - 1,
                                second_detector - 1);
    out->singles_first = pc.singles_first;
    out->singles_second = pc.singles_second;
    out->coincidences = pc.coincidences;
    out->total = pc.total;
  });
}

spdcbell_status spdcbell_empirical_distribution(const spdcbell_counts* counts, int setting,
                                                double p[SPDCBELL_PATTERNS],
                                                double standard_error[SPDCBELL_PATTERNS]) {
  return guarded([&] {
    require(counts, "counts");
    require(p, "p");
    const auto e = empirical_distribution(record_of(counts, setting));
    for (int k = 0; k < kPatterns; ++k) {
      p[k] = e.p[k];
      if (standard_error != nullptr) standard_error[k] = e.standard_error[static_cast<std::size_t>(k)];
    }
  });
}

spdcbell_status spdcbell_synthesize_counts(const spdcbell_config* config, uint64_t trials,
                                           int sample, uint64_t seed, spdcbell_counts** out) {
  return guarded([&] {
    require(config, "config");
    require(out, "out");
    auto c = std::make_unique<spdcbell_counts>();
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const int setting = (i + 1) * 10 + (j + 1);
        const auto d = setting_distribution(config->value, i, j);
        c->records[setting] =
            sample ? sample_counts(d, trials, setting,
                                   seed + static_cast<std::uint64_t>(i * 2 + j))
                   : expected_counts(d, trials, setting);
      }
    }
    *out = c.release();
  });
}

spdcbell_status spdcbell_compensated_chsh(const spdcbell_counts* counts,
                                          const double efficiency[SPDCBELL_DETECTORS],
                                          const spdcbell_assignment* assignment,
                                          spdcbell_compensated_report* out) {
  return guarded([&] {
    require(counts, "counts");
    require(efficiency, "efficiency");
    require(out, "out");
    const auto records = all_records(counts);
    const auto r = compensated_chsh(records, std::span<const double>(efficiency, 4),
                                    to_assignment(assignment));
    copy_report(r.report, &out->report);
    for (std::size_t i = 0; i < 2; ++i) {
      for (std::size_t j = 0; j < 2; ++j) copy_compensation(r.per_setting[i][j], &out->per_setting[i][j]);
    }
    out->outside_validity = r.outside_validity ? 1 : 0;
  });
}

spdcbell_status spdcbell_empirical_chsh(const spdcbell_counts* counts,
                                        const spdcbell_assignment* assignment,
                                        spdcbell_chsh_report* out) {
  return guarded([&] {
    require(counts, "counts");
    require(out, "out");
    const auto records = all_records(counts);
    copy_report(empirical_chsh(records, to_assignment(assignment)), out);
  });
}

spdcbell_status spdcbell_bootstrap_compensated_chsh(const spdcbell_counts* counts,
                                                    const double efficiency[SPDCBELL_DETECTORS],
                                                    int resamples, uint64_t seed,
                                                    const spdcbell_assignment* assignment,
                                                    int jobs, double* mean,
                                                    double* standard_error) {
  return guarded([&] {
    require(counts, "counts");
    require(efficiency, "efficiency");
    require(mean, "mean");
    require(standard_error, "standard_error");
    if (jobs < 1) throw_invalid_argument("jobs must be >= 1");
    const auto records = all_records(counts);
    const auto b = bootstrap_compensated_chsh(records, std::span<const double>(efficiency, 4),
                                              resamples, seed, to_assignment(assignment), jobs);
    *mean = b.mean;
    *standard_error = b.standard_error;
  });
}

}  // extern "C"
