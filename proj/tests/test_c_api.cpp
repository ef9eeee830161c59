// Exercises the shared library through its C header only.

#include <cmath>
#include <cstring>
#include <string>
#include <thread>

#include "doctest.h"
#include "spdcbell/spdcbell.h"

namespace {

constexpr double kPi = 3.14159265358979323846;

spdcbell_config_values reference_values() {
  spdcbell_config_values v{};
  v.lambda1 = v.lambda2 = 0.62;
  v.alice_angles[0] = 0.0;
  v.alice_angles[1] = kPi / 5;
  v.bob_angles[0] = 3 * kPi / 5;
  v.bob_angles[1] = -3 * kPi / 5;
  for (double& e : v.efficiency) e = 1.0;
  v.dark_count = 0.0;
  return v;
}

struct Config {
  spdcbell_config* ptr = nullptr;
  Config() { REQUIRE(spdcbell_config_create(&ptr) == SPDCBELL_OK); }
  ~Config() { spdcbell_config_destroy(ptr); }
};

struct Counts {
  spdcbell_counts* ptr = nullptr;
  ~Counts() { spdcbell_counts_destroy(ptr); }
};

}  // namespace

TEST_CASE("version and status names") {
  CHECK(std::strlen(spdcbell_version()) > 0);
  CHECK(std::string(spdcbell_status_name(SPDCBELL_OK)) == "ok");
  CHECK(std::string(spdcbell_status_name(SPDCBELL_ERR_NUMERICAL)).size() > 0);
}

TEST_CASE("configuration handle") {
  Config c;
  spdcbell_config_values v{};
  REQUIRE(spdcbell_config_get(c.ptr, &v) == SPDCBELL_OK);
  CHECK(v.lambda1 == 0.0);
  CHECK(v.efficiency[2] == 1.0);

  const auto ref = reference_values();
  REQUIRE(spdcbell_config_set(c.ptr, &ref) == SPDCBELL_OK);
  auto bad = ref;
  bad.efficiency[1] = 1.5;
  CHECK(spdcbell_config_set(c.ptr, &bad) == SPDCBELL_ERR_INVALID_ARGUMENT);
  CHECK(std::strlen(spdcbell_last_error()) > 0);
  REQUIRE(spdcbell_config_get(c.ptr, &v) == SPDCBELL_OK);
  CHECK(v.efficiency[1] == 1.0);
  CHECK(v.lambda1 == 0.62);

  CHECK(spdcbell_config_create(nullptr) == SPDCBELL_ERR_INVALID_ARGUMENT);
  CHECK(spdcbell_config_set(nullptr, &ref) == SPDCBELL_ERR_INVALID_ARGUMENT);
  CHECK(spdcbell_config_get(c.ptr, nullptr) == SPDCBELL_ERR_INVALID_ARGUMENT);
  spdcbell_config_destroy(nullptr);
}

TEST_CASE("CHSH through the C interface") {
  Config c;
  const auto ref = reference_values();
  REQUIRE(spdcbell_config_set(c.ptr, &ref) == SPDCBELL_OK);
  spdcbell_chsh_report r{};
  REQUIRE(spdcbell_chsh(c.ptr, nullptr, &r) == SPDCBELL_OK);
  CHECK(r.s == doctest::Approx(2.298697524583571).epsilon(1e-11));
  CHECK(r.correlator[1][1] == doctest::Approx(0.28726205874424243).epsilon(1e-11));

  double p[SPDCBELL_PATTERNS];
  REQUIRE(spdcbell_click_distribution(c.ptr, 1, 0, p) == SPDCBELL_OK);
  for (int k = 0; k < SPDCBELL_PATTERNS; ++k) CHECK(p[k] == r.distributions[1][0][k]);
  CHECK(spdcbell_click_distribution(c.ptr, 2, 0, p) == SPDCBELL_ERR_INVALID_ARGUMENT);

  spdcbell_assignment a;
  spdcbell_assignment_standard(&a);
  CHECK(a.alice[1] == -1);
  CHECK(a.bob[3] == 1);
  for (int k = 0; k < 4; ++k) a.alice[k] = a.bob[k] = 1;
  REQUIRE(spdcbell_chsh(c.ptr, &a, &r) == SPDCBELL_OK);
  CHECK(r.s == doctest::Approx(2.0));
  a.bob[0] = 3;
  CHECK(spdcbell_chsh(c.ptr, &a, &r) == SPDCBELL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("oracle through the C interface") {
  Config c;
  auto v = reference_values();
  v.lambda1 = 0.1;
  v.lambda2 = 0.2;
  REQUIRE(spdcbell_config_set(c.ptr, &v) == SPDCBELL_OK);
  double oracle[SPDCBELL_PATTERNS], gauss[SPDCBELL_PATTERNS], deficit = -1.0;
  int used = 0;
  REQUIRE(spdcbell_oracle_click_distribution(c.ptr, 0, 1, 0, oracle, &deficit, &used) ==
          SPDCBELL_OK);
  CHECK(used == 25);
  CHECK(deficit >= 0.0);
  CHECK(deficit < 1e-10);
  REQUIRE(spdcbell_click_distribution(c.ptr, 0, 1, gauss) == SPDCBELL_OK);
  for (int k = 0; k < SPDCBELL_PATTERNS; ++k) CHECK(std::abs(oracle[k] - gauss[k]) < 1e-8);
  CHECK(spdcbell_oracle_click_distribution(c.ptr, 0, 1, 10, oracle, nullptr, nullptr) ==
        SPDCBELL_OK);
}

TEST_CASE("optimization and scans") {
  spdcbell_search_options o;
  spdcbell_search_options_default(&o);
  CHECK(o.restarts == 16);
  o.restarts = 2;
  spdcbell_optimum best{};
  REQUIRE(spdcbell_maximize_at_eta(0.0, -1.0, 0.0, &o, &best) == SPDCBELL_OK);
  CHECK(best.s == doctest::Approx(2.0));
  REQUIRE(spdcbell_maximize_at_lambda(0.5, 1.0, 0.0, &o, &best) == SPDCBELL_OK);
  CHECK(best.lambda1 == 0.5);
  CHECK(best.s > 2.2);
  CHECK(spdcbell_maximize_at_lambda(-0.5, 1.0, 0.0, &o, &best) == SPDCBELL_ERR_INVALID_ARGUMENT);

  const double lambdas[] = {0.2, -1.0};
  spdcbell_scan* scan = nullptr;
  REQUIRE(spdcbell_scan_lambda(lambdas, 2, 1.0, 0.0, &o, 1, &scan) == SPDCBELL_OK);
  REQUIRE(spdcbell_scan_size(scan) == 2);
  spdcbell_scan_row row{};
  REQUIRE(spdcbell_scan_row_get(scan, 0, &row) == SPDCBELL_OK);
  CHECK(row.ok == 1);
  CHECK(row.lambda == 0.2);
  CHECK(std::isinf(row.lambda_cap));
  CHECK(std::string(spdcbell_scan_row_error(scan, 0)).empty());
  REQUIRE(spdcbell_scan_row_get(scan, 1, &row) == SPDCBELL_OK);
  CHECK(row.ok == 0);
  CHECK_FALSE(std::string(spdcbell_scan_row_error(scan, 1)).empty());
  CHECK(spdcbell_scan_row_get(scan, 2, &row) == SPDCBELL_ERR_INVALID_ARGUMENT);
  spdcbell_scan_destroy(scan);

  const double etas[] = {1.0};
  REQUIRE(spdcbell_scan_eta(etas, 1, 0.1, 0.0, &o, 1, &scan) == SPDCBELL_OK);
  REQUIRE(spdcbell_scan_row_get(scan, 0, &row) == SPDCBELL_OK);
  CHECK(row.lambda_cap == 0.1);
  CHECK(row.result.lambda1 <= 0.1);
  spdcbell_scan_destroy(scan);

  double grid[3];
  size_t count = 0;
  REQUIRE(spdcbell_make_grid(0.8, 1.0, 0.05, grid, 3, &count) == SPDCBELL_OK);
  CHECK(count == 5);
  CHECK(grid[2] == doctest::Approx(0.9));
  CHECK(spdcbell_make_grid(0.0, 1.0, -0.1, grid, 3, &count) == SPDCBELL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("estimation through the C interface") {
  double e1 = 0, e2 = 0;
  REQUIRE(spdcbell_klyshko(525, 4115, 5010, &e1, &e2) == SPDCBELL_OK);
  CHECK(e1 == doctest::Approx(0.1048).epsilon(1e-3));
  CHECK(e2 == doctest::Approx(0.1276).epsilon(1e-3));
  CHECK(spdcbell_klyshko(5, 0, 1, &e1, &e2) == SPDCBELL_ERR_INVALID_ARGUMENT);

  double lambda = 0;
  REQUIRE(spdcbell_lambda_from_singles(0.05, 0.5, &lambda) == SPDCBELL_OK);
  CHECK(lambda == doctest::Approx(0.10526).epsilon(1e-4));

  const double eta[4] = {0.3, 0.6, 0.9, 0.5};
  double t[SPDCBELL_PATTERNS * SPDCBELL_PATTERNS];
  REQUIRE(spdcbell_transmission_matrix(eta, t) == SPDCBELL_OK);
  CHECK(t[0 * 16 + 1] == doctest::Approx(0.7));  // D1 photon lost
  CHECK(t[1 * 16 + 0] == 0.0);
  CHECK(t[15 * 16 + 15] == doctest::Approx(0.3 * 0.6 * 0.9 * 0.5));

  double q[SPDCBELL_PATTERNS] = {};
  q[0] = 0.5;
  q[3] = 0.25;
  q[12] = 0.25;
  double p[SPDCBELL_PATTERNS] = {};
  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) p[i] += t[i * 16 + j] * q[j];
  }
  spdcbell_compensation comp{};
  REQUIRE(spdcbell_compensate(p, eta, &comp) == SPDCBELL_OK);
  for (int k = 0; k < 16; ++k) CHECK(std::abs(comp.q[k] - q[k]) < 1e-9);
  CHECK(comp.kkt_residual < 1e-8);
  CHECK(comp.ill_conditioned == 0);
}

TEST_CASE("counts handles") {
  Counts counts;
  REQUIRE(spdcbell_counts_parse_csv("setting,pattern,count\n11,0,60\n11,3,40\ntotal,100\n",
                                    &counts.ptr) == SPDCBELL_OK);
  int settings[4];
  CHECK(spdcbell_counts_settings(counts.ptr, settings) == 1);
  CHECK(settings[0] == 11);
  uint64_t pc[SPDCBELL_PATTERNS], total = 0;
  REQUIRE(spdcbell_counts_get(counts.ptr, 11, pc, &total) == SPDCBELL_OK);
  CHECK(pc[3] == 40);
  CHECK(total == 100);
  CHECK(spdcbell_counts_get(counts.ptr, 12, pc, &total) == SPDCBELL_ERR_INVALID_ARGUMENT);

  spdcbell_pair_counts pair{};
  REQUIRE(spdcbell_counts_pair(counts.ptr, 11, 1, 2, &pair) == SPDCBELL_OK);
  CHECK(pair.coincidences == 40);
  CHECK(pair.singles_first == 40);
  CHECK(spdcbell_counts_pair(counts.ptr, 11, 0, 2, &pair) == SPDCBELL_ERR_INVALID_ARGUMENT);

  double p[SPDCBELL_PATTERNS], se[SPDCBELL_PATTERNS];
  REQUIRE(spdcbell_empirical_distribution(counts.ptr, 11, p, se) == SPDCBELL_OK);
  CHECK(p[0] == 0.6);
  CHECK(se[3] == doctest::Approx(std::sqrt(0.4 * 0.6 / 100)));

  char* text = nullptr;
  REQUIRE(spdcbell_counts_to_csv(counts.ptr, &text) == SPDCBELL_OK);
  CHECK(std::string(text).find("total,100") != std::string::npos);
  spdcbell_free(text);

  uint64_t bad[SPDCBELL_PATTERNS] = {};
  bad[0] = 5;
  CHECK(spdcbell_counts_set(counts.ptr, 12, bad, 6) == SPDCBELL_ERR_INVALID_ARGUMENT);
  CHECK(spdcbell_counts_set(counts.ptr, 12, bad, 5) == SPDCBELL_OK);
  CHECK(spdcbell_counts_settings(counts.ptr, settings) == 2);

  Counts broken;
  CHECK(spdcbell_counts_parse_csv("setting,pattern,count\n11,0,1\n", &broken.ptr) ==
        SPDCBELL_ERR_INVALID_ARGUMENT);
  CHECK(std::string(spdcbell_last_error()).find("line") != std::string::npos);
  CHECK(spdcbell_counts_load_csv("/nonexistent/counts.csv", &broken.ptr) == SPDCBELL_ERR_IO);
}

TEST_CASE("synthetic counts and compensated CHSH") {
  Config c;
  auto v = reference_values();
  v.lambda1 = v.lambda2 = 0.02;
  const double eta[4] = {0.1048, 0.1276, 0.1272, 0.1186};
  for (int k = 0; k < 4; ++k) v.efficiency[k] = eta[k];
  REQUIRE(spdcbell_config_set(c.ptr, &v) == SPDCBELL_OK);

  Counts exact, sampled, again;
  REQUIRE(spdcbell_synthesize_counts(c.ptr, 1000000000, 0, 0, &exact.ptr) == SPDCBELL_OK);
  REQUIRE(spdcbell_synthesize_counts(c.ptr, 100000, 1, 9, &sampled.ptr) == SPDCBELL_OK);
  REQUIRE(spdcbell_synthesize_counts(c.ptr, 100000, 1, 9, &again.ptr) == SPDCBELL_OK);
  uint64_t a[16], b[16], ta, tb;
  REQUIRE(spdcbell_counts_get(sampled.ptr, 21, a, &ta) == SPDCBELL_OK);
  REQUIRE(spdcbell_counts_get(again.ptr, 21, b, &tb) == SPDCBELL_OK);
  CHECK(std::memcmp(a, b, sizeof a) == 0);

  spdcbell_compensated_report rep{};
  REQUIRE(spdcbell_compensated_chsh(exact.ptr, eta, nullptr, &rep) == SPDCBELL_OK);
  CHECK(rep.report.s > 2.0);
  CHECK(rep.outside_validity == 0);
  spdcbell_chsh_report raw{};
  REQUIRE(spdcbell_empirical_chsh(exact.ptr, nullptr, &raw) == SPDCBELL_OK);
  CHECK(raw.s < rep.report.s);

  double mean = 0, se = 0;
  REQUIRE(spdcbell_bootstrap_compensated_chsh(sampled.ptr, eta, 20, 3, nullptr, 1, &mean, &se) ==
          SPDCBELL_OK);
  CHECK(se > 0.0);

  Counts partial;
  REQUIRE(spdcbell_counts_create(&partial.ptr) == SPDCBELL_OK);
  CHECK(spdcbell_compensated_chsh(partial.ptr, eta, nullptr, &rep) ==
        SPDCBELL_ERR_INVALID_ARGUMENT);
}

TEST_CASE("last error is per thread") {
  double l = 0;
  REQUIRE(spdcbell_lambda_from_singles(2.0, 0.5, &l) == SPDCBELL_ERR_INVALID_ARGUMENT);
  const std::string here = spdcbell_last_error();
  std::string there = "unset";
  std::thread([&] { there = spdcbell_last_error(); }).join();
  CHECK(there.empty());
  CHECK(std::string(spdcbell_last_error()) == here);
}
