#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "spdcbell/bell.hpp"
#include "spdcbell/detection.hpp"
#include "spdcbell/error.hpp"
#include "support/generators.hpp"

using namespace spdcbell;
using spdcbell::testing::random_config;
using spdcbell::testing::random_state;
using spdcbell::testing::Rng;

namespace {

bool throws_code(ErrorCode code, auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code() == code;
  }
  return false;
}

CovarianceMatrix thermal_product(const std::array<double, 4>& lambdas) {
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(8, 8);
  for (int k = 0; k < 4; ++k) {
    g(k, k) = g(4 + k, 4 + k) = 2.0 * lambdas[static_cast<std::size_t>(k)] + 1.0;
  }
  return CovarianceMatrix(g);
}

double vo(const CovarianceMatrix& g, std::vector<int> modes) {
  return vacuum_overlap(subsystem(g, modes));
}

}  // namespace

TEST_CASE("click pattern indexing") {
  std::set<int> seen;
  for (int b = 0; b < 16; ++b) {
    const auto p = ClickPattern::from_clicks(b & 1, b & 2, b & 4, b & 8);
    CHECK(p.index() == b);
    for (int l = 0; l < 4; ++l) CHECK(p.clicks(l) == (((b >> l) & 1) == 1));
    seen.insert(p.index());
  }
  CHECK(seen.size() == 16);
  CHECK(ClickPattern(0).click_count() == 0);
  CHECK(ClickPattern(15).click_count() == 4);
  CHECK(ClickPattern::from_clicks(true, true, false, false).index() == 3);
}

TEST_CASE("vacuum overlap") {
  CHECK(vacuum_overlap(CovarianceMatrix(3)) == doctest::Approx(1.0).epsilon(1e-15));

  Eigen::MatrixXd thermal = Eigen::MatrixXd::Identity(2, 2) * 2.0;  // lambda = 0.5
  CHECK(vacuum_overlap(CovarianceMatrix(thermal)) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));

  CHECK(vacuum_overlap(tmsv_covariance(1.0, +1)) == doctest::Approx(0.5).epsilon(1e-14));

  // Photon-number sum of a TMSV: P(0, 0) = 1 / (1 + lambda).
  for (double lambda : {0.01, 0.3, 2.5}) {
    CHECK(vacuum_overlap(tmsv_covariance(lambda, -1)) ==
          doctest::Approx(1.0 / (1.0 + lambda)).epsilon(1e-13));
  }

  Eigen::MatrixXd bad = Eigen::MatrixXd::Identity(2, 2);
  bad(0, 0) = -2.0;
  CHECK(throws_code(ErrorCode::kInvalidState, [&] { vacuum_overlap(CovarianceMatrix(bad)); }));
}

TEST_CASE("pattern probability of vacuum") {
  const CovarianceMatrix vacuum(4);
  CHECK(pattern_probability(vacuum, ClickPattern(0), DetectorModel::uniform(0.0)) == 1.0);
  CHECK(pattern_probability(vacuum, ClickPattern(0), DetectorModel::uniform(1e-4)) ==
        doctest::Approx(std::pow(1.0 - 1e-4, 4)).epsilon(1e-15));
  CHECK(pattern_probability(vacuum, ClickPattern(5), DetectorModel::uniform(0.0)) == 0.0);

  const auto d = click_distribution(vacuum, DetectorModel::uniform(0.0));
  CHECK(d[0] == 1.0);
  for (int k = 1; k < 16; ++k) CHECK(d[k] == 0.0);
}

TEST_CASE("four-term expression for clicks in D1 and D2 only") {
  SystemConfig c;
  c.lambda1 = 0.45;
  c.lambda2 = 0.2;
  c.efficiency = {0.8, 0.7, 0.9, 0.6};
  const auto g = final_covariance(c, 0.4, -1.2);
  const double nu = 2e-3;
  const int ha = 0, va = 1, hb = 2, vb = 3;
  const double expected =
      (1 - nu) * (1 - nu) * vo(g, {va, vb}) - std::pow(1 - nu, 3) * vo(g, {ha, va, vb}) -
      std::pow(1 - nu, 3) * vo(g, {va, hb, vb}) + std::pow(1 - nu, 4) * vo(g, {ha, va, hb, vb});
  const auto pattern = ClickPattern::from_clicks(true, true, false, false);
  CHECK(pattern_probability(g, pattern, DetectorModel::uniform(nu)) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("distribution matches the independent numpy model") {
  // tests/oracle/reference_values.py, "distribution A"
  const double reference[16] = {
      0.47483691323206517,  0.02281540448295566,  0.012913163105759906, 0.12181839991477156,
      0.06094478155621802,  0.002942025614992516, 0.010839104174378444, 0.021757364592708772,
      0.036511788083952,    0.002233264307402172, 0.001199123364080068, 0.009328696573670359,
      0.15693625563036123,  0.0078044834344140335, 0.013430374453477778, 0.04368885747879253};
  SystemConfig c;
  c.lambda1 = 0.3;
  c.lambda2 = 0.7;
  c.efficiency = {0.9, 0.8, 0.7, 0.6};
  const auto d = click_distribution(final_covariance(c, 0.3, -1.1), DetectorModel::uniform(1e-3));
  for (int k = 0; k < 16; ++k) CHECK(d[k] == doctest::Approx(reference[k]).epsilon(1e-12));
}

TEST_CASE("independent thermal modes factorize") {
  const std::array<double, 4> lambdas{0.1, 0.4, 0.25, 0.9};
  const auto g = thermal_product(lambdas);
  const double nu = 5e-4;
  const auto d = click_distribution(g, DetectorModel::uniform(nu));
  for (int k = 0; k < 16; ++k) {
    double expected = 1.0;
    for (int l = 0; l < 4; ++l) {
      const double off = (1.0 - nu) / (1.0 + lambdas[static_cast<std::size_t>(detector_mode(l))]);
      expected *= ClickPattern(k).clicks(l) ? 1.0 - off : off;
    }
    CHECK(d[k] == doctest::Approx(expected).epsilon(1e-13));
  }
}

TEST_CASE("distributions are normalized") {
  Rng rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const auto c = random_config(rng, {.lambda_max = 2.0});
    const auto d = setting_distribution(c, rng.index(2), rng.index(2));
    CHECK(d.sum() == doctest::Approx(1.0).epsilon(1e-9));
    for (int k = 0; k < 16; ++k) {
      CHECK(d[k] >= 0.0);
      CHECK(d[k] <= 1.0);
    }
  }
}

TEST_CASE("dark counts act as independent click flips") {
  Rng rng(43);
  for (int trial = 0; trial < 40; ++trial) {
    const auto g = random_state(rng, 4);
    DetectorModel dark;
    for (double& nu : dark.dark_count) nu = rng.uniform(0.0, 0.05);
    const auto clean = click_distribution(g, DetectorModel::uniform(0.0));
    const auto noisy = click_distribution(g, dark);
    for (int k = 0; k < 16; ++k) {
      double expected = 0.0;
      for (int j = 0; j < 16; ++j) {
        double w = clean[j];
        for (int l = 0; l < 4; ++l) {
          const double nu = dark.dark_count[static_cast<std::size_t>(l)];
          const bool before = ClickPattern(j).clicks(l);
          const bool after = ClickPattern(k).clicks(l);
          if (before) {
            w *= after ? 1.0 : 0.0;
          } else {
            w *= after ? nu : 1.0 - nu;
          }
        }
        expected += w;
      }
      CHECK(noisy[k] == doctest::Approx(expected).epsilon(1e-12).scale(1.0));
      CHECK(std::abs(noisy[k] - expected) < 1e-12);
    }
  }
}

TEST_CASE("single-detector dark count decomposition") {
  const auto g = thermal_product({0.3, 0.3, 0.3, 0.3});
  for (double nu : {1e-4, 1e-2, 0.2}) {
    const auto clean = click_distribution(g, DetectorModel::uniform(0.0));
    const auto noisy = click_distribution(g, DetectorModel::uniform(nu));
    double on_clean = 0.0, on_noisy = 0.0;
    for (int k = 0; k < 16; ++k) {
      if (ClickPattern(k).clicks(0)) {
        on_clean += clean[k];
        on_noisy += noisy[k];
      }
    }
    CHECK(on_noisy == doctest::Approx(nu + (1.0 - nu) * on_clean).epsilon(1e-13));
  }
}

TEST_CASE("higher efficiency never lowers a detector's click probability") {
  Rng rng(47);
  for (int trial = 0; trial < 40; ++trial) {
    auto c = random_config(rng);
    const int l = rng.index(4);
    auto click = [&](const SystemConfig& cfg) {
      const auto d = setting_distribution(cfg, 0, 1);
      double on = 0.0;
      for (int k = 0; k < 16; ++k) {
        if (ClickPattern(k).clicks(l)) on += d[k];
      }
      return on;
    };
    const double before = click(c);
    c.efficiency[static_cast<std::size_t>(l)] =
        std::min(1.0, c.efficiency[static_cast<std::size_t>(l)] + rng.uniform(0.0, 0.5));
    CHECK(click(c) >= before - 1e-12);
  }
}

TEST_CASE("marginal over D3 and D4 matches the two-mode subsystem") {
  Rng rng(53);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = random_state(rng, 4);
    const double nu = rng.uniform(0.0, 0.01);
    const auto d = click_distribution(g, DetectorModel::uniform(nu));
    const int ha = detector_mode(0), hb = detector_mode(1);
    const double v12 = vo(g, {ha, hb});
    const double v1 = vo(g, {ha});
    const double v2 = vo(g, {hb});
    const double q = 1.0 - nu;
    // (D1, D2) = (off, off), (on, off), (off, on), (on, on)
    const double two[4] = {q * q * v12, q * v2 - q * q * v12, q * v1 - q * q * v12,
                           1.0 - q * v1 - q * v2 + q * q * v12};
    for (int b = 0; b < 4; ++b) {
      double marginal = 0.0;
      for (int k = 0; k < 16; ++k) {
        if ((k & 3) == b) marginal += d[k];
      }
      CHECK(std::abs(marginal - two[b]) < 1e-12);
    }
  }
}

TEST_CASE("out-of-range probabilities are reported, not clamped") {
  // Not a physical state: vacuum overlap exceeds one.
  const CovarianceMatrix unphysical(Eigen::MatrixXd::Identity(8, 8) * 0.5);
  CHECK(throws_code(ErrorCode::kInvalidState,
                    [&] { click_distribution(unphysical, DetectorModel::uniform(0.0)); }));
}

TEST_CASE("detector model and distribution validation") {
  CHECK(throws_code(ErrorCode::kInvalidArgument, [] { DetectorModel::uniform(1.0).validate(); }));
  CHECK(throws_code(ErrorCode::kInvalidArgument, [] { DetectorModel::uniform(-1e-3).validate(); }));
  DetectorModel::uniform(0.999).validate();

  ClickDistribution d;
  d[0] = 0.5;
  CHECK(throws_code(ErrorCode::kInvalidArgument, [&] { d.require_normalized(); }));
  d[1] = 0.5;
  d.require_normalized();
  d[2] = -0.1;
  d[3] = 0.1;
  CHECK(throws_code(ErrorCode::kInvalidArgument, [&] { d.require_normalized(); }));

  CHECK(throws_code(ErrorCode::kInvalidArgument, [] {
    pattern_probability(CovarianceMatrix(3), ClickPattern(0), DetectorModel{});
  }));
}
