#include "spdcbell/bell.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdcbell/error.hpp"

namespace spdcbell {

namespace {

int local_event(bool primary, bool secondary) {
  return (primary ? 1 : 0) + (secondary ? 2 : 0);
}

void require_setting(int setting) {
  if (setting != 0 && setting != 1) {
    throw_invalid_argument("setting index must be 0 or 1, got " +
                           std::to_string(setting));
  }
}

}  // namespace

void SystemConfig::validate() const {
  if (!std::isfinite(lambda1) || lambda1 < 0.0 || !std::isfinite(lambda2) ||
      lambda2 < 0.0) {
    throw_invalid_argument("SystemConfig: mean photon numbers must be finite and >= 0");
  }
  for (double theta : alice_angles) {
    if (!std::isfinite(theta)) throw_invalid_argument("SystemConfig: non-finite angle");
  }
  for (double theta : bob_angles) {
    if (!std::isfinite(theta)) throw_invalid_argument("SystemConfig: non-finite angle");
  }
  for (double eta : efficiency) {
    if (!(eta >= 0.0 && eta <= 1.0)) {
      throw_invalid_argument("SystemConfig: efficiencies must lie in [0, 1]");
    }
  }
  if (!(dark_count >= 0.0 && dark_count < 1.0)) {
    throw_invalid_argument("SystemConfig: dark-count probability must lie in [0, 1)");
  }
}

void OutcomeAssignment::validate() const {
  for (int v : alice) {
    if (v != 1 && v != -1) throw_invalid_argument("OutcomeAssignment: outcomes must be +-1");
  }
  for (int v : bob) {
    if (v != 1 && v != -1) throw_invalid_argument("OutcomeAssignment: outcomes must be +-1");
  }
}

int OutcomeAssignment::alice_outcome(ClickPattern p) const {
  return alice[static_cast<std::size_t>(local_event(p.clicks(0), p.clicks(2)))];
}

int OutcomeAssignment::bob_outcome(ClickPattern p) const {
  return bob[static_cast<std::size_t>(local_event(p.clicks(1), p.clicks(3)))];
}

CovarianceMatrix final_covariance(const SystemConfig& config, double alice_angle,
                                  double bob_angle) {
  config.validate();
  CovarianceMatrix gamma =
      entangled_source_covariance(config.lambda1, config.lambda2);
  gamma = apply_symplectic(
      gamma, polarizer_symplectic(alice_angle, index_of(Mode::kHA),
                                  index_of(Mode::kVA), kSourceModes));
  gamma = apply_symplectic(
      gamma, polarizer_symplectic(bob_angle, index_of(Mode::kHB),
                                  index_of(Mode::kVB), kSourceModes));
  for (int l = 0; l < kDetectors; ++l) {
    gamma = apply_loss(gamma, detector_mode(l),
                       config.efficiency[static_cast<std::size_t>(l)]);
  }
  return gamma;
}

ClickDistribution setting_distribution(const SystemConfig& config,
                                       int alice_setting, int bob_setting) {
  require_setting(alice_setting);
  require_setting(bob_setting);
  const CovarianceMatrix gamma = final_covariance(
      config, config.alice_angles[static_cast<std::size_t>(alice_setting)],
      config.bob_angles[static_cast<std::size_t>(bob_setting)]);
  return click_distribution(gamma, DetectorModel::uniform(config.dark_count));
}

OutcomeTable joint_outcome_probabilities(const ClickDistribution& dist,
                                         const OutcomeAssignment& assignment) {
  dist.require_normalized();
  assignment.validate();
  OutcomeTable table;
  for (int k = 0; k < kPatterns; ++k) {
    const ClickPattern pattern(k);
    table.at(assignment.alice_outcome(pattern), assignment.bob_outcome(pattern)) +=
        dist[k];
  }
  return table;
}

double correlator(const OutcomeTable& table) {
  const double same = table.at(+1, +1) + table.at(-1, -1);
  const double different = table.at(+1, -1) + table.at(-1, +1);
  return std::clamp(same - different, -1.0, 1.0);
}

double chsh_combination(const std::array<std::array<double, 2>, 2>& e) {
  return e[0][0] + e[1][0] + e[0][1] - e[1][1];
}

ChshReport chsh_from_distributions(
    const std::array<std::array<ClickDistribution, 2>, 2>& distributions,
    const OutcomeAssignment& assignment) {
  ChshReport report;
  report.distributions = distributions;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      report.correlator[i][j] =
          correlator(joint_outcome_probabilities(distributions[i][j], assignment));
    }
  }
  report.s = chsh_combination(report.correlator);
  return report;
}

ChshReport chsh_value(const SystemConfig& config,
                      const OutcomeAssignment& assignment) {
  config.validate();
  std::array<std::array<ClickDistribution, 2>, 2> distributions;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      distributions[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] =
          setting_distribution(config, i, j);
    }
  }
  return chsh_from_distributions(distributions, assignment);
}

}  // namespace spdcbell
