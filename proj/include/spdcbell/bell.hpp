#pragma once

// CHSH evaluation for the two-source polarization-entangled SPDC model.

#include <array>

#include "spdcbell/detection.hpp"
#include "spdcbell/gaussian.hpp"

namespace spdcbell {

struct SystemConfig {
  double lambda1 = 0.0;  // source 1: H_A <-> V_B
  double lambda2 = 0.0;  // source 2: V_A <-> H_B
  std::array<double, 2> alice_angles{};  // theta_A1, theta_A2 (radians)
  std::array<double, 2> bob_angles{};    // theta_B1, theta_B2
  std::array<double, kDetectors> efficiency{1.0, 1.0, 1.0, 1.0};  // eta_1..4
  double dark_count = 0.0;

  // Throws kInvalidArgument on lambda < 0, eta outside [0, 1], nu outside
  // [0, 1) or non-finite angles.
  void validate() const;
};

// Local events of one party, indexed by (primary click) + 2 * (secondary
// click). Alice's primary detector is D1 and secondary D3; Bob's are D2, D4.
enum class LocalEvent : int { kNone = 0, kPrimaryOnly = 1, kSecondaryOnly = 2, kBoth = 3 };

struct OutcomeAssignment {
  std::array<int, 4> alice{+1, -1, +1, +1};
  std::array<int, 4> bob{+1, -1, +1, +1};

  // Only the primary detector clicking gives -1, anything else +1.
  static OutcomeAssignment standard() { return {}; }
  void validate() const;

  int alice_outcome(ClickPattern p) const;
  int bob_outcome(ClickPattern p) const;
};

// Joint probabilities over (a, b) in {-1, +1}^2.
struct OutcomeTable {
  // Index 0 is outcome -1, index 1 is +1.
  std::array<std::array<double, 2>, 2> p{};

  double at(int a, int b) const {
    return p[a > 0 ? 1u : 0u][b > 0 ? 1u : 0u];
  }
  double& at(int a, int b) { return p[a > 0 ? 1u : 0u][b > 0 ? 1u : 0u]; }
};

struct ChshReport {
  // correlator[i][j] = <a_{i+1} b_{j+1}>
  std::array<std::array<double, 2>, 2> correlator{};
  double s = 0.0;
  std::array<std::array<ClickDistribution, 2>, 2> distributions{};
};

// State just before the detectors for setting (theta_A, theta_B).
CovarianceMatrix final_covariance(const SystemConfig& config, double alice_angle,
                                  double bob_angle);

ClickDistribution setting_distribution(const SystemConfig& config,
                                       int alice_setting, int bob_setting);

OutcomeTable joint_outcome_probabilities(
    const ClickDistribution& dist,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard());

// P(a = b) - P(a != b)
double correlator(const OutcomeTable& table);

// E11 + E21 + E12 - E22
double chsh_combination(const std::array<std::array<double, 2>, 2>& e);

ChshReport chsh_from_distributions(
    const std::array<std::array<ClickDistribution, 2>, 2>& distributions,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard());

ChshReport chsh_value(
    const SystemConfig& config,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard());

}  // namespace spdcbell
