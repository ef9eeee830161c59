#pragma once

// Estimation from counting data: heralding efficiencies, mean photon numbers
// from singles rates, and loss compensation of click distributions.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "spdcbell/bell.hpp"
#include "spdcbell/detection.hpp"

namespace spdcbell {

struct KlyshkoEstimate {
  double eta_first = 0.0;   // C12 / S2
  double eta_second = 0.0;  // C12 / S1
};

// Efficiencies of two heralding detectors from coincidences and singles.
KlyshkoEstimate klyshko_efficiency(double coincidences, double singles_first,
                                   double singles_second);

// Inverts S/N = lambda*eta / (1 + lambda*eta) for lambda.
double lambda_from_singles(double singles_fraction, double eta);

// Linear map from ideal (unit-efficiency) to lossy click distributions under
// the at-most-one-photon-per-detector assumption. Column j is the ideal
// pattern, row i the observed one.
class TransmissionMatrix {
 public:
  const Eigen::MatrixXd& matrix() const { return t_; }
  const std::vector<double>& efficiencies() const { return eta_; }
  double operator()(int row, int col) const { return t_(row, col); }

 private:
  friend TransmissionMatrix build_transmission_matrix(std::span<const double>);
  Eigen::MatrixXd t_;
  std::vector<double> eta_;
};

// Works for any number of detectors (2^d patterns); the Bell setup uses four.
TransmissionMatrix build_transmission_matrix(std::span<const double> efficiencies);

struct SimplexLeastSquaresResult {
  Eigen::VectorXd q;
  double objective = 0.0;  // |p - T q|^2
  double kkt_residual = 0.0;
  std::vector<bool> at_zero;  // active non-negativity constraints
  int iterations = 0;
};

// min |p - T q|^2 subject to q >= 0, sum(q) = 1, by a primal active-set
// method. Equality-constrained subproblems are solved through a QR
// factorization of T restricted to the free set, never through T^T T.
SimplexLeastSquaresResult solve_simplex_least_squares(const Eigen::MatrixXd& t,
                                                      const Eigen::VectorXd& p);

struct CompensationResult {
  ClickDistribution q_ideal;
  double residual = 0.0;
  double kkt_residual = 0.0;
  std::array<bool, kPatterns> active{};  // q_i pinned at zero
  int iterations = 0;
  // Set when some efficiency is zero (T singular) or T is badly conditioned;
  // the returned solution is then one of several minimizers.
  bool ill_conditioned = false;
  double condition_estimate = 1.0;
};

CompensationResult compensate_distribution(const ClickDistribution& p_exp,
                                           const TransmissionMatrix& t);

// Setting ids 11, 12, 21, 22 (Alice setting then Bob setting, 1-based).
struct CountRecord {
  int setting = 11;
  std::array<std::uint64_t, kPatterns> counts{};
  std::uint64_t total = 0;

  void validate() const;
  // 0-based (alice, bob) indices of the setting id.
  int alice_index() const { return setting / 10 - 1; }
  int bob_index() const { return setting % 10 - 1; }
};

struct EmpiricalDistribution {
  ClickDistribution p;
  std::array<double, kPatterns> standard_error{};
};

EmpiricalDistribution empirical_distribution(const CountRecord& record);

// Singles and coincidences of two detectors (0-based) within one record.
struct PairCounts {
  std::uint64_t singles_first = 0;
  std::uint64_t singles_second = 0;
  std::uint64_t coincidences = 0;
  std::uint64_t total = 0;
};
PairCounts pair_counts(const CountRecord& record, int first_detector,
                       int second_detector);

struct CompensatedChsh {
  double s = 0.0;
  ChshReport report;  // built from the compensated distributions
  std::array<std::array<CompensationResult, 2>, 2> per_setting{};
  // Largest mean photon number compatible with the at-most-one-photon model
  // was exceeded (flag only; the computation still runs).
  bool outside_validity = false;
};

CompensatedChsh compensated_chsh_from_distributions(
    const std::array<std::array<ClickDistribution, 2>, 2>& p_exp,
    std::span<const double> efficiencies,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard());

// Needs exactly one record per setting.
CompensatedChsh compensated_chsh(
    std::span<const CountRecord> records, std::span<const double> efficiencies,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard());

// Same computation without compensation (raw empirical distributions).
ChshReport empirical_chsh(
    std::span<const CountRecord> records,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard());

struct BootstrapSummary {
  double mean = 0.0;
  double standard_error = 0.0;
  int resamples = 0;
};

// Nonparametric bootstrap of the compensated S: each resample redraws every
// record's pattern counts multinomially from its empirical distribution.
// Resample r uses a generator seeded from (seed, r), so the result does not
// depend on `jobs`.
BootstrapSummary bootstrap_compensated_chsh(
    std::span<const CountRecord> records, std::span<const double> efficiencies,
    int resamples, std::uint64_t seed,
    const OutcomeAssignment& assignment = OutcomeAssignment::standard(),
    int jobs = 1);

// Multinomial draw of `trials` events from `dist` (sequential binomials).
CountRecord sample_counts(const ClickDistribution& dist, std::uint64_t trials,
                          int setting, std::uint64_t seed);

// Expected counts rounded by largest remainder, so they sum to `trials`.
CountRecord expected_counts(const ClickDistribution& dist, std::uint64_t trials,
                            int setting);

}  // namespace spdcbell
