#pragma once

// Brute-force photon-number-basis model of the Bell setup. It shares no code
// with the covariance-matrix path and is used to cross-check it.
//
// Truncation: each source is expanded up to `cutoff` pairs. Polarizer
// rotations conserve photon number per party and are applied exactly, so the
// only missing probability is the source tail (lambda/(1+lambda))^(cutoff+1)
// per source.

#include <array>
#include <complex>
#include <map>
#include <vector>

#include "spdcbell/bell.hpp"
#include "spdcbell/detection.hpp"
#include "spdcbell/gaussian.hpp"

namespace spdcbell::fock {

// Photon numbers in (H_A, V_A, H_B, V_B).
using Occupation = std::array<int, kSourceModes>;

struct FockState {
  int cutoff = 0;
  std::map<Occupation, std::complex<double>> amplitudes;

  double norm_squared() const;
};

struct JointPhotonDistribution {
  std::map<Occupation, double> probabilities;

  double total() const;
};

// Amplitudes (e^{i phase} tanh r)^n / cosh r, n = 0..cutoff, lambda = sinh^2 r.
// Only phase 0 and pi are used by the source.
std::vector<std::complex<double>> tmsv_amplitudes(double lambda, double phase,
                                                  int cutoff);

// Analytic norm deficit of one truncated TMSV.
double tmsv_tail(double lambda, int cutoff);

// Source 1 on (H_A, V_B) with phase 0, source 2 on (V_A, H_B) with phase pi.
FockState entangled_source_state(double lambda1, double lambda2, int cutoff);

// Same transformation as polarizer_symplectic on the covariance matrix:
// a_i^dag -> cos a_i^dag + sin a_j^dag, a_j^dag -> -sin a_i^dag + cos a_j^dag.
FockState apply_beamsplitter_fock(const FockState& state, int mode_i,
                                  int mode_j, double theta);

JointPhotonDistribution photon_distribution(const FockState& state);

// n -> Binomial(n, eta) along one mode.
JointPhotonDistribution apply_binomial_loss(const JointPhotonDistribution& pnd,
                                            int mode, double eta);

// On/off detection of a photon-number distribution: detector l clicks with
// probability 1 - (1 - nu_l)[n_l = 0].
ClickDistribution measure_on_off(const JointPhotonDistribution& pnd,
                                 const DetectorModel& detectors);

// Covariance matrix of a Fock state from <a_i^dag a_j> and <a_i a_j>.
CovarianceMatrix second_moments(const FockState& state);

struct OracleDistribution {
  // Truncated sums. Components of equal photon number per party interfere,
  // so p_i is not a lower bound; |p_i - exact| <= 2 sqrt(d) + d for deficit d.
  ClickDistribution p;
  double tail_deficit = 0.0;  // missing norm of the truncated source state
  bool deficit_above_target = false;  // deficit >= 1e-10
};

// Click distribution of one measurement setting (0-based indices). Loss is
// folded into the detector response: after Binomial(n, eta) loss the vacuum
// probability is (1 - eta)^n.
OracleDistribution oracle_click_distribution(const SystemConfig& config,
                                             int alice_setting, int bob_setting,
                                             int cutoff);

// 25 for lambda <= 0.3, 60 for lambda <= 1, otherwise the smallest cutoff
// whose tail is below 1e-10 (or 60, whichever is larger).
int default_cutoff(double max_lambda);

}  // namespace spdcbell::fock
