#pragma once

// On/off detection with dark counts on the four source modes.

#include <array>
#include <cstdint>

#include "spdcbell/gaussian.hpp"

namespace spdcbell {

inline constexpr int kDetectors = 4;
inline constexpr int kPatterns = 16;

// Click/no-click outcome of D1..D4. Bit l-1 of the index is set iff D_l
// clicked: index 0 is all-no-click, 15 all-click.
class ClickPattern {
 public:
  constexpr explicit ClickPattern(int index) : index_(index) {}
  static constexpr ClickPattern from_clicks(bool d1, bool d2, bool d3,
                                            bool d4) {
    return ClickPattern((d1 ? 1 : 0) | (d2 ? 2 : 0) | (d3 ? 4 : 0) |
                        (d4 ? 8 : 0));
  }

  constexpr int index() const { return index_; }
  // detector is 0-based (0 = D1).
  constexpr bool clicks(int detector) const { return (index_ >> detector) & 1; }
  constexpr int click_count() const {
    return clicks(0) + clicks(1) + clicks(2) + clicks(3);
  }

 private:
  int index_;
};

struct DetectorModel {
  // Dark-count probability per detection window, per detector, in [0, 1).
  std::array<double, kDetectors> dark_count{};

  static DetectorModel uniform(double nu) { return {{nu, nu, nu, nu}}; }
  void validate() const;
};

struct ClickDistribution {
  std::array<double, kPatterns> p{};

  double& operator[](int pattern) { return p[static_cast<std::size_t>(pattern)]; }
  double operator[](int pattern) const {
    return p[static_cast<std::size_t>(pattern)];
  }
  double sum() const;
  // Throws kInvalidArgument unless every entry is in [0, 1] and the entries
  // sum to one within tolerance.
  void require_normalized(double tolerance = 1e-9) const;
};

// Tr[rho |0><0|^{(x)n}] = 2^n / sqrt(det(gamma + I)).
double vacuum_overlap(const CovarianceMatrix& gamma);

// Exact probability of one click pattern for a 4-mode state gamma taken just
// before the detectors, by inclusion-exclusion over the clicking detectors.
double pattern_probability(const CovarianceMatrix& gamma, ClickPattern pattern,
                           const DetectorModel& detectors);

// All 16 pattern probabilities; vacuum overlaps of the 16 detector subsets
// are computed once per call.
ClickDistribution click_distribution(const CovarianceMatrix& gamma,
                                     const DetectorModel& detectors);

}  // namespace spdcbell
