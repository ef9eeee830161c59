#include "spdcbell/detection.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdcbell/error.hpp"

namespace spdcbell {

namespace {

using SmallMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2 * kSourceModes,
                  2 * kSourceModes>;

constexpr double kProbabilityTolerance = 1e-9;

double overlap_from_determinant(double det, int n_modes) {
  if (!(det > 0.0) || !std::isfinite(det)) {
    throw Error(ErrorCode::kInvalidState,
                "vacuum_overlap: det(gamma + I) = " + std::to_string(det) +
                    " is not positive; covariance matrix is not physical");
  }
  return std::ldexp(1.0, n_modes) / std::sqrt(det);
}

// Vacuum overlap of the detectors in `mask` (bit l = D_{l+1}).
double detector_subset_overlap(const Eigen::MatrixXd& g, int mask) {
  if (mask == 0) return 1.0;
  int modes[kDetectors];
  int m = 0;
  for (int l = 0; l < kDetectors; ++l) {
    if ((mask >> l) & 1) modes[m++] = detector_mode(l);
  }
  const int n = kSourceModes;
  SmallMatrix sub(2 * m, 2 * m);
  for (int r = 0; r < 2 * m; ++r) {
    const int src_r = modes[r % m] + (r / m) * n;
    for (int c = 0; c < 2 * m; ++c) {
      sub(r, c) = g(src_r, modes[c % m] + (c / m) * n);
    }
    sub(r, r) += 1.0;
  }
  return overlap_from_determinant(sub.partialPivLu().determinant(), m);
}

void require_four_modes(const CovarianceMatrix& gamma, const char* what) {
  if (gamma.n_modes() != kSourceModes) {
    throw_invalid_argument(std::string(what) +
                           ": expected a 4-mode covariance matrix");
  }
}

double combine(const std::array<double, kPatterns>& overlap, int pattern,
               const DetectorModel& detectors) {
  const int on = pattern;
  const int off = ~pattern & (kPatterns - 1);
  double off_weight = 1.0;
  for (int l = 0; l < kDetectors; ++l) {
    if ((off >> l) & 1) off_weight *= 1.0 - detectors.dark_count[static_cast<std::size_t>(l)];
  }
  // Sum over subsets S of the on-set.
  double total = 0.0;
  for (int s = on;; s = (s - 1) & on) {
    double w = off_weight;
    int size = 0;
    for (int l = 0; l < kDetectors; ++l) {
      if ((s >> l) & 1) {
        w *= 1.0 - detectors.dark_count[static_cast<std::size_t>(l)];
        ++size;
      }
    }
    total += (size % 2 == 0 ? w : -w) * overlap[static_cast<std::size_t>(s | off)];
    if (s == 0) break;
  }
  if (total < -kProbabilityTolerance || total > 1.0 + kProbabilityTolerance ||
      !std::isfinite(total)) {
    throw Error(ErrorCode::kInvalidState,
                "pattern_probability: pattern " + std::to_string(pattern) +
                    " evaluated to " + std::to_string(total) +
                    ", outside [0, 1] beyond numerical tolerance");
  }
  return std::clamp(total, 0.0, 1.0);
}

}  // namespace

void DetectorModel::validate() const {
  for (double nu : dark_count) {
    if (!(nu >= 0.0 && nu < 1.0)) {
      throw_invalid_argument("DetectorModel: dark-count probability must lie in [0, 1)");
    }
  }
}

double ClickDistribution::sum() const {
  double s = 0.0;
  for (double v : p) s += v;
  return s;
}

void ClickDistribution::require_normalized(double tolerance) const {
  for (double v : p) {
    if (!(v >= -tolerance && v <= 1.0 + tolerance)) {
      throw_invalid_argument("ClickDistribution: entry outside [0, 1]");
    }
  }
  if (std::abs(sum() - 1.0) > tolerance) {
    throw_invalid_argument("ClickDistribution: entries sum to " +
                           std::to_string(sum()) + ", expected 1");
  }
}

double vacuum_overlap(const CovarianceMatrix& gamma) {
  const int n = gamma.n_modes();
  const Eigen::MatrixXd shifted =
      gamma.entries() + Eigen::MatrixXd::Identity(2 * n, 2 * n);
  return overlap_from_determinant(determinant(shifted), n);
}

double pattern_probability(const CovarianceMatrix& gamma, ClickPattern pattern,
                           const DetectorModel& detectors) {
  require_four_modes(gamma, "pattern_probability");
  detectors.validate();
  if (pattern.index() < 0 || pattern.index() >= kPatterns) {
    throw_invalid_argument("pattern_probability: pattern index out of range");
  }
  // Only subsets containing the whole off-set are needed.
  const int off = ~pattern.index() & (kPatterns - 1);
  std::array<double, kPatterns> overlap{};
  for (int mask = 0; mask < kPatterns; ++mask) {
    if ((mask & off) == off) {
      overlap[static_cast<std::size_t>(mask)] =
          detector_subset_overlap(gamma.entries(), mask);
    }
  }
  return combine(overlap, pattern.index(), detectors);
}

ClickDistribution click_distribution(const CovarianceMatrix& gamma,
                                     const DetectorModel& detectors) {
  require_four_modes(gamma, "click_distribution");
  detectors.validate();
  std::array<double, kPatterns> overlap{};
  for (int mask = 0; mask < kPatterns; ++mask) {
    overlap[static_cast<std::size_t>(mask)] =
        detector_subset_overlap(gamma.entries(), mask);
  }
  ClickDistribution dist;
  for (int pattern = 0; pattern < kPatterns; ++pattern) {
    dist[pattern] = combine(overlap, pattern, detectors);
  }
  return dist;
}

}  // namespace spdcbell
