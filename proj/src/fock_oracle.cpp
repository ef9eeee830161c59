#include "spdcbell/fock_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "spdcbell/error.hpp"

namespace spdcbell::fock {

namespace {

constexpr double kTargetDeficit = 1e-10;

double binomial(int n, int k) {
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) -
                  std::lgamma(n - k + 1.0));
}

// Amplitudes <k, N-k| U |a, b> for k = 0..N with N = a + b.
std::vector<double> beamsplitter_row(int a, int b, double c, double s) {
  const int n = a + b;
  std::vector<double> out(static_cast<std::size_t>(n + 1), 0.0);
  // (c A + s B)^a (-s A + c B)^b: coefficient of A^k B^(n-k).
  for (int p = 0; p <= a; ++p) {
    const double left = binomial(a, p) * std::pow(c, p) * std::pow(s, a - p);
    if (left == 0.0) continue;
    for (int q = 0; q <= b; ++q) {
      const double right =
          binomial(b, q) * std::pow(-s, q) * std::pow(c, b - q);
      out[static_cast<std::size_t>(p + q)] += left * right;
    }
  }
  const double log_norm = std::lgamma(a + 1.0) + std::lgamma(b + 1.0);
  for (int k = 0; k <= n; ++k) {
    out[static_cast<std::size_t>(k)] *=
        std::exp(0.5 * (std::lgamma(k + 1.0) + std::lgamma(n - k + 1.0) - log_norm));
  }
  return out;
}

void require_mode(int mode, const char* what) {
  if (mode < 0 || mode >= kSourceModes) {
    throw_invalid_argument(std::string(what) + ": mode index out of range");
  }
}

std::complex<double> lookup(const FockState& state, const Occupation& occ) {
  for (int v : occ) {
    if (v < 0) return {};
  }
  const auto it = state.amplitudes.find(occ);
  return it == state.amplitudes.end() ? std::complex<double>{} : it->second;
}

}  // namespace

double FockState::norm_squared() const {
  double s = 0.0;
  for (const auto& [occ, amp] : amplitudes) s += std::norm(amp);
  return s;
}

double JointPhotonDistribution::total() const {
  double s = 0.0;
  for (const auto& [occ, p] : probabilities) s += p;
  return s;
}

std::vector<std::complex<double>> tmsv_amplitudes(double lambda, double phase,
                                                  int cutoff) {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw_invalid_argument("tmsv_amplitudes: lambda must be finite and >= 0");
  }
  if (cutoff < 0) throw_invalid_argument("tmsv_amplitudes: cutoff must be >= 0");
  const double t = std::sqrt(lambda / (1.0 + lambda));  // tanh r
  const double inv_cosh = 1.0 / std::sqrt(1.0 + lambda);
  const std::complex<double> ratio = std::polar(t, phase);
  std::vector<std::complex<double>> amps;
  std::complex<double> a = inv_cosh;
  for (int n = 0; n <= cutoff; ++n) {
    amps.push_back(a);
    a *= ratio;
  }
  return amps;
}

double tmsv_tail(double lambda, int cutoff) {
  return std::pow(lambda / (1.0 + lambda), cutoff + 1);
}

FockState entangled_source_state(double lambda1, double lambda2, int cutoff) {
  const auto s1 = tmsv_amplitudes(lambda1, 0.0, cutoff);
  const auto s2 = tmsv_amplitudes(lambda2, std::numbers::pi, cutoff);
  FockState state;
  state.cutoff = cutoff;
  for (int n1 = 0; n1 <= cutoff; ++n1) {
    for (int n2 = 0; n2 <= cutoff; ++n2) {
      // (H_A, V_A, H_B, V_B) = (n1, n2, n2, n1)
      state.amplitudes[{n1, n2, n2, n1}] =
          s1[static_cast<std::size_t>(n1)] * s2[static_cast<std::size_t>(n2)];
    }
  }
  return state;
}

FockState apply_beamsplitter_fock(const FockState& state, int mode_i,
                                  int mode_j, double theta) {
  require_mode(mode_i, "apply_beamsplitter_fock");
  require_mode(mode_j, "apply_beamsplitter_fock");
  if (mode_i == mode_j) {
    throw_invalid_argument("apply_beamsplitter_fock: modes must be distinct");
  }
  if (!std::isfinite(theta)) {
    throw_invalid_argument("apply_beamsplitter_fock: angle must be finite");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  std::map<std::pair<int, int>, std::vector<double>> rows;
  FockState out;
  out.cutoff = state.cutoff;
  for (const auto& [occ, amp] : state.amplitudes) {
    const int a = occ[static_cast<std::size_t>(mode_i)];
    const int b = occ[static_cast<std::size_t>(mode_j)];
    auto it = rows.find({a, b});
    if (it == rows.end()) it = rows.emplace(std::pair{a, b}, beamsplitter_row(a, b, c, s)).first;
    const auto& row = it->second;
    Occupation target = occ;
    for (int k = 0; k <= a + b; ++k) {
      const double coeff = row[static_cast<std::size_t>(k)];
      if (coeff == 0.0) continue;
      target[static_cast<std::size_t>(mode_i)] = k;
      target[static_cast<std::size_t>(mode_j)] = a + b - k;
      out.amplitudes[target] += coeff * amp;
    }
  }
  return out;
}

JointPhotonDistribution photon_distribution(const FockState& state) {
  JointPhotonDistribution out;
  for (const auto& [occ, amp] : state.amplitudes) {
    const double p = std::norm(amp);
    if (p > 0.0) out.probabilities[occ] = p;
  }
  return out;
}

JointPhotonDistribution apply_binomial_loss(const JointPhotonDistribution& pnd,
                                            int mode, double eta) {
  require_mode(mode, "apply_binomial_loss");
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw_invalid_argument("apply_binomial_loss: eta must lie in [0, 1]");
  }
  JointPhotonDistribution out;
  for (const auto& [occ, p] : pnd.probabilities) {
    const int n = occ[static_cast<std::size_t>(mode)];
    Occupation target = occ;
    for (int m = 0; m <= n; ++m) {
      double w;
      if (eta == 1.0) {
        w = m == n ? 1.0 : 0.0;
      } else if (eta == 0.0) {
        w = m == 0 ? 1.0 : 0.0;
      } else {
        w = binomial(n, m) * std::pow(eta, m) * std::pow(1.0 - eta, n - m);
      }
      if (w == 0.0) continue;
      target[static_cast<std::size_t>(mode)] = m;
      out.probabilities[target] += p * w;
    }
  }
  return out;
}

ClickDistribution measure_on_off(const JointPhotonDistribution& pnd,
                                 const DetectorModel& detectors) {
  detectors.validate();
  ClickDistribution dist;
  for (const auto& [occ, p] : pnd.probabilities) {
    std::array<double, kDetectors> off{};
    for (int l = 0; l < kDetectors; ++l) {
      const bool vacuum = occ[static_cast<std::size_t>(detector_mode(l))] == 0;
      off[static_cast<std::size_t>(l)] =
          vacuum ? 1.0 - detectors.dark_count[static_cast<std::size_t>(l)] : 0.0;
    }
    for (int k = 0; k < kPatterns; ++k) {
      double w = p;
      for (int l = 0; l < kDetectors; ++l) {
        const double o = off[static_cast<std::size_t>(l)];
        w *= ((k >> l) & 1) ? 1.0 - o : o;
      }
      dist[k] += w;
    }
  }
  return dist;
}

CovarianceMatrix second_moments(const FockState& state) {
  constexpr int n = kSourceModes;
  // <a_i^dag a_j> and <a_i a_j>
  std::complex<double> na[n][n]{};
  std::complex<double> ma[n][n]{};
  for (const auto& [occ, amp] : state.amplitudes) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        // (a_j psi)(o) = sqrt(o_j + 1) psi(o + e_j), evaluated at o = occ - e_j.
        Occupation lowered = occ;
        --lowered[static_cast<std::size_t>(j)];
        if (lowered[static_cast<std::size_t>(j)] < 0) continue;
        const std::complex<double> aj_psi =
            std::sqrt(double(occ[static_cast<std::size_t>(j)])) * amp;
        // <a_i psi | a_j psi>
        Occupation ai_src = lowered;
        ++ai_src[static_cast<std::size_t>(i)];
        const std::complex<double> ai_psi =
            std::sqrt(double(ai_src[static_cast<std::size_t>(i)])) *
            lookup(state, ai_src);
        na[i][j] += std::conj(ai_psi) * aj_psi;
        // <a_i^dag psi | a_j psi>, (a_i^dag psi)(o) = sqrt(o_i) psi(o - e_i)
        Occupation dag_src = lowered;
        --dag_src[static_cast<std::size_t>(i)];
        const std::complex<double> dag_psi =
            std::sqrt(double(lowered[static_cast<std::size_t>(i)])) *
            lookup(state, dag_src);
        ma[i][j] += std::conj(dag_psi) * aj_psi;
      }
    }
  }
  Eigen::MatrixXd g(2 * n, 2 * n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double delta = i == j ? 1.0 : 0.0;
      g(i, j) = delta + 2.0 * ma[i][j].real() + 2.0 * na[i][j].real();
      g(n + i, n + j) = delta - 2.0 * ma[i][j].real() + 2.0 * na[i][j].real();
      g(i, n + j) = 2.0 * ma[i][j].imag() + 2.0 * na[i][j].imag();
      g(n + j, i) = g(i, n + j);
    }
  }
  // Symmetrize rounding noise before validation.
  g = 0.5 * (g + g.transpose()).eval();
  return CovarianceMatrix(std::move(g));
}

OracleDistribution oracle_click_distribution(const SystemConfig& config,
                                             int alice_setting, int bob_setting,
                                             int cutoff) {
  config.validate();
  if (alice_setting < 0 || alice_setting > 1 || bob_setting < 0 || bob_setting > 1) {
    throw_invalid_argument("oracle_click_distribution: setting index must be 0 or 1");
  }
  FockState state = entangled_source_state(config.lambda1, config.lambda2, cutoff);
  state = apply_beamsplitter_fock(state, index_of(Mode::kHA), index_of(Mode::kVA),
                                  config.alice_angles[static_cast<std::size_t>(alice_setting)]);
  state = apply_beamsplitter_fock(state, index_of(Mode::kHB), index_of(Mode::kVB),
                                  config.bob_angles[static_cast<std::size_t>(bob_setting)]);

  const double nu = config.dark_count;
  OracleDistribution out;
  for (const auto& [occ, amp] : state.amplitudes) {
    const double p = std::norm(amp);
    if (p == 0.0) continue;
    std::array<double, kDetectors> off{};
    for (int l = 0; l < kDetectors; ++l) {
      const int photons = occ[static_cast<std::size_t>(detector_mode(l))];
      const double eta = config.efficiency[static_cast<std::size_t>(l)];
      off[static_cast<std::size_t>(l)] = (1.0 - nu) * std::pow(1.0 - eta, photons);
    }
    for (int k = 0; k < kPatterns; ++k) {
      double w = p;
      for (int l = 0; l < kDetectors; ++l) {
        const double o = off[static_cast<std::size_t>(l)];
        w *= ((k >> l) & 1) ? 1.0 - o : o;
      }
      out.p[k] += w;
    }
  }
  // 1 - (1 - t1)(1 - t2) without cancellation.
  const double t1 = tmsv_tail(config.lambda1, cutoff);
  const double t2 = tmsv_tail(config.lambda2, cutoff);
  out.tail_deficit = t1 + t2 - t1 * t2;
  out.deficit_above_target = out.tail_deficit >= kTargetDeficit;
  return out;
}

int default_cutoff(double max_lambda) {
  if (!(max_lambda >= 0.0) || !std::isfinite(max_lambda)) {
    throw_invalid_argument("default_cutoff: lambda must be finite and >= 0");
  }
  if (max_lambda <= 0.3) return 25;
  if (max_lambda <= 1.0) return 60;
  const double t = max_lambda / (1.0 + max_lambda);
  // smallest c with t^(c+1) < target
  const int c = static_cast<int>(std::floor(std::log(kTargetDeficit) / std::log(t)));
  return std::max(60, c);
}

}  // namespace spdcbell::fock
