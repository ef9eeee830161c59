#include "spdcbell/estimation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <thread>

#include "spdcbell/error.hpp"

namespace spdcbell {

namespace {

// Mean photon number per detector above which multi-photon events make the
// transmission-matrix model unreliable.
constexpr double kValidityLambda = 0.1;
constexpr double kIllConditionedLimit = 1e12;

void require_efficiencies(std::span<const double> eta, std::size_t expected,
                          const char* what) {
  if (expected != 0 && eta.size() != expected) {
    throw_invalid_argument(std::string(what) + ": expected " +
                           std::to_string(expected) + " efficiencies");
  }
  for (double e : eta) {
    if (!(e >= 0.0 && e <= 1.0)) {
      throw_invalid_argument(std::string(what) + ": efficiencies must lie in [0, 1]");
    }
  }
}

// Orthonormal basis of {v : sum(v) = 0} in R^k, from the Householder
// reflector that maps (1,...,1)/sqrt(k) onto e_1.
Eigen::MatrixXd sum_zero_basis(int k) {
  Eigen::VectorXd v = Eigen::VectorXd::Constant(k, 1.0 / std::sqrt(double(k)));
  v(0) -= 1.0;
  const double vv = v.squaredNorm();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(k, k);
  if (vv > 0.0) h -= (2.0 / vv) * v * v.transpose();
  return h.rightCols(k - 1);
}

// min |T_F y - p| subject to sum(y) = 1 over the free columns.
Eigen::VectorXd solve_on_free_set(const Eigen::MatrixXd& t,
                                  const Eigen::VectorXd& p,
                                  const std::vector<int>& free) {
  const int k = static_cast<int>(free.size());
  Eigen::MatrixXd tf(t.rows(), k);
  for (int c = 0; c < k; ++c) tf.col(c) = t.col(free[static_cast<std::size_t>(c)]);
  Eigen::VectorXd y = Eigen::VectorXd::Constant(k, 1.0 / k);
  if (k == 1) return y;
  const Eigen::MatrixXd basis = sum_zero_basis(k);
  const Eigen::MatrixXd a = tf * basis;
  const Eigen::VectorXd rhs = p - tf * y;
  const Eigen::VectorXd z = a.colPivHouseholderQr().solve(rhs);
  y += basis * z;
  return y;
}

struct Kkt {
  double residual;
  int most_negative;  // index in the zero set with the most negative multiplier
  double most_negative_value;
};

Kkt kkt_check(const Eigen::MatrixXd& t, const Eigen::VectorXd& p,
              const Eigen::VectorXd& q, const std::vector<bool>& at_zero) {
  const Eigen::VectorXd g = 2.0 * t.transpose() * (t * q - p);
  double mu = 0.0;
  int n_free = 0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (!at_zero[static_cast<std::size_t>(i)]) {
      mu += g(i);
      ++n_free;
    }
  }
  mu /= std::max(n_free, 1);
  Kkt kkt{0.0, -1, 0.0};
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    if (at_zero[static_cast<std::size_t>(i)]) {
      const double multiplier = g(i) - mu;
      kkt.residual = std::max(kkt.residual, -multiplier);
      if (multiplier < kkt.most_negative_value) {
        kkt.most_negative_value = multiplier;
        kkt.most_negative = static_cast<int>(i);
      }
    } else {
      kkt.residual = std::max(kkt.residual, std::abs(g(i) - mu));
    }
    kkt.residual = std::max(kkt.residual, -q(i));
  }
  kkt.residual = std::max(kkt.residual, std::abs(q.sum() - 1.0));
  return kkt;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::array<std::array<const CountRecord*, 2>, 2> by_setting(
    std::span<const CountRecord> records) {
  if (records.size() != 4) {
    throw_invalid_argument("expected exactly four count records (settings 11, 12, 21, 22)");
  }
  std::array<std::array<const CountRecord*, 2>, 2> table{};
  for (const auto& r : records) {
    r.validate();
    auto& slot = table[static_cast<std::size_t>(r.alice_index())]
                      [static_cast<std::size_t>(r.bob_index())];
    if (slot) {
      throw_invalid_argument("duplicate count record for setting " +
                             std::to_string(r.setting));
    }
    slot = &r;
  }
  for (const auto& row : table) {
    for (const auto* slot : row) {
      if (!slot) throw_invalid_argument("missing count record for a setting");
    }
  }
  return table;
}

}  // namespace

KlyshkoEstimate klyshko_efficiency(double coincidences, double singles_first,
                                   double singles_second) {
  if (!(singles_first > 0.0) || !(singles_second > 0.0)) {
    throw_invalid_argument("klyshko_efficiency: singles counts must be positive");
  }
  if (!(coincidences >= 0.0)) {
    throw_invalid_argument("klyshko_efficiency: coincidences must be >= 0");
  }
  if (coincidences > std::min(singles_first, singles_second)) {
    throw_invalid_argument("klyshko_efficiency: coincidences exceed singles");
  }
  return {coincidences / singles_second, coincidences / singles_first};
}

double lambda_from_singles(double singles_fraction, double eta) {
  if (!(singles_fraction >= 0.0 && singles_fraction < 1.0)) {
    throw_invalid_argument("lambda_from_singles: singles fraction must lie in [0, 1)");
  }
  if (!(eta > 0.0 && eta <= 1.0)) {
    throw_invalid_argument("lambda_from_singles: efficiency must lie in (0, 1]");
  }
  return singles_fraction / (eta * (1.0 - singles_fraction));
}

TransmissionMatrix build_transmission_matrix(std::span<const double> efficiencies) {
  require_efficiencies(efficiencies, 0, "build_transmission_matrix");
  if (efficiencies.empty() || efficiencies.size() > 16) {
    throw_invalid_argument("build_transmission_matrix: need 1..16 detectors");
  }
  const int d = static_cast<int>(efficiencies.size());
  const int n = 1 << d;
  TransmissionMatrix t;
  t.eta_.assign(efficiencies.begin(), efficiencies.end());
  t.t_ = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    // Observed patterns are subsets of the ideal one.
    for (int i = j;; i = (i - 1) & j) {
      double v = 1.0;
      for (int l = 0; l < d; ++l) {
        if ((j >> l) & 1) {
          const double eta = efficiencies[static_cast<std::size_t>(l)];
          v *= ((i >> l) & 1) ? eta : 1.0 - eta;
        }
      }
      t.t_(i, j) = v;
      if (i == 0) break;
    }
  }
  return t;
}

SimplexLeastSquaresResult solve_simplex_least_squares(const Eigen::MatrixXd& t,
                                                      const Eigen::VectorXd& p) {
  const Eigen::Index n = t.cols();
  if (n == 0 || t.rows() != p.size()) {
    throw_invalid_argument("solve_simplex_least_squares: dimension mismatch");
  }
  if (!t.allFinite() || !p.allFinite()) {
    throw_invalid_argument("solve_simplex_least_squares: non-finite input");
  }

  SimplexLeastSquaresResult result;
  result.at_zero.assign(static_cast<std::size_t>(n), false);
  Eigen::VectorXd q = Eigen::VectorXd::Constant(n, 1.0 / double(n));

  constexpr double kMultiplierTolerance = 1e-13;
  const int max_iterations = 50 * static_cast<int>(n) + 100;
  bool optimal = false;
  while (result.iterations < max_iterations) {
    ++result.iterations;
    std::vector<int> free;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!result.at_zero[static_cast<std::size_t>(i)]) free.push_back(static_cast<int>(i));
    }
    const Eigen::VectorXd y = solve_on_free_set(t, p, free);

    // Largest step towards y that keeps q >= 0.
    double alpha = 1.0;
    int blocking = -1;
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double qi = q(free[k]);
      const double di = y(static_cast<Eigen::Index>(k)) - qi;
      if (di < 0.0 && y(static_cast<Eigen::Index>(k)) < 0.0) {
        const double step = qi / -di;
        if (step < alpha) {
          alpha = step;
          blocking = free[k];
        }
      }
    }
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double qi = q(free[k]);
      q(free[k]) = qi + alpha * (y(static_cast<Eigen::Index>(k)) - qi);
    }
    if (blocking >= 0) {
      result.at_zero[static_cast<std::size_t>(blocking)] = true;
      q(blocking) = 0.0;
      // Other entries that reached zero at the same step join as well.
      for (int i : free) {
        if (q(i) <= 0.0) {
          result.at_zero[static_cast<std::size_t>(i)] = true;
          q(i) = 0.0;
        }
      }
      continue;
    }

    const Kkt kkt = kkt_check(t, p, q, result.at_zero);
    if (kkt.most_negative < 0 || kkt.most_negative_value >= -kMultiplierTolerance) {
      optimal = true;
      break;
    }
    result.at_zero[static_cast<std::size_t>(kkt.most_negative)] = false;
  }
  if (!optimal) {
    throw Error(ErrorCode::kNumericalFailure,
                "solve_simplex_least_squares: active-set iteration limit reached");
  }

  result.q = q;
  result.objective = (t * q - p).squaredNorm();
  result.kkt_residual = kkt_check(t, p, q, result.at_zero).residual;
  return result;
}

CompensationResult compensate_distribution(const ClickDistribution& p_exp,
                                           const TransmissionMatrix& t) {
  p_exp.require_normalized();
  if (t.matrix().rows() != kPatterns) {
    throw_invalid_argument("compensate_distribution: expected a 16 x 16 transmission matrix");
  }
  Eigen::VectorXd p(kPatterns);
  for (int i = 0; i < kPatterns; ++i) p(i) = p_exp[i];

  const auto solved = solve_simplex_least_squares(t.matrix(), p);
  CompensationResult out;
  for (int i = 0; i < kPatterns; ++i) {
    out.q_ideal[i] = solved.q(i);
    out.active[static_cast<std::size_t>(i)] = solved.at_zero[static_cast<std::size_t>(i)];
  }
  out.residual = solved.objective;
  out.kkt_residual = solved.kkt_residual;
  out.iterations = solved.iterations;

  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(t.matrix());
  const auto& sv = svd.singularValues();
  const double smallest = sv(sv.size() - 1);
  out.condition_estimate =
      smallest > 0.0 ? sv(0) / smallest : std::numeric_limits<double>::infinity();
  const bool zero_eta = std::any_of(t.efficiencies().begin(), t.efficiencies().end(),
                                    [](double e) { return e == 0.0; });
  out.ill_conditioned = zero_eta || !(out.condition_estimate < kIllConditionedLimit);
  return out;
}

void CountRecord::validate() const {
  if (setting != 11 && setting != 12 && setting != 21 && setting != 22) {
    throw_invalid_argument("CountRecord: setting must be one of 11, 12, 21, 22");
  }
  std::uint64_t sum = 0;
  for (auto c : counts) sum += c;
  if (sum != total) {
    throw_invalid_argument("CountRecord: pattern counts for setting " +
                           std::to_string(setting) + " sum to " +
                           std::to_string(sum) + ", total is " +
                           std::to_string(total));
  }
}

EmpiricalDistribution empirical_distribution(const CountRecord& record) {
  record.validate();
  if (record.total == 0) {
    throw_invalid_argument("empirical_distribution: no events recorded");
  }
  EmpiricalDistribution out;
  const double n = static_cast<double>(record.total);
  for (int i = 0; i < kPatterns; ++i) {
    const double p = static_cast<double>(record.counts[static_cast<std::size_t>(i)]) / n;
    out.p[i] = p;
    out.standard_error[static_cast<std::size_t>(i)] = std::sqrt(p * (1.0 - p) / n);
  }
  return out;
}

PairCounts pair_counts(const CountRecord& record, int first_detector,
                       int second_detector) {
  record.validate();
  if (first_detector < 0 || first_detector >= kDetectors || second_detector < 0 ||
      second_detector >= kDetectors || first_detector == second_detector) {
    throw_invalid_argument("pair_counts: need two distinct detector indices in 0..3");
  }
  PairCounts out;
  out.total = record.total;
  for (int k = 0; k < kPatterns; ++k) {
    const ClickPattern pattern(k);
    const auto c = record.counts[static_cast<std::size_t>(k)];
    const bool a = pattern.clicks(first_detector);
    const bool b = pattern.clicks(second_detector);
    if (a) out.singles_first += c;
    if (b) out.singles_second += c;
    if (a && b) out.coincidences += c;
  }
  return out;
}

CompensatedChsh compensated_chsh_from_distributions(
    const std::array<std::array<ClickDistribution, 2>, 2>& p_exp,
    std::span<const double> efficiencies, const OutcomeAssignment& assignment) {
  require_efficiencies(efficiencies, kDetectors, "compensated_chsh");
  const TransmissionMatrix t = build_transmission_matrix(efficiencies);
  CompensatedChsh out;
  std::array<std::array<ClickDistribution, 2>, 2> ideal;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      out.per_setting[i][j] = compensate_distribution(p_exp[i][j], t);
      ideal[i][j] = out.per_setting[i][j].q_ideal;
      // Per-detector mean photon number from the singles rate.
      for (int l = 0; l < kDetectors; ++l) {
        const double eta = efficiencies[static_cast<std::size_t>(l)];
        double singles = 0.0;
        for (int k = 0; k < kPatterns; ++k) {
          if (ClickPattern(k).clicks(l)) singles += p_exp[i][j][k];
        }
        if (eta > 0.0 && singles < 1.0 &&
            lambda_from_singles(singles, eta) > kValidityLambda) {
          out.outside_validity = true;
        }
      }
    }
  }
  out.report = chsh_from_distributions(ideal, assignment);
  out.s = out.report.s;
  return out;
}

CompensatedChsh compensated_chsh(std::span<const CountRecord> records,
                                 std::span<const double> efficiencies,
                                 const OutcomeAssignment& assignment) {
  const auto table = by_setting(records);
  std::array<std::array<ClickDistribution, 2>, 2> p;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      p[i][j] = empirical_distribution(*table[i][j]).p;
    }
  }
  return compensated_chsh_from_distributions(p, efficiencies, assignment);
}

ChshReport empirical_chsh(std::span<const CountRecord> records,
                          const OutcomeAssignment& assignment) {
  const auto table = by_setting(records);
  std::array<std::array<ClickDistribution, 2>, 2> p;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      p[i][j] = empirical_distribution(*table[i][j]).p;
    }
  }
  return chsh_from_distributions(p, assignment);
}

BootstrapSummary bootstrap_compensated_chsh(std::span<const CountRecord> records,
                                            std::span<const double> efficiencies,
                                            int resamples, std::uint64_t seed,
                                            const OutcomeAssignment& assignment,
                                            int jobs) {
  if (resamples < 2) {
    throw_invalid_argument("bootstrap_compensated_chsh: need at least two resamples");
  }
  const auto table = by_setting(records);
  std::array<std::array<ClickDistribution, 2>, 2> p;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t j = 0; j < 2; ++j) p[i][j] = empirical_distribution(*table[i][j]).p;
  }

  std::vector<double> values(static_cast<std::size_t>(resamples));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::atomic<bool> failed{false};
  auto worker = [&] {
    for (int r = next++; r < resamples && !failed; r = next++) {
      try {
        std::vector<CountRecord> drawn;
        for (std::size_t i = 0; i < 2; ++i) {
          for (std::size_t j = 0; j < 2; ++j) {
            const CountRecord& rec = *table[i][j];
            drawn.push_back(sample_counts(
                p[i][j], rec.total, rec.setting,
                mix_seed(seed, static_cast<std::uint64_t>(r) * 4 + i * 2 + j)));
          }
        }
        values[static_cast<std::size_t>(r)] =
            compensated_chsh(drawn, efficiencies, assignment).s;
      } catch (...) {
        if (!failed.exchange(true)) failure = std::current_exception();
      }
    }
  };
  const int threads = std::clamp(jobs, 1, resamples);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int k = 0; k < threads; ++k) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  BootstrapSummary out;
  out.resamples = resamples;
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / resamples;
  double ss = 0.0;
  for (double v : values) ss += (v - out.mean) * (v - out.mean);
  out.standard_error = std::sqrt(ss / (resamples - 1));
  return out;
}

CountRecord sample_counts(const ClickDistribution& dist, std::uint64_t trials,
                          int setting, std::uint64_t seed) {
  dist.require_normalized();
  std::mt19937_64 rng(seed);
  CountRecord out;
  out.setting = setting;
  out.total = trials;
  std::uint64_t remaining = trials;
  double mass = 1.0;
  for (int k = 0; k < kPatterns - 1 && remaining > 0; ++k) {
    const double pk = std::max(dist[k], 0.0);
    const double prob = mass > 0.0 ? std::clamp(pk / mass, 0.0, 1.0) : 0.0;
    std::binomial_distribution<std::uint64_t> draw(remaining, prob);
    const std::uint64_t c = draw(rng);
    out.counts[static_cast<std::size_t>(k)] = c;
    remaining -= c;
    mass -= pk;
  }
  out.counts[kPatterns - 1] += remaining;
  out.validate();
  return out;
}

CountRecord expected_counts(const ClickDistribution& dist, std::uint64_t trials,
                            int setting) {
  dist.require_normalized();
  CountRecord out;
  out.setting = setting;
  out.total = trials;
  std::array<double, kPatterns> remainder{};
  std::uint64_t assigned = 0;
  for (int k = 0; k < kPatterns; ++k) {
    const double exact = std::max(dist[k], 0.0) * static_cast<double>(trials);
    const double whole = std::floor(exact);
    out.counts[static_cast<std::size_t>(k)] = static_cast<std::uint64_t>(whole);
    remainder[static_cast<std::size_t>(k)] = exact - whole;
    assigned += static_cast<std::uint64_t>(whole);
  }
  std::array<int, kPatterns> order;
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return remainder[static_cast<std::size_t>(a)] > remainder[static_cast<std::size_t>(b)];
  });
  for (std::size_t k = 0; assigned < trials; k = (k + 1) % kPatterns) {
    ++out.counts[static_cast<std::size_t>(order[k])];
    ++assigned;
  }
  while (assigned > trials) {
    // Only reachable through rounding of a sum marginally above one.
    auto it = std::max_element(out.counts.begin(), out.counts.end());
    --*it;
    --assigned;
  }
  out.validate();
  return out;
}

}  // namespace spdcbell
