#include "spdcbell/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "spdcbell/error.hpp"

namespace spdcbell {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_lambda(Parameter p) {
  return p == Parameter::kLambda1 || p == Parameter::kLambda2;
}

double& field(SystemConfig& config, Parameter p) {
  switch (p) {
    case Parameter::kLambda1: return config.lambda1;
    case Parameter::kLambda2: return config.lambda2;
    case Parameter::kAliceAngle1: return config.alice_angles[0];
    case Parameter::kAliceAngle2: return config.alice_angles[1];
    case Parameter::kBobAngle1: return config.bob_angles[0];
    case Parameter::kBobAngle2: return config.bob_angles[1];
  }
  throw_invalid_argument("unknown parameter");
}

std::string format_point(std::span<const double> x) {
  std::ostringstream os;
  os.precision(12);
  os << '[';
  for (std::size_t k = 0; k < x.size(); ++k) os << (k ? ", " : "") << x[k];
  os << ']';
  return os.str();
}

// Radical inverse of `index` in base `base` (Halton sequence component).
double radical_inverse(std::uint64_t index, std::uint64_t base) {
  double result = 0.0;
  double f = 1.0 / static_cast<double>(base);
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= static_cast<double>(base);
  }
  return result;
}

// SplitMix64; portable across standard libraries, unlike the <random>
// distributions.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

// Maps unconstrained search coordinates onto a SystemConfig. Capped lambdas
// use lambda = cap * sin^2(u); uncapped ones lambda = u^2, clipped at the
// ceiling.
class Parameterization {
 public:
  Parameterization(const OptimizationProblem& problem, double ceiling)
      : problem_(problem), ceiling_(ceiling) {}

  std::size_t dimension() const { return problem_.free.size(); }

  SystemConfig to_config(std::span<const double> u) const {
    SystemConfig config = problem_.fixed;
    for (std::size_t k = 0; k < problem_.free.size(); ++k) {
      const FreeParameter& fp = problem_.free[k];
      if (is_lambda(fp.parameter)) {
        field(config, fp.parameter) =
            std::isfinite(fp.upper)
                ? fp.upper * std::sin(u[k]) * std::sin(u[k])
                : std::min(u[k] * u[k], ceiling_);
      } else {
        field(config, fp.parameter) = u[k];
      }
    }
    return config;
  }

  // Search coordinate for a lambda value in [0, upper].
  double lambda_coordinate(const FreeParameter& fp, double lambda) const {
    if (std::isfinite(fp.upper)) {
      return fp.upper > 0.0 ? std::asin(std::sqrt(std::clamp(lambda / fp.upper, 0.0, 1.0)))
                            : 0.0;
    }
    return std::sqrt(lambda);
  }

  // Start point from a point of the unit cube.
  std::vector<double> start_point(std::span<const double> unit) const {
    std::vector<double> u(dimension());
    for (std::size_t k = 0; k < dimension(); ++k) {
      const FreeParameter& fp = problem_.free[k];
      if (is_lambda(fp.parameter)) {
        const double box = std::min(fp.upper, 1.5);
        u[k] = lambda_coordinate(fp, box * unit[k]);
      } else {
        u[k] = -0.5 * kPi + kPi * unit[k];
      }
    }
    return u;
  }

 private:
  const OptimizationProblem& problem_;
  double ceiling_;
};

bool all_angles_free(const OptimizationProblem& problem) {
  int count = 0;
  for (const auto& fp : problem.free) count += is_lambda(fp.parameter) ? 0 : 1;
  return count == 4;
}

bool lambdas_exchangeable(const OptimizationProblem& problem) {
  const FreeParameter* l1 = nullptr;
  const FreeParameter* l2 = nullptr;
  for (const auto& fp : problem.free) {
    if (fp.parameter == Parameter::kLambda1) l1 = &fp;
    if (fp.parameter == Parameter::kLambda2) l2 = &fp;
  }
  return l1 && l2 && l1->upper == l2->upper;
}

double angle_distance(const SystemConfig& c, const std::array<double, 4>& ref) {
  const std::array<double, 4> a = {c.alice_angles[0], c.alice_angles[1],
                                   c.bob_angles[0], c.bob_angles[1]};
  double d = 0.0;
  for (std::size_t k = 0; k < 4; ++k) {
    const double delta = reduce_angle(a[k] - ref[k]);
    d += delta * delta;
  }
  return d;
}

void reduce_all_angles(SystemConfig& c, const std::array<double, 4>& ref) {
  c.alice_angles[0] = reduce_angle(c.alice_angles[0], ref[0]);
  c.alice_angles[1] = reduce_angle(c.alice_angles[1], ref[1]);
  c.bob_angles[0] = reduce_angle(c.bob_angles[0], ref[2]);
  c.bob_angles[1] = reduce_angle(c.bob_angles[1], ref[3]);
}

// S is invariant under (a) negating all four angles and (b) exchanging the
// two sources while rotating every polarizer by pi/2. Among the images of the
// optimum, report the one closest to the reference orientation so results at
// neighbouring grid points are directly comparable.
SystemConfig canonical_form(const OptimizationProblem& problem,
                            const SystemConfig& optimum, double s) {
  const auto ref = reference_angles();
  SystemConfig best = optimum;
  reduce_all_angles(best, ref);
  if (!all_angles_free(problem)) return best;

  const bool swap_allowed = lambdas_exchangeable(problem);
  double best_distance = angle_distance(best, ref);
  for (int negate = 0; negate < 2; ++negate) {
    for (int swap = 0; swap < (swap_allowed ? 2 : 1); ++swap) {
      if (!negate && !swap) continue;
      SystemConfig image = optimum;
      if (swap) {
        std::swap(image.lambda1, image.lambda2);
        for (double& a : image.alice_angles) a += 0.5 * kPi;
        for (double& b : image.bob_angles) b += 0.5 * kPi;
      }
      if (negate) {
        for (double& a : image.alice_angles) a = -a;
        for (double& b : image.bob_angles) b = -b;
      }
      reduce_all_angles(image, ref);
      const double d = angle_distance(image, ref);
      if (d < best_distance - 1e-12 &&
          std::abs(chsh_value(image).s - s) <= 1e-9) {
        best = image;
        best_distance = d;
      }
    }
  }
  return best;
}

template <typename F>
std::vector<ScanRow> run_scan(std::vector<ScanRow> rows, int jobs, F&& solve) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < rows.size(); k = next++) {
      try {
        rows[k].result = solve(rows[k]);
      } catch (const std::exception& e) {
        rows[k].error = e.what();
      }
    }
  };
  const int threads =
      std::clamp(jobs, 1, std::max(1, static_cast<int>(rows.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  }
  return rows;
}

}  // namespace

NelderMeadResult nelder_mead_maximize(const Objective& objective,
                                      std::span<const double> initial_point,
                                      const NelderMeadOptions& options) {
  const std::size_t n = initial_point.size();
  if (n == 0) throw_invalid_argument("nelder_mead_maximize: empty initial point");
  const std::size_t steps = options.initial_step.size();
  if (steps > 1 && steps != n) {
    throw_invalid_argument("nelder_mead_maximize: initial_step size mismatch");
  }
  if (options.max_iterations < 0 || !(options.x_tolerance >= 0.0) ||
      !(options.f_tolerance >= 0.0)) {
    throw_invalid_argument("nelder_mead_maximize: invalid tolerances");
  }

  NelderMeadResult result;
  // Internally minimize g = -f.
  auto eval = [&](const std::vector<double>& x) {
    ++result.evaluations;
    const double f = objective(x);
    if (!std::isfinite(f)) {
      throw Error(ErrorCode::kNumericalFailure,
                  "nelder_mead_maximize: objective is not finite at " +
                      format_point(x));
    }
    return -f;
  };

  std::vector<std::vector<double>> simplex(n + 1, std::vector<double>(
                                                      initial_point.begin(),
                                                      initial_point.end()));
  for (std::size_t k = 0; k < n; ++k) {
    simplex[k + 1][k] += steps == 0   ? 0.25
                         : steps == 1 ? options.initial_step[0]
                                      : options.initial_step[k];
  }
  std::vector<double> g(n + 1);
  for (std::size_t k = 0; k <= n; ++k) g[k] = eval(simplex[k]);

  std::vector<std::size_t> order(n + 1);
  std::vector<double> centroid(n), trial(n), trial2(n);
  auto point_along = [&](double t, const std::vector<double>& worst,
                         std::vector<double>& out) {
    for (std::size_t j = 0; j < n; ++j) {
      out[j] = centroid[j] + t * (centroid[j] - worst[j]);
    }
  };

  while (true) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return g[a] < g[b]; });
    {
      std::vector<std::vector<double>> s2(n + 1);
      std::vector<double> g2(n + 1);
      for (std::size_t k = 0; k <= n; ++k) {
        s2[k] = std::move(simplex[order[k]]);
        g2[k] = g[order[k]];
      }
      simplex = std::move(s2);
      g = std::move(g2);
    }

    double x_spread = 0.0;
    double f_spread = 0.0;
    for (std::size_t k = 1; k <= n; ++k) {
      f_spread = std::max(f_spread, std::abs(g[k] - g[0]));
      for (std::size_t j = 0; j < n; ++j) {
        x_spread = std::max(x_spread, std::abs(simplex[k][j] - simplex[0][j]));
      }
    }
    if (x_spread <= options.x_tolerance && f_spread <= options.f_tolerance) {
      result.converged = true;
      break;
    }
    if (result.iterations >= options.max_iterations) break;
    ++result.iterations;

    std::fill(centroid.begin(), centroid.end(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t j = 0; j < n; ++j) centroid[j] += simplex[k][j];
    }
    for (double& c : centroid) c /= static_cast<double>(n);

    const std::vector<double>& worst = simplex[n];
    point_along(1.0, worst, trial);
    const double g_reflect = eval(trial);
    if (g_reflect < g[0]) {
      point_along(2.0, worst, trial2);
      const double g_expand = eval(trial2);
      if (g_expand < g_reflect) {
        simplex[n] = trial2;
        g[n] = g_expand;
      } else {
        simplex[n] = trial;
        g[n] = g_reflect;
      }
      continue;
    }
    if (g_reflect < g[n - 1]) {
      simplex[n] = trial;
      g[n] = g_reflect;
      continue;
    }
    const bool outside = g_reflect < g[n];
    point_along(outside ? 0.5 : -0.5, worst, trial2);
    const double g_contract = eval(trial2);
    if (outside ? g_contract <= g_reflect : g_contract < g[n]) {
      simplex[n] = trial2;
      g[n] = g_contract;
      continue;
    }
    // Shrink towards the best vertex.
    for (std::size_t k = 1; k <= n; ++k) {
      for (std::size_t j = 0; j < n; ++j) {
        simplex[k][j] = simplex[0][j] + 0.5 * (simplex[k][j] - simplex[0][j]);
      }
      g[k] = eval(simplex[k]);
    }
  }

  result.x = simplex[0];
  result.value = -g[0];
  return result;
}

void OptimizationProblem::validate() const {
  fixed.validate();
  std::array<bool, 6> seen{};
  for (const auto& fp : free) {
    const auto k = static_cast<std::size_t>(fp.parameter);
    if (k >= seen.size()) throw_invalid_argument("OptimizationProblem: unknown parameter");
    if (seen[k]) {
      throw_invalid_argument("OptimizationProblem: parameter listed twice");
    }
    seen[k] = true;
    if (is_lambda(fp.parameter) && !(fp.upper >= 0.0)) {
      throw_invalid_argument("OptimizationProblem: lambda bound must be >= 0");
    }
  }
}

std::array<double, 4> reference_angles() {
  return {0.0, kPi / 5.0, 3.0 * kPi / 5.0, -3.0 * kPi / 5.0};
}

double reduce_angle(double theta, double center) {
  double r = std::fmod(theta - center + 0.5 * kPi, kPi);
  if (r < 0.0) r += kPi;
  return center - 0.5 * kPi + r;
}

std::vector<double> make_grid(double min, double max, double step) {
  if (!std::isfinite(min) || !std::isfinite(max) || !(step > 0.0) ||
      !std::isfinite(step)) {
    throw_invalid_argument("make_grid: bounds must be finite and step > 0");
  }
  std::vector<double> grid;
  if (max < min) return grid;
  const auto count =
      static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  grid.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    grid.push_back(min + static_cast<double>(k) * step);
  }
  return grid;
}

OptimizationResult maximize_chsh(const OptimizationProblem& problem,
                                 const SearchOptions& options) {
  problem.validate();
  if (options.restarts < 1) {
    throw_invalid_argument("maximize_chsh: at least one restart required");
  }
  const Parameterization param(problem, options.lambda_ceiling);
  const std::size_t dim = param.dimension();

  OptimizationResult result;
  if (dim == 0) {
    result.best = problem.fixed;
    result.s = chsh_value(problem.fixed).s;
    result.converged = true;
    result.restart_values.push_back(result.s);
    return result;
  }

  constexpr std::uint64_t kPrimes[] = {2, 3, 5, 7, 11, 13};
  SplitMix64 rng(options.seed);
  std::vector<double> shift(dim);
  for (double& s : shift) s = rng.uniform();

  const Objective objective = [&](std::span<const double> u) {
    return chsh_value(param.to_config(u)).s;
  };

  std::vector<double> best_u;
  NelderMeadResult best_local;
  for (int restart = 0; restart < options.restarts; ++restart) {
    std::vector<double> unit(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      // Cranley-Patterson rotated Halton point.
      const double h = radical_inverse(static_cast<std::uint64_t>(restart) + 1,
                                       kPrimes[k]);
      unit[k] = std::fmod(h + shift[k], 1.0);
    }
    const auto local =
        nelder_mead_maximize(objective, param.start_point(unit), options.local);
    result.restart_values.push_back(local.value);
    if (restart == 0 || local.value > best_local.value) {
      best_local = local;
      result.best_restart = restart;
    }
  }

  result.s = best_local.value;
  result.iterations = best_local.iterations;
  result.evaluations = best_local.evaluations;
  result.converged = best_local.converged;
  result.best = canonical_form(problem, param.to_config(best_local.x), result.s);
  return result;
}

OptimizationResult maximize_s_at_lambda(double lambda, double eta, double nu,
                                        const SearchOptions& options) {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw_invalid_argument("maximize_s_at_lambda: lambda must be finite and >= 0");
  }
  OptimizationProblem problem;
  problem.fixed.lambda1 = lambda;
  problem.fixed.efficiency = {eta, eta, eta, eta};
  problem.fixed.dark_count = nu;
  // Exchanging the sources is a symmetry (with all polarizers turned by
  // pi/2), so fixing source 1 as the brighter one loses nothing.
  problem.free = {{Parameter::kLambda2, lambda},
                  {Parameter::kAliceAngle1},
                  {Parameter::kAliceAngle2},
                  {Parameter::kBobAngle1},
                  {Parameter::kBobAngle2}};
  return maximize_chsh(problem, options);
}

OptimizationResult maximize_s_at_eta(double eta, double lambda_cap, double nu,
                                     const SearchOptions& options) {
  if (!(lambda_cap >= 0.0)) {
    throw_invalid_argument("maximize_s_at_eta: lambda cap must be >= 0");
  }
  OptimizationProblem problem;
  problem.fixed.efficiency = {eta, eta, eta, eta};
  problem.fixed.dark_count = nu;
  problem.free = {{Parameter::kLambda1, lambda_cap},
                  {Parameter::kLambda2, lambda_cap},
                  {Parameter::kAliceAngle1},
                  {Parameter::kAliceAngle2},
                  {Parameter::kBobAngle1},
                  {Parameter::kBobAngle2}};
  return maximize_chsh(problem, options);
}

std::vector<ScanRow> scan_lambda(std::span<const double> lambdas, double eta,
                                 double nu, const SearchOptions& options,
                                 int jobs) {
  std::vector<ScanRow> rows;
  for (double lambda : lambdas) {
    ScanRow row;
    row.lambda = lambda;
    row.eta = eta;
    rows.push_back(row);
  }
  return run_scan(std::move(rows), jobs, [&](const ScanRow& row) {
    return maximize_s_at_lambda(row.lambda, row.eta, nu, options);
  });
}

std::vector<ScanRow> scan_eta(std::span<const double> etas, double lambda_cap,
                              double nu, const SearchOptions& options,
                              int jobs) {
  std::vector<ScanRow> rows;
  for (double eta : etas) {
    ScanRow row;
    row.eta = eta;
    row.lambda_cap = lambda_cap;
    rows.push_back(row);
  }
  return run_scan(std::move(rows), jobs, [&](const ScanRow& row) {
    return maximize_s_at_eta(row.eta, row.lambda_cap, nu, options);
  });
}

}  // namespace spdcbell
