#pragma once

// Derivative-free maximization of the CHSH value over source brightness and
// polarizer angles, and grid scans over lambda or eta.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "spdcbell/bell.hpp"

namespace spdcbell {

struct NelderMeadOptions {
  // Per-coordinate size of the initial simplex; empty means 0.25 everywhere
  // and a single entry applies to every coordinate.
  std::vector<double> initial_step;
  double x_tolerance = 1e-8;
  double f_tolerance = 1e-10;
  int max_iterations = 5000;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

using Objective = std::function<double(std::span<const double>)>;

// Maximizes `objective` with the classical Nelder-Mead simplex. Throws
// kNumericalFailure if the objective returns a non-finite value.
NelderMeadResult nelder_mead_maximize(const Objective& objective,
                                      std::span<const double> initial_point,
                                      const NelderMeadOptions& options = {});

enum class Parameter {
  kLambda1,
  kLambda2,
  kAliceAngle1,
  kAliceAngle2,
  kBobAngle1,
  kBobAngle2,
};

inline constexpr double kNoCap = std::numeric_limits<double>::infinity();

struct FreeParameter {
  Parameter parameter;
  // Mean photon numbers are searched on [0, upper]; ignored for angles.
  double upper = kNoCap;
};

// Every SystemConfig field not listed in `free` is taken from `fixed`.
struct OptimizationProblem {
  SystemConfig fixed;
  std::vector<FreeParameter> free;

  void validate() const;
};

struct SearchOptions {
  int restarts = 16;
  std::uint64_t seed = 0;
  NelderMeadOptions local;
  // Uncapped mean photon numbers are clipped here.
  double lambda_ceiling = 50.0;
};

struct OptimizationResult {
  SystemConfig best;
  double s = 0.0;
  // Iterations of the winning restart.
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
  int best_restart = 0;
  // Final best value of every restart, in restart order.
  std::vector<double> restart_values;
};

OptimizationResult maximize_chsh(const OptimizationProblem& problem,
                                 const SearchOptions& options = {});

// lambda1 fixed at `lambda`; lambda2 in [0, lambda] and the four angles free.
OptimizationResult maximize_s_at_lambda(double lambda, double eta, double nu,
                                        const SearchOptions& options = {});

// Both lambdas in [0, lambda_cap] (kNoCap for unbounded) and the four angles
// free, all efficiencies equal to eta.
OptimizationResult maximize_s_at_eta(double eta, double lambda_cap, double nu,
                                     const SearchOptions& options = {});

// Angles of the polarizer settings used as the reference orientation when
// choosing among symmetry-equivalent optima: {0, pi/5}, {3pi/5, -3pi/5}.
std::array<double, 4> reference_angles();

// Angle reduced modulo pi into [center - pi/2, center + pi/2). The CHSH value
// is pi-periodic in every polarizer angle.
double reduce_angle(double theta, double center = 0.0);

// Inclusive grid min, min + step, ..., <= max (tolerant to rounding).
std::vector<double> make_grid(double min, double max, double step);

struct ScanRow {
  double lambda = 0.0;      // grid lambda (scan-lambda) or 0
  double eta = 1.0;
  double lambda_cap = kNoCap;
  std::optional<OptimizationResult> result;
  std::string error;        // set when the row failed
};

// One row per grid point. Rows are independent and evaluated on up to `jobs`
// threads; the output keeps grid order. A failing row records its error and
// the scan continues.
std::vector<ScanRow> scan_lambda(std::span<const double> lambdas, double eta,
                                 double nu, const SearchOptions& options = {},
                                 int jobs = 1);
std::vector<ScanRow> scan_eta(std::span<const double> etas, double lambda_cap,
                              double nu, const SearchOptions& options = {},
                              int jobs = 1);

}  // namespace spdcbell
