#pragma once

// Zero-mean Gaussian states of bosonic modes in the covariance-matrix
// formalism. Quadratures are ordered (x_1..x_N, p_1..p_N) and the vacuum is
// the identity matrix. Displacement vectors are always zero for the states
// built here, so they are not stored.

#include <array>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace spdcbell {

// Modes of the polarization-entangled source after the Sagnac loop.
enum class Mode : int { kHA = 0, kVA = 1, kHB = 2, kVB = 3 };
inline constexpr int kSourceModes = 4;

constexpr int index_of(Mode m) { return static_cast<int>(m); }

// Detector D_l (l = 1..4, stored 0-based) watches one mode:
// D1 <-> H_A, D2 <-> H_B, D3 <-> V_A, D4 <-> V_B.
inline constexpr std::array<Mode, 4> kDetectorMode = {Mode::kHA, Mode::kHB,
                                                      Mode::kVA, Mode::kVB};

constexpr int detector_mode(int detector) {
  return index_of(kDetectorMode[static_cast<std::size_t>(detector)]);
}

class CovarianceMatrix {
 public:
  // Vacuum on n modes.
  explicit CovarianceMatrix(int n_modes);
  // Validates shape and symmetry (relative tolerance 1e-12); does not check
  // physicality, see is_physical().
  explicit CovarianceMatrix(Eigen::MatrixXd entries);

  int n_modes() const { return n_modes_; }
  const Eigen::MatrixXd& entries() const { return entries_; }
  double operator()(int row, int col) const { return entries_(row, col); }

  // Sorted symplectic eigenvalues (moduli of the eigenvalues of i*Omega*gamma,
  // each reported once).
  std::vector<double> symplectic_eigenvalues() const;
  bool is_physical(double tolerance = 1e-9) const;

 private:
  int n_modes_;
  Eigen::MatrixXd entries_;
};

class SymplecticOp {
 public:
  static SymplecticOp identity(int n_modes);
  explicit SymplecticOp(Eigen::MatrixXd entries);

  int n_modes() const { return n_modes_; }
  const Eigen::MatrixXd& entries() const { return entries_; }

  // max |S^T Omega S - Omega|
  double symplectic_defect() const;

 private:
  int n_modes_;
  Eigen::MatrixXd entries_;
};

// Omega = [[0, I], [-I, 0]] in (x.., p..) ordering.
Eigen::MatrixXd symplectic_form(int n_modes);

// LU with partial pivoting.
double determinant(const Eigen::MatrixXd& m);

// Two-mode squeezed vacuum with mean photon number lambda per mode.
// phase_sign = +1 gives positive x-x correlations, -1 the pi-shifted source.
CovarianceMatrix tmsv_covariance(double lambda, int phase_sign);

// Two TMSV sources in the Sagnac arrangement, ordering (H_A, V_A, H_B, V_B):
// source 1 couples H_A with V_B (phase 0), source 2 couples V_A with H_B
// (phase pi).
CovarianceMatrix entangled_source_covariance(double lambda1, double lambda2);

// Polarization rotation by theta mixing modes (i, j); the (i, j) block of
// both quadrature sectors is [[cos, sin], [-sin, cos]].
SymplecticOp polarizer_symplectic(double theta, int mode_i, int mode_j,
                                  int n_modes);

// S^T gamma S
CovarianceMatrix apply_symplectic(const CovarianceMatrix& gamma,
                                  const SymplecticOp& op);

// Pure-loss channel of transmittance eta on one mode.
CovarianceMatrix apply_loss(const CovarianceMatrix& gamma, int mode,
                            double eta);

// Mode k of the result is mode permutation[k] of the input.
CovarianceMatrix permute_modes(const CovarianceMatrix& gamma,
                               std::span<const int> permutation);

// Reduced state on the listed modes, re-indexed in the order given.
CovarianceMatrix subsystem(const CovarianceMatrix& gamma,
                           std::span<const int> modes);

}  // namespace spdcbell
