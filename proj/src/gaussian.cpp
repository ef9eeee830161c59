#include "spdcbell/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "spdcbell/error.hpp"

namespace spdcbell {

namespace {

void require_square(const Eigen::MatrixXd& m, const char* what) {
  if (m.rows() == 0 || m.rows() != m.cols() || m.rows() % 2 != 0) {
    throw_invalid_argument(std::string(what) +
                           ": expected a non-empty 2N x 2N matrix");
  }
}

void require_mode(int mode, int n_modes, const char* what) {
  if (mode < 0 || mode >= n_modes) {
    throw_invalid_argument(std::string(what) + ": mode index " +
                           std::to_string(mode) + " out of range for " +
                           std::to_string(n_modes) + " modes");
  }
}

void require_mean_photon_number(double lambda, const char* what) {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw_invalid_argument(std::string(what) +
                           ": mean photon number must be finite and >= 0");
  }
}

}  // namespace

CovarianceMatrix::CovarianceMatrix(int n_modes)
    : n_modes_(n_modes),
      entries_(Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes)) {
  if (n_modes <= 0) throw_invalid_argument("CovarianceMatrix: n_modes <= 0");
}

CovarianceMatrix::CovarianceMatrix(Eigen::MatrixXd entries)
    : n_modes_(static_cast<int>(entries.rows() / 2)),
      entries_(std::move(entries)) {
  require_square(entries_, "CovarianceMatrix");
  const double scale = std::max(1.0, entries_.cwiseAbs().maxCoeff());
  if ((entries_ - entries_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw_invalid_argument("CovarianceMatrix: matrix is not symmetric");
  }
  if (!entries_.allFinite()) {
    throw_invalid_argument("CovarianceMatrix: non-finite entry");
  }
}

std::vector<double> CovarianceMatrix::symplectic_eigenvalues() const {
  const Eigen::MatrixXd m = symplectic_form(n_modes_) * entries_;
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, false);
  std::vector<double> moduli;
  moduli.reserve(static_cast<std::size_t>(2 * n_modes_));
  for (Eigen::Index k = 0; k < solver.eigenvalues().size(); ++k) {
    moduli.push_back(std::abs(solver.eigenvalues()[k]));
  }
  std::sort(moduli.begin(), moduli.end());
  // Eigenvalues come in pairs +-i*nu.
  std::vector<double> nu;
  for (std::size_t k = 0; k < moduli.size(); k += 2) nu.push_back(moduli[k]);
  return nu;
}

bool CovarianceMatrix::is_physical(double tolerance) const {
  const auto nu = symplectic_eigenvalues();
  return nu.front() >= 1.0 - tolerance;
}

SymplecticOp SymplecticOp::identity(int n_modes) {
  return SymplecticOp(Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes));
}

SymplecticOp::SymplecticOp(Eigen::MatrixXd entries)
    : n_modes_(static_cast<int>(entries.rows() / 2)),
      entries_(std::move(entries)) {
  require_square(entries_, "SymplecticOp");
}

double SymplecticOp::symplectic_defect() const {
  const Eigen::MatrixXd omega = symplectic_form(n_modes_);
  return (entries_.transpose() * omega * entries_ - omega).cwiseAbs().maxCoeff();
}

Eigen::MatrixXd symplectic_form(int n_modes) {
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * n_modes, 2 * n_modes);
  omega.topRightCorner(n_modes, n_modes).setIdentity();
  omega.bottomLeftCorner(n_modes, n_modes) =
      -Eigen::MatrixXd::Identity(n_modes, n_modes);
  return omega;
}

double determinant(const Eigen::MatrixXd& m) {
  return Eigen::PartialPivLU<Eigen::MatrixXd>(m).determinant();
}

CovarianceMatrix tmsv_covariance(double lambda, int phase_sign) {
  require_mean_photon_number(lambda, "tmsv_covariance");
  if (phase_sign != 1 && phase_sign != -1) {
    throw_invalid_argument("tmsv_covariance: phase_sign must be +1 or -1");
  }
  const double diag = 2.0 * lambda + 1.0;
  const double corr = phase_sign * 2.0 * std::sqrt(lambda * (lambda + 1.0));
  Eigen::MatrixXd g = Eigen::MatrixXd::Identity(4, 4) * diag;
  g(0, 1) = g(1, 0) = corr;
  g(2, 3) = g(3, 2) = -corr;
  return CovarianceMatrix(std::move(g));
}

CovarianceMatrix entangled_source_covariance(double lambda1, double lambda2) {
  require_mean_photon_number(lambda1, "entangled_source_covariance");
  require_mean_photon_number(lambda2, "entangled_source_covariance");
  constexpr int n = kSourceModes;
  const int ha = index_of(Mode::kHA);
  const int va = index_of(Mode::kVA);
  const int hb = index_of(Mode::kHB);
  const int vb = index_of(Mode::kVB);
  const double c1 = 2.0 * std::sqrt(lambda1 * (lambda1 + 1.0));
  const double c2 = 2.0 * std::sqrt(lambda2 * (lambda2 + 1.0));

  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2 * n, 2 * n);
  for (int sector = 0; sector < 2; ++sector) {
    const int o = sector * n;
    // p-sector correlations carry the opposite sign.
    const double sign = sector == 0 ? 1.0 : -1.0;
    g(o + ha, o + ha) = g(o + vb, o + vb) = 2.0 * lambda1 + 1.0;
    g(o + va, o + va) = g(o + hb, o + hb) = 2.0 * lambda2 + 1.0;
    g(o + ha, o + vb) = g(o + vb, o + ha) = sign * c1;
    g(o + va, o + hb) = g(o + hb, o + va) = -sign * c2;
  }
  return CovarianceMatrix(std::move(g));
}

SymplecticOp polarizer_symplectic(double theta, int mode_i, int mode_j,
                                  int n_modes) {
  if (n_modes <= 0) throw_invalid_argument("polarizer_symplectic: n_modes <= 0");
  require_mode(mode_i, n_modes, "polarizer_symplectic");
  require_mode(mode_j, n_modes, "polarizer_symplectic");
  if (mode_i == mode_j) {
    throw_invalid_argument("polarizer_symplectic: modes must be distinct");
  }
  if (!std::isfinite(theta)) {
    throw_invalid_argument("polarizer_symplectic: angle must be finite");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  Eigen::MatrixXd m = Eigen::MatrixXd::Identity(2 * n_modes, 2 * n_modes);
  for (int o : {0, n_modes}) {
    m(o + mode_i, o + mode_i) = c;
    m(o + mode_i, o + mode_j) = s;
    m(o + mode_j, o + mode_i) = -s;
    m(o + mode_j, o + mode_j) = c;
  }
  return SymplecticOp(std::move(m));
}

CovarianceMatrix apply_symplectic(const CovarianceMatrix& gamma,
                                  const SymplecticOp& op) {
  if (gamma.n_modes() != op.n_modes()) {
    throw_invalid_argument("apply_symplectic: dimension mismatch");
  }
  Eigen::MatrixXd out = op.entries().transpose() * gamma.entries() * op.entries();
  // Restore exact symmetry lost to rounding.
  out = 0.5 * (out + out.transpose()).eval();
  return CovarianceMatrix(std::move(out));
}

CovarianceMatrix apply_loss(const CovarianceMatrix& gamma, int mode,
                            double eta) {
  require_mode(mode, gamma.n_modes(), "apply_loss");
  if (!(eta >= 0.0 && eta <= 1.0)) {
    throw_invalid_argument("apply_loss: transmittance must lie in [0, 1]");
  }
  const int n = gamma.n_modes();
  const double k = std::sqrt(eta);
  Eigen::MatrixXd out = gamma.entries();
  for (int idx : {mode, mode + n}) {
    out.row(idx) *= k;
    out.col(idx) *= k;
    out(idx, idx) += 1.0 - eta;
  }
  return CovarianceMatrix(std::move(out));
}

CovarianceMatrix permute_modes(const CovarianceMatrix& gamma,
                               std::span<const int> permutation) {
  const int n = gamma.n_modes();
  if (static_cast<int>(permutation.size()) != n) {
    throw_invalid_argument("permute_modes: permutation size mismatch");
  }
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int p : permutation) {
    require_mode(p, n, "permute_modes");
    if (seen[static_cast<std::size_t>(p)]) {
      throw_invalid_argument("permute_modes: permutation is not a bijection");
    }
    seen[static_cast<std::size_t>(p)] = true;
  }
  Eigen::MatrixXd out(2 * n, 2 * n);
  for (int r = 0; r < 2 * n; ++r) {
    const int src_r = permutation[static_cast<std::size_t>(r % n)] + (r / n) * n;
    for (int c = 0; c < 2 * n; ++c) {
      const int src_c =
          permutation[static_cast<std::size_t>(c % n)] + (c / n) * n;
      out(r, c) = gamma(src_r, src_c);
    }
  }
  return CovarianceMatrix(std::move(out));
}

CovarianceMatrix subsystem(const CovarianceMatrix& gamma,
                           std::span<const int> modes) {
  if (modes.empty()) throw_invalid_argument("subsystem: empty mode subset");
  const int n = gamma.n_modes();
  const int m = static_cast<int>(modes.size());
  std::vector<bool> seen(static_cast<std::size_t>(n), false);
  for (int k : modes) {
    require_mode(k, n, "subsystem");
    if (seen[static_cast<std::size_t>(k)]) {
      throw_invalid_argument("subsystem: repeated mode index");
    }
    seen[static_cast<std::size_t>(k)] = true;
  }
  Eigen::MatrixXd out(2 * m, 2 * m);
  for (int r = 0; r < 2 * m; ++r) {
    const int src_r = modes[static_cast<std::size_t>(r % m)] + (r / m) * n;
    for (int c = 0; c < 2 * m; ++c) {
      const int src_c = modes[static_cast<std::size_t>(c % m)] + (c / m) * n;
      out(r, c) = gamma(src_r, src_c);
    }
  }
  return CovarianceMatrix(std::move(out));
}

}  // namespace spdcbell
