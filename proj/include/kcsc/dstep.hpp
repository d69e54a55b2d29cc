#pragma once

// Dictionary update with activations fixed.
//
// ADMM on  1/2 sum_n ||y_n - sum_k d_k * z_nk||^2  s.t. d_k supported on the
// window and ||d_k||_F <= 1. The d-update decouples per frequency m into the
// K x K system
//
//     (rho I + sum_n a_n^H a_n) x = b,    a_n = (Z_n1[m], ..., Z_nK[m]),
//
// which is solved with iterated Sherman-Morrison updates:
//     A_N^{-1} = I/rho - sum_n c_n c_n^H / gamma_n,
//     c_n = A_{n-1}^{-1} a_n^H,  gamma_n = 1 + a_n c_n.

#include <span>
#include <vector>

#include "kcsc/spectral.hpp"
#include "kcsc/tensor.hpp"

namespace kcsc::dstep {

/// DFT of every composed activation, via the mode-wise transform of its factors.
std::vector<SpectralTensor> compose_activation_spectra(std::span<const KruskalActivation> acts);

class ShermanMorrisonSolver {
 public:
  /// `activations[n][k]` is the spectrum of signal n's activation for atom k.
  ShermanMorrisonSolver(const std::vector<std::vector<SpectralTensor>>& activations, double rho);

  std::size_t atoms() const { return atoms_; }
  std::size_t frequencies() const { return frequencies_; }
  double rho() const { return rho_; }

  /// Solves every frequency in place; `rhs[k]` holds atom k's right-hand side.
  void solve(std::vector<SpectralTensor>& rhs) const;
  Eigen::VectorXcd solve_at(std::size_t frequency, const Eigen::VectorXcd& b) const;

 private:
  std::size_t atoms_ = 0;
  std::size_t signals_ = 0;
  std::size_t frequencies_ = 0;
  double rho_ = 1.0;
  // c_n / sqrt(gamma_n), laid out [frequency][signal][atom].
  std::vector<Complex> updates_;
};

struct DStepOptions {
  double rho = 1.0;
  double tolerance = 1e-6;
  int max_iters = 500;
  /// Residual balancing on relative residuals: primal over the iterate norm,
  /// dual over rho ||u||; factor 2 when the ratio exceeds 10.
  bool adapt_rho = true;
  double relaxation = 1.8;  ///< over-relaxation in [1, 2)
  /// Multiply rho by the mean per-frequency activation energy
  /// sum_n ||a_n[m]||^2 / K, making it invariant to the activation scale.
  bool scale_rho = true;
};

struct DStepReport {
  int iterations = 0;
  bool converged = false;
  double rho = 0.0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double fidelity = 0.0;  ///< of the returned dictionary
  double seconds = 0.0;
};

/// Projection onto {supported on window} intersected with the unit ball.
DenseTensor project_atom(const DenseTensor& padded, const Shape& window);

/// `activation_spectra[n][k]`; `initial` provides the window and warm start.
/// Returns the feasible iterate (checked every 10 iterations, at the start and
/// at the end) with the lowest fidelity, so the fidelity never exceeds that of
/// the projected warm start.
Dictionary dstep_solve(std::span<const DenseTensor> signals,
                       const std::vector<std::vector<SpectralTensor>>& activation_spectra, const Dictionary& initial,
                       const DStepOptions& options = {}, DStepReport* report = nullptr);

}  // namespace kcsc::dstep
