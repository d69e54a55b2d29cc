#pragma once

// Activation update: block-coordinate FISTA over one mode of every atom's
// Kruskal factors at a time.
//
// For mode q, let J = prod_{i != q} n_i and B_k = khatri_rao_reverse of the
// transformed off-mode factors of atom k (J x R). In the Fourier domain the
// fidelity decouples over the n_q frequencies t of mode q:
//
//     f = 1/(2M) sum_t || y_t - M_t z_t ||^2,   M_t[j,(k,r)] = D_k[t,j] B_k[j,r]
//
// where z_t holds the K*R transformed coefficients Z_k^(q)[t,r]. The Gram
// matrix is therefore block diagonal once ordered frequency-major: n_q blocks
// G_t = M_t^H M_t of size KR x KR, plus a linear term b_t = M_t^H y_t. With the
// unnormalised forward DFT the real gradient is
//
//     grad = (1/J) * Re IDFT_cols(G z - b).

#include <span>
#include <vector>

#include "kcsc/spectral.hpp"
#include "kcsc/tensor.hpp"

namespace kcsc::zstep {

/// Per-mode penalties: alpha_q ||Z^(q)||_1 + beta_q ||Z^(q)||_F^2.
struct RegWeights {
  std::vector<double> alpha;
  std::vector<double> beta;
  bool nonnegative = false;

  static RegWeights uniform(std::size_t order, double alpha, double beta, bool nonnegative = false);
  void validate(std::size_t order) const;
};

/// Transformed signal with its mode unfoldings precomputed.
class SignalSpectrum {
 public:
  explicit SignalSpectrum(const DenseTensor& y);

  const Shape& shape() const { return spectrum_.shape(); }
  const SpectralTensor& spectrum() const { return spectrum_; }
  const CMatrix& unfolded(std::size_t mode) const { return unfolded_.at(mode); }

 private:
  SpectralTensor spectrum_;
  std::vector<CMatrix> unfolded_;
};

/// Transformed zero-padded atoms with their mode unfoldings precomputed.
class DictionarySpectrum {
 public:
  explicit DictionarySpectrum(const Dictionary& d);

  std::size_t size() const { return spectra_.size(); }
  const Shape& shape() const { return shape_; }
  const SpectralTensor& spectrum(std::size_t k) const { return spectra_.at(k); }
  /// Unfoldings of every atom along `mode`, indexed by atom.
  std::span<const CMatrix> unfolded(std::size_t mode) const { return unfolded_.at(mode); }

 private:
  Shape shape_;
  std::vector<SpectralTensor> spectra_;
  std::vector<std::vector<CMatrix>> unfolded_;  // [mode][atom]
};

struct ModeSubproblemCache {
  std::size_t mode = 0;
  std::size_t atoms = 0;
  std::size_t rank = 0;
  double scale = 1.0;  ///< 1 / prod_{i != q} n_i
  CMatrix lin_term;    ///< n_q x KR, row t is b_t^T
  std::vector<CMatrix> gram;  ///< n_q Hermitian blocks, KR x KR
  double lipschitz = 0.0;     ///< already multiplied by `scale`

  std::size_t width() const { return atoms * rank; }
};

/// DFT of every factor of every atom: result[k][mode].
std::vector<std::vector<CMatrix>> transform_factors(std::span<const KruskalActivation> acts);

/// B_k = khatri_rao_reverse of the off-mode transformed factors, one per atom.
std::vector<CMatrix> assemble_blocks(const std::vector<std::vector<CMatrix>>& factor_spectra, std::size_t mode);

std::vector<CMatrix> compute_gram(std::span<const CMatrix> blocks, std::span<const CMatrix> atom_unfolded);
CMatrix compute_linear_term(std::span<const CMatrix> blocks, std::span<const CMatrix> atom_unfolded,
                            const CMatrix& signal_unfolded);

/// Row t of the result is G_t * zhat.row(t)^T.
CMatrix gram_matvec(std::span<const CMatrix> gram, const CMatrix& zhat);

/// Largest eigenvalue over all blocks (power iteration), times `scale`.
double estimate_lipschitz(std::span<const CMatrix> gram, double scale = 1.0);
inline constexpr double kLipschitzFloor = 1e-12;

ModeSubproblemCache build_mode_cache(const SignalSpectrum& y, const DictionarySpectrum& d,
                                     std::span<const KruskalActivation> acts, std::size_t mode);

/// Mode-q factors of all atoms side by side: column k*R + r is Z_k^(q)(:, r).
Matrix stack_mode(std::span<const KruskalActivation> acts, std::size_t mode);
void unstack_mode(const Matrix& stacked, std::span<KruskalActivation> acts, std::size_t mode);

Matrix gradient_mode_q(const ModeSubproblemCache& cache, const Matrix& stacked);

/// Same gradient without the Gram precomputation: composes the full
/// transformed reconstruction and back-projects the residual.
Matrix gradient_mode_q_direct(const SignalSpectrum& y, const DictionarySpectrum& d,
                              std::span<const KruskalActivation> acts, std::size_t mode, const Matrix& stacked);

/// Fidelity evaluated in the Fourier domain through the mode-q unfolding.
double fourier_fidelity(const SignalSpectrum& y, const DictionarySpectrum& d, std::span<const KruskalActivation> acts,
                        std::size_t mode);

/// Elementwise sign(x) max(|x| - eta*alpha, 0) / (1 + 2 eta beta); the
/// non-negative variant clamps at zero first.
Matrix prox_g(const Matrix& x, double eta, double alpha, double beta, bool nonnegative);
double prox_g(double x, double eta, double alpha, double beta, bool nonnegative);

struct FistaOptions {
  double tolerance = 1e-5;
  int max_iters = 200;
  bool monotone = false;  ///< plain ISTA steps, no momentum
  bool use_gram = true;
};

struct FistaReport {
  int iterations = 0;
  bool converged = false;
  double precompute_seconds = 0.0;
  double iterate_seconds = 0.0;
};

/// Updates the mode-q factors of every atom in `acts`.
FistaReport fista_mode_q(const SignalSpectrum& y, const DictionarySpectrum& d, std::vector<KruskalActivation>& acts,
                         std::size_t mode, const RegWeights& weights, const FistaOptions& options = {});

FistaReport fista_mode_q(const DenseTensor& y, const Dictionary& d, std::vector<KruskalActivation>& acts,
                         std::size_t mode, const RegWeights& weights, const FistaOptions& options = {});

}  // namespace kcsc::zstep
