#include "kcsc/zstep.hpp"

#include <chrono>
#include <cmath>

namespace kcsc::zstep {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void check_conformal(const Shape& signal, std::span<const KruskalActivation> acts, std::size_t atoms) {
  if (acts.size() != atoms)
    throw DimensionError("expected " + std::to_string(atoms) + " activations, got " + std::to_string(acts.size()));
  for (const auto& a : acts) {
    if (a.shape() != signal)
      throw DimensionError("activation shape " + shape_to_string(a.shape()) + " vs signal " + shape_to_string(signal));
    if (a.rank() != acts.front().rank()) throw DimensionError("all activations must share the rank");
  }
}

// Rows of M_t for one frequency t: M[j, k*R + r] = D_k[t, j] * B_k[j, r].
void fill_design(std::span<const CMatrix> blocks, std::span<const CMatrix> atom_unfolded, Eigen::Index t, CMatrix& m) {
  const auto K = static_cast<Eigen::Index>(blocks.size());
  const Eigen::Index R = blocks.front().cols();
  const Eigen::Index J = blocks.front().rows();
  m.resize(J, K * R);
  for (Eigen::Index k = 0; k < K; ++k) {
    const CMatrix& B = blocks[static_cast<std::size_t>(k)];
    const auto d_row = atom_unfolded[static_cast<std::size_t>(k)].row(t).transpose();
    m.middleCols(k * R, R) = B.array().colwise() * d_row.array();
  }
}

void check_blocks(std::span<const CMatrix> blocks, std::span<const CMatrix> atom_unfolded) {
  if (blocks.empty() || blocks.size() != atom_unfolded.size())
    throw DimensionError("need one off-mode block per atom spectrum");
  for (std::size_t k = 0; k < blocks.size(); ++k)
    if (blocks[k].rows() != atom_unfolded[k].cols() || blocks[k].cols() != blocks.front().cols() ||
        atom_unfolded[k].rows() != atom_unfolded.front().rows())
      throw DimensionError("off-mode blocks do not match the atom unfoldings");
}

double max_abs_diff(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace

RegWeights RegWeights::uniform(std::size_t order, double alpha, double beta, bool nonnegative) {
  return RegWeights{std::vector<double>(order, alpha), std::vector<double>(order, beta), nonnegative};
}

void RegWeights::validate(std::size_t order) const {
  if (alpha.size() != order || beta.size() != order)
    throw DimensionError("regularisation weights need one alpha and one beta per mode");
  for (std::size_t q = 0; q < order; ++q)
    if (alpha[q] < 0.0 || beta[q] < 0.0) throw std::invalid_argument("regularisation weights must be non-negative");
}

SignalSpectrum::SignalSpectrum(const DenseTensor& y) : spectrum_(spectral::dft(y)) {
  for (std::size_t q = 0; q < y.order(); ++q) unfolded_.push_back(spectral::unfold(spectrum_, q));
}

DictionarySpectrum::DictionarySpectrum(const Dictionary& d) : shape_(d.signal_shape()) {
  unfolded_.resize(shape_.size());
  for (std::size_t k = 0; k < d.size(); ++k) {
    spectra_.push_back(spectral::dft(d.padded(k)));
    for (std::size_t q = 0; q < shape_.size(); ++q) unfolded_[q].push_back(spectral::unfold(spectra_.back(), q));
  }
}

std::vector<std::vector<CMatrix>> transform_factors(std::span<const KruskalActivation> acts) {
  std::vector<std::vector<CMatrix>> out;
  out.reserve(acts.size());
  for (const auto& a : acts) out.push_back(spectral::modewise_dft(a.factors));
  return out;
}

std::vector<CMatrix> assemble_blocks(const std::vector<std::vector<CMatrix>>& factor_spectra, std::size_t mode) {
  std::vector<CMatrix> blocks;
  blocks.reserve(factor_spectra.size());
  for (const auto& factors : factor_spectra) {
    detail::check_mode(Shape(factors.size(), 1), mode);
    std::vector<CMatrix> others;
    for (std::size_t i = 0; i < factors.size(); ++i)
      if (i != mode) others.push_back(factors[i]);
    if (others.empty()) {
      // Order-1 signals: the off-mode product is a single row of ones.
      blocks.push_back(CMatrix::Ones(1, factors[mode].cols()));
    } else {
      blocks.push_back(khatri_rao_reverse(std::span<const CMatrix>(others)));
    }
  }
  return blocks;
}

std::vector<CMatrix> compute_gram(std::span<const CMatrix> blocks, std::span<const CMatrix> atom_unfolded) {
  check_blocks(blocks, atom_unfolded);
  const Eigen::Index nq = atom_unfolded.front().rows();
  const Eigen::Index width = static_cast<Eigen::Index>(blocks.size()) * blocks.front().cols();
  std::vector<CMatrix> gram(static_cast<std::size_t>(nq));
  CMatrix m;
  for (Eigen::Index t = 0; t < nq; ++t) {
    fill_design(blocks, atom_unfolded, t, m);
    CMatrix& g = gram[static_cast<std::size_t>(t)];
    g = CMatrix::Zero(width, width);
    g.selfadjointView<Eigen::Lower>().rankUpdate(m.adjoint());
    g = g.selfadjointView<Eigen::Lower>();
  }
  return gram;
}

CMatrix compute_linear_term(std::span<const CMatrix> blocks, std::span<const CMatrix> atom_unfolded,
                            const CMatrix& signal_unfolded) {
  check_blocks(blocks, atom_unfolded);
  const Eigen::Index nq = atom_unfolded.front().rows();
  if (signal_unfolded.rows() != nq || signal_unfolded.cols() != blocks.front().rows())
    throw DimensionError("signal unfolding does not match the atom unfoldings");
  const Eigen::Index width = static_cast<Eigen::Index>(blocks.size()) * blocks.front().cols();
  CMatrix lin(nq, width);
  CMatrix m;
  for (Eigen::Index t = 0; t < nq; ++t) {
    fill_design(blocks, atom_unfolded, t, m);
    lin.row(t) = (m.adjoint() * signal_unfolded.row(t).transpose()).transpose();
  }
  return lin;
}

CMatrix gram_matvec(std::span<const CMatrix> gram, const CMatrix& zhat) {
  if (static_cast<std::size_t>(zhat.rows()) != gram.size())
    throw DimensionError("gram_matvec: expected " + std::to_string(gram.size()) + " frequency rows");
  CMatrix out(zhat.rows(), zhat.cols());
  for (Eigen::Index t = 0; t < zhat.rows(); ++t) {
    const CMatrix& g = gram[static_cast<std::size_t>(t)];
    if (g.cols() != zhat.cols()) throw DimensionError("gram_matvec: block width mismatch");
    out.row(t).noalias() = (g * zhat.row(t).transpose()).transpose();
  }
  return out;
}

double estimate_lipschitz(std::span<const CMatrix> gram, double scale) {
  double best = 0.0;
  for (const auto& g : gram) {
    const Eigen::Index n = g.rows();
    if (n == 0) continue;
    // Fixed, non-symmetric start vector keeps the estimate deterministic.
    Eigen::VectorXcd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = Complex(1.0 + 0.1 * static_cast<double>(i), 0.05 * static_cast<double>(i % 3));
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 1000; ++it) {
      Eigen::VectorXcd w = g * v;
      const double norm = w.norm();
      if (norm == 0.0) {
        lambda = 0.0;
        break;
      }
      const double next = std::real(v.dot(w));
      v = w / norm;
      if (std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
        lambda = next;
        break;
      }
      lambda = next;
    }
    best = std::max(best, lambda);
  }
  return std::max(best * scale, kLipschitzFloor);
}

ModeSubproblemCache build_mode_cache(const SignalSpectrum& y, const DictionarySpectrum& d,
                                     std::span<const KruskalActivation> acts, std::size_t mode) {
  check_conformal(y.shape(), acts, d.size());
  const auto factor_spectra = transform_factors(acts);
  const auto blocks = assemble_blocks(factor_spectra, mode);
  ModeSubproblemCache cache;
  cache.mode = mode;
  cache.atoms = acts.size();
  cache.rank = acts.front().rank();
  cache.scale = 1.0 / static_cast<double>(off_mode_size(y.shape(), mode));

  const auto atom_unfolded = d.unfolded(mode);
  const CMatrix& y_unfolded = y.unfolded(mode);
  const Eigen::Index nq = y_unfolded.rows();
  const auto width = static_cast<Eigen::Index>(cache.width());
  cache.gram.resize(static_cast<std::size_t>(nq));
  cache.lin_term.resize(nq, width);
  CMatrix m;
  for (Eigen::Index t = 0; t < nq; ++t) {
    fill_design(blocks, atom_unfolded, t, m);
    CMatrix& g = cache.gram[static_cast<std::size_t>(t)];
    g = CMatrix::Zero(width, width);
    g.selfadjointView<Eigen::Lower>().rankUpdate(m.adjoint());
    g = g.selfadjointView<Eigen::Lower>();
    cache.lin_term.row(t) = (m.adjoint() * y_unfolded.row(t).transpose()).transpose();
  }
  cache.lipschitz = estimate_lipschitz(cache.gram, cache.scale);
  return cache;
}

Matrix stack_mode(std::span<const KruskalActivation> acts, std::size_t mode) {
  if (acts.empty()) throw DimensionError("stack_mode: no activations");
  const Matrix& first = acts.front().factors.at(mode);
  const Eigen::Index R = first.cols();
  Matrix out(first.rows(), R * static_cast<Eigen::Index>(acts.size()));
  for (std::size_t k = 0; k < acts.size(); ++k) out.middleCols(static_cast<Eigen::Index>(k) * R, R) = acts[k].factors.at(mode);
  return out;
}

void unstack_mode(const Matrix& stacked, std::span<KruskalActivation> acts, std::size_t mode) {
  const Eigen::Index R = static_cast<Eigen::Index>(acts.front().rank());
  for (std::size_t k = 0; k < acts.size(); ++k)
    acts[k].factors.at(mode) = stacked.middleCols(static_cast<Eigen::Index>(k) * R, R);
}

Matrix gradient_mode_q(const ModeSubproblemCache& cache, const Matrix& stacked) {
  CMatrix zhat = stacked.cast<Complex>();
  spectral::fft_columns(zhat, spectral::Direction::Forward);
  CMatrix v = gram_matvec(cache.gram, zhat) - cache.lin_term;
  spectral::fft_columns(v, spectral::Direction::Inverse);
  return cache.scale * v.real();
}

Matrix gradient_mode_q_direct(const SignalSpectrum& y, const DictionarySpectrum& d,
                              std::span<const KruskalActivation> acts, std::size_t mode, const Matrix& stacked) {
  check_conformal(y.shape(), acts, d.size());
  auto factor_spectra = transform_factors(acts);
  const auto R = static_cast<Eigen::Index>(acts.front().rank());
  CMatrix zhat = stacked.cast<Complex>();
  spectral::fft_columns(zhat, spectral::Direction::Forward);
  for (std::size_t k = 0; k < acts.size(); ++k) factor_spectra[k][mode] = zhat.middleCols(static_cast<Eigen::Index>(k) * R, R);

  SpectralTensor residual(y.shape());
  for (std::size_t i = 0; i < residual.size(); ++i) residual[i] = -y.spectrum()[i];
  for (std::size_t k = 0; k < acts.size(); ++k) {
    const SpectralTensor zk = spectral::kruskal_compose(factor_spectra[k]);
    const SpectralTensor& dk = d.spectrum(k);
    for (std::size_t i = 0; i < residual.size(); ++i) residual[i] += dk[i] * zk[i];
  }
  const auto blocks = assemble_blocks(factor_spectra, mode);
  CMatrix grad(zhat.rows(), zhat.cols());
  SpectralTensor weighted(y.shape());
  for (std::size_t k = 0; k < acts.size(); ++k) {
    const SpectralTensor& dk = d.spectrum(k);
    for (std::size_t i = 0; i < residual.size(); ++i) weighted[i] = std::conj(dk[i]) * residual[i];
    grad.middleCols(static_cast<Eigen::Index>(k) * R, R) = spectral::unfold(weighted, mode) * blocks[k].conjugate();
  }
  spectral::fft_columns(grad, spectral::Direction::Inverse);
  return grad.real() / static_cast<double>(off_mode_size(y.shape(), mode));
}

double fourier_fidelity(const SignalSpectrum& y, const DictionarySpectrum& d, std::span<const KruskalActivation> acts,
                        std::size_t mode) {
  check_conformal(y.shape(), acts, d.size());
  const auto factor_spectra = transform_factors(acts);
  const auto blocks = assemble_blocks(factor_spectra, mode);
  const auto atom_unfolded = d.unfolded(mode);
  CMatrix residual = y.unfolded(mode);
  for (std::size_t k = 0; k < acts.size(); ++k) {
    const CMatrix zk = factor_spectra[k][mode] * blocks[k].transpose();
    residual -= atom_unfolded[k].cwiseProduct(zk);
  }
  return 0.5 * residual.squaredNorm() / static_cast<double>(shape_size(y.shape()));
}

double prox_g(double x, double eta, double alpha, double beta, bool nonnegative) {
  const double thr = eta * alpha;
  const double shrink = 1.0 + 2.0 * eta * beta;
  if (nonnegative) return std::max(x - thr, 0.0) / shrink;
  const double mag = std::max(std::abs(x) - thr, 0.0);
  return std::copysign(mag, x) / shrink;
}

Matrix prox_g(const Matrix& x, double eta, double alpha, double beta, bool nonnegative) {
  if (!(eta > 0.0)) throw std::invalid_argument("prox_g: step must be positive");
  return x.unaryExpr([&](double v) { return prox_g(v, eta, alpha, beta, nonnegative); });
}

FistaReport fista_mode_q(const SignalSpectrum& y, const DictionarySpectrum& d, std::vector<KruskalActivation>& acts,
                         std::size_t mode, const RegWeights& weights, const FistaOptions& options) {
  weights.validate(y.shape().size());
  FistaReport report;
  auto start = Clock::now();
  // The Gram blocks depend on the other modes' current factors, so the cache
  // is rebuilt for every subproblem.
  const ModeSubproblemCache cache = build_mode_cache(y, d, acts, mode);
  report.precompute_seconds = seconds_since(start);

  start = Clock::now();
  const double eta = 1.0 / cache.lipschitz;
  const double alpha = weights.alpha[mode];
  const double beta = weights.beta[mode];

  Matrix z = stack_mode(acts, mode);
  Matrix w_prev = z;
  Matrix w = z;
  double t = 1.0;
  for (int s = 0; s < options.max_iters; ++s) {
    const Matrix grad = options.use_gram ? gradient_mode_q(cache, z) : gradient_mode_q_direct(y, d, acts, mode, z);
    w = prox_g(z - eta * grad, eta, alpha, beta, weights.nonnegative);
    if (!all_finite(w))
      throw DivergenceError("non-finite iterate in mode " + std::to_string(mode) + " FISTA at iteration " +
                            std::to_string(s));
    Matrix z_next;
    if (options.monotone) {
      z_next = w;
    } else {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      z_next = w + ((t - 1.0) / (t_next + 1.0)) * (w - w_prev);
      t = t_next;
    }
    const double change = max_abs_diff(z_next, z);
    z = std::move(z_next);
    w_prev = w;
    report.iterations = s + 1;
    if (change <= options.tolerance) {
      report.converged = true;
      break;
    }
  }
  unstack_mode(w, acts, mode);
  report.iterate_seconds = seconds_since(start);
  return report;
}

FistaReport fista_mode_q(const DenseTensor& y, const Dictionary& d, std::vector<KruskalActivation>& acts,
                         std::size_t mode, const RegWeights& weights, const FistaOptions& options) {
  if (y.shape() != d.signal_shape())
    throw DimensionError("signal shape " + shape_to_string(y.shape()) + " vs dictionary signal shape " +
                         shape_to_string(d.signal_shape()));
  return fista_mode_q(SignalSpectrum(y), DictionarySpectrum(d), acts, mode, weights, options);
}

}  // namespace kcsc::zstep
