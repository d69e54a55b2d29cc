#include "kcsc/dstep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace kcsc::dstep {

std::vector<SpectralTensor> compose_activation_spectra(std::span<const KruskalActivation> acts) {
  std::vector<SpectralTensor> out;
  out.reserve(acts.size());
  for (const auto& a : acts) {
    const auto transformed = spectral::modewise_dft(a.factors);
    out.push_back(spectral::kruskal_compose(transformed));
  }
  return out;
}

ShermanMorrisonSolver::ShermanMorrisonSolver(const std::vector<std::vector<SpectralTensor>>& activations, double rho)
    : rho_(rho) {
  if (!(rho > 0.0)) throw std::invalid_argument("ADMM penalty must be positive");
  if (activations.empty() || activations.front().empty()) throw DimensionError("no activation spectra");
  signals_ = activations.size();
  atoms_ = activations.front().size();
  frequencies_ = activations.front().front().size();
  for (const auto& per_signal : activations) {
    if (per_signal.size() != atoms_) throw DimensionError("every signal needs one spectrum per atom");
    for (const auto& s : per_signal)
      if (s.size() != frequencies_) throw DimensionError("activation spectra must share the shape");
  }
  updates_.assign(frequencies_ * signals_ * atoms_, Complex{});
  const auto K = static_cast<Eigen::Index>(atoms_);
  Eigen::VectorXcd a(K), c(K);
  for (std::size_t m = 0; m < frequencies_; ++m) {
    Complex* base = updates_.data() + m * signals_ * atoms_;
    for (std::size_t n = 0; n < signals_; ++n) {
      for (std::size_t k = 0; k < atoms_; ++k) a(static_cast<Eigen::Index>(k)) = std::conj(activations[n][k][m]);
      // c = A_{n-1}^{-1} a^H using the updates accumulated so far.
      c = a / rho_;
      for (std::size_t prev = 0; prev < n; ++prev) {
        Eigen::Map<const Eigen::VectorXcd> u(base + prev * atoms_, K);
        c -= u * u.dot(a);
      }
      const double gamma = 1.0 + std::real(a.dot(c));
      Eigen::Map<Eigen::VectorXcd>(base + n * atoms_, K) = c / std::sqrt(gamma);
    }
  }
}

Eigen::VectorXcd ShermanMorrisonSolver::solve_at(std::size_t frequency, const Eigen::VectorXcd& b) const {
  if (frequency >= frequencies_ || static_cast<std::size_t>(b.size()) != atoms_)
    throw DimensionError("solve_at: bad frequency or right-hand side length");
  const auto K = static_cast<Eigen::Index>(atoms_);
  const Complex* base = updates_.data() + frequency * signals_ * atoms_;
  Eigen::VectorXcd x = b / rho_;
  for (std::size_t n = 0; n < signals_; ++n) {
    Eigen::Map<const Eigen::VectorXcd> u(base + n * atoms_, K);
    x -= u * u.dot(b);
  }
  return x;
}

void ShermanMorrisonSolver::solve(std::vector<SpectralTensor>& rhs) const {
  if (rhs.size() != atoms_) throw DimensionError("solve: need one right-hand side per atom");
  Eigen::VectorXcd b(static_cast<Eigen::Index>(atoms_));
  for (std::size_t m = 0; m < frequencies_; ++m) {
    for (std::size_t k = 0; k < atoms_; ++k) b(static_cast<Eigen::Index>(k)) = rhs[k][m];
    const Eigen::VectorXcd x = solve_at(m, b);
    for (std::size_t k = 0; k < atoms_; ++k) rhs[k][m] = x(static_cast<Eigen::Index>(k));
  }
}

DenseTensor project_atom(const DenseTensor& padded, const Shape& window) {
  return resize_anchored(project_unit_ball(resize_anchored(padded, window)), padded.shape());
}

namespace {

double norm_of(const std::vector<DenseTensor>& ts) {
  double s = 0.0;
  for (const auto& t : ts)
    for (double v : t.data()) s += v * v;
  return std::sqrt(s);
}

constexpr int kFidelityInterval = 10;
constexpr double kRhoRange = 1e4;  ///< adapted rho stays within this factor of its start

double distance(const std::vector<DenseTensor>& a, const std::vector<DenseTensor>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      const double d = a[k][i] - b[k][i];
      s += d * d;
    }
  return std::sqrt(s);
}

}  // namespace

Dictionary dstep_solve(std::span<const DenseTensor> signals,
                       const std::vector<std::vector<SpectralTensor>>& activation_spectra, const Dictionary& initial,
                       const DStepOptions& options, DStepReport* report) {
  const auto start = std::chrono::steady_clock::now();
  if (signals.size() != activation_spectra.size())
    throw DimensionError("dstep: " + std::to_string(signals.size()) + " signals but " +
                         std::to_string(activation_spectra.size()) + " activation sets");
  const Shape& shape = initial.signal_shape();
  const Shape& window = initial.window();
  const std::size_t K = initial.size();
  for (const auto& y : signals)
    if (y.shape() != shape)
      throw DimensionError("dstep: signal " + shape_to_string(y.shape()) + " vs dictionary " + shape_to_string(shape));
  for (const auto& per_signal : activation_spectra) {
    if (per_signal.size() != K) throw DimensionError("dstep: activation count differs from atom count");
    for (const auto& s : per_signal)
      if (s.shape() != shape) throw DimensionError("dstep: activation spectrum shape mismatch");
  }
  const std::size_t M = shape_size(shape);

  // sum_n conj(Z_nk) Y_n, fixed for the whole solve.
  std::vector<SpectralTensor> correlation(K, SpectralTensor(shape));
  std::vector<SpectralTensor> yhat;
  for (std::size_t n = 0; n < signals.size(); ++n) {
    yhat.push_back(spectral::dft(signals[n]));
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t m = 0; m < M; ++m) correlation[k][m] += std::conj(activation_spectra[n][k][m]) * yhat[n][m];
  }
  const auto fidelity_of = [&](const std::vector<DenseTensor>& atoms) {
    std::vector<SpectralTensor> ghat;
    for (const auto& a : atoms) ghat.push_back(spectral::dft(a));
    double total = 0.0;
    for (std::size_t n = 0; n < yhat.size(); ++n)
      for (std::size_t m = 0; m < M; ++m) {
        Complex r = yhat[n][m];
        for (std::size_t k = 0; k < K; ++k) r -= activation_spectra[n][k][m] * ghat[k][m];
        total += std::norm(r);
      }
    return 0.5 * total / static_cast<double>(M);
  };

  std::vector<DenseTensor> g, u, d;
  for (std::size_t k = 0; k < K; ++k) {
    g.push_back(project_atom(initial.padded(k), window));
    u.emplace_back(shape);
  }
  d = g;
  std::vector<DenseTensor> best = g;
  double best_fidelity = fidelity_of(g);

  double rho = options.rho;
  if (options.scale_rho) {
    double energy = 0.0;
    for (const auto& per_signal : activation_spectra)
      for (const auto& s : per_signal) energy += spectral::squared_norm(s.data());
    energy /= static_cast<double>(M * K);
    if (energy > 0.0) rho *= energy;
  }
  const double initial_rho = rho;
  if (!(options.relaxation >= 1.0 && options.relaxation < 2.0)) throw std::invalid_argument("relaxation must lie in [1, 2)");
  ShermanMorrisonSolver solver(activation_spectra, rho);
  DStepReport rep;
  std::vector<SpectralTensor> rhs(K);
  for (int it = 0; it < options.max_iters; ++it) {
    for (std::size_t k = 0; k < K; ++k) {
      SpectralTensor diff = spectral::dft(g[k] - u[k]);
      for (std::size_t m = 0; m < M; ++m) diff[m] = correlation[k][m] + rho * diff[m];
      rhs[k] = std::move(diff);
    }
    solver.solve(rhs);
    std::vector<DenseTensor> g_new;
    g_new.reserve(K);
    for (std::size_t k = 0; k < K; ++k) {
      d[k] = spectral::idft(rhs[k]);
      DenseTensor relaxed = d[k] * options.relaxation + g[k] * (1.0 - options.relaxation);
      g_new.push_back(project_atom(relaxed + u[k], window));
      u[k] += relaxed - g_new[k];
      for (double v : d[k].data())
        if (!std::isfinite(v)) throw DivergenceError("non-finite dictionary iterate; try a smaller rho");
    }
    const double primal = distance(d, g_new);
    const double dual = rho * distance(g_new, g);
    const double scale = std::max({norm_of(d), norm_of(g_new), 1e-300});
    const double change = distance(g_new, g) / std::max(norm_of(g_new), 1e-300);
    g = std::move(g_new);
    if ((it + 1) % kFidelityInterval == 0 || it + 1 == options.max_iters) {
      const double f = fidelity_of(g);
      if (f < best_fidelity) {
        best_fidelity = f;
        best = g;
      }
    }
    rep.iterations = it + 1;
    rep.primal_residual = primal;
    rep.dual_residual = dual;
    if (primal / scale <= options.tolerance && change <= options.tolerance) {
      rep.converged = true;
      const double f = fidelity_of(g);
      if (f < best_fidelity) {
        best_fidelity = f;
        best = g;
      }
      break;
    }
    if (options.adapt_rho) {
      const double rel_primal = primal / scale;
      const double rel_dual = dual / std::max(rho * norm_of(u), 1e-300);
      double next = rho;
      if (rel_primal > 10.0 * rel_dual) next = rho * 2.0;
      else if (rel_dual > 10.0 * rel_primal) next = rho * 0.5;
      next = std::clamp(next, initial_rho / kRhoRange, initial_rho * kRhoRange);
      if (next != rho) {
        for (auto& t : u) t *= rho / next;
        rho = next;
        solver = ShermanMorrisonSolver(activation_spectra, rho);
      }
    }
  }
  rep.rho = rho;
  rep.fidelity = best_fidelity;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (report) *report = rep;

  std::vector<DenseTensor> atoms;
  atoms.reserve(K);
  for (std::size_t k = 0; k < K; ++k) atoms.push_back(project_unit_ball(resize_anchored(best[k], window)));
  return Dictionary(std::move(atoms), shape);
}

}  // namespace kcsc::dstep
