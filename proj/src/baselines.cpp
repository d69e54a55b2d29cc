#include "kcsc/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cctype>
#include <cmath>
#include <limits>

#include "kcsc/parallel.hpp"
#include "kcsc/spectral.hpp"

namespace kcsc::baselines {

namespace {

constexpr double kRhoRange = 1e4;  ///< adapted rho stays within this factor of its start

using Clock = std::chrono::steady_clock;

std::vector<SpectralTensor> atom_spectra(const Dictionary& d) {
  std::vector<SpectralTensor> out;
  for (std::size_t k = 0; k < d.size(); ++k) out.push_back(spectral::dft(d.padded(k)));
  return out;
}

void check_inputs(std::span<const DenseTensor> signals, const Dictionary& d) {
  for (const auto& y : signals)
    if (y.shape() != d.signal_shape())
      throw DimensionError("signal shape " + shape_to_string(y.shape()) + " vs dictionary signal shape " +
                           shape_to_string(d.signal_shape()));
}

double soft(double x, double thr, bool nonnegative) {
  if (nonnegative) return std::max(x - thr, 0.0);
  return std::copysign(std::max(std::abs(x) - thr, 0.0), x);
}

double sq_distance(const std::vector<DenseTensor>& a, const std::vector<DenseTensor>& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a[k].size(); ++i) s += (a[k][i] - b[k][i]) * (a[k][i] - b[k][i]);
  return s;
}

double sq_norm(const std::vector<DenseTensor>& a) {
  double s = 0.0;
  for (const auto& t : a)
    for (double v : t.data()) s += v * v;
  return s;
}

struct SignalRun {
  std::vector<DenseTensor> acts;
  long iterations = 0;
  bool converged = false;
};

SignalRun fcsc_one(const DenseTensor& y, const std::vector<SpectralTensor>& dhat, const BaselineOptions& opt) {
  const std::size_t K = dhat.size();
  const Shape& shape = y.shape();
  const std::size_t M = y.size();
  const SpectralTensor yhat = spectral::dft(y);
  // conj(D_k) Y, fixed.
  std::vector<SpectralTensor> dy(K, SpectralTensor(shape));
  std::vector<double> energy(M, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t m = 0; m < M; ++m) {
      dy[k][m] = std::conj(dhat[k][m]) * yhat[m];
      energy[m] += std::norm(dhat[k][m]);
    }

  SignalRun run;
  std::vector<DenseTensor> x(K, DenseTensor(shape)), z(K, DenseTensor(shape)), u(K, DenseTensor(shape));
  std::vector<SpectralTensor> rhs(K);
  double rho = opt.rho;
  for (int it = 0; it < opt.max_iters; ++it) {
    for (std::size_t k = 0; k < K; ++k) {
      SpectralTensor s = spectral::dft(z[k] - u[k]);
      for (std::size_t m = 0; m < M; ++m) s[m] = dy[k][m] + rho * s[m];
      rhs[k] = std::move(s);
    }
    // (rho I + a^H a)^{-1} b = (b - a^H (a b) / (rho + a a^H)) / rho, a = (D_1..D_K)[m].
    for (std::size_t m = 0; m < M; ++m) {
      Complex ab{};
      for (std::size_t k = 0; k < K; ++k) ab += dhat[k][m] * rhs[k][m];
      const Complex c = ab / (rho + energy[m]);
      for (std::size_t k = 0; k < K; ++k) rhs[k][m] = (rhs[k][m] - std::conj(dhat[k][m]) * c) / rho;
    }
    std::vector<DenseTensor> z_old = z;
    for (std::size_t k = 0; k < K; ++k) {
      x[k] = spectral::idft(rhs[k]);
      for (std::size_t i = 0; i < M; ++i) {
        if (!std::isfinite(x[k][i])) throw DivergenceError("FCSC-ShM: non-finite iterate");
        z[k][i] = soft(x[k][i] + u[k][i], opt.alpha / rho, opt.nonnegative);
        u[k][i] += x[k][i] - z[k][i];
      }
    }
    run.iterations = it + 1;
    const double primal = std::sqrt(sq_distance(x, z));
    const double dual = rho * std::sqrt(sq_distance(z, z_old));
    const double scale = std::sqrt(std::max({sq_norm(x), sq_norm(z), 1e-300}));
    const double dual_scale = rho * std::sqrt(std::max(sq_norm(u), 1e-300));
    if (primal <= opt.tolerance * scale && dual <= opt.tolerance * dual_scale) {
      run.converged = true;
      break;
    }
    double next = rho;
    if (primal > 10.0 * dual) next = rho * 2.0;
    else if (dual > 10.0 * primal) next = rho * 0.5;
    next = std::clamp(next, opt.rho / kRhoRange, opt.rho * kRhoRange);
    if (next != rho) {
      for (auto& t : u) t *= rho / next;
      rho = next;
    }
  }
  run.acts = std::move(z);
  return run;
}

SignalRun fista_one(const DenseTensor& y, const std::vector<SpectralTensor>& dhat, const BaselineOptions& opt) {
  const std::size_t K = dhat.size();
  const Shape& shape = y.shape();
  const std::size_t M = y.size();
  const SpectralTensor yhat = spectral::dft(y);
  double lipschitz = 0.0;
  for (std::size_t m = 0; m < M; ++m) {
    double e = 0.0;
    for (std::size_t k = 0; k < K; ++k) e += std::norm(dhat[k][m]);
    lipschitz = std::max(lipschitz, e);
  }
  const double eta = 1.0 / std::max(lipschitz, 1e-12);

  SignalRun run;
  std::vector<DenseTensor> z(K, DenseTensor(shape)), w(K, DenseTensor(shape)), w_prev(K, DenseTensor(shape));
  std::vector<SpectralTensor> zhat(K);
  SpectralTensor residual(shape);
  double t = 1.0;
  for (int it = 0; it < opt.max_iters; ++it) {
    for (std::size_t m = 0; m < M; ++m) residual[m] = -yhat[m];
    for (std::size_t k = 0; k < K; ++k) {
      zhat[k] = spectral::dft(z[k]);
      for (std::size_t m = 0; m < M; ++m) residual[m] += dhat[k][m] * zhat[k][m];
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    const double momentum = (t - 1.0) / t_next;
    double change = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      SpectralTensor g(shape);
      for (std::size_t m = 0; m < M; ++m) g[m] = std::conj(dhat[k][m]) * residual[m];
      const DenseTensor grad = spectral::idft(g);
      for (std::size_t i = 0; i < M; ++i) {
        w[k][i] = soft(z[k][i] - eta * grad[i], eta * opt.alpha, opt.nonnegative);
        if (!std::isfinite(w[k][i])) throw DivergenceError("ConvFISTA-FD: non-finite iterate");
        const double next = w[k][i] + momentum * (w[k][i] - w_prev[k][i]);
        change = std::max(change, std::abs(next - z[k][i]));
        z[k][i] = next;
      }
    }
    w_prev = w;
    t = t_next;
    run.iterations = it + 1;
    if (change <= opt.tolerance) {
      run.converged = true;
      break;
    }
  }
  run.acts = std::move(w);
  return run;
}

template <class Solve>
DenseActivationSet encode_all(std::span<const DenseTensor> signals, const Dictionary& d, const BaselineOptions& opt,
                              BaselineReport* report, Solve solve) {
  check_inputs(signals, d);
  if (opt.alpha < 0.0) throw std::invalid_argument("alpha must be non-negative");
  const auto start = Clock::now();
  const auto dhat = atom_spectra(d);
  std::vector<SignalRun> runs(signals.size());
  parallel_for(signals.size(), [&](std::size_t n) { runs[n] = solve(signals[n], dhat, opt); });
  DenseActivationSet out;
  BaselineReport rep;
  for (auto& r : runs) {
    rep.iterations += r.iterations;
    rep.converged = rep.converged && r.converged;
    out.push_back(std::move(r.acts));
  }
  rep.seconds = std::chrono::duration<double>(Clock::now() - start).count();
  if (report) *report = rep;
  return out;
}

}  // namespace

DenseActivationSet fcsc_shm_encode(std::span<const DenseTensor> signals, const Dictionary& d,
                                   const BaselineOptions& options, BaselineReport* report) {
  if (!(options.rho > 0.0)) throw std::invalid_argument("ADMM penalty must be positive");
  return encode_all(signals, d, options, report, fcsc_one);
}

DenseActivationSet convfista_fd_encode(std::span<const DenseTensor> signals, const Dictionary& d,
                                       const BaselineOptions& options, BaselineReport* report) {
  return encode_all(signals, d, options, report, fista_one);
}

Method parse_method(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "convfista" || s == "convfista-fd" || s == "convfista_fd") return Method::ConvFistaFD;
  if (s == "fcsc" || s == "fcsc-shm" || s == "fcsc_shm") return Method::FcscShM;
  throw std::invalid_argument("unknown baseline solver '" + name + "'");
}

std::string method_name(Method m) { return m == Method::ConvFistaFD ? "convfista-fd" : "fcsc-shm"; }

DenseActivationSet encode(Method m, std::span<const DenseTensor> signals, const Dictionary& d,
                          const BaselineOptions& options, BaselineReport* report) {
  return m == Method::ConvFistaFD ? convfista_fd_encode(signals, d, options, report)
                                  : fcsc_shm_encode(signals, d, options, report);
}

DenseFitResult learn_dictionary(Method m, std::span<const DenseTensor> signals, const Dictionary& initial,
                                const BaselineOptions& options, const dstep::DStepOptions& dstep_options,
                                int max_sweeps, double tolerance) {
  DenseFitResult out;
  out.dictionary = initial;
  double energy = 0.0;
  for (const auto& y : signals) energy += 0.5 * frobenius_norm(y) * frobenius_norm(y);
  const double floor = std::max(1e-12 * energy, std::numeric_limits<double>::min());
  double prev = 0.0;
  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    BaselineReport rep;
    out.activations = encode(m, signals, out.dictionary, options, &rep);
    out.encode_seconds += rep.seconds;
    out.iterations += rep.iterations;
    const auto start = Clock::now();
    std::vector<std::vector<SpectralTensor>> spectra;
    for (const auto& per_signal : out.activations) {
      std::vector<SpectralTensor> row;
      for (const auto& z : per_signal) row.push_back(spectral::dft(z));
      spectra.push_back(std::move(row));
    }
    out.dictionary = dstep::dstep_solve(signals, spectra, out.dictionary, dstep_options);
    out.dstep_seconds += std::chrono::duration<double>(Clock::now() - start).count();
    const double obj = dense_objective(signals, out.dictionary, out.activations, options.alpha);
    if (!std::isfinite(obj)) throw DivergenceError("baseline objective became non-finite");
    out.objective_trace.push_back(obj);
    out.sweeps = sweep;
    if (sweep > 1 && std::abs(prev - obj) / std::max(std::abs(prev), floor) < tolerance) break;
    prev = obj;
  }
  return out;
}

DenseTensor reconstruct_dense(const Dictionary& d, std::span<const DenseTensor> acts) {
  if (acts.size() != d.size()) throw DimensionError("reconstruct_dense: activation count differs from atom count");
  SpectralTensor sum(d.signal_shape());
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (acts[k].shape() != d.signal_shape()) throw DimensionError("reconstruct_dense: activation shape mismatch");
    const SpectralTensor dk = spectral::dft(d.padded(k));
    const SpectralTensor zk = spectral::dft(acts[k]);
    for (std::size_t m = 0; m < sum.size(); ++m) sum[m] += dk[m] * zk[m];
  }
  return spectral::idft(sum);
}

std::vector<DenseTensor> fidelity_gradient(const DenseTensor& y, const Dictionary& d, std::span<const DenseTensor> acts) {
  const SpectralTensor residual = spectral::dft(reconstruct_dense(d, acts) - y);
  std::vector<DenseTensor> out;
  for (std::size_t k = 0; k < d.size(); ++k) {
    const SpectralTensor dk = spectral::dft(d.padded(k));
    SpectralTensor g(y.shape());
    for (std::size_t m = 0; m < g.size(); ++m) g[m] = std::conj(dk[m]) * residual[m];
    out.push_back(spectral::idft(g));
  }
  return out;
}

double dense_objective(std::span<const DenseTensor> signals, const Dictionary& d, const DenseActivationSet& acts,
                       double alpha) {
  if (signals.size() != acts.size()) throw DimensionError("dense_objective: signal and activation counts differ");
  double total = 0.0;
  for (std::size_t n = 0; n < signals.size(); ++n) {
    const double r = frobenius_norm(signals[n] - reconstruct_dense(d, acts[n]));
    total += 0.5 * r * r;
    for (const auto& z : acts[n])
      for (double v : z.data()) total += alpha * std::abs(v);
  }
  return total;
}

}  // namespace kcsc::baselines
