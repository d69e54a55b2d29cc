#include "kcsc/solver.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>

#include "kcsc/parallel.hpp"

namespace kcsc {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) { return std::chrono::duration<double>(Clock::now() - start).count(); }

std::vector<zstep::SignalSpectrum> transform_signals(std::span<const DenseTensor> signals) {
  std::vector<zstep::SignalSpectrum> out;
  out.reserve(signals.size());
  for (const auto& y : signals) out.emplace_back(y);
  return out;
}

std::vector<std::vector<SpectralTensor>> activation_spectra(const ActivationSet& acts) {
  std::vector<std::vector<SpectralTensor>> out;
  out.reserve(acts.size());
  for (const auto& per_signal : acts) out.push_back(dstep::compose_activation_spectra(per_signal));
  return out;
}

}  // namespace

void SolverConfig::validate(const Shape& signal_shape) const {
  if (atoms == 0) throw std::invalid_argument("need at least one atom");
  if (rank == 0) throw std::invalid_argument("rank must be at least 1");
  if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
  if (restarts < 1) throw std::invalid_argument("need at least one restart");
  if (window.size() != signal_shape.size())
    throw DimensionError("window " + shape_to_string(window) + " does not match signal order " +
                         shape_to_string(signal_shape));
  for (std::size_t i = 0; i < window.size(); ++i)
    if (window[i] == 0 || window[i] > signal_shape[i])
      throw DimensionError("window " + shape_to_string(window) + " exceeds signal shape " +
                           shape_to_string(signal_shape));
  weights.validate(signal_shape.size());
  for (auto q : resolved_mode_order(signal_shape.size())) detail::check_mode(signal_shape, q);
}

std::vector<std::size_t> SolverConfig::resolved_mode_order(std::size_t order) const {
  if (!mode_order.empty()) return mode_order;
  std::vector<std::size_t> out(order);
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return std::mt19937_64(seq);
}

KruskalActivation random_activation(const Shape& shape, std::size_t rank, bool nonnegative, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(nonnegative ? 0.0 : -1.0, 1.0);
  KruskalActivation z(shape, rank);
  for (auto& f : z.factors)
    for (Eigen::Index j = 0; j < f.cols(); ++j)
      for (Eigen::Index i = 0; i < f.rows(); ++i) f(i, j) = dist(rng);
  return z;
}

Dictionary random_dictionary(std::size_t atoms, const Shape& window, const Shape& signal_shape, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<DenseTensor> out;
  for (std::size_t k = 0; k < atoms; ++k) {
    DenseTensor a(window);
    for (auto& v : a.values()) v = dist(rng);
    const double n = frobenius_norm(a);
    if (n > 0.0) a *= 1.0 / n;
    out.push_back(std::move(a));
  }
  return Dictionary(std::move(out), signal_shape);
}

DenseTensor reconstruct(const Dictionary& d, std::span<const KruskalActivation> acts, const std::set<std::size_t>& exclude) {
  if (acts.size() != d.size())
    throw DimensionError("reconstruct: " + std::to_string(acts.size()) + " activations for " +
                         std::to_string(d.size()) + " atoms");
  for (auto k : exclude)
    if (k >= d.size()) throw std::out_of_range("reconstruct: unknown atom index " + std::to_string(k));
  const Shape& shape = d.signal_shape();
  SpectralTensor sum(shape);
  for (std::size_t k = 0; k < d.size(); ++k) {
    if (exclude.count(k)) continue;
    if (acts[k].shape() != shape)
      throw DimensionError("activation shape " + shape_to_string(acts[k].shape()) + " vs signal shape " +
                           shape_to_string(shape));
    const SpectralTensor dk = spectral::dft(d.padded(k));
    const auto transformed = spectral::modewise_dft(acts[k].factors);
    const SpectralTensor zk = spectral::kruskal_compose(transformed);
    for (std::size_t m = 0; m < sum.size(); ++m) sum[m] += dk[m] * zk[m];
  }
  return spectral::idft(sum);
}

double fidelity(std::span<const DenseTensor> signals, const Dictionary& d, const ActivationSet& acts) {
  if (signals.size() != acts.size()) throw DimensionError("fidelity: signal and activation counts differ");
  double total = 0.0;
  for (std::size_t n = 0; n < signals.size(); ++n) {
    const DenseTensor residual = signals[n] - reconstruct(d, acts[n]);
    const double r = frobenius_norm(residual);
    total += 0.5 * r * r;
  }
  return total;
}

double regularization(const ActivationSet& acts, const zstep::RegWeights& weights) {
  double total = 0.0;
  for (const auto& per_signal : acts)
    for (const auto& z : per_signal)
      for (std::size_t q = 0; q < z.factors.size(); ++q) {
        total += weights.alpha.at(q) * z.factors[q].cwiseAbs().sum();
        total += weights.beta.at(q) * z.factors[q].squaredNorm();
      }
  return total;
}

double objective(std::span<const DenseTensor> signals, const Dictionary& d, const ActivationSet& acts,
                 const zstep::RegWeights& weights) {
  return fidelity(signals, d, acts) + regularization(acts, weights);
}

std::size_t effective_rank(const KruskalActivation& z, double tol) {
  std::vector<double> energy(z.rank(), 1.0);
  for (const auto& f : z.factors)
    for (std::size_t r = 0; r < energy.size(); ++r) energy[r] *= f.col(static_cast<Eigen::Index>(r)).norm();
  double largest = 0.0;
  for (double e : energy) largest = std::max(largest, e);
  if (largest == 0.0) return 0;
  std::size_t count = 0;
  for (double e : energy)
    if (e > tol * largest) ++count;
  return count;
}

FitResult run_from(std::span<const DenseTensor> signals, Dictionary d, ActivationSet acts, const SolverConfig& config,
                   bool learn_dictionary, int restart_index) {
  const auto start = Clock::now();
  if (signals.empty()) throw std::invalid_argument("no signals");
  const Shape& shape = signals.front().shape();
  for (const auto& y : signals)
    if (y.shape() != shape) throw DimensionError("all signals must share the shape");
  if (d.signal_shape() != shape)
    throw DimensionError("dictionary signal shape " + shape_to_string(d.signal_shape()) + " vs signal shape " +
                         shape_to_string(shape));
  if (acts.size() != signals.size()) throw DimensionError("need one activation set per signal");

  const auto modes = config.resolved_mode_order(shape.size());
  zstep::FistaOptions inner = config.inner;
  if (config.monotone) inner.monotone = true;

  const auto yspec = transform_signals(signals);
  auto dspec = std::make_unique<zstep::DictionarySpectrum>(d);

  FitResult result;
  result.restart = restart_index;
  double obj = objective(signals, d, acts, config.weights);
  result.objective_trace.push_back(obj);
  std::mutex timing_mutex;
  double energy = 0.0;
  for (const auto& y : signals) energy += 0.5 * frobenius_norm(y) * frobenius_norm(y);
  const double floor = std::max(1e-12 * energy, std::numeric_limits<double>::min());

  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    if (config.on_step) {
      for (std::size_t n = 0; n < signals.size(); ++n)
        for (auto q : modes) {
          const double before = objective(signals, d, acts, config.weights);
          const auto rep = zstep::fista_mode_q(yspec[n], *dspec, acts[n], q, config.weights, inner);
          result.timings.zstep_precompute += rep.precompute_seconds;
          result.timings.zstep_iterate += rep.iterate_seconds;
          result.zstep_iterations += rep.iterations;
          config.on_step(StepEvent{Phase::ZMode, restart_index, sweep, n, q, before,
                                   objective(signals, d, acts, config.weights)});
        }
    } else {
      parallel_for(signals.size(), [&](std::size_t n) {
        double pre = 0.0, iter = 0.0;
        long count = 0;
        for (auto q : modes) {
          const auto rep = zstep::fista_mode_q(yspec[n], *dspec, acts[n], q, config.weights, inner);
          pre += rep.precompute_seconds;
          iter += rep.iterate_seconds;
          count += rep.iterations;
        }
        std::lock_guard lock(timing_mutex);
        result.timings.zstep_precompute += pre;
        result.timings.zstep_iterate += iter;
        result.zstep_iterations += count;
      });
    }

    if (learn_dictionary) {
      const auto dstart = Clock::now();
      const double before = config.on_step ? objective(signals, d, acts, config.weights) : 0.0;
      Dictionary updated = dstep::dstep_solve(signals, activation_spectra(acts), d, config.dstep);
      if (!config.monotone || fidelity(signals, updated, acts) <= fidelity(signals, d, acts)) {
        d = std::move(updated);
        dspec = std::make_unique<zstep::DictionarySpectrum>(d);
      }
      result.timings.dstep += seconds_since(dstart);
      if (config.on_step)
        config.on_step(StepEvent{Phase::DStep, restart_index, sweep, 0, 0, before,
                                 objective(signals, d, acts, config.weights)});
    }

    const double next = objective(signals, d, acts, config.weights);
    if (!std::isfinite(next)) throw DivergenceError("objective became non-finite at sweep " + std::to_string(sweep));
    result.objective_trace.push_back(next);
    result.sweeps = sweep;
    const double change = std::abs(obj - next) / std::max(std::abs(obj), floor);
    obj = next;
    if (change < config.tolerance) break;
  }

  for (const auto& per_signal : acts) {
    std::vector<std::size_t> ranks;
    for (const auto& z : per_signal) ranks.push_back(effective_rank(z, config.rank_tolerance));
    result.effective_ranks.push_back(std::move(ranks));
  }
  result.dictionary = std::move(d);
  result.activations = std::move(acts);
  result.timings.total = seconds_since(start);
  return result;
}

namespace {

FitResult best_of_restarts(std::span<const DenseTensor> signals, SolverConfig config,
                           const Dictionary* fixed_dictionary) {
  if (signals.empty()) throw std::invalid_argument("no signals");
  const Shape& shape = signals.front().shape();
  if (fixed_dictionary) {
    config.atoms = fixed_dictionary->size();
    config.window = fixed_dictionary->window();
  }
  config.validate(shape);
  FitResult best;
  bool have_best = false;
  std::vector<double> finals;
  for (int r = 0; r < config.restarts; ++r) {
    InitialState init = initial_state(shape, signals.size(), config, r, fixed_dictionary);
    FitResult res;
    try {
      res = run_from(signals, std::move(init.dictionary), std::move(init.activations), config,
                     fixed_dictionary == nullptr, r);
    } catch (const DivergenceError& e) {
      throw DivergenceError("restart " + std::to_string(r) + ": " + e.what());
    }
    finals.push_back(res.final_objective());
    if (!have_best || res.final_objective() < best.final_objective()) {
      best = std::move(res);
      have_best = true;
    }
  }
  best.restart_objectives = std::move(finals);
  return best;
}

}  // namespace

InitialState initial_state(const Shape& shape, std::size_t signals, const SolverConfig& config, int restart,
                           const Dictionary* fixed) {
  auto rng = make_rng(config.seed, static_cast<std::uint64_t>(restart));
  const std::size_t atoms = fixed ? fixed->size() : config.atoms;
  InitialState out{fixed ? *fixed : random_dictionary(atoms, config.window, shape, rng), ActivationSet(signals)};
  for (auto& per_signal : out.activations)
    for (std::size_t k = 0; k < atoms; ++k)
      per_signal.push_back(random_activation(shape, config.rank, config.weights.nonnegative, rng));
  return out;
}

FitResult fit(std::span<const DenseTensor> signals, const SolverConfig& config) {
  return best_of_restarts(signals, config, nullptr);
}

FitResult encode(std::span<const DenseTensor> signals, const Dictionary& d, const SolverConfig& config) {
  return best_of_restarts(signals, config, &d);
}

}  // namespace kcsc
