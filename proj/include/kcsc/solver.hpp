#pragma once

// Alternating minimisation of the Kruskal CSC objective
//
//   1/2 sum_n ||Y_n - sum_k D_k * [[Z_nk]]||_F^2
//     + sum_n sum_q alpha_q sum_k ||Z_nk^(q)||_1 + beta_q sum_k ||Z_nk^(q)||_F^2
//
// over Kruskal factors (one FISTA solve per mode, cyclically) and atoms
// (ADMM), with random restarts.

#include <cstdint>
#include <functional>
#include <random>
#include <set>
#include <span>
#include <vector>

#include "kcsc/dstep.hpp"
#include "kcsc/tensor.hpp"
#include "kcsc/zstep.hpp"

namespace kcsc {

using ActivationSet = std::vector<std::vector<KruskalActivation>>;  ///< [signal][atom]

enum class Phase { ZMode, DStep };

struct StepEvent {
  Phase phase = Phase::ZMode;
  int restart = 0;
  int sweep = 0;
  std::size_t signal = 0;
  std::size_t mode = 0;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

struct SolverConfig {
  std::size_t atoms = 3;
  std::size_t rank = 2;
  Shape window;
  zstep::RegWeights weights;
  int max_sweeps = 100;
  double tolerance = 1e-4;  ///< relative objective change between sweeps
  zstep::FistaOptions inner;
  dstep::DStepOptions dstep;
  int restarts = 5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> mode_order;  ///< empty: 0, 1, ..., p-1
  /// ISTA inner steps and a D-step that is only accepted when the fidelity
  /// does not increase.
  bool monotone = false;
  double rank_tolerance = 1e-3;
  /// Called after every mode subproblem and D-step with the objective before
  /// and after. Forces sequential processing of signals.
  std::function<void(const StepEvent&)> on_step;

  void validate(const Shape& signal_shape) const;
  std::vector<std::size_t> resolved_mode_order(std::size_t order) const;
};

struct PhaseTimings {
  double zstep_precompute = 0.0;
  double zstep_iterate = 0.0;
  double dstep = 0.0;
  double total = 0.0;
};

struct FitResult {
  Dictionary dictionary;
  ActivationSet activations;
  std::vector<double> objective_trace;
  std::vector<std::vector<std::size_t>> effective_ranks;  ///< [signal][atom]
  PhaseTimings timings;
  int restart = 0;
  int sweeps = 0;
  long zstep_iterations = 0;
  std::vector<double> restart_objectives;

  double final_objective() const { return objective_trace.empty() ? 0.0 : objective_trace.back(); }
};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0);

KruskalActivation random_activation(const Shape& shape, std::size_t rank, bool nonnegative, std::mt19937_64& rng);
Dictionary random_dictionary(std::size_t atoms, const Shape& window, const Shape& signal_shape, std::mt19937_64& rng);

/// sum over atoms not in `exclude` of D_k * [[Z_k]].
DenseTensor reconstruct(const Dictionary& d, std::span<const KruskalActivation> acts,
                        const std::set<std::size_t>& exclude = {});

double fidelity(std::span<const DenseTensor> signals, const Dictionary& d, const ActivationSet& acts);
double regularization(const ActivationSet& acts, const zstep::RegWeights& weights);
double objective(std::span<const DenseTensor> signals, const Dictionary& d, const ActivationSet& acts,
                 const zstep::RegWeights& weights);

/// Components whose energy prod_q ||z_r^(q)|| exceeds tol * the largest one.
std::size_t effective_rank(const KruskalActivation& z, double tol = 1e-3);

struct InitialState {
  Dictionary dictionary;
  ActivationSet activations;
};

/// Starting point of restart `restart`: random atoms (or `fixed`) and random
/// factors drawn from stream `restart` of `config.seed`.
InitialState initial_state(const Shape& shape, std::size_t signals, const SolverConfig& config, int restart,
                           const Dictionary* fixed = nullptr);

/// Dictionary learning: alternates Z-steps and D-steps, best of `restarts`.
FitResult fit(std::span<const DenseTensor> signals, const SolverConfig& config);

/// Z-step only with a fixed dictionary, best of `restarts`.
FitResult encode(std::span<const DenseTensor> signals, const Dictionary& d, const SolverConfig& config);

/// Single run from a given starting point (no restarts); `learn_dictionary`
/// toggles the D-step.
FitResult run_from(std::span<const DenseTensor> signals, Dictionary d, ActivationSet acts, const SolverConfig& config,
                   bool learn_dictionary, int restart_index = 0);

}  // namespace kcsc
