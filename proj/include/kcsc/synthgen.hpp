#pragma once

// Synthetic K-CSC datasets and the evaluation metrics used on them.

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "kcsc/solver.hpp"
#include "kcsc/tensor.hpp"

namespace kcsc::synth {

struct SynthConfig {
  Shape shape{25, 25, 25};
  std::size_t atoms = 3;
  Shape window{5, 5, 5};
  std::size_t rank = 2;            ///< true rank R*
  double bernoulli = 0.2;          ///< probability a factor entry is nonzero
  double value_low = -1.0;         ///< nonzero factor entries ~ U[value_low, value_high]
  double value_high = 1.0;
  std::optional<double> snr_db;    ///< no noise when empty
  std::size_t signals = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SynthData {
  std::vector<DenseTensor> signals;  ///< noisy when an SNR is set
  std::vector<DenseTensor> clean;
  Dictionary dictionary;
  ActivationSet activations;         ///< [signal][atom], rank R*
};

SynthData generate(const SynthConfig& config);

/// 10 log10(Var(ref) / MSE(ref, noisy)); +inf when the tensors coincide.
double snr(const DenseTensor& ref, const DenseTensor& noisy);
inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

double rmse(std::span<const double> a, std::span<const double> b);
double rmse(const DenseTensor& a, const DenseTensor& b);

/// Fraction of values strictly below eps.
double hit_rate(std::span<const double> values, double eps);

/// Atom order and signs that best match `estimate` to `truth`: estimate atom
/// perm[k] corresponds to true atom k with sign sign[k].
struct Alignment {
  std::vector<std::size_t> perm;
  std::vector<double> sign;

  static Alignment identity(std::size_t k);
};

/// Activations as full tensors, [signal][atom].
using ComposedSet = std::vector<std::vector<DenseTensor>>;
ComposedSet compose_activations(const ActivationSet& acts);

/// Exhaustive search over permutations (K <= 8) minimising the summed
/// sign-corrected squared error of the composed activations.
Alignment align_activations(const ActivationSet& truth, const ActivationSet& estimate);

/// RMSE between composed activation tensors over every signal and atom.
double activation_rmse(const ActivationSet& truth, const ActivationSet& estimate, const Alignment& alignment);
double activation_rmse(const ActivationSet& truth, const ActivationSet& estimate);  ///< with best alignment

Alignment align_activations(const ComposedSet& truth, const ComposedSet& estimate);
double activation_rmse(const ComposedSet& truth, const ComposedSet& estimate, const Alignment& alignment);

}  // namespace kcsc::synth
