#include "kcsc/synthgen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <random>

#include "kcsc/parallel.hpp"

namespace kcsc::synth {

void SynthConfig::validate() const {
  if (shape.empty()) throw DimensionError("empty signal shape");
  if (window.size() != shape.size())
    throw DimensionError("window " + shape_to_string(window) + " does not match signal shape " + shape_to_string(shape));
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (window[i] == 0 || window[i] > shape[i])
      throw DimensionError("window " + shape_to_string(window) + " larger than signal " + shape_to_string(shape));
  if (atoms == 0) throw std::invalid_argument("need at least one atom");
  if (rank == 0) throw std::invalid_argument("true rank must be at least 1");
  if (!(bernoulli > 0.0 && bernoulli <= 1.0)) throw std::invalid_argument("Bernoulli probability must lie in (0, 1]");
  if (value_low > value_high) throw std::invalid_argument("empty value range");
  if (signals == 0) throw std::invalid_argument("need at least one signal");
  if (snr_db && !std::isfinite(*snr_db)) throw std::invalid_argument("SNR must be finite");
}

namespace {

double draw_value(double lo, double hi, std::mt19937_64& rng) {
  if (lo == hi) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

double mean(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double variance(std::span<const double> v) {
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return s / static_cast<double>(v.size());
}

}  // namespace

SynthData generate(const SynthConfig& config) {
  config.validate();
  SynthData out;
  {
    auto rng = make_rng(config.seed, 0);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<DenseTensor> atoms;
    for (std::size_t k = 0; k < config.atoms; ++k) {
      DenseTensor a(config.window);
      double n = 0.0;
      while (n == 0.0) {
        for (auto& v : a.values()) v = unit(rng);
        n = frobenius_norm(a);
      }
      a *= 1.0 / n;
      atoms.push_back(std::move(a));
    }
    out.dictionary = Dictionary(std::move(atoms), config.shape);
  }

  out.signals.resize(config.signals);
  out.clean.resize(config.signals);
  out.activations.resize(config.signals);
  parallel_for(config.signals, [&](std::size_t n) {
    auto rng = make_rng(config.seed, 1 + n);
    std::bernoulli_distribution active(config.bernoulli);
    std::vector<KruskalActivation> acts;
    for (std::size_t k = 0; k < config.atoms; ++k) {
      KruskalActivation z(config.shape, config.rank);
      for (auto& f : z.factors)
        for (Eigen::Index r = 0; r < f.cols(); ++r)
          for (Eigen::Index i = 0; i < f.rows(); ++i)
            if (active(rng)) f(i, r) = draw_value(config.value_low, config.value_high, rng);
      acts.push_back(std::move(z));
    }
    DenseTensor clean = reconstruct(out.dictionary, acts);
    DenseTensor noisy = clean;
    if (config.snr_db) {
      std::normal_distribution<double> gauss;
      DenseTensor noise(config.shape);
      for (auto& v : noise.values()) v = gauss(rng);
      const double target_mse = variance(clean.data()) / std::pow(10.0, *config.snr_db / 10.0);
      const double current = std::inner_product(noise.values().begin(), noise.values().end(), noise.values().begin(),
                                                0.0) / static_cast<double>(noise.size());
      noise *= std::sqrt(target_mse / current);
      noisy += noise;
    }
    out.activations[n] = std::move(acts);
    out.clean[n] = std::move(clean);
    out.signals[n] = std::move(noisy);
  });
  return out;
}

double snr(const DenseTensor& ref, const DenseTensor& noisy) {
  if (ref.shape() != noisy.shape())
    throw DimensionError("snr: shape " + shape_to_string(ref.shape()) + " vs " + shape_to_string(noisy.shape()));
  const double r = rmse(ref, noisy);
  if (r == 0.0) return kInfiniteSnr;
  return 10.0 * std::log10(variance(ref.data()) / (r * r));
}

double rmse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("rmse: length mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

double rmse(const DenseTensor& a, const DenseTensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("rmse: shape " + shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  return rmse(a.data(), b.data());
}

double hit_rate(std::span<const double> values, double eps) {
  if (values.empty()) return 0.0;
  const auto hits = std::count_if(values.begin(), values.end(), [eps](double v) { return v < eps; });
  return static_cast<double>(hits) / static_cast<double>(values.size());
}

Alignment Alignment::identity(std::size_t k) {
  Alignment a;
  a.perm.resize(k);
  std::iota(a.perm.begin(), a.perm.end(), 0);
  a.sign.assign(k, 1.0);
  return a;
}

namespace {

using Composed = ComposedSet;

Composed compose_all(const ActivationSet& acts) { return compose_activations(acts); }

template <class Set>
void check_pair(const Set& truth, const Set& estimate) {
  if (truth.size() != estimate.size()) throw DimensionError("activation sets hold different signal counts");
  for (std::size_t n = 0; n < truth.size(); ++n)
    if (truth[n].size() != estimate[n].size()) throw DimensionError("activation sets hold different atom counts");
}

double composed_rmse(const Composed& t, const Composed& e, const Alignment& al) {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < t.size(); ++n)
    for (std::size_t k = 0; k < t[n].size(); ++k) {
      const auto& a = t[n][k];
      const auto& b = e[n][al.perm.at(k)];
      if (a.shape() != b.shape()) throw DimensionError("activation shape mismatch");
      for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - al.sign[k] * b[i];
        s += d * d;
      }
      count += a.size();
    }
  return count ? std::sqrt(s / static_cast<double>(count)) : 0.0;
}

Alignment align_composed(const Composed& t, const Composed& e) {
  const std::size_t K = t.empty() ? 0 : t.front().size();
  if (K > 8) throw std::invalid_argument("alignment search supports at most 8 atoms");
  // cost[k][j][s]: squared error of true atom k against estimate j with sign s.
  std::vector<std::vector<std::array<double, 2>>> cost(K, std::vector<std::array<double, 2>>(K, {0.0, 0.0}));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t j = 0; j < K; ++j)
      for (std::size_t n = 0; n < t.size(); ++n) {
        const auto& a = t[n][k];
        const auto& b = e[n][j];
        for (std::size_t i = 0; i < a.size(); ++i) {
          cost[k][j][0] += (a[i] - b[i]) * (a[i] - b[i]);
          cost[k][j][1] += (a[i] + b[i]) * (a[i] + b[i]);
        }
      }
  std::vector<std::size_t> perm(K);
  std::iota(perm.begin(), perm.end(), 0);
  Alignment best = Alignment::identity(K);
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t k = 0; k < K; ++k) c += std::min(cost[k][perm[k]][0], cost[k][perm[k]][1]);
    if (c < best_cost) {
      best_cost = c;
      best.perm = perm;
      for (std::size_t k = 0; k < K; ++k) best.sign[k] = cost[k][perm[k]][1] < cost[k][perm[k]][0] ? -1.0 : 1.0;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

}  // namespace

ComposedSet compose_activations(const ActivationSet& acts) {
  ComposedSet out;
  for (const auto& per_signal : acts) {
    std::vector<DenseTensor> row;
    for (const auto& z : per_signal) row.push_back(kruskal_compose(z));
    out.push_back(std::move(row));
  }
  return out;
}

Alignment align_activations(const ComposedSet& truth, const ComposedSet& estimate) {
  check_pair(truth, estimate);
  return align_composed(truth, estimate);
}

double activation_rmse(const ComposedSet& truth, const ComposedSet& estimate, const Alignment& alignment) {
  check_pair(truth, estimate);
  return composed_rmse(truth, estimate, alignment);
}

Alignment align_activations(const ActivationSet& truth, const ActivationSet& estimate) {
  check_pair(truth, estimate);
  return align_composed(compose_all(truth), compose_all(estimate));
}

double activation_rmse(const ActivationSet& truth, const ActivationSet& estimate, const Alignment& alignment) {
  check_pair(truth, estimate);
  return composed_rmse(compose_all(truth), compose_all(estimate), alignment);
}

double activation_rmse(const ActivationSet& truth, const ActivationSet& estimate) {
  check_pair(truth, estimate);
  const auto t = compose_all(truth);
  const auto e = compose_all(estimate);
  return composed_rmse(t, e, align_composed(t, e));
}

}  // namespace kcsc::synth
