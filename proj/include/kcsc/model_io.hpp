#pragma once

// Model directories:
//   dictionary.ktns      atoms stacked as (K, w_1, ..., w_p)
//   z_<n>_<k>_<q>.ktns   factor q of signal n's activation for atom k (n_q x R)
//   model.json           signal shape, counts, rank
// Dense (baseline) activations are stored as dense_<n>_<k>.ktns instead of
// factors, with "dense": true in model.json.

#include <filesystem>

#include <json.hpp>

#include "kcsc/baselines.hpp"
#include "kcsc/solver.hpp"

namespace kcsc::io {

struct Model {
  Dictionary dictionary;
  ActivationSet activations;                   ///< empty for dense models
  baselines::DenseActivationSet dense;         ///< empty for Kruskal models
  nlohmann::json metadata;

  bool is_dense() const { return !dense.empty(); }
  std::size_t signals() const { return is_dense() ? dense.size() : activations.size(); }
  /// Reconstruction of signal n without the atoms in `exclude`.
  DenseTensor reconstruct(std::size_t n, const std::set<std::size_t>& exclude = {}) const;
};

void save_model(const std::filesystem::path& dir, const Dictionary& d, const ActivationSet& acts,
                nlohmann::json metadata = nlohmann::json::object());
void save_dense_model(const std::filesystem::path& dir, const Dictionary& d, const baselines::DenseActivationSet& acts,
                      nlohmann::json metadata = nlohmann::json::object());
void save_dictionary(const std::filesystem::path& dir, const Dictionary& d,
                     nlohmann::json metadata = nlohmann::json::object());
Model load_model(const std::filesystem::path& dir);

}  // namespace kcsc::io
