#include "kcsc/model_io.hpp"

#include <fstream>

#include "kcsc/tensor_io.hpp"

namespace kcsc::io {

namespace fs = std::filesystem;

namespace {

std::string factor_name(std::size_t n, std::size_t k, std::size_t q) {
  return "z_" + std::to_string(n) + "_" + std::to_string(k) + "_" + std::to_string(q) + ".ktns";
}

std::string dense_name(std::size_t n, std::size_t k) {
  return "dense_" + std::to_string(n) + "_" + std::to_string(k) + ".ktns";
}

void write_json(const fs::path& path, const nlohmann::json& j) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

void prepare(const fs::path& dir, const Dictionary& d, nlohmann::json& metadata) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  save_tensor(dir / "dictionary.ktns", stack_atoms(d));
  metadata["signal_shape"] = d.signal_shape();
  metadata["window"] = d.window();
  metadata["atoms"] = d.size();
}

}  // namespace

DenseTensor Model::reconstruct(std::size_t n, const std::set<std::size_t>& exclude) const {
  if (n >= signals()) throw std::out_of_range("model holds " + std::to_string(signals()) + " signals");
  if (!is_dense()) return kcsc::reconstruct(dictionary, activations[n], exclude);
  for (auto k : exclude)
    if (k >= dictionary.size()) throw std::out_of_range("reconstruct: unknown atom index " + std::to_string(k));
  std::vector<DenseTensor> kept;
  std::vector<DenseTensor> atoms;
  for (std::size_t k = 0; k < dictionary.size(); ++k) {
    if (exclude.count(k)) continue;
    kept.push_back(dense[n][k]);
    atoms.push_back(dictionary.atom(k));
  }
  if (kept.empty()) return DenseTensor(dictionary.signal_shape());
  return baselines::reconstruct_dense(Dictionary(std::move(atoms), dictionary.signal_shape()), kept);
}

void save_dictionary(const fs::path& dir, const Dictionary& d, nlohmann::json metadata) {
  prepare(dir, d, metadata);
  metadata["signals"] = 0;
  write_json(dir / "model.json", metadata);
}

void save_model(const fs::path& dir, const Dictionary& d, const ActivationSet& acts, nlohmann::json metadata) {
  prepare(dir, d, metadata);
  for (std::size_t n = 0; n < acts.size(); ++n)
    for (std::size_t k = 0; k < acts[n].size(); ++k)
      for (std::size_t q = 0; q < acts[n][k].factors.size(); ++q)
        save_matrix(dir / factor_name(n, k, q), acts[n][k].factors[q]);
  metadata["signals"] = acts.size();
  metadata["rank"] = acts.empty() || acts.front().empty() ? 0 : acts.front().front().rank();
  metadata["dense"] = false;
  write_json(dir / "model.json", metadata);
}

void save_dense_model(const fs::path& dir, const Dictionary& d, const baselines::DenseActivationSet& acts,
                      nlohmann::json metadata) {
  prepare(dir, d, metadata);
  for (std::size_t n = 0; n < acts.size(); ++n)
    for (std::size_t k = 0; k < acts[n].size(); ++k) save_tensor(dir / dense_name(n, k), acts[n][k]);
  metadata["signals"] = acts.size();
  metadata["dense"] = true;
  write_json(dir / "model.json", metadata);
}

Model load_model(const fs::path& dir) {
  std::ifstream is(dir / "model.json");
  if (!is) throw IoError("no model.json in " + dir.string());
  Model m;
  try {
    is >> m.metadata;
  } catch (const std::exception& e) {
    throw IoError("malformed " + (dir / "model.json").string() + ": " + e.what());
  }
  const Shape shape = m.metadata.at("signal_shape").get<Shape>();
  m.dictionary = unstack_atoms(load_tensor(dir / "dictionary.ktns"), shape);
  const auto N = m.metadata.value("signals", std::size_t{0});
  const bool dense = m.metadata.value("dense", false);
  const std::size_t K = m.dictionary.size();
  for (std::size_t n = 0; n < N; ++n) {
    if (dense) {
      std::vector<DenseTensor> row;
      for (std::size_t k = 0; k < K; ++k) row.push_back(load_tensor(dir / dense_name(n, k)));
      m.dense.push_back(std::move(row));
    } else {
      std::vector<KruskalActivation> row;
      for (std::size_t k = 0; k < K; ++k) {
        std::vector<Matrix> factors;
        for (std::size_t q = 0; q < shape.size(); ++q) factors.push_back(load_matrix(dir / factor_name(n, k, q)));
        row.emplace_back(std::move(factors));
      }
      m.activations.push_back(std::move(row));
    }
  }
  return m;
}

}  // namespace kcsc::io
