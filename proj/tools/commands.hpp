#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cli.hpp"
#include "kcsc/baselines.hpp"
#include "kcsc/model_io.hpp"
#include "kcsc/solver.hpp"
#include "kcsc/synthgen.hpp"

namespace kcsc::cli {

namespace fs = std::filesystem;

class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct Outcome {
  RunManifest manifest;
  fs::path manifest_path;  ///< empty: not written
};

struct Command {
  CLI::App* app = nullptr;
  std::function<Outcome()> action;
};

Command add_synth(CLI::App& parent);
Command add_ingest(CLI::App& parent);
Command add_fit(CLI::App& parent);
Command add_encode(CLI::App& parent);
Command add_reconstruct(CLI::App& parent);
Command add_bench(CLI::App& parent, std::ostream& out);

enum class SolverKind { Kcsc, ConvFista, Fcsc };

SolverKind parse_solver(const std::string& name);
std::string solver_name(SolverKind s);
baselines::Method baseline_method(SolverKind s);

struct SolverFlags {
  std::string solver = "kcsc";
  std::size_t atoms = 3;
  Shape window;
  std::size_t rank = 2;
  double alpha = 0.1;
  double beta = 0.0;
  bool nonnegative = false;
  int max_sweeps = 100;
  double tolerance = 1e-4;
  int inner_iters = 200;
  double inner_tolerance = 1e-5;
  int dstep_iters = 500;
  double rho = 1.0;
  double admm_rho = 1.0;
  int restarts = 5;
  std::uint64_t seed = 0;
  bool monotone = false;
  bool no_gram = false;

  SolverConfig solver_config(std::size_t order) const;
  baselines::BaselineOptions baseline_options() const;
};

/// `learning` adds the dictionary-learning flags (--k, --window, --dstep-iters, --rho).
void add_solver_flags(CLI::App* app, SolverFlags& flags, bool learning);

/// Refuses an existing path unless `force`.
void claim_output(const fs::path& path, bool force);

/// A stacked (N, n_1, ..., n_p) tensor file, or a directory holding signals.ktns.
std::vector<DenseTensor> load_signals(const fs::path& path);

/// Ground truth located from explicit flags or next to a synth output directory.
struct Reference {
  std::optional<std::vector<DenseTensor>> clean;
  std::optional<io::Model> truth;
  fs::path clean_path;
  fs::path truth_path;
};
Reference find_reference(const fs::path& input, const std::string& clean_flag, const std::string& truth_flag);

std::vector<double> per_signal_rmse(std::span<const DenseTensor> a, std::span<const DenseTensor> b);
std::vector<double> per_signal_activation_rmse(const synth::ComposedSet& truth, const synth::ComposedSet& estimate,
                                               const synth::Alignment& alignment);

double median(std::vector<double> v);
nlohmann::json number_or_null(double v);

}  // namespace kcsc::cli
