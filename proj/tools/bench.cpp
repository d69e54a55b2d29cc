#include <chrono>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>

#include "commands.hpp"
#include "kcsc/errors.hpp"
#include "kcsc/parallel.hpp"

namespace kcsc::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

constexpr const char* kColumns[] = {"solver",       "alpha",  "rank",          "restart",           "gram_opt",
                                    "threads",      "signals", "signal_size",  "rmse_y",            "rmse_z",
                                    "hit_y",        "hit_z",   "objective",    "iterations",        "zstep_precompute_s",
                                    "zstep_iterate_s", "zstep_per_iter_s", "dstep_s", "total_s"};

constexpr const char* kColumnHelp =
    "Output columns (one row per solver, alpha, rank, restart and dataset):\n"
    "  solver              kcsc, convfista or fcsc\n"
    "  alpha               l1 weight\n"
    "  rank                CP-rank bound (empty for baselines)\n"
    "  restart             initialisation index (baseline encodes are deterministic: 0 only)\n"
    "  gram_opt            1 if the kcsc gradient uses Gram blocks, 0 if assembled directly (empty for baselines)\n"
    "  threads             worker threads\n"
    "  signals             number of signals N\n"
    "  signal_size         entries per signal M\n"
    "  rmse_y              median over signals of RMSE(reconstruction, clean signal; observed when no clean)\n"
    "  rmse_z              median over signals of RMSE of the composed activations (empty without truth)\n"
    "  hit_y, hit_z        fraction of signals whose RMSE is below --eps\n"
    "  objective           final objective of the solver\n"
    "  iterations          inner iterations summed over signals, modes and sweeps\n"
    "  zstep_precompute_s  activation-step set-up time (Gram blocks)\n"
    "  zstep_iterate_s     activation-step iteration time\n"
    "  zstep_per_iter_s    zstep_iterate_s / iterations\n"
    "  dstep_s             dictionary-update time (learning only)\n"
    "  total_s             wall-clock of the run\n"
    "Times in seconds; missing values are empty in CSV and null in JSON.";

struct BenchOptions {
  std::string data;
  std::vector<std::size_t> sizes;
  synth::SynthConfig synth;
  std::optional<double> snr;
  std::vector<std::string> solvers{"kcsc", "convfista", "fcsc"};
  std::vector<double> alphas{0.1};
  std::vector<std::size_t> ranks{2};
  int restarts = 1;
  bool no_gram = false;
  bool learn = false;
  SolverFlags flags;
  double eps = 1e-3;
  std::string format = "csv";
  std::string out;
  std::string manifest;
  bool force = false;
};

struct Row {
  std::string solver;
  double alpha = 0.0;
  std::optional<std::size_t> rank;
  int restart = 0;
  std::optional<bool> gram_opt;
  std::size_t threads = 0;
  std::size_t signals = 0;
  std::size_t signal_size = 0;
  double rmse_y = 0.0;
  std::optional<double> rmse_z;
  double hit_y = 0.0;
  std::optional<double> hit_z;
  double objective = 0.0;
  long iterations = 0;
  double zstep_precompute_s = 0.0;
  double zstep_iterate_s = 0.0;
  double zstep_per_iter_s = 0.0;
  double dstep_s = 0.0;
  double total_s = 0.0;
};

nlohmann::json to_json(const Row& r) {
  const auto opt = [](const auto& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"solver", r.solver},
          {"alpha", r.alpha},
          {"rank", opt(r.rank)},
          {"restart", r.restart},
          {"gram_opt", r.gram_opt ? nlohmann::json(*r.gram_opt ? 1 : 0) : nlohmann::json(nullptr)},
          {"threads", r.threads},
          {"signals", r.signals},
          {"signal_size", r.signal_size},
          {"rmse_y", number_or_null(r.rmse_y)},
          {"rmse_z", r.rmse_z ? number_or_null(*r.rmse_z) : nlohmann::json(nullptr)},
          {"hit_y", r.hit_y},
          {"hit_z", opt(r.hit_z)},
          {"objective", number_or_null(r.objective)},
          {"iterations", r.iterations},
          {"zstep_precompute_s", r.zstep_precompute_s},
          {"zstep_iterate_s", r.zstep_iterate_s},
          {"zstep_per_iter_s", number_or_null(r.zstep_per_iter_s)},
          {"dstep_s", r.dstep_s},
          {"total_s", r.total_s}};
}

std::string csv_cell(const nlohmann::json& v) {
  if (v.is_null()) return "";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(10) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

void write_rows(std::ostream& os, const std::vector<Row>& rows, const std::string& format) {
  if (format == "json") {
    nlohmann::json all = nlohmann::json::array();
    for (const auto& r : rows) all.push_back(to_json(r));
    os << all.dump(2) << '\n';
    return;
  }
  for (std::size_t c = 0; c < std::size(kColumns); ++c) os << (c ? "," : "") << kColumns[c];
  os << '\n';
  for (const auto& r : rows) {
    const nlohmann::json j = to_json(r);
    for (std::size_t c = 0; c < std::size(kColumns); ++c) os << (c ? "," : "") << csv_cell(j.at(kColumns[c]));
    os << '\n';
  }
}

struct Dataset {
  std::vector<DenseTensor> signals;
  std::optional<std::vector<DenseTensor>> clean;
  std::optional<Dictionary> dictionary;
  std::optional<synth::ComposedSet> truth;
};

void score(Row& row, const Dataset& data, const std::vector<DenseTensor>& recon, const synth::ComposedSet& estimate,
           bool learned, double eps) {
  const auto y_err = per_signal_rmse(recon, data.clean ? *data.clean : data.signals);
  row.rmse_y = median(y_err);
  row.hit_y = synth::hit_rate(y_err, eps);
  if (data.truth && data.truth->front().size() == estimate.front().size()) {
    const auto align = learned ? synth::align_activations(*data.truth, estimate)
                               : synth::Alignment::identity(estimate.front().size());
    const auto z_err = per_signal_activation_rmse(*data.truth, estimate, align);
    row.rmse_z = median(z_err);
    row.hit_z = synth::hit_rate(z_err, eps);
  }
}

std::vector<Row> run_dataset(const Dataset& data, const BenchOptions& o) {
  std::vector<SolverKind> kinds;
  for (const auto& s : o.solvers) kinds.push_back(parse_solver(s));
  const Shape shape = data.signals.front().shape();
  if (!o.learn && !data.dictionary)
    throw UsageError("encoding benchmarks need the true dictionary (a truth/ directory beside the data); "
                     "pass --learn to benchmark dictionary learning");
  std::vector<Row> rows;
  for (auto kind : kinds)
    for (double alpha : o.alphas) {
      const std::vector<std::optional<std::size_t>> ranks =
          kind == SolverKind::Kcsc ? std::vector<std::optional<std::size_t>>(o.ranks.begin(), o.ranks.end())
                                   : std::vector<std::optional<std::size_t>>{std::nullopt};
      for (const auto& rank : ranks) {
        SolverFlags flags = o.flags;
        flags.alpha = alpha;
        flags.rank = rank.value_or(1);
        flags.no_gram = o.no_gram;
        if (data.dictionary) {
          flags.atoms = data.dictionary->size();
          flags.window = data.dictionary->window();
        }
        SolverConfig config = flags.solver_config(shape.size());
        config.validate(shape);
        const int restarts = (kind != SolverKind::Kcsc && !o.learn) ? 1 : o.restarts;
        for (int restart = 0; restart < restarts; ++restart) {
          Row row;
          row.solver = solver_name(kind);
          row.alpha = alpha;
          row.rank = rank;
          row.restart = restart;
          row.threads = max_threads();
          row.signals = data.signals.size();
          row.signal_size = shape_size(shape);
          std::vector<DenseTensor> recon;
          const auto start = Clock::now();
          if (kind == SolverKind::Kcsc) {
            row.gram_opt = !o.no_gram;
            InitialState init = initial_state(shape, data.signals.size(), config, restart,
                                              o.learn ? nullptr : &*data.dictionary);
            const FitResult res =
                run_from(data.signals, std::move(init.dictionary), std::move(init.activations), config, o.learn, restart);
            row.total_s = seconds_since(start);
            for (const auto& acts : res.activations) recon.push_back(reconstruct(res.dictionary, acts));
            row.objective = res.final_objective();
            row.iterations = res.zstep_iterations;
            row.zstep_precompute_s = res.timings.zstep_precompute;
            row.zstep_iterate_s = res.timings.zstep_iterate;
            row.dstep_s = res.timings.dstep;
            score(row, data, recon, synth::compose_activations(res.activations), o.learn, o.eps);
          } else if (o.learn) {
            const InitialState init = initial_state(shape, data.signals.size(), config, restart);
            const auto res = baselines::learn_dictionary(baseline_method(kind), data.signals, init.dictionary,
                                                         flags.baseline_options(), config.dstep, config.max_sweeps,
                                                         config.tolerance);
            row.total_s = seconds_since(start);
            for (const auto& acts : res.activations) recon.push_back(baselines::reconstruct_dense(res.dictionary, acts));
            row.objective = res.objective_trace.back();
            row.iterations = res.iterations;
            row.zstep_iterate_s = res.encode_seconds;
            row.dstep_s = res.dstep_seconds;
            score(row, data, recon, res.activations, true, o.eps);
          } else {
            baselines::BaselineReport rep;
            const auto acts =
                baselines::encode(baseline_method(kind), data.signals, *data.dictionary, flags.baseline_options(), &rep);
            row.total_s = seconds_since(start);
            for (const auto& a : acts) recon.push_back(baselines::reconstruct_dense(*data.dictionary, a));
            row.objective = baselines::dense_objective(data.signals, *data.dictionary, acts, alpha);
            row.iterations = rep.iterations;
            row.zstep_iterate_s = rep.seconds;
            score(row, data, recon, acts, false, o.eps);
          }
          row.zstep_per_iter_s =
              row.iterations > 0 ? row.zstep_iterate_s / static_cast<double>(row.iterations) : std::nan("");
          rows.push_back(std::move(row));
        }
      }
    }
  return rows;
}

}  // namespace

Command add_bench(CLI::App& parent, std::ostream& out) {
  auto* app = parent.add_subcommand("bench", "Accuracy and timing of kcsc and the unconstrained baselines");
  auto o = std::make_shared<BenchOptions>();
  app->add_option("--data", o->data, "Dataset: synth output directory or stacked signal file");
  app->add_option("--sizes", o->sizes, "Generate cubic signals of these edge lengths instead of --data")
      ->delimiter(',');
  app->add_option("--k", o->synth.atoms, "Atoms of generated data (and of learning without truth)");
  app->add_option("--window", o->synth.window, "Atom support of generated data")->delimiter(',');
  app->add_option("--true-rank", o->synth.rank, "CP-rank of generated activations");
  app->add_option("--bernoulli", o->synth.bernoulli, "Nonzero probability of generated factor entries");
  app->add_option("--snr", o->snr, "SNR of generated data in dB (noiseless when omitted)");
  app->add_option("--n", o->synth.signals, "Signals per generated dataset");
  app->add_option("--data-seed", o->synth.seed, "Seed of generated data");
  app->add_option("--solvers", o->solvers, "Comma separated: kcsc, convfista, fcsc")->delimiter(',');
  app->add_option("--alphas", o->alphas, "Comma separated l1 weights")->delimiter(',');
  app->add_option("--ranks", o->ranks, "Comma separated kcsc rank bounds")->delimiter(',');
  app->add_option("--restarts", o->restarts, "Initialisations per configuration");
  app->add_flag("--no-gram-opt", o->no_gram, "Assemble the kcsc gradient directly instead of from Gram blocks");
  app->add_flag("--learn", o->learn, "Benchmark dictionary learning instead of encoding with the true dictionary");
  app->add_option("--beta", o->flags.beta, "Squared Frobenius weight on every kcsc factor");
  app->add_flag("--nonneg", o->flags.nonnegative, "Non-negative activations");
  app->add_option("--max-sweeps", o->flags.max_sweeps, "Outer sweeps");
  app->add_option("--tol", o->flags.tolerance, "Relative objective change that stops the sweeps");
  app->add_option("--inner-iters", o->flags.inner_iters, "Iteration budget of every inner solve");
  app->add_option("--inner-tol", o->flags.inner_tolerance, "Inner stopping tolerance");
  app->add_option("--dstep-iters", o->flags.dstep_iters, "ADMM iterations per dictionary update");
  app->add_option("--rho", o->flags.rho, "Dictionary-update ADMM penalty, relative to the mean activation energy");
  app->add_option("--admm-rho", o->flags.admm_rho, "ADMM penalty of the fcsc encoder");
  app->add_option("--seed", o->flags.seed, "Seed of the random initialisations");
  app->add_option("--eps", o->eps, "Threshold of the hit rates");
  app->add_option("--format", o->format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  app->add_option("--out", o->out, "Output file (standard output when omitted)");
  app->add_option("--manifest", o->manifest, "Run manifest path (default: <out>.manifest.json when --out is set)");
  app->add_flag("--force", o->force, "Overwrite an existing output file");
  app->footer(kColumnHelp);
  return {app, [o, &out] {
            if (o->solvers.empty()) throw UsageError("empty solver list");
            for (const auto& s : o->solvers) {
              if (s.empty()) throw UsageError("empty solver name in --solvers");
              parse_solver(s);
            }
            if (o->alphas.empty()) throw UsageError("empty alpha list");
            if (o->ranks.empty()) throw UsageError("empty rank list");
            if (o->restarts < 1) throw UsageError("--restarts must be at least 1");
            if (o->data.empty() == o->sizes.empty()) throw UsageError("pass exactly one of --data and --sizes");

            Outcome r;
            r.manifest.seed = o->flags.seed;
            std::vector<Dataset> datasets;
            if (!o->data.empty()) {
              Dataset d;
              d.signals = load_signals(o->data);
              const Reference ref = find_reference(o->data, "", "");
              d.clean = ref.clean;
              if (ref.truth && !ref.truth->is_dense()) {
                d.dictionary = ref.truth->dictionary;
                d.truth = synth::compose_activations(ref.truth->activations);
              }
              r.manifest.inputs["data"] = o->data;
              datasets.push_back(std::move(d));
            } else {
              for (auto n : o->sizes) {
                synth::SynthConfig config = o->synth;
                config.shape.assign(config.window.size(), n);
                config.snr_db = o->snr;
                config.validate();
                const synth::SynthData s = synth::generate(config);
                datasets.push_back({s.signals, s.clean, s.dictionary, synth::compose_activations(s.activations)});
              }
            }
            o->flags.atoms = o->synth.atoms;
            o->flags.window = o->synth.window;

            std::vector<Row> rows;
            for (const auto& d : datasets) {
              auto more = run_dataset(d, *o);
              rows.insert(rows.end(), more.begin(), more.end());
            }
            for (const auto& row : rows) r.manifest.metrics.push_back(to_json(row));
            if (o->out.empty()) {
              write_rows(out, rows, o->format);
            } else {
              const fs::path path = o->out;
              claim_output(path, o->force);
              std::ofstream os(path, std::ios::trunc);
              if (!os) throw IoError("cannot write " + path.string());
              write_rows(os, rows, o->format);
              r.manifest.outputs["report"] = path.string();
              r.manifest_path = path;
              r.manifest_path += ".manifest.json";
            }
            if (!o->manifest.empty()) r.manifest_path = o->manifest;
            return r;
          }};
}

}  // namespace kcsc::cli
