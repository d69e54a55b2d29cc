#include <chrono>
#include <memory>

#include "commands.hpp"
#include "kcsc/errors.hpp"

namespace kcsc::cli {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct ModelOptions {
  std::string input;
  std::string model;  ///< encode only
  SolverFlags flags;
  std::string clean;
  std::string truth;
  double eps = 1e-3;
  std::string out;
  bool force = false;
};

void add_common(CLI::App* app, ModelOptions& o) {
  app->add_option("--input", o.input, "Signals: stacked tensor file or a synth output directory")->required();
  app->add_option("--clean", o.clean, "Noiseless signals for RMSE(Y) (default: clean.ktns beside the input)");
  app->add_option("--truth", o.truth, "True model for RMSE(Z) (default: truth/ beside the input)");
  app->add_option("--eps", o.eps, "Threshold of the RMSE hit rates");
  app->add_option("--out", o.out, "Output model directory")->required();
  app->add_flag("--force", o.force, "Write into an existing output directory");
}

void check_shapes(const std::vector<DenseTensor>& signals, const Shape& expected, const std::string& what) {
  for (const auto& y : signals)
    if (y.shape() != expected)
      throw DimensionError("signal shape " + shape_to_string(y.shape()) + " vs " + what + " " +
                           shape_to_string(expected));
}

bool same_dictionary(const Dictionary& a, const Dictionary& b) {
  if (a.size() != b.size() || a.window() != b.window() || a.signal_shape() != b.signal_shape()) return false;
  for (std::size_t k = 0; k < a.size(); ++k)
    for (std::size_t i = 0; i < a.atom(k).size(); ++i)
      if (std::abs(a.atom(k)[i] - b.atom(k)[i]) > 1e-12) return false;
  return true;
}

/// Signal-level error table shared by fit and encode.
void report(RunManifest& m, const std::vector<DenseTensor>& signals, const std::vector<DenseTensor>& recon,
            const Reference& ref, const Dictionary& d, const synth::ComposedSet& estimate, double eps) {
  const auto fit_err = per_signal_rmse(recon, signals);
  std::vector<double> clean_err, z_err;
  if (ref.clean) clean_err = per_signal_rmse(recon, *ref.clean);
  std::string alignment = "none";
  if (ref.truth && !ref.truth->is_dense() && ref.truth->dictionary.size() == d.size() &&
      ref.truth->signals() == signals.size()) {
    const auto truth = synth::compose_activations(ref.truth->activations);
    const bool fixed = same_dictionary(ref.truth->dictionary, d);
    const auto align = fixed ? synth::Alignment::identity(d.size()) : synth::align_activations(truth, estimate);
    alignment = fixed ? "identity" : "best";
    z_err = per_signal_activation_rmse(truth, estimate, align);
    m.summary["atom_permutation"] = align.perm;
    m.summary["atom_sign"] = align.sign;
  }
  for (std::size_t n = 0; n < signals.size(); ++n) {
    nlohmann::json row{{"signal", n}, {"rmse_y_observed", fit_err[n]}};
    if (!clean_err.empty()) row["rmse_y"] = clean_err[n];
    if (!z_err.empty()) row["rmse_z"] = z_err[n];
    m.metrics.push_back(std::move(row));
  }
  m.summary["median_rmse_y_observed"] = number_or_null(median(fit_err));
  if (!clean_err.empty()) {
    m.summary["median_rmse_y"] = number_or_null(median(clean_err));
    m.summary["hit_y"] = synth::hit_rate(clean_err, eps);
  }
  if (!z_err.empty()) {
    m.summary["median_rmse_z"] = number_or_null(median(z_err));
    m.summary["hit_z"] = synth::hit_rate(z_err, eps);
  }
  m.summary["rmse_z_alignment"] = alignment;
}

void record_inputs(RunManifest& m, const ModelOptions& o, const Reference& ref) {
  m.seed = o.flags.seed;
  m.inputs["signals"] = o.input;
  if (!o.model.empty()) m.inputs["model"] = o.model;
  if (!ref.clean_path.empty()) m.inputs["clean"] = ref.clean_path.string();
  if (!ref.truth_path.empty()) m.inputs["truth"] = ref.truth_path.string();
}

void record_kcsc(RunManifest& m, const FitResult& res) {
  m.timings["zstep_precompute"] = res.timings.zstep_precompute;
  m.timings["zstep_iterate"] = res.timings.zstep_iterate;
  m.timings["dstep"] = res.timings.dstep;
  m.timings["solver_total"] = res.timings.total;
  m.summary["objective"] = res.final_objective();
  m.summary["objective_trace"] = res.objective_trace;
  m.summary["restart_objectives"] = res.restart_objectives;
  m.summary["best_restart"] = res.restart;
  m.summary["sweeps"] = res.sweeps;
  m.summary["zstep_iterations"] = res.zstep_iterations;
  m.summary["effective_ranks"] = res.effective_ranks;
}

nlohmann::json model_metadata(const ModelOptions& o, SolverKind kind) {
  return {{"solver", solver_name(kind)}, {"alpha", o.flags.alpha}, {"beta", o.flags.beta},
          {"nonnegative", o.flags.nonnegative}};
}

}  // namespace

Command add_fit(CLI::App& parent) {
  auto* app = parent.add_subcommand("fit", "Learn a dictionary and activations (alternating minimisation)");
  auto o = std::make_shared<ModelOptions>();
  add_common(app, *o);
  add_solver_flags(app, o->flags, true);
  return {app, [o] {
            const SolverKind kind = parse_solver(o->flags.solver);
            const auto signals = load_signals(o->input);
            const Shape shape = signals.front().shape();
            check_shapes(signals, shape, "first signal");
            const Reference ref = find_reference(o->input, o->clean, o->truth);
            const SolverConfig config = o->flags.solver_config(shape.size());
            config.validate(shape);
            const fs::path out = o->out;
            claim_output(out, o->force);

            Outcome r;
            record_inputs(r.manifest, *o, ref);
            r.manifest.outputs["model"] = out.string();
            std::vector<DenseTensor> recon;
            if (kind == SolverKind::Kcsc) {
              const FitResult res = fit(signals, config);
              io::save_model(out, res.dictionary, res.activations, model_metadata(*o, kind));
              for (const auto& acts : res.activations) recon.push_back(reconstruct(res.dictionary, acts));
              record_kcsc(r.manifest, res);
              report(r.manifest, signals, recon, ref, res.dictionary, synth::compose_activations(res.activations),
                     o->eps);
            } else {
              const auto method = baseline_method(kind);
              std::optional<baselines::DenseFitResult> best;
              std::vector<double> finals;
              const auto start = Clock::now();
              for (int restart = 0; restart < config.restarts; ++restart) {
                const InitialState init = initial_state(shape, signals.size(), config, restart);
                auto res = baselines::learn_dictionary(method, signals, init.dictionary, o->flags.baseline_options(),
                                                       config.dstep, config.max_sweeps, config.tolerance);
                finals.push_back(res.objective_trace.back());
                if (!best || finals.back() < best->objective_trace.back()) best = std::move(res);
              }
              io::save_dense_model(out, best->dictionary, best->activations, model_metadata(*o, kind));
              for (const auto& acts : best->activations)
                recon.push_back(baselines::reconstruct_dense(best->dictionary, acts));
              r.manifest.timings["zstep_iterate"] = best->encode_seconds;
              r.manifest.timings["dstep"] = best->dstep_seconds;
              r.manifest.timings["solver_total"] = seconds_since(start);
              r.manifest.summary["objective"] = best->objective_trace.back();
              r.manifest.summary["objective_trace"] = best->objective_trace;
              r.manifest.summary["restart_objectives"] = finals;
              r.manifest.summary["sweeps"] = best->sweeps;
              r.manifest.summary["zstep_iterations"] = best->iterations;
              report(r.manifest, signals, recon, ref, best->dictionary, best->activations, o->eps);
            }
            r.manifest_path = out / "manifest.json";
            return r;
          }};
}

Command add_encode(CLI::App& parent) {
  auto* app = parent.add_subcommand("encode", "Compute activations for a fixed dictionary");
  auto o = std::make_shared<ModelOptions>();
  add_common(app, *o);
  app->add_option("--model", o->model, "Directory whose dictionary.ktns is used (fit output or synth truth/)")
      ->required();
  add_solver_flags(app, o->flags, false);
  return {app, [o] {
            const SolverKind kind = parse_solver(o->flags.solver);
            if (!fs::exists(o->model)) throw IoError("no such directory: " + o->model);
            const Dictionary d = io::load_model(o->model).dictionary;
            const auto signals = load_signals(o->input);
            check_shapes(signals, d.signal_shape(), "dictionary signal shape");
            const Reference ref = find_reference(o->input, o->clean, o->truth);
            SolverFlags flags = o->flags;
            flags.atoms = d.size();
            flags.window = d.window();
            const SolverConfig config = flags.solver_config(d.signal_shape().size());
            config.validate(d.signal_shape());
            const fs::path out = o->out;
            claim_output(out, o->force);

            Outcome r;
            record_inputs(r.manifest, *o, ref);
            r.manifest.outputs["model"] = out.string();
            std::vector<DenseTensor> recon;
            if (kind == SolverKind::Kcsc) {
              const FitResult res = encode(signals, d, config);
              io::save_model(out, d, res.activations, model_metadata(*o, kind));
              for (const auto& acts : res.activations) recon.push_back(reconstruct(d, acts));
              record_kcsc(r.manifest, res);
              report(r.manifest, signals, recon, ref, d, synth::compose_activations(res.activations), o->eps);
            } else {
              baselines::BaselineReport rep;
              const auto acts = baselines::encode(baseline_method(kind), signals, d, flags.baseline_options(), &rep);
              io::save_dense_model(out, d, acts, model_metadata(*o, kind));
              for (const auto& a : acts) recon.push_back(baselines::reconstruct_dense(d, a));
              r.manifest.timings["zstep_iterate"] = rep.seconds;
              r.manifest.summary["objective"] = baselines::dense_objective(signals, d, acts, flags.alpha);
              r.manifest.summary["zstep_iterations"] = rep.iterations;
              r.manifest.summary["converged"] = rep.converged;
              report(r.manifest, signals, recon, ref, d, acts, o->eps);
            }
            r.manifest_path = out / "manifest.json";
            return r;
          }};
}

}  // namespace kcsc::cli
