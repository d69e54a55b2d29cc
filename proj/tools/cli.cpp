#include "cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <set>
#include <sstream>

#include "commands.hpp"
#include "kcsc/errors.hpp"
#include "kcsc/parallel.hpp"
#include "kcsc/stft.hpp"
#include "kcsc/tensor_io.hpp"

namespace kcsc::cli {

void to_json(nlohmann::json& j, const RunManifest& m) {
  j = nlohmann::json{{"command", m.command}, {"config", m.config},   {"config_toml", m.config_toml},
                     {"seed", m.seed},       {"inputs", m.inputs},   {"outputs", m.outputs},
                     {"timings", m.timings}, {"metrics", m.metrics}, {"summary", m.summary}};
}

void from_json(const nlohmann::json& j, RunManifest& m) {
  j.at("command").get_to(m.command);
  m.config = j.at("config");
  j.at("config_toml").get_to(m.config_toml);
  j.at("seed").get_to(m.seed);
  m.inputs = j.at("inputs");
  m.outputs = j.at("outputs");
  m.timings = j.at("timings");
  m.metrics = j.at("metrics");
  m.summary = j.value("summary", nlohmann::json::object());
}

void RunManifest::save(const fs::path& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << nlohmann::json(*this).dump(2) << '\n';
}

RunManifest RunManifest::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read " + path.string());
  try {
    return nlohmann::json::parse(is).get<RunManifest>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed manifest " + path.string() + ": " + e.what());
  }
}

SolverKind parse_solver(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "kcsc" || s == "k-csc" || s == "tc-fista") return SolverKind::Kcsc;
  if (s == "convfista" || s == "convfista-fd") return SolverKind::ConvFista;
  if (s == "fcsc" || s == "fcsc-shm") return SolverKind::Fcsc;
  throw UsageError("unknown solver '" + name + "' (expected kcsc, convfista or fcsc)");
}

std::string solver_name(SolverKind s) {
  switch (s) {
    case SolverKind::Kcsc: return "kcsc";
    case SolverKind::ConvFista: return "convfista";
    case SolverKind::Fcsc: return "fcsc";
  }
  return "?";
}

baselines::Method baseline_method(SolverKind s) {
  if (s == SolverKind::Kcsc) throw std::logic_error("kcsc is not a baseline");
  return s == SolverKind::ConvFista ? baselines::Method::ConvFistaFD : baselines::Method::FcscShM;
}

SolverConfig SolverFlags::solver_config(std::size_t order) const {
  SolverConfig c;
  c.atoms = atoms;
  c.rank = rank;
  c.window = window;
  c.weights = zstep::RegWeights::uniform(order, alpha, beta, nonnegative);
  c.max_sweeps = max_sweeps;
  c.tolerance = tolerance;
  c.inner.max_iters = inner_iters;
  c.inner.tolerance = inner_tolerance;
  c.inner.use_gram = !no_gram;
  c.inner.monotone = monotone;
  c.dstep.max_iters = dstep_iters;
  c.dstep.rho = rho;
  c.restarts = restarts;
  c.seed = seed;
  c.monotone = monotone;
  return c;
}

baselines::BaselineOptions SolverFlags::baseline_options() const {
  baselines::BaselineOptions o;
  o.alpha = alpha;
  o.rho = admm_rho;
  o.tolerance = inner_tolerance;
  o.max_iters = inner_iters;
  o.nonnegative = nonnegative;
  return o;
}

void add_solver_flags(CLI::App* app, SolverFlags& f, bool learning) {
  app->add_option("--solver", f.solver, "kcsc, convfista (ConvFISTA-FD) or fcsc (FCSC-ShM)");
  if (learning) {
    app->add_option("--k", f.atoms, "Number of atoms");
    app->add_option("--window", f.window, "Atom support, comma separated")->delimiter(',')->required();
    app->add_option("--dstep-iters", f.dstep_iters, "ADMM iterations per dictionary update");
    app->add_option("--rho", f.rho, "Dictionary-update ADMM penalty, relative to the mean activation energy");
  }
  app->add_option("--rank,--r", f.rank, "CP-rank bound R of every activation (kcsc)");
  app->add_option("--alpha", f.alpha, "l1 weight (every mode for kcsc)");
  app->add_option("--beta", f.beta, "Squared Frobenius weight on every factor (kcsc)");
  app->add_flag("--nonneg", f.nonnegative, "Non-negative activations");
  app->add_option("--max-sweeps", f.max_sweeps, "Outer sweeps");
  app->add_option("--tol", f.tolerance, "Relative objective change that stops the sweeps");
  app->add_option("--inner-iters", f.inner_iters, "Iteration budget of every inner solve");
  app->add_option("--inner-tol", f.inner_tolerance, "Inner stopping tolerance");
  app->add_option("--admm-rho", f.admm_rho, "ADMM penalty of the fcsc encoder");
  app->add_option("--restarts", f.restarts, "Random restarts; the lowest objective is kept");
  app->add_option("--seed", f.seed, "Seed of the random initialisations");
  app->add_flag("--monotone", f.monotone, "ISTA inner steps and descent-checked dictionary updates (kcsc)");
  app->add_flag("--no-gram-opt", f.no_gram, "Assemble the kcsc gradient directly instead of from Gram blocks");
}

void claim_output(const fs::path& path, bool force) {
  if (path.empty()) throw UsageError("missing output path");
  if (fs::exists(path) && !force) throw IoError(path.string() + " already exists (pass --force to overwrite)");
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

std::vector<DenseTensor> load_signals(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file or directory: " + path.string());
  const fs::path file = fs::is_directory(path) ? path / "signals.ktns" : path;
  if (!fs::exists(file)) throw IoError("no signals.ktns in " + path.string());
  auto signals = io::unstack_signals(io::load_tensor(file));
  if (signals.empty()) throw UsageError(file.string() + " holds no signals");
  return signals;
}

Reference find_reference(const fs::path& input, const std::string& clean_flag, const std::string& truth_flag) {
  Reference ref;
  std::optional<fs::path> base;
  if (fs::is_directory(input)) base = input;
  else if (input.filename() == "signals.ktns") base = input.parent_path();
  if (!clean_flag.empty()) ref.clean_path = clean_flag;
  else if (base && fs::exists(*base / "clean.ktns")) ref.clean_path = *base / "clean.ktns";
  if (!truth_flag.empty()) ref.truth_path = truth_flag;
  else if (base && fs::exists(*base / "truth" / "model.json")) ref.truth_path = *base / "truth";
  if (!ref.clean_path.empty()) ref.clean = load_signals(ref.clean_path);
  if (!ref.truth_path.empty()) ref.truth = io::load_model(ref.truth_path);
  return ref;
}

std::vector<double> per_signal_rmse(std::span<const DenseTensor> a, std::span<const DenseTensor> b) {
  if (a.size() != b.size())
    throw DimensionError(std::to_string(a.size()) + " signals vs " + std::to_string(b.size()) + " references");
  std::vector<double> out;
  for (std::size_t n = 0; n < a.size(); ++n) {
    if (a[n].shape() != b[n].shape())
      throw DimensionError("signal shape " + shape_to_string(a[n].shape()) + " vs reference shape " +
                           shape_to_string(b[n].shape()));
    out.push_back(synth::rmse(a[n], b[n]));
  }
  return out;
}

std::vector<double> per_signal_activation_rmse(const synth::ComposedSet& truth, const synth::ComposedSet& estimate,
                                               const synth::Alignment& alignment) {
  if (truth.size() != estimate.size())
    throw DimensionError(std::to_string(truth.size()) + " true activation sets vs " +
                         std::to_string(estimate.size()) + " estimated");
  std::vector<double> out;
  for (std::size_t n = 0; n < truth.size(); ++n)
    out.push_back(synth::activation_rmse(synth::ComposedSet{truth[n]}, synth::ComposedSet{estimate[n]}, alignment));
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct SynthOptions {
  synth::SynthConfig config;
  std::optional<double> snr;
  std::string out;
  bool force = false;
};

struct IngestOptions {
  std::string input;
  std::optional<double> sample_rate;
  stf::StftConfig config;
  bool no_bandpass = false;
  bool no_center = false;
  std::string spectrum = "magnitude";
  std::string out;
  bool force = false;
};

struct ReconstructOptions {
  std::string model;
  std::vector<std::size_t> exclude;
  std::optional<std::size_t> signal;
  std::string reference;
  std::string out;
  bool force = false;
};

fs::path manifest_beside(const fs::path& file) {
  fs::path p = file;
  p += ".manifest.json";
  return p;
}

}  // namespace

Command add_synth(CLI::App& parent) {
  auto* app = parent.add_subcommand("synth", "Generate signals from random atoms and sparse low-rank activations");
  auto o = std::make_shared<SynthOptions>();
  auto& c = o->config;
  app->add_option("--shape", c.shape, "Signal shape, comma separated")->delimiter(',');
  app->add_option("--k", c.atoms, "Number of atoms");
  app->add_option("--window", c.window, "Atom support, comma separated")->delimiter(',');
  app->add_option("--rank", c.rank, "True CP-rank of every activation");
  app->add_option("--bernoulli", c.bernoulli, "Probability that a factor entry is nonzero");
  app->add_option("--low", c.value_low, "Lower bound of nonzero factor entries");
  app->add_option("--high", c.value_high, "Upper bound of nonzero factor entries");
  app->add_option("--snr", o->snr, "Signal-to-noise ratio in dB (noiseless when omitted)");
  app->add_option("--n", c.signals, "Number of signals");
  app->add_option("--seed", c.seed, "Random seed");
  app->add_option("--out", o->out, "Output directory")->required();
  app->add_flag("--force", o->force, "Overwrite an existing output directory");
  return {app, [o] {
            synth::SynthConfig config = o->config;
            config.snr_db = o->snr;
            config.validate();
            const fs::path out = o->out;
            claim_output(out, o->force);
            const auto start = Clock::now();
            const synth::SynthData data = synth::generate(config);
            const double generate_s = seconds_since(start);
            fs::create_directories(out);
            io::save_tensor(out / "signals.ktns", io::stack_signals(data.signals));
            io::save_tensor(out / "clean.ktns", io::stack_signals(data.clean));
            io::save_model(out / "truth", data.dictionary, data.activations, {{"source", "synth"}});

            Outcome r;
            r.manifest.seed = config.seed;
            r.manifest.outputs = {{"signals", (out / "signals.ktns").string()},
                                  {"clean", (out / "clean.ktns").string()},
                                  {"truth", (out / "truth").string()}};
            r.manifest.timings["generate"] = generate_s;
            for (std::size_t n = 0; n < data.signals.size(); ++n)
              r.manifest.metrics.push_back({{"signal", n}, {"snr_db", number_or_null(synth::snr(data.clean[n], data.signals[n]))}});
            r.manifest_path = out / "manifest.json";
            return r;
          }};
}

Command add_ingest(CLI::App& parent) {
  auto* app = parent.add_subcommand("ingest", "Turn a multichannel recording into a channels x frequencies x frames tensor");
  auto o = std::make_shared<IngestOptions>();
  auto& c = o->config;
  app->add_option("--input", o->input, "Recording: .csv (one column per channel) or raw samples with a .json sidecar")
      ->required();
  app->add_option("--sample-rate", o->sample_rate, "Sampling rate in Hz (required for .csv)");
  app->add_option("--window", c.window, "STFT window length in samples");
  app->add_option("--overlap", c.overlap, "Fraction of overlap between consecutive windows");
  app->add_flag("--no-bandpass", o->no_bandpass, "Skip the band-pass filter");
  app->add_option("--band-low", c.band_low, "Band-pass lower edge, Hz");
  app->add_option("--band-high", c.band_high, "Band-pass upper edge, Hz");
  app->add_option("--crop-low", c.crop_low, "Lowest kept frequency, Hz");
  app->add_option("--crop-high", c.crop_high, "Highest kept frequency, Hz");
  app->add_option("--spectrum", o->spectrum, "magnitude or power")
      ->check(CLI::IsMember({"magnitude", "power"}));
  app->add_flag("--no-center", o->no_center, "Frames start at sample 0 without padding");
  app->add_option("--out", o->out, "Output tensor file, shape (1, channels, bins, frames)")->required();
  app->add_flag("--force", o->force, "Overwrite an existing output file");
  return {app, [o] {
            stf::StftConfig config = o->config;
            config.apply_bandpass = !o->no_bandpass;
            config.centered = !o->no_center;
            config.kind = o->spectrum == "power" ? stf::SpectrumKind::Power : stf::SpectrumKind::Magnitude;
            const fs::path input = o->input, out = o->out;
            if (!fs::exists(input)) throw IoError("no such file: " + input.string());
            claim_output(out, o->force);
            const auto start = Clock::now();
            const stf::MultichannelRecording rec = stf::read_recording(input, o->sample_rate);
            const double read_s = seconds_since(start);
            const auto stft_start = Clock::now();
            const DenseTensor t = stf::stft_tensor(rec, config);
            const double stft_s = seconds_since(stft_start);
            io::save_tensor(out, io::stack_signals(std::vector<DenseTensor>{t}));
            const auto [b0, b1] = stf::bin_range(rec.sample_rate, config);

            Outcome r;
            r.manifest.inputs = {{"recording", input.string()}};
            r.manifest.outputs = {{"tensor", out.string()}};
            r.manifest.timings = {{"read", read_s}, {"stft", stft_s}};
            const double bin_hz = rec.sample_rate / static_cast<double>(config.window);
            r.manifest.summary = {{"channels", rec.channels()},
                                  {"samples", rec.samples()},
                                  {"sample_rate", rec.sample_rate},
                                  {"bins", t.shape()[1]},
                                  {"frames", t.shape()[2]},
                                  {"first_bin_hz", static_cast<double>(b0) * bin_hz},
                                  {"last_bin_hz", static_cast<double>(b1 - 1) * bin_hz}};
            r.manifest_path = manifest_beside(out);
            return r;
          }};
}

Command add_reconstruct(CLI::App& parent) {
  auto* app = parent.add_subcommand("reconstruct", "Rebuild signals from a model, optionally without some atoms");
  auto o = std::make_shared<ReconstructOptions>();
  app->add_option("--model", o->model, "Model directory written by fit or encode")->required();
  app->add_option("--exclude-atoms", o->exclude, "Atom indices (from 0) left out, comma separated")->delimiter(',');
  app->add_option("--signal", o->signal, "Only this signal (from 0)");
  app->add_option("--reference", o->reference, "Signals to compare against (RMSE reported in the manifest)");
  app->add_option("--out", o->out, "Output tensor file, shape (N, n_1, ..., n_p)")->required();
  app->add_flag("--force", o->force, "Overwrite an existing output file");
  return {app, [o] {
            const fs::path model_dir = o->model, out = o->out;
            if (!fs::exists(model_dir)) throw IoError("no such directory: " + model_dir.string());
            const io::Model model = io::load_model(model_dir);
            const std::set<std::size_t> exclude(o->exclude.begin(), o->exclude.end());
            for (auto k : exclude)
              if (k >= model.dictionary.size())
                throw UsageError("atom " + std::to_string(k) + " does not exist (model has " +
                                 std::to_string(model.dictionary.size()) + ")");
            std::vector<std::size_t> indices;
            if (o->signal) {
              if (*o->signal >= model.signals())
                throw UsageError("signal " + std::to_string(*o->signal) + " does not exist (model has " +
                                 std::to_string(model.signals()) + ")");
              indices.push_back(*o->signal);
            } else {
              for (std::size_t n = 0; n < model.signals(); ++n) indices.push_back(n);
            }
            if (indices.empty()) throw UsageError("model holds no activations");
            std::optional<std::vector<DenseTensor>> reference;
            if (!o->reference.empty()) {
              auto all = load_signals(o->reference);
              if (all.size() != model.signals())
                throw DimensionError("reference holds " + std::to_string(all.size()) + " signals, model " +
                                     std::to_string(model.signals()));
              reference.emplace();
              for (auto n : indices) reference->push_back(std::move(all[n]));
            }
            claim_output(out, o->force);
            const auto start = Clock::now();
            std::vector<DenseTensor> recon;
            for (auto n : indices) recon.push_back(model.reconstruct(n, exclude));
            const double recon_s = seconds_since(start);
            io::save_tensor(out, io::stack_signals(recon));

            Outcome r;
            r.manifest.inputs = {{"model", model_dir.string()}};
            if (reference) r.manifest.inputs["reference"] = o->reference;
            r.manifest.outputs = {{"tensor", out.string()}};
            r.manifest.timings["reconstruct"] = recon_s;
            std::vector<double> errors;
            if (reference) errors = per_signal_rmse(recon, *reference);
            for (std::size_t i = 0; i < indices.size(); ++i) {
              nlohmann::json row{{"signal", indices[i]}};
              if (reference) row["rmse_y"] = errors[i];
              r.manifest.metrics.push_back(std::move(row));
            }
            r.manifest.summary["excluded_atoms"] = std::vector<std::size_t>(exclude.begin(), exclude.end());
            if (reference) r.manifest.summary["median_rmse_y"] = number_or_null(median(errors));
            r.manifest_path = manifest_beside(out);
            return r;
          }};
}

namespace {

nlohmann::json resolved_config(const CLI::App& root, const CLI::App& sub) {
  nlohmann::json j = nlohmann::json::object();
  const auto collect = [&j](const CLI::App& app, bool skip_config) {
    for (const CLI::Option* opt : app.get_options()) {
      const std::string name = opt->get_single_name();
      if (name == "help" || (skip_config && name == "config")) continue;
      if (opt->count() > 0) {
        const auto& res = opt->results();
        std::string joined;
        for (std::size_t i = 0; i < res.size(); ++i) joined += (i ? "," : "") + res[i];
        j[name] = joined;
      } else if (opt->get_items_expected_max() == 0 && opt->get_default_str().empty()) {
        j[name] = "false";
      } else {
        j[name] = opt->get_default_str();
      }
    }
  };
  collect(root, true);
  collect(sub, false);
  return j;
}

/// Global options and a section for `sub`; unset optional values are left out
/// so that the text loads back through --config.
std::string config_toml(const CLI::App& root, const CLI::App& sub) {
  std::string out;
  const auto keep = [](const std::string& line) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) return false;
    const std::string value = line.substr(eq + 1);
    return value != "\"\"" && value != "\"{}\"" && value != "{}" && value != "[]";
  };
  for (const CLI::Option* opt : root.get_options()) {
    const std::string name = opt->get_single_name();
    if (name == "help" || name == "config") continue;
    const std::string value = opt->count() > 0 ? opt->results().back() : opt->get_default_str();
    if (keep(name + "=" + value)) out += name + "=" + value + "\n";
  }
  out += "[" + sub.get_name() + "]\n";
  std::istringstream lines(sub.config_to_str(true, false));
  for (std::string line; std::getline(lines, line);)
    if (keep(line)) out += line + "\n";
  return out;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Convolutional sparse coding of tensor signals with low-rank (Kruskal) activations", "kcsc"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML file of option values; command-line flags take precedence");
  std::size_t threads = 0;
  app.add_option("--threads", threads, "Worker threads (0: all cores)");
  app.require_subcommand(1, 1);
  std::vector<Command> commands{add_synth(app), add_ingest(app),       add_fit(app),
                                add_encode(app), add_reconstruct(app), add_bench(app, out)};
  for (auto& c : commands) c.app->fallthrough();
  app.footer("Exit codes: 0 success, 1 internal error, 2 usage or shape error, 3 I/O error (including a refused\n"
             "existing output), 4 numerical divergence.");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  }

  const Command* chosen = nullptr;
  for (const auto& c : commands)
    if (app.got_subcommand(c.app)) chosen = &c;
  if (!chosen) return kUsage;

  try {
    set_max_threads(threads);
    const auto start = Clock::now();
    Outcome outcome = chosen->action();
    RunManifest& m = outcome.manifest;
    m.command = chosen->app->get_name();
    m.config = resolved_config(app, *chosen->app);
    m.config_toml = config_toml(app, *chosen->app);
    m.timings["wall"] = seconds_since(start);
    m.summary["threads"] = max_threads();
    if (!outcome.manifest_path.empty()) m.save(outcome.manifest_path);
    return kOk;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  } catch (const DimensionError& e) {
    err << "dimension error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "divergence: " << e.what() << '\n';
    return kDivergence;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const nlohmann::json::exception& e) {
    err << "i/o error: " << e.what() << '\n';
    return kIo;
  } catch (const std::invalid_argument& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::out_of_range& e) {
    err << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
}

}  // namespace kcsc::cli
