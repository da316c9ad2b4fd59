#pragma once

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "specrex/classify.hpp"
#include "specrex/evaluate.hpp"
#include "specrex/explain.hpp"
#include "specrex/external.hpp"
#include "specrex/io.hpp"
#include "specrex/plot.hpp"
#include "specrex/simulate.hpp"

namespace specrex::cli {

inline constexpr const char* kVersion = "specrex 0.1.0";

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

struct GlobalConfig {
  std::uint64_t seed = 0;
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  int verbosity = 0;
};

/// SPECREX_THREADS wins over --threads.
inline std::size_t resolve_threads(std::size_t flag_value) {
  if (const char* env = std::getenv("SPECREX_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::logic_error&) {
    }
    throw Error(ErrorCode::BadArgument, std::string("SPECREX_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max<std::size_t>(1, flag_value);
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n_train = 1000;
  std::size_t n_test = 100;
  bool normalized_height = false;
  bool verbatim_height = false;
};

inline int run_simulate(const SimulateArgs& a, std::ostream& out) {
  auto ds = default_dataset_spec(dataset_kind_from_string(a.dataset), a.seed, a.n_train, a.n_test);
  ds.height_mode = a.verbatim_height ? HeightMode::Verbatim : HeightMode::Normalized;
  const Dataset data = generate_dataset(ds);
  const auto cal = calibrate_builtin(ds, data.train);
  json extra = {{"builtin_model", cal.model.to_json()},
                {"calibration",
                 {{"inseparable", cal.calibration.inseparable},
                  {"training_errors", cal.calibration.training_errors},
                  {"max_absent", cal.calibration.max_absent},
                  {"min_present", cal.calibration.min_present},
                  {"per_class", cal.per_class}}}};
  write_dataset_dir(a.out, ds, data, extra);
  out << "wrote " << data.train.size() << " train and " << data.test.size() << " test spectra to "
      << a.out << " (threshold " << format_double(cal.model.theta())
      << (cal.calibration.inseparable ? ", scores inseparable" : "") << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct ExplainArgs {
  std::string input;
  std::string model;
  std::optional<std::string> manifest;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t restarts = 20;
  std::size_t splits = 4;
  std::size_t depth = 10;
  std::size_t min_segment = 4;
  std::size_t budget = 10000;
  std::optional<double> occlusion_noise;
  double chunk = 0.02;
  bool no_shrink = false;
  bool credit_path_only = false;
  std::size_t limit = 0;
  std::size_t threads = 0;
  long timeout_ms = 30000;
};

inline int run_explain(const ExplainArgs& a, std::ostream& out, std::ostream& err) {
  std::string manifest_path;
  std::string command;
  const bool builtin = a.model.rfind("builtin:", 0) == 0;
  if (builtin) {
    manifest_path = a.model.substr(8);
  } else if (a.model.rfind("cmd:", 0) == 0) {
    command = a.model.substr(4);
    if (!a.manifest) throw Error(ErrorCode::BadArgument, "--manifest is required with cmd: models");
  } else {
    throw Error(ErrorCode::BadArgument, "--model must be builtin:MANIFEST or cmd:COMMAND");
  }
  if (a.manifest) manifest_path = *a.manifest;

  const DatasetSpec ds = dataset_spec_from_json(read_manifest(manifest_path));
  auto spectra = read_dataset(a.input, ds.axis);
  if (a.limit > 0 && spectra.size() > a.limit) spectra.resize(a.limit);

  SearchConfig cfg;
  cfg.restarts = a.restarts;
  cfg.splits_per_level = a.splits;
  cfg.max_depth = a.depth;
  cfg.min_segment_bins = a.min_segment;
  cfg.query_budget = a.budget;
  cfg.seed = a.seed;
  cfg.occlusion_sigma = a.occlusion_noise.value_or(0.5 * ds.noise_scale());
  cfg.extract_chunk_frac = a.chunk;
  cfg.extract_shrink = !a.no_shrink;
  cfg.credit_chosen_path_only = a.credit_path_only;
  cfg.validate();

  std::shared_ptr<const MatchedFilterModel> model;
  if (builtin) model = std::make_shared<const MatchedFilterModel>(load_builtin_model(builtin ? a.model.substr(8) : manifest_path));

  std::error_code ec;
  std::filesystem::create_directories(a.out, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + a.out + "': " + ec.message());

  const std::size_t threads = std::min(resolve_threads(a.threads ? a.threads : GlobalConfig{}.threads),
                                       std::max<std::size_t>(1, spectra.size()));
  auto counter = make_query_counter();
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> skipped{0};
  std::atomic<bool> abort{false};
  std::mutex err_mu;
  std::optional<Error> fatal;
  std::vector<std::string> warnings(spectra.size());

  auto worker = [&] {
    try {
      auto handle = builtin ? open_builtin(model, counter)
                            : open_external(command, ds.axis, 3, std::chrono::milliseconds(a.timeout_ms), counter);
      for (std::size_t i; !abort && (i = next.fetch_add(1)) < spectra.size();) {
        const auto& s = spectra[i];
        try {
          SearchConfig local = cfg;
          local.seed = spectrum_seed(cfg.seed, s.id);
          const auto ex = explain(s, handle, local);
          write_map_csv(std::filesystem::path(a.out) / (s.id + ".csv"), ex.map);
          write_explanation_json(std::filesystem::path(a.out) / (s.id + ".json"), ds.axis, ex);
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NoSufficientSet && e.code() != ErrorCode::TargetUnstable) throw;
          warnings[i] = e.what();
          ++skipped;
        }
      }
    } catch (const Error& e) {
      std::lock_guard lock(err_mu);
      if (!fatal) fatal = e;
      abort = true;
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (fatal) throw *fatal;

  for (const auto& w : warnings)
    if (!w.empty()) err << "warning: " << w << "\n";
  out << "explained " << spectra.size() - skipped << " of " << spectra.size() << " spectra into " << a.out
      << " (" << counter->load() << " classifier queries)\n";
  return kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string maps;
  std::optional<std::string> explanations;
  std::string manifest;
  std::optional<std::string> spectra;
  std::string out;
  double prominence = 0.10;
  std::size_t min_sep = 5;
  bool abs = false;
};

/// Spectra referenced by a manifest: train.jsonl and test.jsonl beside it.
inline std::vector<Spectrum> dataset_spectra(const std::filesystem::path& manifest, const WavenumberAxis& axis) {
  std::vector<Spectrum> all;
  for (const char* split : {"train.jsonl", "test.jsonl"}) {
    const auto p = manifest.parent_path() / split;
    if (!std::filesystem::exists(p)) continue;
    auto part = read_dataset(p, axis);
    all.insert(all.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
  }
  return all;
}

inline int run_eval(const EvalArgs& a, std::ostream& out) {
  const DatasetSpec ds = dataset_spec_from_json(read_manifest(a.manifest));
  const auto spectra = a.spectra ? read_dataset(*a.spectra, ds.axis) : dataset_spectra(a.manifest, ds.axis);
  PeakCountConfig cfg;
  cfg.prominence_frac = a.prominence;
  cfg.min_separation_bins = a.min_sep;
  cfg.absolute = a.abs;
  std::optional<std::filesystem::path> ex_dir;
  if (a.explanations) ex_dir = *a.explanations;
  const auto rep = evaluate_dataset(a.maps, ex_dir, spectra, ds.axis, cfg);
  write_text_file(a.out, to_json(rep).dump(2) + "\n");
  out << format_table(rep);
  return kOk;
}

// ---------------------------------------------------------------------------

struct PlotArgs {
  std::string spectra;
  std::string manifest;
  std::string id;
  std::string map;
  std::string out;
  std::optional<std::string> csv;
};

inline int run_plot(const PlotArgs& a, std::ostream& out) {
  const DatasetSpec ds = dataset_spec_from_json(read_manifest(a.manifest));
  const auto spectra = read_dataset(a.spectra, ds.axis);
  auto it = std::find_if(spectra.begin(), spectra.end(), [&](const Spectrum& s) { return s.id == a.id; });
  if (it == spectra.end()) throw Error(ErrorCode::IdMismatch, "no spectrum '" + a.id + "' in " + a.spectra);
  const auto cols = read_map_csv(a.map);
  check_map_axis(cols, ds.axis);
  write_text_file(a.out, render_plot_svg(*it, cols.values));
  const std::string csv = a.csv.value_or(std::filesystem::path(a.out).replace_extension(".csv").string());
  write_text_file(csv, plot_data_csv(*it, cols.values));
  out << "wrote " << a.out << " and " << csv << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------

/// Entry point: 0 on success, 1 on usage errors, 2 on runtime errors.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Explain spectrum classifiers with interpolation-occlusion responsibility maps"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic labelled dataset");
  simulate->add_option("--dataset", sim.dataset, "single | double | complex")
      ->required()
      ->check(CLI::IsMember({"single", "double", "complex"}));
  simulate->add_option("--out", sim.out, "Output directory")->required();
  simulate->add_option("--seed", sim.seed, "Master seed");
  simulate->add_option("--n-train", sim.n_train, "Training spectra per class")->check(CLI::PositiveNumber);
  simulate->add_option("--n-test", sim.n_test, "Test spectra per class")->check(CLI::PositiveNumber);
  auto* norm = simulate->add_flag("--normalized-height", sim.normalized_height, "Peak maximum equals H (default)");
  simulate->add_flag("--verbatim-height", sim.verbatim_height, "Use the unnormalized scaled-PDF peak height")
      ->excludes(norm);

  ExplainArgs ex;
  auto* explain_cmd = app.add_subcommand("explain", "Compute responsibility maps and minimal explanations");
  explain_cmd->add_option("--input", ex.input, "Spectra (.jsonl)")->required();
  explain_cmd->add_option("--model", ex.model, "builtin:MANIFEST or cmd:\"COMMAND\"")->required();
  explain_cmd->add_option("--manifest", ex.manifest, "Dataset manifest (required for cmd: models)");
  explain_cmd->add_option("--out", ex.out, "Output directory")->required();
  explain_cmd->add_option("--seed", ex.seed, "Search seed");
  explain_cmd->add_option("--restarts", ex.restarts, "Independent search restarts")->check(CLI::PositiveNumber);
  explain_cmd->add_option("--splits", ex.splits, "Split points per level")->check(CLI::PositiveNumber);
  explain_cmd->add_option("--depth", ex.depth, "Maximum search depth")->check(CLI::PositiveNumber);
  explain_cmd->add_option("--min-segment", ex.min_segment, "Minimum segment width in bins")->check(CLI::PositiveNumber);
  explain_cmd->add_option("--budget", ex.budget, "Classifier queries per spectrum")->check(CLI::PositiveNumber);
  explain_cmd->add_option("--occlusion-noise", ex.occlusion_noise, "Occlusion noise sigma (default: half the dataset noise)");
  explain_cmd->add_option("--chunk", ex.chunk, "Extraction growth step as a fraction of bins");
  explain_cmd->add_flag("--no-shrink", ex.no_shrink, "Skip the interval-dropping pass");
  explain_cmd->add_flag("--credit-path-only", ex.credit_path_only, "Credit only mutants on the explored path");
  explain_cmd->add_option("--limit", ex.limit, "Explain only the first N spectra");
  explain_cmd->add_option("--threads", ex.threads, "Worker threads (SPECREX_THREADS overrides)");
  explain_cmd->add_option("--timeout-ms", ex.timeout_ms, "External model request timeout")->check(CLI::PositiveNumber);

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score maps: peak counts and ground-truth localization");
  eval->add_option("--maps", ev.maps, "Directory of <id>.csv maps")->required();
  eval->add_option("--explanations", ev.explanations, "Directory of <id>.json explanations");
  eval->add_option("--manifest", ev.manifest, "Dataset manifest")->required();
  eval->add_option("--spectra", ev.spectra, "Spectra file (default: train/test next to the manifest)");
  eval->add_option("--out", ev.out, "Report JSON path")->required();
  eval->add_option("--prominence", ev.prominence, "Prominence as a fraction of the map range");
  eval->add_option("--min-sep", ev.min_sep, "Minimum peak separation in bins")->check(CLI::PositiveNumber);
  eval->add_flag("--abs", ev.abs, "Count peaks on absolute values");

  PlotArgs pl;
  auto* plot = app.add_subcommand("plot", "Render a spectrum with its responsibility map as SVG");
  plot->add_option("--spectra", pl.spectra, "Spectra file containing the spectrum")->required();
  plot->add_option("--manifest", pl.manifest, "Dataset manifest")->required();
  plot->add_option("--id", pl.id, "Spectrum id")->required();
  plot->add_option("--map", pl.map, "Map CSV")->required();
  plot->add_option("--out", pl.out, "SVG path")->required();
  plot->add_option("--csv", pl.csv, "Plotted data CSV (default: SVG path with .csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*simulate) return run_simulate(sim, out);
    if (*explain_cmd) return run_explain(ex, out, err);
    if (*eval) return run_eval(ev, out);
    if (*plot) return run_plot(pl, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace specrex::cli
