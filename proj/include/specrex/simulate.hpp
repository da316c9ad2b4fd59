#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "specrex/core.hpp"
#include "specrex/io.hpp"
#include "specrex/random.hpp"
#include "specrex/spline.hpp"

namespace specrex {

enum class DatasetKind { Single, Double, Complex };

inline const char* to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Single: return "single";
    case DatasetKind::Double: return "double";
    case DatasetKind::Complex: return "complex";
  }
  return "single";
}

inline DatasetKind dataset_kind_from_string(const std::string& s) {
  if (s == "single") return DatasetKind::Single;
  if (s == "double") return DatasetKind::Double;
  if (s == "complex") return DatasetKind::Complex;
  throw Error(ErrorCode::BadArgument, "unknown dataset '" + s + "' (single|double|complex)");
}

enum class HeightMode {
  /// SF = H / sqrt(2 pi W) times the Gaussian PDF with sigma = W.
  Verbatim,
  /// Same shape, rescaled so the maximum equals H.
  Normalized,
};

/// Peak intensity at each bin.
inline std::vector<double> peak_profile(const WavenumberAxis& axis, const PeakSpec& p,
                                        HeightMode mode = HeightMode::Verbatim) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  const double sigma = p.width;
  const double amplitude = mode == HeightMode::Normalized
                               ? p.height
                               : p.height / std::sqrt(two_pi * p.width) /
                                     (sigma * std::sqrt(two_pi));
  std::vector<double> out(axis.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double z = (axis.at(i) - p.mu) / sigma;
    out[i] = amplitude * std::exp(-0.5 * z * z);
  }
  return out;
}

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double sample(Rng& rng) const { return lo == hi ? lo : uniform(rng, lo, hi); }
  double mid() const { return 0.5 * (lo + hi); }
  friend bool operator==(const Range&, const Range&) = default;
};

/// A fixed-position band whose height and width are drawn per spectrum.
struct BandSpec {
  double mu = 0.0;
  Range height;
  Range width;
  friend bool operator==(const BandSpec&, const BandSpec&) = default;
};

struct BaselineSpec {
  std::size_t n_anchors = 5;
  Range anchor_y{0.1, 1.0};
  /// Interior anchors are kept at least this fraction of the axis span apart.
  double min_spacing_frac = 0.1;
  friend bool operator==(const BaselineSpec&, const BaselineSpec&) = default;
};

struct ClassSpec {
  ClassId class_id = 0;
  /// Discriminating peaks.
  std::vector<BandSpec> fixed_peaks;
  /// Non-discriminating bands at fixed positions.
  std::vector<BandSpec> background_bands;
  std::size_t n_faux_peaks = 0;
  Range faux_height{0.8, 1.2};
  Range faux_width{10.0, 20.0};
  double noise_scale = 0.0;
  /// Built by removing discriminating peaks from classes 0 and 1.
  bool everything_else = false;
  friend bool operator==(const ClassSpec&, const ClassSpec&) = default;
};

inline void validate_class_spec(const ClassSpec& cs) {
  double max_w = 0.0;
  for (const auto& p : cs.fixed_peaks) max_w = std::max(max_w, p.width.hi);
  for (std::size_t i = 0; i < cs.fixed_peaks.size(); ++i)
    for (std::size_t j = i + 1; j < cs.fixed_peaks.size(); ++j)
      if (std::abs(cs.fixed_peaks[i].mu - cs.fixed_peaks[j].mu) < 4.0 * max_w)
        throw Error(ErrorCode::BadArgument, "fixed peaks closer than 4 widths");
  if (cs.noise_scale < 0.0) throw Error(ErrorCode::BadArgument, "noise_scale must be >= 0");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Single;
  WavenumberAxis axis;
  std::array<ClassSpec, 3> classes;
  BaselineSpec baseline;
  std::size_t n_train = 1;
  std::size_t n_test = 1;
  std::uint64_t seed = 0;
  HeightMode height_mode = HeightMode::Normalized;
  std::vector<std::string> notes;

  /// Positions of every discriminating peak in the dataset.
  std::vector<double> discriminating_positions() const {
    std::vector<double> out;
    for (const auto& c : classes)
      for (const auto& p : c.fixed_peaks) out.push_back(p.mu);
    return out;
  }

  double noise_scale() const { return classes[0].noise_scale; }
};

namespace detail {

inline BandSpec band(double mu, Range h, Range w) { return {mu, h, w}; }

// Evenly spaced positions over [lo, hi] regions, skipping exclusion zones.
inline std::vector<double> spread_positions(const std::vector<Range>& regions, std::size_t n) {
  double total = 0.0;
  for (const auto& r : regions) total += r.hi - r.lo;
  std::vector<double> out;
  const double spacing = total / static_cast<double>(n);
  for (std::size_t j = 0; j < n; ++j) {
    double offset = (static_cast<double>(j) + 0.5) * spacing;
    for (const auto& r : regions) {
      if (offset <= r.hi - r.lo) {
        out.push_back(std::round(r.lo + offset));
        break;
      }
      offset -= r.hi - r.lo;
    }
  }
  return out;
}

}  // namespace detail

/// Default peak ranges.
inline constexpr Range kPeakHeight{0.8, 1.2};
inline constexpr Range kPeakWidth{10.0, 20.0};
inline constexpr Range kComplexBandWidth{10.0, 40.0};

/// The 17 non-discriminating band centres of the complex dataset.
inline std::vector<double> complex_background_positions() {
  const double margin = 4.0 * kComplexBandWidth.hi;
  return detail::spread_positions(
      {{0.0, 370.0 - margin}, {370.0 + margin, 1100.0 - margin}, {1100.0 + margin, 1750.0}}, 17);
}

inline DatasetSpec default_dataset_spec(DatasetKind kind, std::uint64_t seed,
                                        std::size_t n_train, std::size_t n_test) {
  DatasetSpec ds;
  ds.kind = kind;
  ds.seed = seed;
  ds.n_train = n_train;
  ds.n_test = n_test;
  for (int c = 0; c < 3; ++c) ds.classes[c].class_id = c;
  ds.classes[2].everything_else = true;

  switch (kind) {
    case DatasetKind::Single:
      ds.axis = WavenumberAxis(0.0, 1000.0, 1000);
      ds.classes[0].fixed_peaks = {detail::band(250.0, kPeakHeight, kPeakWidth)};
      ds.classes[1].fixed_peaks = {detail::band(750.0, kPeakHeight, kPeakWidth)};
      break;
    case DatasetKind::Double:
      ds.axis = WavenumberAxis(0.0, 1000.0, 1000);
      ds.classes[0].fixed_peaks = {detail::band(250.0, kPeakHeight, kPeakWidth),
                                   detail::band(750.0, kPeakHeight, kPeakWidth)};
      ds.classes[1].fixed_peaks = {detail::band(150.0, kPeakHeight, kPeakWidth),
                                   detail::band(650.0, kPeakHeight, kPeakWidth)};
      ds.notes.push_back(
          "class 1 peaks are placed at 150 and 650 cm^-1; an alternative source description "
          "places them at 150 and 750 cm^-1");
      break;
    case DatasetKind::Complex:
      ds.axis = WavenumberAxis(0.0, 1750.0, 1750);
      ds.classes[0].fixed_peaks = {detail::band(370.0, kPeakHeight, kPeakWidth)};
      ds.classes[1].fixed_peaks = {detail::band(1100.0, kPeakHeight, kPeakWidth)};
      break;
  }

  const bool complex = kind == DatasetKind::Complex;
  for (auto& cs : ds.classes) {
    cs.noise_scale = complex ? 0.006 : 0.002;
    cs.n_faux_peaks = complex ? 0 : 1;
    cs.faux_height = kPeakHeight;
    cs.faux_width = kPeakWidth;
    if (complex)
      for (double mu : complex_background_positions())
        cs.background_bands.push_back(detail::band(mu, kPeakHeight, kComplexBandWidth));
  }
  return ds;
}

/// Baseline anchors: both axis ends plus (n-2) interior positions.
inline NaturalCubicSpline sample_baseline(const WavenumberAxis& axis, const BaselineSpec& spec,
                                          Rng& rng) {
  const std::size_t n = std::max<std::size_t>(spec.n_anchors, 2);
  const double span = axis.end() - axis.start();
  const double min_gap = spec.min_spacing_frac * span;
  std::vector<double> xs;
  for (int attempt = 0;; ++attempt) {
    if (attempt == 1000) throw Error(ErrorCode::PlacementFailure, "cannot place baseline anchors");
    xs.assign({axis.start(), axis.end()});
    for (std::size_t i = 2; i < n; ++i) xs.push_back(uniform(rng, axis.start(), axis.end()));
    std::sort(xs.begin(), xs.end());
    bool ok = true;
    for (std::size_t i = 1; i < xs.size(); ++i) ok = ok && xs[i] - xs[i - 1] >= min_gap && xs[i] > xs[i - 1];
    if (ok) break;
  }
  std::vector<double> ys(n);
  for (auto& y : ys) y = spec.anchor_y.sample(rng);
  return NaturalCubicSpline(xs, ys);
}

/// Realized random draws of one synthetic spectrum.
struct SynthRecord {
  std::vector<double> anchor_x;
  std::vector<double> anchor_y;
  std::vector<PeakSpec> peaks;
};

struct SynthOptions {
  HeightMode height_mode = HeightMode::Normalized;
  BaselineSpec baseline;
  /// Positions faux peaks must keep clear of, in addition to the class's own peaks.
  std::vector<double> avoid_positions;
  /// Width used for the clearance around avoided positions.
  double avoid_width = kPeakWidth.hi;
  SynthRecord* record = nullptr;
};

/// Draws one spectrum of class cs. Ground truth covers [mu-2W, mu+2W] of each
/// discriminating peak, clipped to the axis.
inline Spectrum synth_spectrum(const ClassSpec& cs, const WavenumberAxis& axis, Rng& rng,
                               const SynthOptions& opt = {}) {
  Spectrum s;
  s.axis = axis;
  s.label = cs.class_id;
  const auto xs = axis.values();
  const auto baseline = sample_baseline(axis, opt.baseline, rng);
  s.intensities.resize(axis.size());
  for (std::size_t i = 0; i < xs.size(); ++i) s.intensities[i] = baseline(xs[i]);

  if (opt.record) {
    opt.record->anchor_x.assign(baseline.anchor_x().begin(), baseline.anchor_x().end());
    opt.record->anchor_y.assign(baseline.anchor_y().begin(), baseline.anchor_y().end());
    opt.record->peaks.clear();
  }

  auto add_peak = [&](const PeakSpec& p) {
    if (opt.record) opt.record->peaks.push_back(p);
    const auto prof = peak_profile(axis, p, opt.height_mode);
    for (std::size_t i = 0; i < prof.size(); ++i) s.intensities[i] += prof[i];
  };

  std::vector<std::pair<double, double>> occupied;  // (mu, width)
  for (const auto& b : cs.fixed_peaks) {
    PeakSpec p{b.mu, b.height.sample(rng), b.width.sample(rng), true};
    add_peak(p);
    occupied.emplace_back(p.mu, p.width);
    s.ground_truth.push_back({std::max(axis.start(), p.mu - 2.0 * p.width),
                              std::min(axis.end(), p.mu + 2.0 * p.width)});
  }
  for (const auto& b : cs.background_bands)
    add_peak({b.mu, b.height.sample(rng), b.width.sample(rng), false});
  for (double mu : opt.avoid_positions) occupied.emplace_back(mu, opt.avoid_width);

  for (std::size_t f = 0; f < cs.n_faux_peaks; ++f) {
    const double h = cs.faux_height.sample(rng);
    const double w = cs.faux_width.sample(rng);
    std::optional<double> placed;
    for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
      const double mu = uniform(rng, axis.start(), axis.end());
      bool clear = true;
      for (const auto& [omu, ow] : occupied) clear = clear && std::abs(mu - omu) >= 4.0 * std::max(w, ow);
      if (clear) placed = mu;
    }
    if (!placed) throw Error(ErrorCode::PlacementFailure, "no room for faux peak after 1000 draws");
    add_peak({*placed, h, w, false});
  }

  for (auto& v : s.intensities) v += cs.noise_scale * standard_normal(rng);
  std::sort(s.ground_truth.begin(), s.ground_truth.end(),
            [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
  return s;
}

/// Draws one spectrum of class `class_id` from the dataset, including the
/// everything-else class.
inline Spectrum synth_spectrum(const DatasetSpec& ds, ClassId class_id, Rng& rng) {
  SynthOptions opt;
  opt.height_mode = ds.height_mode;
  opt.baseline = ds.baseline;
  opt.avoid_positions = ds.discriminating_positions();
  const ClassSpec& cs = ds.classes.at(static_cast<std::size_t>(class_id));
  if (!cs.everything_else) return synth_spectrum(cs, ds.axis, rng, opt);

  const auto base_id = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, 1)(rng));
  ClassSpec reduced = ds.classes[base_id];
  const std::size_t m = reduced.fixed_peaks.size();
  if (m > 0) {
    const auto mask = std::uniform_int_distribution<std::uint64_t>(1, (1ULL << m) - 1)(rng);
    std::vector<BandSpec> kept;
    for (std::size_t i = 0; i < m; ++i)
      if (!(mask & (1ULL << i))) kept.push_back(reduced.fixed_peaks[i]);
    reduced.fixed_peaks = std::move(kept);
  }
  reduced.class_id = cs.class_id;
  reduced.noise_scale = cs.noise_scale;
  return synth_spectrum(reduced, ds.axis, rng, opt);
}

struct Dataset {
  std::vector<Spectrum> train;
  std::vector<Spectrum> test;
};

/// `n` spectra per class drawn from `split_stream`. Spectrum (class, index)
/// has its own seed, so the result is a pure function of (spec, stream) and
/// comes out ordered by (class, index).
inline std::vector<Spectrum> generate_split(const DatasetSpec& ds, std::uint64_t split_stream,
                                            std::size_t n, const std::string& split_name) {
  for (const auto& c : ds.classes) validate_class_spec(c);
  std::vector<Spectrum> out;
  out.reserve(3 * n);
  for (ClassId c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t idx = static_cast<std::uint64_t>(c) * 1'000'000'007ULL + i;
      Rng rng(derive_seed(ds.seed, split_stream, idx));
      Spectrum s = synth_spectrum(ds, c, rng);
      char id[64];
      std::snprintf(id, sizeof id, "-c%d-%05zu", c, i);
      s.id = std::string(to_string(ds.kind)) + "-" + split_name + id;
      out.push_back(std::move(s));
    }
  return out;
}

inline Dataset generate_dataset(const DatasetSpec& ds) {
  if (ds.n_train < 1 || ds.n_test < 1)
    throw Error(ErrorCode::BadArgument, "n_train and n_test must be at least 1");
  return {generate_split(ds, stream::kTrain, ds.n_train, "train"),
          generate_split(ds, stream::kTest, ds.n_test, "test")};
}

// ---------------------------------------------------------------------------
// Manifest serialization.

inline json to_json(const Range& r) { return json::array({r.lo, r.hi}); }

inline Range range_from_json(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline json to_json(const BandSpec& b) {
  return {{"mu", b.mu}, {"height", to_json(b.height)}, {"width", to_json(b.width)}};
}

inline BandSpec band_from_json(const json& j) {
  return {j.at("mu").get<double>(), range_from_json(j.at("height")),
          range_from_json(j.at("width"))};
}

inline json to_json(const ClassSpec& c) {
  json fixed = json::array(), bg = json::array();
  for (const auto& b : c.fixed_peaks) fixed.push_back(to_json(b));
  for (const auto& b : c.background_bands) bg.push_back(to_json(b));
  return {{"class_id", c.class_id},       {"fixed_peaks", fixed},
          {"background_bands", bg},       {"n_faux_peaks", c.n_faux_peaks},
          {"faux_height", to_json(c.faux_height)}, {"faux_width", to_json(c.faux_width)},
          {"noise_scale", c.noise_scale}, {"everything_else", c.everything_else}};
}

inline ClassSpec class_spec_from_json(const json& j) {
  ClassSpec c;
  c.class_id = j.at("class_id").get<ClassId>();
  for (const auto& b : j.at("fixed_peaks")) c.fixed_peaks.push_back(band_from_json(b));
  for (const auto& b : j.value("background_bands", json::array()))
    c.background_bands.push_back(band_from_json(b));
  c.n_faux_peaks = j.at("n_faux_peaks").get<std::size_t>();
  c.faux_height = range_from_json(j.at("faux_height"));
  c.faux_width = range_from_json(j.at("faux_width"));
  c.noise_scale = j.at("noise_scale").get<double>();
  c.everything_else = j.value("everything_else", false);
  return c;
}

/// Manifest document; `extra` entries (e.g. the calibrated builtin model) are merged in.
inline json manifest_json(const DatasetSpec& ds, const json& extra = json::object()) {
  json classes = json::array();
  for (const auto& c : ds.classes) classes.push_back(to_json(c));
  json m = {{"axis", to_json(ds.axis)},
            {"dataset", to_string(ds.kind)},
            {"classes", classes},
            {"seed", ds.seed},
            {"n_train", ds.n_train},
            {"n_test", ds.n_test},
            {"normalized_height", ds.height_mode == HeightMode::Normalized},
            {"baseline",
             {{"n_anchors", ds.baseline.n_anchors},
              {"anchor_y", to_json(ds.baseline.anchor_y)},
              {"min_spacing_frac", ds.baseline.min_spacing_frac}}},
            {"notes", ds.notes}};
  for (const auto& [k, v] : extra.items()) m[k] = v;
  return m;
}

inline DatasetSpec dataset_spec_from_json(const json& m) {
  try {
    DatasetSpec ds;
    ds.kind = dataset_kind_from_string(m.at("dataset").get<std::string>());
    ds.axis = axis_from_json(m.at("axis"));
    const auto& classes = m.at("classes");
    if (classes.size() != 3) throw Error(ErrorCode::ParseError, "manifest needs exactly 3 classes");
    for (std::size_t i = 0; i < 3; ++i) ds.classes[i] = class_spec_from_json(classes[i]);
    ds.seed = m.at("seed").get<std::uint64_t>();
    ds.n_train = m.value("n_train", std::size_t{1});
    ds.n_test = m.value("n_test", std::size_t{1});
    ds.height_mode = m.value("normalized_height", true) ? HeightMode::Normalized : HeightMode::Verbatim;
    if (m.contains("baseline")) {
      const auto& b = m.at("baseline");
      ds.baseline.n_anchors = b.value("n_anchors", std::size_t{5});
      if (b.contains("anchor_y")) ds.baseline.anchor_y = range_from_json(b.at("anchor_y"));
      ds.baseline.min_spacing_frac = b.value("min_spacing_frac", 0.1);
    }
    ds.notes = m.value("notes", std::vector<std::string>{});
    return ds;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad manifest: ") + e.what());
  }
}

inline json read_manifest(const std::filesystem::path& path) {
  return parse_json_text(read_text_file(path), path.string());
}

/// Writes train.jsonl, test.jsonl and manifest.json into dir.
inline void write_dataset_dir(const std::filesystem::path& dir, const DatasetSpec& ds,
                              const Dataset& data, const json& extra = json::object()) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create '" + dir.string() + "': " + ec.message());
  write_dataset(dir / "train.jsonl", data.train);
  write_dataset(dir / "test.jsonl", data.test);
  write_text_file(dir / "manifest.json", manifest_json(ds, extra).dump(2) + "\n");
}

inline Dataset build_dataset(const DatasetSpec& ds, const std::filesystem::path& dir) {
  Dataset data = generate_dataset(ds);
  write_dataset_dir(dir, ds, data);
  return data;
}

}  // namespace specrex
