#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specrex/core.hpp"
#include "specrex/io.hpp"

namespace specrex {

struct PeakCountConfig {
  /// Minimum prominence as a fraction of (max - min) of the map.
  double prominence_frac = 0.10;
  std::size_t min_separation_bins = 5;
  /// Count on |values| instead of raw values.
  bool absolute = false;

  void validate() const {
    if (!(prominence_frac > 0.0 && prominence_frac <= 1.0))
      throw Error(ErrorCode::BadArgument, "prominence fraction must be in (0, 1]");
    if (min_separation_bins < 1) throw Error(ErrorCode::BadArgument, "min separation must be >= 1");
  }
};

struct PeakInfo {
  std::size_t index = 0;
  double prominence = 0.0;
};

/// Local maxima of v. A flat top counts once, at its middle bin; maxima
/// touching either end of the array are not peaks.
inline std::vector<std::size_t> local_maxima(std::span<const double> v) {
  std::vector<std::size_t> out;
  const std::size_t n = v.size();
  if (n < 3) return out;
  std::size_t i = 1;
  while (i + 1 < n) {
    if (v[i - 1] < v[i]) {
      std::size_t ahead = i + 1;
      while (ahead + 1 < n && v[ahead] == v[i]) ++ahead;
      if (v[ahead] < v[i]) {
        out.push_back((i + ahead - 1) / 2);
        i = ahead;
        continue;
      }
    }
    ++i;
  }
  return out;
}

/// Height of v[peak] above the higher of its two bases, where each base is
/// the lowest point between the peak and the first strictly higher sample
/// (or the array end) on that side.
inline double prominence(std::span<const double> v, std::size_t peak) {
  const double h = v[peak];
  double left_min = h;
  for (std::size_t i = peak; i-- > 0;) {
    if (v[i] > h) break;
    left_min = std::min(left_min, v[i]);
  }
  double right_min = h;
  for (std::size_t i = peak + 1; i < v.size(); ++i) {
    if (v[i] > h) break;
    right_min = std::min(right_min, v[i]);
  }
  return h - std::max(left_min, right_min);
}

/// Prominent, separated peaks. Conflicts within min_separation_bins keep
/// the more prominent peak (then the higher, then the earlier one).
inline std::vector<PeakInfo> find_peaks(std::span<const double> values, const PeakCountConfig& cfg = {}) {
  cfg.validate();
  std::vector<double> v(values.begin(), values.end());
  if (cfg.absolute)
    for (double& x : v) x = std::abs(x);
  if (v.size() < 3) return {};
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double range = *mx - *mn;
  if (!(range > 0.0)) return {};

  std::vector<PeakInfo> cand;
  for (std::size_t p : local_maxima(v)) {
    const double prom = prominence(v, p);
    if (prom >= cfg.prominence_frac * range) cand.push_back({p, prom});
  }
  std::stable_sort(cand.begin(), cand.end(), [&](const PeakInfo& a, const PeakInfo& b) {
    if (a.prominence != b.prominence) return a.prominence > b.prominence;
    return v[a.index] > v[b.index];
  });
  std::vector<PeakInfo> kept;
  for (const auto& c : cand) {
    const bool clear = std::all_of(kept.begin(), kept.end(), [&](const PeakInfo& k) {
      const std::size_t d = c.index > k.index ? c.index - k.index : k.index - c.index;
      return d >= cfg.min_separation_bins;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end(), [](auto& a, auto& b) { return a.index < b.index; });
  return kept;
}

inline std::size_t count_peaks(std::span<const double> values, const PeakCountConfig& cfg = {}) {
  return find_peaks(values, cfg).size();
}

// ---------------------------------------------------------------------------
// Localization.

/// True iff the map's first maximal bin lies inside a ground-truth interval.
/// A constant map has no argmax and never hits.
inline bool localization_hit_argmax(const WavenumberAxis& axis, std::span<const double> values,
                                    std::span<const Interval> ground_truth) {
  if (ground_truth.empty()) throw Error(ErrorCode::MissingGroundTruth, "no ground truth intervals");
  if (values.empty()) return false;
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) return false;
  const double x = axis.at(static_cast<std::size_t>(mx - values.begin()));
  return std::any_of(ground_truth.begin(), ground_truth.end(),
                     [&](const Interval& iv) { return iv.contains(x); });
}

/// True iff every ground-truth interval overlaps some explanation interval.
inline bool localization_hit_all_peaks(std::span<const Interval> explanation,
                                       std::span<const Interval> ground_truth) {
  if (ground_truth.empty()) throw Error(ErrorCode::MissingGroundTruth, "no ground truth intervals");
  return std::all_of(ground_truth.begin(), ground_truth.end(), [&](const Interval& gt) {
    return std::any_of(explanation.begin(), explanation.end(),
                       [&](const Interval& e) { return e.lo <= gt.hi && gt.lo <= e.hi; });
  });
}

// ---------------------------------------------------------------------------
// Dataset evaluation.

struct EvalRow {
  std::string id;
  ClassId label = 0;
  std::optional<ClassId> predicted;
  std::size_t peaks = 0;
  std::optional<bool> argmax_hit;
  std::optional<bool> all_peaks_hit;
  std::optional<double> width_cm;
  std::optional<std::size_t> queries;

  bool correct() const { return !predicted || *predicted == label; }
};

struct ClassSummary {
  ClassId label = 0;
  std::size_t n_maps = 0;
  std::size_t n_correct = 0;
  double peak_count_mean = 0.0;
  double peak_count_sd = 0.0;
  std::optional<double> argmax_hit_rate;
  std::optional<double> all_peaks_hit_rate;
  std::optional<double> mean_width_cm;
  std::optional<double> mean_queries;
  std::optional<std::size_t> max_queries;
};

struct EvalReport {
  PeakCountConfig config;
  std::vector<ClassSummary> classes;
  std::vector<EvalRow> rows;
};

/// Per-class aggregates over rows. Hit rates and widths use the correctly
/// classified rows; rows without ground truth are skipped for hit rates.
inline std::vector<ClassSummary> summarize(const std::vector<EvalRow>& rows) {
  std::map<ClassId, std::vector<const EvalRow*>> by_class;
  for (const auto& r : rows) by_class[r.label].push_back(&r);
  std::vector<ClassSummary> out;
  for (const auto& [label, rs] : by_class) {
    ClassSummary s;
    s.label = label;
    s.n_maps = rs.size();
    double sum = 0.0;
    for (const auto* r : rs) sum += static_cast<double>(r->peaks);
    s.peak_count_mean = sum / static_cast<double>(rs.size());
    double ss = 0.0;
    for (const auto* r : rs) ss += std::pow(static_cast<double>(r->peaks) - s.peak_count_mean, 2);
    s.peak_count_sd = rs.size() > 1 ? std::sqrt(ss / static_cast<double>(rs.size() - 1)) : 0.0;

    std::size_t n_arg = 0, hit_arg = 0, n_all = 0, hit_all = 0, n_w = 0, n_q = 0;
    double width = 0.0, queries = 0.0;
    for (const auto* r : rs) {
      if (!r->correct()) continue;
      ++s.n_correct;
      if (r->argmax_hit) {
        ++n_arg;
        hit_arg += *r->argmax_hit;
      }
      if (r->all_peaks_hit) {
        ++n_all;
        hit_all += *r->all_peaks_hit;
      }
      if (r->width_cm) {
        ++n_w;
        width += *r->width_cm;
      }
    }
    for (const auto* r : rs)
      if (r->queries) {
        ++n_q;
        queries += static_cast<double>(*r->queries);
        s.max_queries = std::max(s.max_queries.value_or(0), *r->queries);
      }
    if (n_arg) s.argmax_hit_rate = static_cast<double>(hit_arg) / static_cast<double>(n_arg);
    if (n_all) s.all_peaks_hit_rate = static_cast<double>(hit_all) / static_cast<double>(n_all);
    if (n_w) s.mean_width_cm = width / static_cast<double>(n_w);
    if (n_q) s.mean_queries = queries / static_cast<double>(n_q);
    out.push_back(s);
  }
  return out;
}

/// Scores every `<id>.csv` in maps_dir against the spectrum with that id.
/// When explanations_dir is given, `<id>.json` must exist for every map.
inline EvalReport evaluate_dataset(const std::filesystem::path& maps_dir,
                                   const std::optional<std::filesystem::path>& explanations_dir,
                                   const std::vector<Spectrum>& spectra, const WavenumberAxis& axis,
                                   const PeakCountConfig& cfg = {}) {
  cfg.validate();
  std::map<std::string, const Spectrum*> by_id;
  for (const auto& s : spectra) by_id[s.id] = &s;

  std::vector<std::filesystem::path> maps;
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(maps_dir, ec))
    if (entry.path().extension() == ".csv") maps.push_back(entry.path());
  if (ec) throw Error(ErrorCode::IoError, "cannot list '" + maps_dir.string() + "': " + ec.message());
  if (maps.empty()) throw Error(ErrorCode::EmptyInput, "no map files in '" + maps_dir.string() + "'");
  std::sort(maps.begin(), maps.end());

  EvalReport rep;
  rep.config = cfg;
  for (const auto& path : maps) {
    const std::string id = path.stem().string();
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorCode::IdMismatch, "map '" + id + "' matches no spectrum");
    const Spectrum& s = *it->second;
    if (!s.label) throw Error(ErrorCode::IdMismatch, "spectrum '" + id + "' has no label");
    auto cols = read_map_csv(path);
    check_map_axis(cols, axis);

    EvalRow row;
    row.id = id;
    row.label = *s.label;
    row.peaks = count_peaks(cols.values, cfg);
    if (!s.ground_truth.empty()) row.argmax_hit = localization_hit_argmax(axis, cols.values, s.ground_truth);

    if (explanations_dir) {
      const auto epath = *explanations_dir / (id + ".json");
      if (!std::filesystem::exists(epath))
        throw Error(ErrorCode::IdMismatch, "no explanation for map '" + id + "'");
      const auto e = read_explanation_json(epath);
      row.predicted = e.label;
      row.queries = e.mutant_queries;
      double w = 0.0;
      for (const auto& iv : e.intervals_cm) w += iv.hi - iv.lo + axis.step();
      row.width_cm = w;
      if (!s.ground_truth.empty()) row.all_peaks_hit = localization_hit_all_peaks(e.intervals_cm, s.ground_truth);
    }
    rep.rows.push_back(std::move(row));
  }
  rep.classes = summarize(rep.rows);
  return rep;
}

inline json to_json(const EvalReport& rep) {
  auto opt = [](const auto& o) -> json { return o ? json(*o) : json(nullptr); };
  json classes = json::array();
  for (const auto& c : rep.classes)
    classes.push_back({{"label", c.label},
                       {"n_maps", c.n_maps},
                       {"n_correct", c.n_correct},
                       {"peak_count_mean", c.peak_count_mean},
                       {"peak_count_sd", c.peak_count_sd},
                       {"argmax_hit_rate", opt(c.argmax_hit_rate)},
                       {"all_peaks_hit_rate", opt(c.all_peaks_hit_rate)},
                       {"mean_width_cm", opt(c.mean_width_cm)},
                       {"mean_queries", opt(c.mean_queries)},
                       {"max_queries", opt(c.max_queries)}});
  json rows = json::array();
  for (const auto& r : rep.rows)
    rows.push_back({{"id", r.id},
                    {"label", r.label},
                    {"predicted", opt(r.predicted)},
                    {"peaks", r.peaks},
                    {"argmax_hit", opt(r.argmax_hit)},
                    {"all_peaks_hit", opt(r.all_peaks_hit)},
                    {"width_cm", opt(r.width_cm)},
                    {"queries", opt(r.queries)}});
  return {{"config",
           {{"prominence_frac", rep.config.prominence_frac},
            {"min_separation_bins", rep.config.min_separation_bins},
            {"absolute", rep.config.absolute}}},
          {"classes", classes},
          {"rows", rows}};
}

inline std::string format_table(const EvalReport& rep) {
  auto num = [](const std::optional<double>& v, int prec) {
    if (!v) return std::string("-");
    std::ostringstream ss;
    ss.setf(std::ios::fixed);
    ss.precision(prec);
    ss << *v;
    return ss.str();
  };
  std::ostringstream out;
  out << "class  maps  correct  peaks(mean±sd)  argmax_hit  all_peaks_hit  width_cm  queries\n";
  for (const auto& c : rep.classes) {
    char line[256];
    std::snprintf(line, sizeof line, "%5d  %4zu  %7zu  %6.2f ± %-6.2f  %10s  %13s  %8s  %7s\n", c.label,
                  c.n_maps, c.n_correct, c.peak_count_mean, c.peak_count_sd,
                  num(c.argmax_hit_rate, 3).c_str(), num(c.all_peaks_hit_rate, 3).c_str(),
                  num(c.mean_width_cm, 1).c_str(), num(c.mean_queries, 1).c_str());
    out << line;
  }
  return out.str();
}

}  // namespace specrex
