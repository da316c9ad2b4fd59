// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. `--only NAME` runs a single criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "specrex/evaluate.hpp"
#include "specrex/explain.hpp"
#include "specrex/simulate.hpp"
#include "test_support.hpp"

using namespace specrex;

namespace {

constexpr std::uint64_t kDataSeed = 20240601;
constexpr std::uint64_t kSearchSeed = 7;
constexpr std::size_t kPerClass = 100;

struct Verdict {
  bool pass;
  std::string detail;
};

// Budget-accounting and map-bound observations gathered from every run.
struct Audit {
  std::size_t runs = 0;
  std::size_t budget_violations = 0;
  std::size_t count_mismatches = 0;
  std::size_t bound_violations = 0;
  std::size_t max_violations = 0;
};

Audit g_audit;

struct RunResult {
  SearchResult search;
  Explanation ex;
  bool extracted = false;
};

// explain(), unrolled so the search result stays visible.
RunResult run_one(const Spectrum& s, ClassifierHandle& h, const SearchConfig& cfg) {
  const std::size_t before = h.query_count();
  BudgetedQueries q(h, cfg.query_budget);
  RunResult r;
  r.search = specrex_search(s, q, cfg);
  if (!r.search.budget_exhausted) {
    try {
      r.ex = extract_minimal(s, r.search.map, r.search.target, q, cfg);
      r.extracted = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NoSufficientSet) throw;
    }
  }
  r.ex.mutant_queries = q.used();

  ++g_audit.runs;
  if (q.used() > cfg.query_budget) ++g_audit.budget_violations;
  if (h.query_count() - before != q.used()) ++g_audit.count_mismatches;
  const auto v = r.search.map.values();
  for (double x : v)
    if (!(x >= 0.0 && x <= 1.0)) ++g_audit.bound_violations;
  if (r.search.passing_mutants > 0 && r.search.map.max() != 1.0) ++g_audit.max_violations;
  if (r.search.passing_mutants == 0 && !r.search.map.is_zero()) ++g_audit.max_violations;
  return r;
}

struct DatasetRun {
  std::size_t n_correct = 0;
  std::size_t argmax_hits = 0;
  std::size_t all_peaks_hits = 0;
  std::size_t extracted = 0;
  std::size_t zero_maps = 0;
  double peak_sum = 0.0;
  std::size_t n_maps = 0;
  double width_sum = 0.0;
  double seconds = 0.0;
};

DatasetRun run_dataset(DatasetKind kind) {
  auto ds = default_dataset_spec(kind, kDataSeed, kPerClass, kPerClass);
  const auto data = generate_dataset(ds);
  const auto cal = calibrate_builtin(ds, data.train);
  auto h = open_builtin(std::make_shared<const MatchedFilterModel>(cal.model));
  SearchConfig cfg;
  cfg.occlusion_sigma = 0.5 * ds.noise_scale();

  DatasetRun out;
  const auto t0 = std::chrono::steady_clock::now();
  for (const auto& s : data.test) {
    cfg.seed = spectrum_seed(kSearchSeed, s.id);
    const auto r = run_one(s, h, cfg);
    if (*s.label == kEverythingElseClass) continue;
    ++out.n_maps;
    out.peak_sum += static_cast<double>(count_peaks(r.search.map.values()));
    if (r.search.target != *s.label) continue;
    ++out.n_correct;
    out.zero_maps += r.search.map.is_zero();
    out.argmax_hits += localization_hit_argmax(ds.axis, r.search.map.values(), s.ground_truth);
    if (r.extracted) {
      ++out.extracted;
      std::vector<Interval> cm;
      for (const auto& b : r.ex.intervals) {
        cm.push_back(to_cm(ds.axis, b));
        out.width_sum += cm.back().hi - cm.back().lo + ds.axis.step();
      }
      out.all_peaks_hits += localization_hit_all_peaks(cm, s.ground_truth);
    }
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// Lazily computed, shared by the criteria that read them.
const DatasetRun& dataset(DatasetKind kind) {
  static std::map<DatasetKind, DatasetRun> cache;
  auto it = cache.find(kind);
  if (it == cache.end()) it = cache.emplace(kind, run_dataset(kind)).first;
  return it->second;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double rate(std::size_t k, std::size_t n) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; }

// ---------------------------------------------------------------------------

Verdict single_peak_localization() {
  const auto& d = dataset(DatasetKind::Single);
  const double r = rate(d.argmax_hits, d.n_correct);
  return {r >= 0.90, fmt("argmax in ground truth for %zu/%zu correctly classified (%.3f, need >= 0.90)",
                         d.argmax_hits, d.n_correct, r)};
}

Verdict single_peak_count() {
  const auto& d = dataset(DatasetKind::Single);
  const double m = d.peak_sum / static_cast<double>(d.n_maps);
  return {m <= 3.0, fmt("mean peak count %.2f over %zu maps (need <= 3.0)", m, d.n_maps)};
}

Verdict single_peak_runtime() {
  const auto& d = dataset(DatasetKind::Single);
  return {d.seconds <= 300.0, fmt("%.1f s single-threaded for %zu spectra (need <= 300 s)", d.seconds, 3 * kPerClass)};
}

Verdict double_peak_completeness() {
  const auto& d = dataset(DatasetKind::Double);
  const double r = rate(d.all_peaks_hits, d.n_correct);
  return {r >= 0.80, fmt("explanation meets both intervals for %zu/%zu correctly classified (%.3f, need >= 0.80); "
                         "mean width %.0f cm-1, %zu all-zero maps",
                         d.all_peaks_hits, d.n_correct, r, d.width_sum / std::max<std::size_t>(1, d.extracted),
                         d.zero_maps)};
}

Verdict complex_peak_selectivity() {
  const auto& d = dataset(DatasetKind::Complex);
  const double r = rate(d.argmax_hits, d.n_correct);
  return {r >= 0.85, fmt("argmax in discriminating interval for %zu/%zu correctly classified (%.3f, need >= 0.85)",
                         d.argmax_hits, d.n_correct, r)};
}

Verdict complex_peak_count() {
  const auto& d = dataset(DatasetKind::Complex);
  const double m = d.peak_sum / static_cast<double>(d.n_maps);
  return {m <= 5.0, fmt("mean peak count %.2f over %zu maps (need <= 5.0)", m, d.n_maps)};
}

Verdict responsibility_bounds() {
  for (auto k : {DatasetKind::Single, DatasetKind::Double, DatasetKind::Complex}) dataset(k);
  const bool ok = g_audit.bound_violations == 0 && g_audit.max_violations == 0;
  return {ok, fmt("%zu runs: %zu values outside [0,1], %zu maps with passing mutants but max != 1", g_audit.runs,
                  g_audit.bound_violations, g_audit.max_violations)};
}

Verdict occlusion_properties() {
  const WavenumberAxis axis(0.0, 999.0, 1000);
  Rng rng(99);
  std::size_t retained_bad = 0, affine_bad = 0, full_bad = 0;
  double worst_affine = 0.0;
  for (int t = 0; t < 1000; ++t) {
    auto ds = default_dataset_spec(t % 2 ? DatasetKind::Single : DatasetKind::Double, t, 1, 1);
    Rng srng(derive_seed(1, 2, t));
    const auto s = synth_spectrum(ds, t % 3, srng);
    std::vector<bool> mask(axis.size());
    const double p = uniform(rng, 0.0, 1.0);
    for (std::size_t i = 0; i < mask.size();) {
      const std::size_t len = std::uniform_int_distribution<std::size_t>(1, 120)(rng);
      const bool keep = uniform(rng, 0.0, 1.0) < p;
      for (std::size_t j = i; j < std::min(mask.size(), i + len); ++j) mask[j] = keep;
      i += len;
    }
    const auto retained = runs_of(mask);
    const auto m = occlude(s, retained, 0.001, rng);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i] && m.realized[i] != s.intensities[i]) ++retained_bad;

    const double a = uniform(rng, -1, 1), b = uniform(rng, -0.01, 0.01);
    auto line = s;
    for (std::size_t i = 0; i < axis.size(); ++i) line.intensities[i] = a + b * static_cast<double>(i);
    const auto lm = occlude(line, retained, 0.0, rng);
    for (std::size_t i = 0; i < axis.size(); ++i) {
      const double e = std::abs(lm.realized[i] - line.intensities[i]);
      worst_affine = std::max(worst_affine, e);
      if (e >= 1e-12) ++affine_bad;
    }

    const double sigma = 0.01;
    const auto full = occlude(s, {}, sigma, rng);
    const double y0 = s.intensities.front(), y1 = s.intensities.back();
    double ss = 0.0;
    for (std::size_t i = 0; i < axis.size(); ++i) {
      const double r = full.realized[i] - (y0 + (y1 - y0) * static_cast<double>(i) / 999.0);
      ss += r * r;
    }
    if (std::abs(std::sqrt(ss / 1000.0) - sigma) > 0.15 * sigma) ++full_bad;
  }
  const bool ok = retained_bad == 0 && affine_bad == 0 && full_bad == 0;
  return {ok, fmt("1000 pairs: %zu retained bins altered, %zu affine deviations >= 1e-12 (worst %.2e), "
                  "%zu fully-occluded mutants off the endpoint line + noise",
                  retained_bad, affine_bad, worst_affine, full_bad)};
}

Verdict oracle_search() {
  const WavenumberAxis axis(0.0, 999.0, 1000);
  Rng rng(5);
  std::size_t near = 0, extracted = 0, contained = 0;
  SearchConfig cfg;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> y(axis.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::sin(0.01 * i + t) + 0.05 * standard_normal(rng);
    const auto s = specrex::testing::make_spectrum(axis, y, "oracle-" + std::to_string(t));
    const std::size_t b = std::uniform_int_distribution<std::size_t>(0, 999)(rng);
    auto h = specrex::testing::sensitive_bin_handle(s, b);
    cfg.seed = derive_seed(kSearchSeed, 3, t);
    const auto r = run_one(s, h, cfg);
    const std::size_t am = r.search.map.argmax();
    near += (am > b ? am - b : b - am) <= cfg.min_segment_bins;
    if (r.extracted && r.ex.sufficient) {
      ++extracted;
      contained += std::any_of(r.ex.intervals.begin(), r.ex.intervals.end(),
                               [&](const BinRange& iv) { return iv.contains(b); });
    }
  }
  const bool ok = near >= 95 && extracted > 0 && contained == extracted;
  return {ok, fmt("argmax within +-%zu bins in %zu/100 (need >= 95); bin inside explanation in %zu/%zu extractions "
                  "(need all)",
                  cfg.min_segment_bins, near, contained, extracted)};
}

Verdict simulator_fidelity() {
  double spline_err = 0.0, sum_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto kind = static_cast<DatasetKind>(t % 3);
    auto ds = default_dataset_spec(kind, t, 1, 1);
    ClassSpec cs = ds.classes[t % 2];
    cs.noise_scale = 0.0;
    SynthRecord rec;
    SynthOptions opt;
    opt.record = &rec;
    opt.avoid_positions = ds.discriminating_positions();
    Rng rng(derive_seed(kDataSeed, 17, t));
    const auto s = synth_spectrum(cs, ds.axis, rng, opt);
    NaturalCubicSpline base(rec.anchor_x, rec.anchor_y);
    for (std::size_t i = 0; i < rec.anchor_x.size(); ++i)
      spline_err = std::max(spline_err, std::abs(base(rec.anchor_x[i]) - rec.anchor_y[i]));
    std::vector<double> expect(ds.axis.size());
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] = base(ds.axis.at(i));
    for (const auto& p : rec.peaks) {
      const auto prof = peak_profile(ds.axis, p, HeightMode::Normalized);
      for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += prof[i];
    }
    for (std::size_t i = 0; i < expect.size(); ++i) sum_err = std::max(sum_err, std::abs(s.intensities[i] - expect[i]));
  }
  const WavenumberAxis unit(-10.0, 10.0, 21);
  const double centre = peak_profile(unit, {0.0, 1.0, 1.0, true})[10];
  const double centre_err = std::abs(centre - 1.0 / (2.0 * std::numbers::pi));

  specrex::testing::TempDir a, b;
  bool identical = true;
  for (auto kind : {DatasetKind::Single, DatasetKind::Double, DatasetKind::Complex}) {
    const auto ds = default_dataset_spec(kind, kDataSeed, 10, 5);
    build_dataset(ds, a.path());
    build_dataset(ds, b.path());
    for (const char* f : {"train.jsonl", "test.jsonl", "manifest.json"})
      identical = identical && read_text_file(a / f) == read_text_file(b / f);
  }
  const bool ok = spline_err < 1e-12 && sum_err < 1e-12 && centre_err < 1e-12 && identical;
  return {ok, fmt("spline anchor error %.1e, noise-free sum error %.1e, unit peak centre error %.1e, "
                  "same-seed datasets %s",
                  spline_err, sum_err, centre_err, identical ? "byte-identical" : "DIFFER")};
}

Verdict peak_counter() {
  std::string counts;
  bool ok = true;
  for (std::size_t k : {0u, 1u, 3u, 10u}) {
    std::vector<double> v(1000, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const double mu = 50.0 + 90.0 * static_cast<double>(j);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += std::exp(-0.5 * std::pow((i - mu) / 8.0, 2));
    }
    const auto c = count_peaks(v);
    ok = ok && c == k;
    counts += fmt("%zu->%zu ", k, c);
  }
  std::mt19937_64 rng(12);
  std::size_t affine_bad = 0;
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(500, 0.0);
    const int m = std::uniform_int_distribution<int>(0, 15)(rng);
    for (int j = 0; j < m; ++j) {
      const double mu = std::uniform_real_distribution<double>(0, 500)(rng);
      const double h = std::uniform_real_distribution<double>(0.05, 1)(rng);
      const double w = std::uniform_real_distribution<double>(1, 20)(rng);
      for (std::size_t i = 0; i < v.size(); ++i) v[i] += h * std::exp(-0.5 * std::pow((i - mu) / w, 2));
    }
    for (auto& x : v) x = std::round(x * 512.0) / 512.0;
    const double a = std::exp2(std::uniform_int_distribution<int>(-6, 6)(rng));
    const double b = std::uniform_int_distribution<int>(-20, 20)(rng);
    auto w = v;
    for (auto& x : w) x = a * x + b;
    affine_bad += count_peaks(v) != count_peaks(w);
  }
  ok = ok && affine_bad == 0;
  return {ok, fmt("planted k->counted: %s; affine invariance broken on %zu/100 maps", counts.c_str(), affine_bad)};
}

Verdict budget_accounting() {
  for (auto k : {DatasetKind::Single, DatasetKind::Double, DatasetKind::Complex}) dataset(k);
  // Tight budgets force exhaustion part-way through search or extraction.
  const WavenumberAxis axis(0.0, 999.0, 1000);
  Rng rng(4);
  for (std::size_t budget : {100u, 120u, 200u, 350u, 600u}) {
    std::vector<double> y(axis.size());
    for (auto& v : y) v = standard_normal(rng);
    const auto s = specrex::testing::make_spectrum(axis, y);
    auto h = specrex::testing::sensitive_bin_handle(s, 400);
    SearchConfig cfg;
    cfg.query_budget = budget;
    run_one(s, h, cfg);
  }
  const bool ok = g_audit.budget_violations == 0 && g_audit.count_mismatches == 0;
  return {ok, fmt("%zu runs: %zu over budget, %zu with query_count delta != mutant_queries", g_audit.runs,
                  g_audit.budget_violations, g_audit.count_mismatches)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"single_peak_localization", single_peak_localization},
      {"single_peak_count", single_peak_count},
      {"single_peak_runtime", single_peak_runtime},
      {"double_peak_completeness", double_peak_completeness},
      {"complex_peak_selectivity", complex_peak_selectivity},
      {"complex_peak_count", complex_peak_count},
      {"responsibility_bounds", responsibility_bounds},
      {"occlusion_properties", occlusion_properties},
      {"oracle_search", oracle_search},
      {"simulator_fidelity", simulator_fidelity},
      {"peak_counter", peak_counter},
      {"budget_accounting", budget_accounting},
  };
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) only = argv[++i];
    else {
      std::fprintf(stderr, "usage: acceptance [--only CRITERION]\n");
      return 2;
    }
  }
  int failures = 0, ran = 0;
  for (const auto& [name, fn] : criteria) {
    if (!only.empty() && name != only) continue;
    ++ran;
    Verdict v{false, ""};
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  }
  if (ran == 0) {
    std::fprintf(stderr, "unknown criterion '%s'\n", only.c_str());
    return 2;
  }
  return failures ? 1 : 0;
}
