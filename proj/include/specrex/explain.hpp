#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <vector>

#include "specrex/classify.hpp"
#include "specrex/core.hpp"
#include "specrex/random.hpp"

namespace specrex {

struct SearchConfig {
  std::size_t restarts = 20;
  std::size_t splits_per_level = 4;
  std::size_t max_depth = 10;
  std::size_t min_segment_bins = 4;
  double occlusion_sigma = 0.001;
  std::uint64_t seed = 0;
  std::size_t query_budget = 10000;
  /// Fraction of bins added per growth step during extraction.
  double extract_chunk_frac = 0.02;
  bool extract_shrink = true;
  /// Credit only the mutant chosen for recursion at each level.
  bool credit_chosen_path_only = false;
  /// Label to explain; defaults to the classifier's label for the input.
  std::optional<ClassId> target;

  void validate() const {
    if (restarts < 1 || splits_per_level < 1 || max_depth < 1 || min_segment_bins < 1)
      throw Error(ErrorCode::BadArgument, "restarts, splits, depth and min segment must be >= 1");
    if (query_budget < restarts * (splits_per_level + 1))
      throw Error(ErrorCode::BadArgument, "query budget below restarts * (splits + 1)");
    if (!(occlusion_sigma >= 0.0)) throw Error(ErrorCode::BadArgument, "occlusion sigma must be >= 0");
    if (!(extract_chunk_frac > 0.0 && extract_chunk_frac <= 1.0))
      throw Error(ErrorCode::BadArgument, "extraction chunk fraction must be in (0, 1]");
  }
};

struct Mutant {
  std::vector<BinRange> retained;
  std::vector<double> realized;
  std::shared_ptr<const Mutant> parent;
  std::size_t depth = 0;
};

// ---------------------------------------------------------------------------
// Occlusion.

/// Re-occludes `region` of `base`, keeping the `retained` sub-ranges. Each
/// maximal occluded run is replaced by the line between its flanking bins
/// (or the run's own boundary bin at an axis end) plus N(0, sigma^2) noise.
/// Bins outside `region` are copied from `base`.
inline std::vector<double> occlude_region(std::span<const double> base, BinRange region,
                                          std::span<const BinRange> retained, double sigma,
                                          Rng& rng) {
  const std::size_t n = base.size();
  std::vector<double> out(base.begin(), base.end());
  std::vector<bool> occluded(n, false);
  for (std::size_t i = region.lo; i <= region.hi; ++i) occluded[i] = true;
  for (const auto& r : retained)
    for (std::size_t i = std::max(r.lo, region.lo); i <= std::min(r.hi, region.hi); ++i) occluded[i] = false;

  std::normal_distribution<double> noise(0.0, 1.0);
  for (const auto& run : runs_of(occluded)) {
    const std::size_t left = run.lo > 0 ? run.lo - 1 : 0;
    const std::size_t right = run.hi + 1 < n ? run.hi + 1 : n - 1;
    const double yl = base[left];
    const double yr = base[right];
    const double span = static_cast<double>(right - left);
    for (std::size_t i = run.lo; i <= run.hi; ++i) {
      const double line =
          span == 0.0 ? yl : yl + (yr - yl) * (static_cast<double>(i - left) / span);
      out[i] = sigma > 0.0 ? line + sigma * noise(rng) : line;
    }
  }
  return out;
}

inline Mutant occlude(const Spectrum& s, std::vector<BinRange> retained, double sigma, Rng& rng) {
  Mutant m;
  m.retained = merge_ranges(std::move(retained));
  for (const auto& r : m.retained)
    if (r.hi >= s.intensities.size()) throw Error(ErrorCode::BadInterval, "retained range outside axis");
  m.realized = occlude_region(s.intensities, {0, s.intensities.size() - 1}, m.retained, sigma, rng);
  return m;
}

// ---------------------------------------------------------------------------
// Splitting.

/// Cuts `interval` before each split position.
inline std::vector<BinRange> partition_at(BinRange interval, std::span<const std::size_t> cuts) {
  std::vector<BinRange> out;
  std::size_t lo = interval.lo;
  for (std::size_t c : cuts) {
    out.push_back({lo, c - 1});
    lo = c;
  }
  out.push_back({lo, interval.hi});
  return out;
}

/// k random split positions drawn uniformly inside the interval, redrawn
/// until every piece has at least m bins. Falls back to fewer splits.
inline std::vector<BinRange> split_segment(BinRange interval, std::size_t k, std::size_t m, Rng& rng) {
  const std::size_t width = interval.width();
  if (m == 0 || width < 2 * m)
    throw Error(ErrorCode::Unsplittable,
                "interval of " + std::to_string(width) + " bins cannot hold two " +
                    std::to_string(m) + "-bin pieces");
  // A cut at position p starts a new piece at p.
  std::uniform_int_distribution<std::size_t> pos(interval.lo + 1, interval.hi);
  for (std::size_t kk = std::min(k, width / m - 1); kk >= 1; --kk) {
    for (int attempt = 0; attempt < 100; ++attempt) {
      std::set<std::size_t> cuts;
      while (cuts.size() < kk) cuts.insert(pos(rng));
      std::vector<std::size_t> sorted(cuts.begin(), cuts.end());
      auto pieces = partition_at(interval, sorted);
      if (std::all_of(pieces.begin(), pieces.end(), [&](const BinRange& p) { return p.width() >= m; }))
        return pieces;
    }
    if (kk == 1) break;
  }
  std::uniform_int_distribution<std::size_t> valid(interval.lo + m, interval.hi + 1 - m);
  const std::size_t cut = valid(rng);
  return partition_at(interval, std::span<const std::size_t>(&cut, 1));
}

// ---------------------------------------------------------------------------
// Responsibility accumulation.

/// Sums 1/w credits exactly: per retained width w it keeps integer bin
/// counts, and materializes raw = sum_w count_w / w in ascending w. The raw
/// array therefore does not depend on the order credits arrive in.
class ResponsibilityAccumulator {
 public:
  explicit ResponsibilityAccumulator(std::size_t n_bins) : n_bins_(n_bins) {}

  void credit(std::span<const BinRange> retained) {
    std::size_t w = 0;
    for (const auto& r : retained) w += r.width();
    if (w == 0) return;
    std::lock_guard lock(mu_);
    auto& diff = by_width_.try_emplace(w, n_bins_ + 1, 0).first->second;
    for (const auto& r : retained) {
      diff[r.lo] += 1;
      diff[r.hi + 1] -= 1;
    }
    ++passing_;
  }

  std::vector<double> raw() const {
    std::lock_guard lock(mu_);
    std::vector<double> out(n_bins_, 0.0);
    for (const auto& [w, diff] : by_width_) {
      std::int64_t count = 0;
      for (std::size_t i = 0; i < n_bins_; ++i) {
        count += diff[i];
        if (count) out[i] += static_cast<double>(count) / static_cast<double>(w);
      }
    }
    return out;
  }

  std::size_t passing_mutants() const {
    std::lock_guard lock(mu_);
    return passing_;
  }
  std::size_t size() const { return n_bins_; }

 private:
  std::size_t n_bins_;
  std::map<std::size_t, std::vector<std::int64_t>> by_width_;
  std::size_t passing_ = 0;
  mutable std::mutex mu_;
};

/// Every retained bin of a passing mutant gains 1/w, w = retained bins.
inline void credit(ResponsibilityAccumulator& acc, const Mutant& m) { acc.credit(m.retained); }

inline std::vector<double> normalize(std::span<const double> raw) {
  const double mx = raw.empty() ? 0.0 : *std::max_element(raw.begin(), raw.end());
  std::vector<double> out(raw.size(), 0.0);
  if (mx > 0.0)
    for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / mx;
  return out;
}

inline ResponsibilityMap normalize(const ResponsibilityAccumulator& acc, const WavenumberAxis& axis) {
  return ResponsibilityMap(axis, normalize(acc.raw()));
}

// ---------------------------------------------------------------------------
// Search.

/// Classifier queries charged against one explanation's budget.
class BudgetedQueries {
 public:
  BudgetedQueries(ClassifierHandle& handle, std::size_t budget) : handle_(handle), budget_(budget) {}

  std::size_t remaining() const { return budget_ - used_; }
  std::size_t used() const { return used_; }
  bool exhausted() const { return exhausted_; }
  void mark_exhausted() { exhausted_ = true; }

  std::optional<Prediction> query(std::span<const double> intensities) {
    if (used_ >= budget_) {
      exhausted_ = true;
      return std::nullopt;
    }
    ++used_;
    return handle_.classify(intensities);
  }

 private:
  ClassifierHandle& handle_;
  std::size_t budget_;
  std::size_t used_ = 0;
  bool exhausted_ = false;
};

struct SearchResult {
  ResponsibilityMap map;
  std::vector<double> raw;
  ClassId target = 0;
  std::size_t queries = 0;
  std::size_t passing_mutants = 0;
  bool budget_exhausted = false;
};

namespace detail {

inline ClassId resolve_target(const Spectrum& s, BudgetedQueries& q, const SearchConfig& cfg) {
  auto p = q.query(s.intensities);
  if (!p) throw Error(ErrorCode::BudgetExhausted, "no budget for the initial query");
  if (cfg.target && p->label != *cfg.target)
    throw Error(ErrorCode::TargetUnstable, "classifier labels '" + s.id + "' as " +
                                               std::to_string(p->label) + ", not " +
                                               std::to_string(*cfg.target));
  return p->label;
}

// One restart: returns false when the budget ran out.
inline bool run_restart(const Spectrum& s, ClassId target, BudgetedQueries& q,
                        const SearchConfig& cfg, std::size_t restart,
                        ResponsibilityAccumulator& acc) {
  Rng rng(derive_seed(cfg.seed, stream::kRestart, restart));
  auto current = std::make_shared<Mutant>();
  current->retained = {{0, s.intensities.size() - 1}};
  current->realized = s.intensities;

  for (std::size_t depth = 0; depth < cfg.max_depth; ++depth) {
    const BinRange interval = current->retained.front();
    std::vector<BinRange> pieces;
    try {
      pieces = split_segment(interval, cfg.splits_per_level, cfg.min_segment_bins, rng);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::Unsplittable) return true;
      throw;
    }
    if (q.remaining() < pieces.size()) {
      q.mark_exhausted();
      return false;
    }

    struct Child {
      std::shared_ptr<Mutant> mutant;
      double prob = 0.0;
    };
    std::vector<Child> passing;
    for (const auto& piece : pieces) {
      auto child = std::make_shared<Mutant>();
      child->retained = {piece};
      child->realized = occlude_region(current->realized, interval,
                                       std::span<const BinRange>(&piece, 1), cfg.occlusion_sigma, rng);
      child->parent = current;
      child->depth = depth;
      const auto pred = q.query(child->realized);
      if (pred->label != target) continue;
      if (!cfg.credit_chosen_path_only) credit(acc, *child);
      passing.push_back({child, pred->probability(target)});
    }
    if (passing.empty()) return true;

    // Pieces are generated in ascending start order, so the first minimum
    // already has the lowest start among equals.
    const auto chosen = std::min_element(passing.begin(), passing.end(), [](const Child& a, const Child& b) {
      const auto wa = a.mutant->retained.front().width(), wb = b.mutant->retained.front().width();
      if (wa != wb) return wa < wb;
      return a.prob > b.prob;
    });
    if (cfg.credit_chosen_path_only) credit(acc, *chosen->mutant);
    current = chosen->mutant;
  }
  return true;
}

}  // namespace detail

/// Responsibility map for the label `q`'s classifier gives `s`.
inline SearchResult specrex_search(const Spectrum& s, BudgetedQueries& q, const SearchConfig& cfg) {
  cfg.validate();
  SearchResult res;
  res.target = detail::resolve_target(s, q, cfg);
  ResponsibilityAccumulator acc(s.intensities.size());
  for (std::size_t r = 0; r < cfg.restarts; ++r)
    if (!detail::run_restart(s, res.target, q, cfg, r, acc)) break;
  res.raw = acc.raw();
  res.map = ResponsibilityMap(s.axis, normalize(res.raw));
  res.passing_mutants = acc.passing_mutants();
  res.queries = q.used();
  res.budget_exhausted = q.exhausted();
  return res;
}

inline SearchResult specrex_search(const Spectrum& s, ClassifierHandle& handle, const SearchConfig& cfg) {
  validate_spectrum(s);
  BudgetedQueries q(handle, cfg.query_budget);
  return specrex_search(s, q, cfg);
}

// ---------------------------------------------------------------------------
// Extraction.

namespace detail {

inline double mean_over(std::span<const double> v, const BinRange& r) {
  double acc = 0.0;
  for (std::size_t i = r.lo; i <= r.hi; ++i) acc += v[i];
  return acc / static_cast<double>(r.width());
}

}  // namespace detail

/// Grows a retained set from the most responsible bins until the occluded
/// mutant keeps `target`, then tries to drop whole intervals, least
/// responsible first. Throws NoSufficientSet if even the unoccluded
/// spectrum is not labelled `target`.
inline Explanation extract_minimal(const Spectrum& s, const ResponsibilityMap& map, ClassId target,
                                   BudgetedQueries& q, const SearchConfig& cfg) {
  const std::size_t n = s.intensities.size();
  const auto values = map.values();
  Explanation ex;
  ex.label = target;
  ex.map = map;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  const std::size_t chunk =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.extract_chunk_frac * n - 1e-9)));

  Rng rng(derive_seed(cfg.seed, stream::kExtract, 0));
  std::vector<bool> mask(n, false);
  std::vector<BinRange> found;
  bool sufficient = false;
  for (std::size_t taken = 0; taken < n && !sufficient;) {
    const std::size_t next = std::min(n, taken + chunk);
    for (std::size_t j = taken; j < next; ++j) mask[order[j]] = true;
    taken = next;
    auto intervals = runs_of(mask);
    const auto realized = taken == n
                              ? s.intensities
                              : occlude(s, intervals, cfg.occlusion_sigma, rng).realized;
    const auto pred = q.query(realized);
    if (!pred) {
      ex.budget_exhausted = true;
      ex.mutant_queries = q.used();
      return ex;
    }
    if (pred->label == target) {
      found = std::move(intervals);
      sufficient = true;
    } else if (taken == n) {
      throw Error(ErrorCode::NoSufficientSet,
                  "unoccluded spectrum '" + s.id + "' is not labelled " + std::to_string(target));
    }
  }

  if (cfg.extract_shrink && found.size() > 1) {
    std::vector<std::size_t> idx(found.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return detail::mean_over(values, found[a]) < detail::mean_over(values, found[b]);
    });
    std::vector<bool> dropped(found.size(), false);
    std::size_t alive = found.size();
    for (std::size_t i : idx) {
      if (alive == 1) break;
      std::vector<BinRange> trial;
      for (std::size_t j = 0; j < found.size(); ++j)
        if (j != i && !dropped[j]) trial.push_back(found[j]);
      const auto pred = q.query(occlude(s, trial, cfg.occlusion_sigma, rng).realized);
      if (!pred) {
        ex.budget_exhausted = true;
        break;
      }
      if (pred->label == target) {
        dropped[i] = true;
        --alive;
      }
    }
    std::vector<BinRange> kept;
    for (std::size_t j = 0; j < found.size(); ++j)
      if (!dropped[j]) kept.push_back(found[j]);
    found = std::move(kept);
  }
  ex.intervals = found;

  // Post-hoc check without occlusion noise.
  if (!ex.budget_exhausted) {
    Rng quiet(0);
    const auto pred = q.query(occlude(s, found, 0.0, quiet).realized);
    if (pred) ex.sufficient = pred->label == target;
    else ex.budget_exhausted = true;
  }
  ex.mutant_queries = q.used();
  return ex;
}

/// Search followed by extraction, sharing one query budget.
inline Explanation explain(const Spectrum& s, ClassifierHandle& handle, const SearchConfig& cfg) {
  validate_spectrum(s);
  BudgetedQueries q(handle, cfg.query_budget);
  auto search = specrex_search(s, q, cfg);
  Explanation ex;
  if (search.budget_exhausted) {
    ex.label = search.target;
    ex.map = search.map;
    ex.budget_exhausted = true;
  } else {
    ex = extract_minimal(s, search.map, search.target, q, cfg);
  }
  ex.mutant_queries = q.used();
  return ex;
}

}  // namespace specrex
