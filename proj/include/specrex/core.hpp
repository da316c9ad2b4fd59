#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specrex {

enum class ErrorCode {
  NonFinite,
  AxisMismatch,
  BadInterval,
  BadArgument,
  ParseError,
  IoError,
  DuplicateAnchor,
  TooFewAnchors,
  PlacementFailure,
  WindowOutOfRange,
  ExternalProtocolError,
  SpawnError,
  HandshakeError,
  Unsplittable,
  BudgetExhausted,
  TargetUnstable,
  NoSufficientSet,
  MissingGroundTruth,
  IdMismatch,
  EmptyInput,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::AxisMismatch: return "AxisMismatch";
    case ErrorCode::BadInterval: return "BadInterval";
    case ErrorCode::BadArgument: return "BadArgument";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DuplicateAnchor: return "DuplicateAnchor";
    case ErrorCode::TooFewAnchors: return "TooFewAnchors";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::WindowOutOfRange: return "WindowOutOfRange";
    case ErrorCode::ExternalProtocolError: return "ExternalProtocolError";
    case ErrorCode::SpawnError: return "SpawnError";
    case ErrorCode::HandshakeError: return "HandshakeError";
    case ErrorCode::Unsplittable: return "Unsplittable";
    case ErrorCode::BudgetExhausted: return "BudgetExhausted";
    case ErrorCode::TargetUnstable: return "TargetUnstable";
    case ErrorCode::NoSufficientSet: return "NoSufficientSet";
    case ErrorCode::MissingGroundTruth: return "MissingGroundTruth";
    case ErrorCode::IdMismatch: return "IdMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
  }
  return "Unknown";
}

/// Every failure in the library is reported as an Error carrying a code.
/// ParseError additionally records the 1-based line number it happened on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  Error(ErrorCode code, const std::string& what, std::size_t line)
      : std::runtime_error(std::string(to_string(code)) + " (line " + std::to_string(line) +
                           "): " + what),
        code_(code),
        line_(line) {}

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::size_t> line() const noexcept { return line_; }

 private:
  ErrorCode code_;
  std::optional<std::size_t> line_;
};

using ClassId = int;

/// Class reserved for spectra lacking some or all discriminating features.
inline constexpr ClassId kEverythingElseClass = 2;

/// Uniform grid of Raman shift values in cm^-1.
class WavenumberAxis {
 public:
  WavenumberAxis() = default;
  WavenumberAxis(double start, double end, std::size_t n_bins)
      : start_(start), end_(end), n_bins_(n_bins) {
    if (!std::isfinite(start) || !std::isfinite(end) || !(end > start))
      throw Error(ErrorCode::BadArgument, "axis end must exceed start");
    if (n_bins < 8) throw Error(ErrorCode::BadArgument, "axis needs at least 8 bins");
  }

  double start() const noexcept { return start_; }
  double end() const noexcept { return end_; }
  std::size_t size() const noexcept { return n_bins_; }
  double step() const noexcept { return (end_ - start_) / static_cast<double>(n_bins_ - 1); }

  double at(std::size_t i) const noexcept {
    return i + 1 == n_bins_ ? end_ : start_ + static_cast<double>(i) * step();
  }

  bool contains(double x) const noexcept { return x >= start_ && x <= end_; }

  /// Nearest bin, clamped to the axis.
  std::size_t index_of(double x) const noexcept {
    double f = std::round((x - start_) / step());
    if (f < 0) return 0;
    if (f > static_cast<double>(n_bins_ - 1)) return n_bins_ - 1;
    return static_cast<std::size_t>(f);
  }

  std::vector<double> values() const {
    std::vector<double> v(n_bins_);
    for (std::size_t i = 0; i < n_bins_; ++i) v[i] = at(i);
    return v;
  }

  friend bool operator==(const WavenumberAxis&, const WavenumberAxis&) = default;

 private:
  double start_ = 0.0;
  double end_ = 1.0;
  std::size_t n_bins_ = 8;
};

/// Closed interval in cm^-1.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  bool contains(double x) const noexcept { return x >= lo && x <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Closed interval of bin indices.
struct BinRange {
  std::size_t lo = 0;
  std::size_t hi = 0;

  std::size_t width() const noexcept { return hi - lo + 1; }
  bool contains(std::size_t i) const noexcept { return i >= lo && i <= hi; }
  bool intersects(const BinRange& o) const noexcept { return lo <= o.hi && o.lo <= hi; }
  friend bool operator==(const BinRange&, const BinRange&) = default;
};

inline BinRange to_bins(const WavenumberAxis& axis, const Interval& iv) {
  return {axis.index_of(iv.lo), axis.index_of(iv.hi)};
}

inline Interval to_cm(const WavenumberAxis& axis, const BinRange& r) {
  return {axis.at(r.lo), axis.at(r.hi)};
}

/// Sorts ranges and merges overlapping or adjacent ones.
inline std::vector<BinRange> merge_ranges(std::vector<BinRange> ranges) {
  std::sort(ranges.begin(), ranges.end(),
            [](const BinRange& a, const BinRange& b) { return a.lo < b.lo; });
  std::vector<BinRange> out;
  for (const auto& r : ranges) {
    if (!out.empty() && r.lo <= out.back().hi + 1)
      out.back().hi = std::max(out.back().hi, r.hi);
    else
      out.push_back(r);
  }
  return out;
}

/// Maximal runs of marked bins.
inline std::vector<BinRange> runs_of(const std::vector<bool>& mask) {
  std::vector<BinRange> out;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i]) continue;
    if (!out.empty() && out.back().hi + 1 == i)
      out.back().hi = i;
    else
      out.push_back({i, i});
  }
  return out;
}

struct Spectrum {
  WavenumberAxis axis;
  std::vector<double> intensities;
  std::string id;
  std::optional<ClassId> label;
  std::vector<Interval> ground_truth;

  friend bool operator==(const Spectrum&, const Spectrum&) = default;
};

/// Throws NonFinite, AxisMismatch or BadInterval when an invariant fails.
inline void validate_spectrum(const Spectrum& s) {
  if (s.intensities.size() != s.axis.size())
    throw Error(ErrorCode::AxisMismatch, "spectrum '" + s.id + "' has " +
                                             std::to_string(s.intensities.size()) +
                                             " intensities for " +
                                             std::to_string(s.axis.size()) + " bins");
  for (std::size_t i = 0; i < s.intensities.size(); ++i)
    if (!std::isfinite(s.intensities[i]))
      throw Error(ErrorCode::NonFinite,
                  "spectrum '" + s.id + "' bin " + std::to_string(i) + " is not finite");
  auto gt = s.ground_truth;
  for (const auto& iv : gt)
    if (!(iv.lo <= iv.hi) || !s.axis.contains(iv.lo) || !s.axis.contains(iv.hi))
      throw Error(ErrorCode::BadInterval, "spectrum '" + s.id + "' ground truth [" +
                                              std::to_string(iv.lo) + ", " +
                                              std::to_string(iv.hi) + "] outside axis");
  std::sort(gt.begin(), gt.end(), [](auto& a, auto& b) { return a.lo < b.lo; });
  for (std::size_t i = 1; i < gt.size(); ++i)
    if (gt[i].lo <= gt[i - 1].hi)
      throw Error(ErrorCode::BadInterval, "spectrum '" + s.id + "' ground truth overlaps");
}

struct PeakSpec {
  double mu = 0.0;
  double height = 1.0;
  double width = 1.0;
  bool discriminating = false;
};

struct Prediction {
  ClassId label = 0;
  std::vector<double> probabilities;

  /// Probability assigned to class c; a bare label counts as certainty.
  double probability(ClassId c) const {
    if (probabilities.empty()) return c == label ? 1.0 : 0.0;
    return c >= 0 && static_cast<std::size_t>(c) < probabilities.size() ? probabilities[c] : 0.0;
  }
};

/// Validates a probability vector and returns its argmax (lowest index on ties).
inline ClassId argmax_label(std::span<const double> probs) {
  if (probs.empty()) throw Error(ErrorCode::BadArgument, "empty probability vector");
  double sum = 0.0;
  for (double p : probs) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
      throw Error(ErrorCode::BadArgument, "probability outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw Error(ErrorCode::BadArgument, "probabilities do not sum to 1");
  return static_cast<ClassId>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

/// Per-bin responsibility in [0,1]. Construction rejects anything else.
class ResponsibilityMap {
 public:
  ResponsibilityMap() = default;
  ResponsibilityMap(WavenumberAxis axis, std::vector<double> values)
      : axis_(axis), values_(std::move(values)) {
    if (values_.size() != axis_.size())
      throw Error(ErrorCode::AxisMismatch, "responsibility map length does not match axis");
    for (double v : values_)
      if (!(v >= 0.0 && v <= 1.0))
        throw Error(ErrorCode::BadArgument, "responsibility value outside [0,1]");
  }

  const WavenumberAxis& axis() const noexcept { return axis_; }
  std::span<const double> values() const noexcept { return values_; }
  double max() const noexcept {
    return values_.empty() ? 0.0 : *std::max_element(values_.begin(), values_.end());
  }
  std::size_t argmax() const noexcept {
    return static_cast<std::size_t>(std::max_element(values_.begin(), values_.end()) -
                                    values_.begin());
  }
  bool is_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

 private:
  WavenumberAxis axis_;
  std::vector<double> values_;
};

struct Explanation {
  std::vector<BinRange> intervals;
  ClassId label = 0;
  ResponsibilityMap map;
  std::size_t mutant_queries = 0;
  bool sufficient = false;
  bool budget_exhausted = false;
};

}  // namespace specrex
