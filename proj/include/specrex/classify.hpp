#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "specrex/core.hpp"
#include "specrex/io.hpp"
#include "specrex/simulate.hpp"

namespace specrex {

/// Anything that can label an intensity vector. The explainer only ever
/// needs inference outputs, so this is the whole model contract.
class Classifier {
 public:
  virtual ~Classifier() = default;
  virtual Prediction predict(std::span<const double> intensities) = 0;
  virtual int n_classes() const = 0;
};

/// Query counter that several handles may share.
using QueryCounter = std::shared_ptr<std::atomic<std::size_t>>;

inline QueryCounter make_query_counter() { return std::make_shared<std::atomic<std::size_t>>(0); }

inline void check_prediction(const Prediction& p, int n_classes) {
  if (p.label < 0 || p.label >= n_classes)
    throw Error(ErrorCode::ExternalProtocolError,
                "label " + std::to_string(p.label) + " outside [0, " + std::to_string(n_classes) + ")");
  if (p.probabilities.empty()) return;
  if (p.probabilities.size() != static_cast<std::size_t>(n_classes))
    throw Error(ErrorCode::ExternalProtocolError, "probability vector has wrong length");
  ClassId best;
  try {
    best = argmax_label(p.probabilities);
  } catch (const Error& e) {
    throw Error(ErrorCode::ExternalProtocolError, e.what());
  }
  if (p.probabilities[best] != p.probabilities[p.label])
    throw Error(ErrorCode::ExternalProtocolError, "label is not the argmax of probabilities");
}

/// A classifier bound to one axis, counting every query made through it.
class ClassifierHandle {
 public:
  enum class Kind { Builtin, External };

  ClassifierHandle(std::shared_ptr<Classifier> impl, WavenumberAxis axis, Kind kind,
                   QueryCounter counter = make_query_counter())
      : impl_(std::move(impl)), axis_(axis), kind_(kind), counter_(std::move(counter)) {
    if (!impl_) throw Error(ErrorCode::BadArgument, "null classifier");
    if (impl_->n_classes() < 2) throw Error(ErrorCode::BadArgument, "classifier needs >= 2 classes");
  }

  Prediction classify(const Spectrum& s) {
    if (!(s.axis == axis_))
      throw Error(ErrorCode::AxisMismatch, "spectrum '" + s.id + "' is on a different axis");
    return classify(s.intensities);
  }

  Prediction classify(std::span<const double> intensities) {
    if (intensities.size() != axis_.size())
      throw Error(ErrorCode::AxisMismatch, "expected " + std::to_string(axis_.size()) +
                                               " intensities, got " +
                                               std::to_string(intensities.size()));
    counter_->fetch_add(1);
    Prediction p = impl_->predict(intensities);
    check_prediction(p, impl_->n_classes());
    return p;
  }

  std::size_t query_count() const { return counter_->load(); }
  const QueryCounter& counter() const { return counter_; }
  int n_classes() const { return impl_->n_classes(); }
  Kind kind() const { return kind_; }
  const WavenumberAxis& axis() const { return axis_; }

 private:
  std::shared_ptr<Classifier> impl_;
  WavenumberAxis axis_;
  Kind kind_;
  QueryCounter counter_;
};

// ---------------------------------------------------------------------------
// Matched filter.

/// Unit-norm Gaussian template over the window [mu - 3w, mu + 3w], with its
/// own endpoint line removed so that it is zero at both window ends.
class MatchedFilter {
 public:
  MatchedFilter(const WavenumberAxis& axis, double mu, double width) : mu_(mu), width_(width) {
    if (!(width > 0.0)) throw Error(ErrorCode::BadArgument, "template width must be positive");
    if (mu - 3.0 * width < axis.start() || mu + 3.0 * width > axis.end())
      throw Error(ErrorCode::WindowOutOfRange,
                  "window around " + std::to_string(mu) + " leaves the axis");
    lo_ = axis.index_of(mu - 3.0 * width);
    hi_ = axis.index_of(mu + 3.0 * width);
    if (hi_ < lo_ + 2) throw Error(ErrorCode::WindowOutOfRange, "window narrower than 3 bins");
    weights_.resize(hi_ - lo_ + 1);
    for (std::size_t i = lo_; i <= hi_; ++i) {
      const double z = (axis.at(i) - mu) / width;
      weights_[i - lo_] = std::exp(-0.5 * z * z);
    }
    remove_endpoint_line(weights_);
    double norm = 0.0;
    for (double w : weights_) norm += w * w;
    norm = std::sqrt(norm);
    for (double& w : weights_) w /= norm;
  }

  /// Inner product of the baseline-corrected window with the template.
  double score(std::span<const double> intensities) const {
    const std::size_t n = hi_ - lo_;
    const double a = intensities[lo_];
    const double b = intensities[hi_];
    double acc = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
      const double t = static_cast<double>(j) / static_cast<double>(n);
      acc += (intensities[lo_ + j] - (a + (b - a) * t)) * weights_[j];
    }
    return acc;
  }

  double mu() const { return mu_; }
  double width() const { return width_; }
  std::size_t lo() const { return lo_; }
  std::size_t hi() const { return hi_; }
  std::span<const double> weights() const { return weights_; }

  static void remove_endpoint_line(std::vector<double>& v) {
    const std::size_t n = v.size() - 1;
    const double a = v.front(), b = v.back();
    for (std::size_t j = 0; j <= n; ++j)
      v[j] -= a + (b - a) * static_cast<double>(j) / static_cast<double>(n);
  }

 private:
  double mu_;
  double width_;
  std::size_t lo_ = 0;
  std::size_t hi_ = 0;
  std::vector<double> weights_;
};

inline double matched_filter_score(const Spectrum& s, double mu, double width) {
  return MatchedFilter(s.axis, mu, width).score(s.intensities);
}

/// Builtin stand-in classifier. Class c (0 or 1) is predicted iff every one
/// of its templates fires and none of the other class's templates does;
/// every other pattern maps to the everything-else class.
class MatchedFilterModel {
 public:
  struct Template {
    double mu = 0.0;
    double width = 0.0;
    ClassId owner = 0;
  };

  MatchedFilterModel(WavenumberAxis axis, std::vector<Template> templates, double theta)
      : axis_(axis), templates_(std::move(templates)), theta_(theta) {
    if (!(theta_ > 0.0)) throw Error(ErrorCode::BadArgument, "threshold must be positive");
    for (const auto& t : templates_) {
      if (t.owner != 0 && t.owner != 1)
        throw Error(ErrorCode::BadArgument, "templates belong to class 0 or 1");
      filters_.emplace_back(axis_, t.mu, t.width);
    }
  }

  /// One template per discriminating peak of classes 0 and 1, sized to the
  /// centre of the peak width range.
  static MatchedFilterModel from_dataset(const DatasetSpec& ds, double theta) {
    std::vector<Template> ts;
    for (ClassId c = 0; c < 2; ++c)
      for (const auto& p : ds.classes[static_cast<std::size_t>(c)].fixed_peaks)
        ts.push_back({p.mu, p.width.mid(), c});
    return MatchedFilterModel(ds.axis, std::move(ts), theta);
  }

  std::vector<double> scores(std::span<const double> intensities) const {
    std::vector<double> out;
    out.reserve(filters_.size());
    for (const auto& f : filters_) out.push_back(f.score(intensities));
    return out;
  }

  ClassId decide(const std::vector<bool>& fires) const {
    for (ClassId c = 0; c < 2; ++c) {
      bool own_all = true, other_any = false, has_own = false;
      for (std::size_t i = 0; i < templates_.size(); ++i) {
        if (templates_[i].owner == c) {
          has_own = true;
          own_all = own_all && fires[i];
        } else {
          other_any = other_any || fires[i];
        }
      }
      if (has_own && own_all && !other_any) return c;
    }
    return kEverythingElseClass;
  }

  Prediction predict(std::span<const double> intensities) const {
    const auto sc = scores(intensities);
    std::vector<bool> fires(sc.size());
    for (std::size_t i = 0; i < sc.size(); ++i) fires[i] = sc[i] > theta_;
    return {decide(fires), {}};
  }

  const WavenumberAxis& axis() const { return axis_; }
  const std::vector<Template>& templates() const { return templates_; }
  double theta() const { return theta_; }
  void set_theta(double theta) {
    if (!(theta > 0.0)) throw Error(ErrorCode::BadArgument, "threshold must be positive");
    theta_ = theta;
  }

  json to_json() const {
    json ts = json::array();
    for (const auto& t : templates_) ts.push_back({{"mu", t.mu}, {"width", t.width}, {"class_id", t.owner}});
    return {{"theta", theta_}, {"templates", ts}};
  }

  static MatchedFilterModel from_json(const WavenumberAxis& axis, const json& j) {
    try {
      std::vector<Template> ts;
      for (const auto& t : j.at("templates"))
        ts.push_back({t.at("mu").get<double>(), t.at("width").get<double>(),
                      t.at("class_id").get<ClassId>()});
      return MatchedFilterModel(axis, std::move(ts), j.at("theta").get<double>());
    } catch (const json::exception& e) {
      throw Error(ErrorCode::ParseError, std::string("bad builtin_model: ") + e.what());
    }
  }

 private:
  WavenumberAxis axis_;
  std::vector<Template> templates_;
  std::vector<MatchedFilter> filters_;
  double theta_;
};

class BuiltinClassifier : public Classifier {
 public:
  explicit BuiltinClassifier(std::shared_ptr<const MatchedFilterModel> model)
      : model_(std::move(model)) {}
  Prediction predict(std::span<const double> intensities) override {
    return model_->predict(intensities);
  }
  int n_classes() const override { return 3; }

 private:
  std::shared_ptr<const MatchedFilterModel> model_;
};

inline ClassifierHandle open_builtin(std::shared_ptr<const MatchedFilterModel> model,
                                     QueryCounter counter = make_query_counter()) {
  const auto axis = model->axis();
  return ClassifierHandle(std::make_shared<BuiltinClassifier>(std::move(model)), axis,
                          ClassifierHandle::Kind::Builtin, std::move(counter));
}

// ---------------------------------------------------------------------------
// Threshold calibration.

struct Calibration {
  double theta = 0.0;
  /// Some absent-peak score reached the smallest present-peak score.
  bool inseparable = false;
  std::size_t training_errors = 0;
  double max_absent = 0.0;
  double min_present = 0.0;
};

/// Midpoint between the largest absent-peak score and the smallest
/// present-peak score. When they overlap, the threshold minimizing training
/// error is used instead and `inseparable` is set.
inline Calibration calibrate_threshold(std::span<const double> present,
                                       std::span<const double> absent) {
  if (present.empty() || absent.empty())
    throw Error(ErrorCode::BadArgument, "calibration needs present and absent scores");
  Calibration c;
  c.max_absent = *std::max_element(absent.begin(), absent.end());
  c.min_present = *std::min_element(present.begin(), present.end());
  if (c.max_absent < c.min_present) {
    c.theta = 0.5 * (c.max_absent + c.min_present);
  } else {
    c.inseparable = true;
    std::vector<double> all(present.begin(), present.end());
    all.insert(all.end(), absent.begin(), absent.end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    std::vector<double> candidates{all.front() - 1.0};
    for (std::size_t i = 1; i < all.size(); ++i) candidates.push_back(0.5 * (all[i - 1] + all[i]));
    candidates.push_back(all.back());
    std::size_t best = std::numeric_limits<std::size_t>::max();
    for (double t : candidates) {
      std::size_t err = 0;
      for (double p : present) err += p <= t;
      for (double a : absent) err += a > t;
      if (err < best) {
        best = err;
        c.theta = t;
      }
    }
  }
  c.theta = std::max(c.theta, std::numeric_limits<double>::min());
  for (double p : present) c.training_errors += p <= c.theta;
  for (double a : absent) c.training_errors += a > c.theta;
  return c;
}

/// Scores every template on every training spectrum, splitting windows by
/// whether the spectrum's ground truth has a discriminating peak at the
/// template position. Sets the model's threshold.
inline Calibration calibrate_threshold(MatchedFilterModel& model,
                                       const std::vector<Spectrum>& training) {
  std::array<std::size_t, 3> per_class{};
  for (const auto& s : training)
    if (s.label && *s.label >= 0 && *s.label < 3) ++per_class[static_cast<std::size_t>(*s.label)];
  for (std::size_t c = 0; c < 3; ++c)
    if (per_class[c] < 10)
      throw Error(ErrorCode::BadArgument, "calibration needs at least 10 spectra per class");

  std::vector<double> present, absent;
  for (const auto& s : training) {
    const auto sc = model.scores(s.intensities);
    for (std::size_t i = 0; i < sc.size(); ++i) {
      const double mu = model.templates()[i].mu;
      const bool has = std::any_of(s.ground_truth.begin(), s.ground_truth.end(),
                                   [&](const Interval& iv) { return iv.contains(mu); });
      (has ? present : absent).push_back(sc[i]);
    }
  }
  auto c = calibrate_threshold(present, absent);
  model.set_theta(c.theta);
  return c;
}

struct CalibratedModel {
  MatchedFilterModel model;
  Calibration calibration;
  /// Spectra per class the threshold was fitted on.
  std::size_t per_class = 0;
};

inline constexpr std::size_t kMinCalibrationPerClass = 10;
inline constexpr std::size_t kFallbackCalibrationPerClass = 50;

/// Matched-filter model for a dataset, calibrated on its training split, or
/// on a dedicated calibration split when the training split is too small.
inline CalibratedModel calibrate_builtin(const DatasetSpec& ds, const std::vector<Spectrum>& train) {
  auto model = MatchedFilterModel::from_dataset(ds, 1.0);
  if (ds.n_train >= kMinCalibrationPerClass) {
    auto c = calibrate_threshold(model, train);
    return {std::move(model), c, ds.n_train};
  }
  const auto calib = generate_split(ds, stream::kCalibration, kFallbackCalibrationPerClass, "calib");
  auto c = calibrate_threshold(model, calib);
  return {std::move(model), c, kFallbackCalibrationPerClass};
}

/// Builtin model described by a manifest: the stored calibrated model when
/// present, otherwise calibrated from the train.jsonl next to the manifest.
inline MatchedFilterModel load_builtin_model(const std::filesystem::path& manifest_path) {
  const json m = read_manifest(manifest_path);
  const DatasetSpec ds = dataset_spec_from_json(m);
  if (m.contains("builtin_model")) return MatchedFilterModel::from_json(ds.axis, m.at("builtin_model"));
  return calibrate_builtin(ds, read_dataset(manifest_path.parent_path() / "train.jsonl", ds.axis)).model;
}

}  // namespace specrex
