#include <gtest/gtest.h>

#include <cmath>

#include "specrex/classify.hpp"
#include "specrex/simulate.hpp"
#include "test_support.hpp"

using namespace specrex;
using specrex::testing::error_code_of;
using specrex::testing::make_spectrum;

namespace {

const WavenumberAxis kAxis(0.0, 1000.0, 1000);

// Direct summation in long double: build the template from scratch, then
// correlate it with the window minus its own endpoint line.
double oracle_score(const std::vector<double>& y, double mu, double w) {
  const std::size_t lo = kAxis.index_of(mu - 3 * w), hi = kAxis.index_of(mu + 3 * w);
  const std::size_t n = hi - lo;
  std::vector<long double> t(n + 1), x(n + 1);
  for (std::size_t j = 0; j <= n; ++j) {
    const long double z = (static_cast<long double>(kAxis.at(lo + j)) - mu) / w;
    t[j] = std::exp(-0.5L * z * z);
  }
  const long double t0 = t[0], tn = t[n];
  long double norm = 0;
  for (std::size_t j = 0; j <= n; ++j) {
    t[j] -= t0 + (tn - t0) * j / static_cast<long double>(n);
    norm += t[j] * t[j];
  }
  norm = std::sqrt(norm);
  long double acc = 0;
  for (std::size_t j = 0; j <= n; ++j) {
    const long double line = y[lo] + (static_cast<long double>(y[hi]) - y[lo]) * j / static_cast<long double>(n);
    acc += (y[lo + j] - line) * t[j] / norm;
  }
  return static_cast<double>(acc);
}

std::vector<double> line(double a, double b) {
  std::vector<double> v(kAxis.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a + b * kAxis.at(i);
  return v;
}

}  // namespace

TEST(MatchedFilter, LineScoresZero) {
  const auto s = make_spectrum(kAxis, line(0.3, 0.0007));
  EXPECT_LT(std::abs(matched_filter_score(s, 250.0, 15.0)), 1e-9);
}

TEST(MatchedFilter, TemplateScoresOne) {
  MatchedFilter f(kAxis, 500.0, 15.0);
  std::vector<double> y(kAxis.size(), 0.0);
  for (std::size_t i = f.lo(); i <= f.hi(); ++i) y[i] = f.weights()[i - f.lo()];
  EXPECT_NEAR(f.score(y), 1.0, 1e-12);
}

TEST(MatchedFilter, PeakMatchesDirectSumOracle) {
  auto y = peak_profile(kAxis, {250.0, 1.0, 15.0, true}, HeightMode::Verbatim);
  const auto s = make_spectrum(kAxis, y);
  EXPECT_NEAR(matched_filter_score(s, 250.0, 15.0), oracle_score(y, 250.0, 15.0), 1e-12);
  auto yn = peak_profile(kAxis, {260.0, 0.9, 12.0, true}, HeightMode::Normalized);
  for (std::size_t i = 0; i < yn.size(); ++i) yn[i] += 0.2 + 0.0003 * i + 0.01 * std::sin(0.1 * i);
  EXPECT_NEAR(matched_filter_score(make_spectrum(kAxis, yn), 250.0, 15.0), oracle_score(yn, 250.0, 15.0), 1e-12);
}

TEST(MatchedFilter, ScaleCovariantAndOffsetInvariant) {
  auto y = peak_profile(kAxis, {250.0, 1.0, 15.0, true}, HeightMode::Normalized);
  const double base = matched_filter_score(make_spectrum(kAxis, y), 250.0, 15.0);
  auto y2 = y;
  for (auto& v : y2) v *= 2.0;
  EXPECT_NEAR(matched_filter_score(make_spectrum(kAxis, y2), 250.0, 15.0), 2.0 * base, 1e-12);
  for (double c : {-3.0, 0.5, 100.0}) {
    auto y3 = y;
    for (auto& v : y3) v += c;
    EXPECT_NEAR(matched_filter_score(make_spectrum(kAxis, y3), 250.0, 15.0), base, 1e-9);
  }
}

TEST(MatchedFilter, WindowOutOfRange) {
  EXPECT_EQ(error_code_of([] { MatchedFilter(kAxis, 20.0, 15.0); }), ErrorCode::WindowOutOfRange);
  EXPECT_EQ(error_code_of([] { MatchedFilter(kAxis, 990.0, 15.0); }), ErrorCode::WindowOutOfRange);
}

TEST(DecisionTable, EveryPatternMapsToOneClass) {
  for (auto kind : {DatasetKind::Single, DatasetKind::Double, DatasetKind::Complex}) {
    const auto ds = default_dataset_spec(kind, 0, 1, 1);
    const auto m = MatchedFilterModel::from_dataset(ds, 1.0);
    const std::size_t t = m.templates().size();
    std::array<int, 3> seen{};
    for (std::size_t mask = 0; mask < (1u << t); ++mask) {
      std::vector<bool> fires(t);
      for (std::size_t i = 0; i < t; ++i) fires[i] = mask >> i & 1;
      const ClassId c = m.decide(fires);
      ASSERT_GE(c, 0);
      ASSERT_LE(c, 2);
      ++seen[c];
      std::array<bool, 2> all{true, true}, any{false, false};
      for (std::size_t i = 0; i < t; ++i) {
        const auto o = static_cast<std::size_t>(m.templates()[i].owner);
        all[o] = all[o] && fires[i];
        any[o] = any[o] || fires[i];
      }
      const ClassId expect = all[0] && !any[1] ? 0 : all[1] && !any[0] ? 1 : 2;
      EXPECT_EQ(c, expect);
    }
    EXPECT_EQ(seen[0], 1);
    EXPECT_EQ(seen[1], 1);
  }
}

TEST(Builtin, FlatSpectrumIsEverythingElse) {
  auto ds = default_dataset_spec(DatasetKind::Single, 0, 1, 1);
  auto h = open_builtin(std::make_shared<const MatchedFilterModel>(MatchedFilterModel::from_dataset(ds, 1.0)));
  EXPECT_EQ(h.classify(make_spectrum(kAxis, std::vector<double>(1000, 0.0))).label, 2);
  EXPECT_EQ(h.query_count(), 1u);
}

TEST(Builtin, CleanDoublePeakSpectrumIsClassZero) {
  auto ds = default_dataset_spec(DatasetKind::Double, 0, 1, 1);
  auto y = line(0.4, 0.0);
  for (double mu : {250.0, 750.0}) {
    const auto p = peak_profile(kAxis, {mu, 1.0, 15.0, true}, HeightMode::Normalized);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += p[i];
  }
  auto h = open_builtin(std::make_shared<const MatchedFilterModel>(MatchedFilterModel::from_dataset(ds, 1.0)));
  EXPECT_EQ(h.classify(make_spectrum(kAxis, y)).label, 0);
}

TEST(Builtin, PureAndCounted) {
  auto ds = default_dataset_spec(DatasetKind::Single, 2, 20, 1);
  const auto data = generate_dataset(ds);
  auto cal = calibrate_builtin(ds, data.train);
  auto h = open_builtin(std::make_shared<const MatchedFilterModel>(cal.model));
  const auto& s = data.train[3];
  const auto first = h.classify(s);
  for (int i = 0; i < 999; ++i) {
    const auto p = h.classify(s);
    ASSERT_EQ(p.label, first.label);
    ASSERT_EQ(p.probabilities, first.probabilities);
  }
  EXPECT_EQ(h.query_count(), 1000u);
  EXPECT_EQ(error_code_of([&] { h.classify(make_spectrum(WavenumberAxis(0, 1750, 1750), std::vector<double>(1750))); }),
            ErrorCode::AxisMismatch);
}

TEST(Builtin, OffsetInvariantLabels) {
  auto ds = default_dataset_spec(DatasetKind::Single, 4, 20, 1);
  const auto data = generate_dataset(ds);
  auto cal = calibrate_builtin(ds, data.train);
  for (const auto& s : data.train) {
    auto shifted = s;
    for (auto& v : shifted.intensities) v += 3.0;
    EXPECT_EQ(cal.model.predict(s.intensities).label, cal.model.predict(shifted.intensities).label);
  }
}

TEST(Calibration, Midpoint) {
  const std::vector<double> present{0.9, 1.5}, absent{0.1, -0.2};
  const auto c = calibrate_threshold(present, absent);
  EXPECT_DOUBLE_EQ(c.theta, 0.5);
  EXPECT_FALSE(c.inseparable);
  EXPECT_EQ(c.training_errors, 0u);
}

TEST(Calibration, IdenticalDistributionsAreInseparable) {
  const std::vector<double> s{0.3, 0.5, 0.7};
  const auto c = calibrate_threshold(s, s);
  EXPECT_TRUE(c.inseparable);
  EXPECT_GT(c.training_errors, 0u);
}

TEST(Calibration, OverlapMinimizesTrainingError) {
  const std::vector<double> present{1.0, 2.0, 3.0, 0.4}, absent{0.1, 0.2, 0.5};
  const auto c = calibrate_threshold(present, absent);
  EXPECT_TRUE(c.inseparable);
  EXPECT_EQ(c.training_errors, 1u);
}

TEST(Calibration, NeedsTenPerClass) {
  auto ds = default_dataset_spec(DatasetKind::Single, 1, 5, 1);
  const auto data = generate_dataset(ds);
  auto m = MatchedFilterModel::from_dataset(ds, 1.0);
  EXPECT_THROW(calibrate_threshold(m, data.train), Error);
  const auto cal = calibrate_builtin(ds, data.train);
  EXPECT_EQ(cal.per_class, kFallbackCalibrationPerClass);
}

class HeldOut : public ::testing::TestWithParam<DatasetKind> {};

TEST_P(HeldOut, AccuracyAtLeast95Percent) {
  auto ds = default_dataset_spec(GetParam(), 31, 100, 100);
  const auto data = generate_dataset(ds);
  const auto cal = calibrate_builtin(ds, data.train);
  std::size_t right = 0;
  for (const auto& s : data.test) right += cal.model.predict(s.intensities).label == *s.label;
  EXPECT_GE(static_cast<double>(right) / static_cast<double>(data.test.size()), 0.95);
}

INSTANTIATE_TEST_SUITE_P(Datasets, HeldOut,
                         ::testing::Values(DatasetKind::Single, DatasetKind::Double, DatasetKind::Complex));

TEST(ModelJson, RoundTrip) {
  auto ds = default_dataset_spec(DatasetKind::Complex, 0, 1, 1);
  const auto m = MatchedFilterModel::from_dataset(ds, 1.25);
  const auto back = MatchedFilterModel::from_json(ds.axis, m.to_json());
  EXPECT_EQ(back.theta(), 1.25);
  ASSERT_EQ(back.templates().size(), 2u);
  EXPECT_EQ(back.templates()[1].mu, 1100.0);
  EXPECT_EQ(error_code_of([&] { MatchedFilterModel::from_json(ds.axis, json{{"theta", 1}}); }), ErrorCode::ParseError);
}
