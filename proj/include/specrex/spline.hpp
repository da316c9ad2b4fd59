#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <vector>

#include "specrex/core.hpp"

namespace specrex {

/// Natural cubic spline through a set of anchors. Outside the anchor range
/// it continues linearly with the end slope (second derivative is zero at
/// both ends, so this keeps C2 continuity).
class NaturalCubicSpline {
 public:
  NaturalCubicSpline(std::span<const double> x, std::span<const double> y)
      : x_(x.begin(), x.end()), y_(y.begin(), y.end()) {
    if (x_.size() != y_.size())
      throw Error(ErrorCode::BadArgument, "anchor x and y lengths differ");
    if (x_.size() < 2) throw Error(ErrorCode::TooFewAnchors, "need at least two anchors");
    for (std::size_t i = 1; i < x_.size(); ++i) {
      if (x_[i] == x_[i - 1]) throw Error(ErrorCode::DuplicateAnchor, "duplicate anchor x");
      if (x_[i] < x_[i - 1]) throw Error(ErrorCode::BadArgument, "anchor x must be sorted");
    }
    solve_second_derivatives();
  }

  double operator()(double x) const {
    const std::size_t n = x_.size();
    if (x <= x_.front()) return y_.front() + slope_at(0) * (x - x_.front());
    if (x >= x_.back()) return y_.back() + slope_at(n - 1) * (x - x_.back());
    auto it = std::upper_bound(x_.begin(), x_.end(), x);
    std::size_t i = static_cast<std::size_t>(it - x_.begin()) - 1;
    const double h = x_[i + 1] - x_[i];
    const double a = (x_[i + 1] - x) / h;
    const double b = (x - x_[i]) / h;
    return a * y_[i] + b * y_[i + 1] +
           ((a * a * a - a) * m_[i] + (b * b * b - b) * m_[i + 1]) * h * h / 6.0;
  }

  /// Second derivative at each anchor.
  std::span<const double> moments() const noexcept { return m_; }
  std::span<const double> anchor_x() const noexcept { return x_; }
  std::span<const double> anchor_y() const noexcept { return y_; }

 private:
  // First derivative at anchor i from the end segment's cubic.
  double slope_at(std::size_t i) const {
    if (i == 0) {
      const double h = x_[1] - x_[0];
      return (y_[1] - y_[0]) / h - h * (2.0 * m_[0] + m_[1]) / 6.0;
    }
    const double h = x_[i] - x_[i - 1];
    return (y_[i] - y_[i - 1]) / h + h * (m_[i - 1] + 2.0 * m_[i]) / 6.0;
  }

  // Thomas algorithm on the interior moments; m_0 = m_{n-1} = 0.
  void solve_second_derivatives() {
    const std::size_t n = x_.size();
    m_.assign(n, 0.0);
    if (n < 3) return;
    const std::size_t k = n - 2;
    std::vector<double> diag(k), upper(k), rhs(k);
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = j + 1;
      const double h0 = x_[i] - x_[i - 1];
      const double h1 = x_[i + 1] - x_[i];
      diag[j] = 2.0 * (h0 + h1);
      upper[j] = h1;
      rhs[j] = 6.0 * ((y_[i + 1] - y_[i]) / h1 - (y_[i] - y_[i - 1]) / h0);
    }
    for (std::size_t j = 1; j < k; ++j) {
      const double lower = x_[j + 1] - x_[j];
      const double w = lower / diag[j - 1];
      diag[j] -= w * upper[j - 1];
      rhs[j] -= w * rhs[j - 1];
    }
    m_[k] = rhs[k - 1] / diag[k - 1];
    for (std::size_t j = k - 1; j-- > 0;) m_[j + 1] = (rhs[j] - upper[j] * m_[j + 2]) / diag[j];
  }

  std::vector<double> x_;
  std::vector<double> y_;
  std::vector<double> m_;
};

inline NaturalCubicSpline fit_natural_cubic_spline(std::span<const double> x,
                                                   std::span<const double> y) {
  return NaturalCubicSpline(x, y);
}

}  // namespace specrex
