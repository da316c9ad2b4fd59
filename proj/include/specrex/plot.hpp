#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "specrex/core.hpp"
#include "specrex/io.hpp"

namespace specrex {

struct PlotLayout {
  double width = 900.0;
  double margin = 40.0;
  double spectrum_height = 260.0;
  double band_height = 24.0;
  double map_height = 120.0;
  double gap = 12.0;
};

namespace detail {

// Perceptual ramp (viridis endpoints and midpoints), t in [0, 1].
inline std::string ramp_color(double t) {
  static constexpr std::array<std::array<double, 3>, 5> stops{{{68, 1, 84},
                                                              {59, 82, 139},
                                                              {33, 145, 140},
                                                              {94, 201, 98},
                                                              {253, 231, 37}}};
  t = std::clamp(t, 0.0, 1.0);
  const double pos = t * 4.0;
  const std::size_t i = std::min<std::size_t>(3, static_cast<std::size_t>(pos));
  const double f = pos - static_cast<double>(i);
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x",
                static_cast<int>(std::lround(stops[i][0] + f * (stops[i + 1][0] - stops[i][0]))),
                static_cast<int>(std::lround(stops[i][1] + f * (stops[i + 1][1] - stops[i][1]))),
                static_cast<int>(std::lround(stops[i][2] + f * (stops[i + 1][2] - stops[i][2]))));
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string trace_path(std::span<const double> y, double x0, double x1, double top,
                              double height) {
  const auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  const double lo = *mn, span = *mx - *mn;
  std::string d;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(y.size() - 1);
    const double t = span > 0.0 ? (y[i] - lo) / span : 0.0;
    d += (i ? " L" : "M") + fmt(x) + ',' + fmt(top + height * (1.0 - t));
  }
  return d;
}

}  // namespace detail

inline std::string band_color(double normalized) { return detail::ramp_color(normalized); }

/// Map values rescaled to [0, 1] by (v - min) / (max - min); constant maps
/// become all zeros.
inline std::vector<double> rescale_unit(std::span<const double> v) {
  std::vector<double> out(v.size(), 0.0);
  if (v.empty()) return out;
  const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
  const double span = *mx - *mn;
  if (span > 0.0)
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - *mn) / span;
  return out;
}

/// Static SVG: the spectrum trace on top, the map as a colour band beneath
/// it, then the map values as a second trace. Ground-truth peak centres are
/// drawn as dashed vertical lines through all three panels.
inline std::string render_plot_svg(const Spectrum& s, std::span<const double> map_values,
                                   const PlotLayout& layout = {}) {
  if (map_values.size() != s.intensities.size())
    throw Error(ErrorCode::AxisMismatch, "map and spectrum lengths differ");
  const auto& L = layout;
  const std::size_t n = s.intensities.size();
  const double x0 = L.margin, x1 = L.width - L.margin;
  const double spec_top = L.margin;
  const double band_top = spec_top + L.spectrum_height + L.gap;
  const double map_top = band_top + L.band_height + L.gap;
  const double total_h = map_top + L.map_height + L.margin;
  const double bin_w = (x1 - x0) / static_cast<double>(n);
  auto bin_x = [&](std::size_t i) { return x0 + (x1 - x0) * static_cast<double>(i) / static_cast<double>(n - 1); };

  std::string svg;
  svg += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fmt(L.width) + "\" height=\"" +
         detail::fmt(total_h) + "\" viewBox=\"0 0 " + detail::fmt(L.width) + ' ' + detail::fmt(total_h) + "\">\n";
  svg += "<title>" + detail::xml_escape(s.id) + "</title>\n";
  svg += "<rect x=\"0\" y=\"0\" width=\"" + detail::fmt(L.width) + "\" height=\"" + detail::fmt(total_h) +
         "\" fill=\"white\"/>\n";

  svg += "<g id=\"band\">\n";
  const auto t = rescale_unit(map_values);
  for (std::size_t i = 0; i < n; ++i)
    svg += "<rect x=\"" + detail::fmt(bin_x(i) - bin_w / 2) + "\" y=\"" + detail::fmt(band_top) +
           "\" width=\"" + detail::fmt(bin_w + 0.05) + "\" height=\"" + detail::fmt(L.band_height) +
           "\" fill=\"" + band_color(t[i]) + "\"/>\n";
  svg += "</g>\n";

  svg += "<path id=\"spectrum\" fill=\"none\" stroke=\"black\" stroke-width=\"1\" d=\"" +
         detail::trace_path(s.intensities, x0, x1, spec_top, L.spectrum_height) + "\"/>\n";
  svg += "<path id=\"map\" fill=\"none\" stroke=\"#3b528b\" stroke-width=\"1\" d=\"" +
         detail::trace_path(map_values, x0, x1, map_top, L.map_height) + "\"/>\n";

  for (const auto& gt : s.ground_truth) {
    const double centre = 0.5 * (gt.lo + gt.hi);
    const double x = bin_x(s.axis.index_of(centre));
    svg += "<line class=\"truth\" x1=\"" + detail::fmt(x) + "\" y1=\"" + detail::fmt(spec_top) + "\" x2=\"" +
           detail::fmt(x) + "\" y2=\"" + detail::fmt(map_top + L.map_height) +
           "\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n";
  }

  const double y_axis = map_top + L.map_height + 16.0;
  svg += "<text x=\"" + detail::fmt(x0) + "\" y=\"" + detail::fmt(y_axis) + "\" font-size=\"11\">" +
         detail::fmt(s.axis.start()) + "</text>\n";
  svg += "<text x=\"" + detail::fmt(x1) + "\" y=\"" + detail::fmt(y_axis) +
         "\" font-size=\"11\" text-anchor=\"end\">" + detail::fmt(s.axis.end()) + "</text>\n";
  svg += "<text x=\"" + detail::fmt(0.5 * (x0 + x1)) + "\" y=\"" + detail::fmt(y_axis) +
         "\" font-size=\"11\" text-anchor=\"middle\">Raman shift (cm-1)</text>\n";
  svg += "</svg>\n";
  return svg;
}

/// The plotted data: wavenumber, intensity, map value, band colour.
inline std::string plot_data_csv(const Spectrum& s, std::span<const double> map_values) {
  if (map_values.size() != s.intensities.size())
    throw Error(ErrorCode::AxisMismatch, "map and spectrum lengths differ");
  const auto t = rescale_unit(map_values);
  std::string out = "wavenumber,intensity,responsibility,color\n";
  for (std::size_t i = 0; i < s.intensities.size(); ++i)
    out += format_double(s.axis.at(i)) + ',' + format_double(s.intensities[i]) + ',' +
           format_double(map_values[i]) + ',' + band_color(t[i]) + '\n';
  return out;
}

}  // namespace specrex
