#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "specrex/core.hpp"

namespace specrex {

using json = nlohmann::json;

/// 17 significant digits round-trip every finite double.
inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw Error(ErrorCode::IoError, "failed reading '" + path.string() + "'");
  return ss.str();
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

inline json parse_json_text(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, what + ": " + e.what());
  }
}

inline json to_json(const WavenumberAxis& axis) {
  return {{"start", axis.start()}, {"end", axis.end()}, {"n_bins", axis.size()}};
}

inline WavenumberAxis axis_from_json(const json& j) {
  try {
    return WavenumberAxis(j.at("start").get<double>(), j.at("end").get<double>(),
                          j.at("n_bins").get<std::size_t>());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("bad axis: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Dataset records: one JSON object per line.

inline std::string format_record(const Spectrum& s) {
  std::string out = "{\"id\":" + json(s.id).dump() + ",\"label\":";
  out += s.label ? std::to_string(*s.label) : "null";
  out += ",\"intensities\":[";
  for (std::size_t i = 0; i < s.intensities.size(); ++i) {
    if (i) out += ',';
    out += format_double(s.intensities[i]);
  }
  out += "],\"ground_truth\":[";
  for (std::size_t i = 0; i < s.ground_truth.size(); ++i) {
    if (i) out += ',';
    out += '[' + format_double(s.ground_truth[i].lo) + ',' + format_double(s.ground_truth[i].hi) +
           ']';
  }
  out += "]}";
  return out;
}

inline Spectrum parse_record(const std::string& line, const WavenumberAxis& axis,
                             std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::ParseError, e.what(), line_no);
  }
  Spectrum s;
  s.axis = axis;
  try {
    s.id = j.at("id").get<std::string>();
    if (j.contains("label") && !j.at("label").is_null()) s.label = j.at("label").get<ClassId>();
    s.intensities = j.at("intensities").get<std::vector<double>>();
    if (j.contains("ground_truth"))
      for (const auto& iv : j.at("ground_truth")) {
        if (!iv.is_array() || iv.size() != 2)
          throw Error(ErrorCode::ParseError, "ground_truth entries must be [lo, hi]", line_no);
        s.ground_truth.push_back({iv[0].get<double>(), iv[1].get<double>()});
      }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what(), line_no);
  }
  validate_spectrum(s);
  return s;
}

inline void write_dataset(const std::filesystem::path& path, const std::vector<Spectrum>& spectra) {
  std::string text;
  for (const auto& s : spectra) {
    text += format_record(s);
    text += '\n';
  }
  write_text_file(path, text);
}

inline std::vector<Spectrum> read_dataset(const std::filesystem::path& path,
                                          const WavenumberAxis& axis) {
  std::istringstream in(read_text_file(path));
  std::vector<Spectrum> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(parse_record(line, axis, line_no));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Responsibility / saliency map CSV: "wavenumber,responsibility".

inline void write_map_csv(const std::filesystem::path& path, const WavenumberAxis& axis,
                          std::span<const double> values) {
  if (values.size() != axis.size())
    throw Error(ErrorCode::AxisMismatch, "map length does not match axis");
  std::string text = "wavenumber,responsibility\n";
  for (std::size_t i = 0; i < values.size(); ++i)
    text += format_double(axis.at(i)) + ',' + format_double(values[i]) + '\n';
  write_text_file(path, text);
}

inline void write_map_csv(const std::filesystem::path& path, const ResponsibilityMap& map) {
  write_map_csv(path, map.axis(), map.values());
}

struct MapColumns {
  std::vector<double> wavenumbers;
  std::vector<double> values;
};

/// Reads a map CSV as raw columns; external saliency maps may be negative.
inline MapColumns read_map_csv(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  MapColumns cols;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1) {
      if (line != "wavenumber,responsibility")
        throw Error(ErrorCode::ParseError, "expected header 'wavenumber,responsibility'", 1);
      continue;
    }
    if (line.empty()) continue;
    auto comma = line.find(',');
    if (comma == std::string::npos)
      throw Error(ErrorCode::ParseError, "expected two columns", line_no);
    try {
      std::size_t used = 0;
      const std::string a = line.substr(0, comma), b = line.substr(comma + 1);
      double x = std::stod(a, &used);
      if (used != a.size()) throw std::invalid_argument(a);
      double v = std::stod(b, &used);
      if (used != b.size()) throw std::invalid_argument(b);
      cols.wavenumbers.push_back(x);
      cols.values.push_back(v);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::ParseError, "non-numeric field", line_no);
    }
  }
  if (line_no == 0) throw Error(ErrorCode::ParseError, "empty map file", 1);
  return cols;
}

/// Checks that a map's wavenumber column is the given axis (to 1e-6 of a step).
inline void check_map_axis(const MapColumns& cols, const WavenumberAxis& axis) {
  if (cols.values.size() != axis.size())
    throw Error(ErrorCode::AxisMismatch, "map has " + std::to_string(cols.values.size()) +
                                             " rows, axis has " + std::to_string(axis.size()));
  for (std::size_t i = 0; i < axis.size(); ++i)
    if (std::abs(cols.wavenumbers[i] - axis.at(i)) > 1e-6 * axis.step())
      throw Error(ErrorCode::AxisMismatch, "map wavenumber row " + std::to_string(i + 1) +
                                               " does not match axis");
}

// ---------------------------------------------------------------------------
// Explanation JSON: {"label", "intervals_cm", "mutant_queries"}.

struct ExplanationRecord {
  ClassId label = 0;
  std::vector<Interval> intervals_cm;
  std::size_t mutant_queries = 0;
};

inline std::string format_explanation(const WavenumberAxis& axis, const Explanation& e) {
  std::string out = "{\"label\":" + std::to_string(e.label) + ",\"intervals_cm\":[";
  for (std::size_t i = 0; i < e.intervals.size(); ++i) {
    if (i) out += ',';
    auto iv = to_cm(axis, e.intervals[i]);
    out += '[' + format_double(iv.lo) + ',' + format_double(iv.hi) + ']';
  }
  out += "],\"mutant_queries\":" + std::to_string(e.mutant_queries) + "}\n";
  return out;
}

inline void write_explanation_json(const std::filesystem::path& path, const WavenumberAxis& axis,
                                   const Explanation& e) {
  write_text_file(path, format_explanation(axis, e));
}

inline ExplanationRecord read_explanation_json(const std::filesystem::path& path) {
  json j = parse_json_text(read_text_file(path), path.string());
  ExplanationRecord r;
  try {
    r.label = j.at("label").get<ClassId>();
    for (const auto& iv : j.at("intervals_cm"))
      r.intervals_cm.push_back({iv.at(0).get<double>(), iv.at(1).get<double>()});
    r.mutant_queries = j.at("mutant_queries").get<std::size_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
  }
  return r;
}

}  // namespace specrex
