#pragma once

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "commnet/calibration.hpp"
#include "commnet/core.hpp"
#include "commnet/universal_law.hpp"

namespace commnet::io {

struct parse_error : input_error {
  using input_error::input_error;
};

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& s, const std::string& what,
                           std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw parse_error("line " + std::to_string(line) + ": bad " + what +
                      " value '" + s + "'");
  }
}

inline std::int64_t parse_int(const std::string& s, const std::string& what,
                              std::size_t line) {
  std::int64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size())
    throw parse_error("line " + std::to_string(line) + ": bad " + what +
                      " value '" + s + "'");
  return v;
}

}  // namespace detail

/// Writes via a temp file in the same directory, then renames into place.
inline void atomic_write(const std::filesystem::path& path,
                         const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw input_error("cannot open '" + tmp.string() + "' for writing");
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---- units CSV: id,x,y,area_km2,s_in,s_out,zone[,population] ----

struct UnitsData {
  std::vector<SpatialUnit> residence;
  std::vector<SpatialUnit> outside;
};

inline UnitsData load_units(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open units file '" + path.string() + "'");

  UnitsData data;
  std::unordered_map<std::string, std::size_t> seen;  // id -> line
  std::string line;
  std::size_t line_no = 0;
  bool header_checked = false;
  bool has_population = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    for (auto& f : fields) f = detail::trim(f);
    if (!header_checked) {
      if (fields.size() < 7 || fields[0] != "id" || fields[6] != "zone")
        throw parse_error("line 1: expected header id,x,y,area_km2,s_in,s_out,zone[,population]");
      has_population = fields.size() >= 8 && fields[7] == "population";
      header_checked = true;
      continue;
    }
    if (fields.size() < 7)
      throw parse_error("line " + std::to_string(line_no) + ": expected at least 7 fields, got " +
                        std::to_string(fields.size()));
    SpatialUnit u;
    u.id = fields[0];
    if (u.id.empty())
      throw parse_error("line " + std::to_string(line_no) + ": empty id");
    if (auto it = seen.find(u.id); it != seen.end())
      throw parse_error("line " + std::to_string(line_no) + ": duplicate id '" +
                        u.id + "' (first seen on line " +
                        std::to_string(it->second) + ")");
    seen.emplace(u.id, line_no);
    u.x = detail::parse_double(fields[1], "x", line_no);
    u.y = detail::parse_double(fields[2], "y", line_no);
    const std::string& zone = fields[6];
    const bool outside = zone == "outside";
    if (!outside && zone != "region")
      throw parse_error("line " + std::to_string(line_no) +
                        ": zone must be 'region' or 'outside', got '" + zone + "'");
    if (!fields[3].empty())
      u.area_km2 = detail::parse_double(fields[3], "area_km2", line_no);
    else if (!outside)
      throw parse_error("line " + std::to_string(line_no) +
                        ": region unit '" + u.id + "' must have area_km2");
    u.s_in = fields[4].empty() ? 0 : detail::parse_int(fields[4], "s_in", line_no);
    if (!fields[5].empty())
      u.s_out = detail::parse_int(fields[5], "s_out", line_no);
    else if (!outside)
      throw parse_error("line " + std::to_string(line_no) +
                        ": region unit '" + u.id + "' must have s_out");
    if (has_population && fields.size() >= 8 && !fields[7].empty())
      u.population = detail::parse_double(fields[7], "population", line_no);
    (outside ? data.outside : data.residence).push_back(std::move(u));
  }
  if (!header_checked) throw parse_error("units file is empty");
  return data;
}

inline std::string units_to_csv(const UnitsData& data) {
  std::ostringstream out;
  out.precision(17);
  out << "id,x,y,area_km2,s_in,s_out,zone,population\n";
  auto emit = [&](const SpatialUnit& u, const char* zone) {
    out << u.id << ',' << u.x << ',' << u.y << ',';
    if (u.area_km2) out << *u.area_km2;
    out << ',' << u.s_in << ',' << u.s_out << ',' << zone << ',';
    if (u.population) out << *u.population;
    out << '\n';
  };
  for (const auto& u : data.residence) emit(u, "region");
  for (const auto& u : data.outside) emit(u, "outside");
  return out.str();
}

// ---- OD CSV: origin_id,dest_id,flow (sparse long format) ----

inline FlowMatrix load_od(const std::filesystem::path& path,
                          const std::vector<std::string>& row_labels,
                          const std::vector<std::string>& col_labels,
                          FlowShape shape = FlowShape::generated) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open OD file '" + path.string() + "'");

  std::unordered_map<std::string, std::size_t> row_idx, col_idx;
  for (std::size_t i = 0; i < row_labels.size(); ++i) row_idx[row_labels[i]] = i;
  for (std::size_t i = 0; i < col_labels.size(); ++i) col_idx[col_labels[i]] = i;

  FlowMatrix fm;
  fm.shape = shape;
  fm.row_labels = row_labels;
  fm.col_labels = col_labels;
  fm.flows = Matrix<std::int64_t>(row_labels.size(), col_labels.size());
  Matrix<std::uint8_t> seen(row_labels.size(), col_labels.size());

  std::string line;
  std::size_t line_no = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    for (auto& f : fields) f = detail::trim(f);
    if (!header_checked) {
      if (fields.size() != 3 || fields[0] != "origin_id")
        throw parse_error("line 1: expected header origin_id,dest_id,flow");
      header_checked = true;
      continue;
    }
    if (fields.size() != 3)
      throw parse_error("line " + std::to_string(line_no) + ": expected 3 fields");
    const auto r = row_idx.find(fields[0]);
    if (r == row_idx.end())
      throw parse_error("line " + std::to_string(line_no) + ": unknown origin id '" +
                        fields[0] + "'");
    const auto c = col_idx.find(fields[1]);
    if (c == col_idx.end())
      throw parse_error("line " + std::to_string(line_no) + ": unknown destination id '" +
                        fields[1] + "'");
    if (seen(r->second, c->second))
      throw parse_error("line " + std::to_string(line_no) + ": duplicate pair (" +
                        fields[0] + ", " + fields[1] + ")");
    seen(r->second, c->second) = 1;
    const std::int64_t flow = detail::parse_int(fields[2], "flow", line_no);
    if (flow < 0)
      throw parse_error("line " + std::to_string(line_no) + ": negative flow");
    fm.flows(r->second, c->second) = flow;
  }
  if (!header_checked) throw parse_error("OD file is empty");
  return fm;
}

inline std::string od_to_csv(const FlowMatrix& fm) {
  std::ostringstream out;
  out << "origin_id,dest_id,flow\n";
  for (std::size_t r = 0; r < fm.flows.rows(); ++r)
    for (std::size_t c = 0; c < fm.flows.cols(); ++c)
      if (fm.flows(r, c) != 0)
        out << fm.row_labels[r] << ',' << fm.col_labels[c] << ','
            << fm.flows(r, c) << '\n';
  return out.str();
}

inline RealFlowMatrix load_real_od(const std::filesystem::path& path,
                                   const std::vector<std::string>& row_labels,
                                   const std::vector<std::string>& col_labels) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open OD file '" + path.string() + "'");
  std::unordered_map<std::string, std::size_t> row_idx, col_idx;
  for (std::size_t i = 0; i < row_labels.size(); ++i) row_idx[row_labels[i]] = i;
  for (std::size_t i = 0; i < col_labels.size(); ++i) col_idx[col_labels[i]] = i;

  RealFlowMatrix fm;
  fm.row_labels = row_labels;
  fm.col_labels = col_labels;
  fm.flows = Matrix<double>(row_labels.size(), col_labels.size());
  std::string line;
  std::size_t line_no = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    for (auto& f : fields) f = detail::trim(f);
    if (!header_checked) {
      if (fields.size() != 3 || fields[0] != "origin_id")
        throw parse_error("line 1: expected header origin_id,dest_id,flow");
      header_checked = true;
      continue;
    }
    if (fields.size() != 3)
      throw parse_error("line " + std::to_string(line_no) + ": expected 3 fields");
    const auto r = row_idx.find(fields[0]);
    const auto c = col_idx.find(fields[1]);
    if (r == row_idx.end() || c == col_idx.end())
      throw parse_error("line " + std::to_string(line_no) + ": unknown unit id");
    fm.flows(r->second, c->second) =
        detail::parse_double(fields[2], "flow", line_no);
  }
  return fm;
}

inline std::string real_od_to_csv(const RealFlowMatrix& fm) {
  std::ostringstream out;
  out.precision(17);
  out << "origin_id,dest_id,flow\n";
  for (std::size_t r = 0; r < fm.flows.rows(); ++r)
    for (std::size_t c = 0; c < fm.flows.cols(); ++c)
      if (fm.flows(r, c) != 0.0)
        out << fm.row_labels[r] << ',' << fm.col_labels[c] << ','
            << fm.flows(r, c) << '\n';
  return out.str();
}

// ---- study area assembly ----

struct LoadConfig {
  CoordinateMode mode = CoordinateMode::projected;
  // When set, s_in/s_out are derived from this observed OD file
  // (off-diagonal row/column sums) instead of the units columns.
  std::optional<std::filesystem::path> margins_from_od;
  bool force = false;  // accept infeasible margins
};

/// Replaces the units-file margins with margins implied by an observed
/// flow matrix: s_out of a residence unit is its off-diagonal row sum,
/// s_in of any unit is its off-diagonal column sum over residence rows.
inline void derive_margins(std::vector<SpatialUnit>& residence,
                           std::vector<SpatialUnit>& outside,
                           const FlowMatrix& od) {
  const std::size_t n = residence.size();
  for (std::size_t r = 0; r < n; ++r) {
    std::int64_t out = 0;
    for (std::size_t c = 0; c < od.flows.cols(); ++c)
      if (c != r) out += od.flows(r, c);
    residence[r].s_out = out;
  }
  for (std::size_t c = 0; c < od.flows.cols(); ++c) {
    std::int64_t in = 0;
    for (std::size_t r = 0; r < n; ++r)
      if (c != r) in += od.flows(r, c);
    if (c < n)
      residence[c].s_in = in;
    else
      outside[c - n].s_in = in;
  }
}

inline StudyArea load_study_area(const std::filesystem::path& units_path,
                                 const LoadConfig& config = {}) {
  UnitsData data = load_units(units_path);
  if (data.residence.empty())
    throw input_error("units file has no region units");

  if (config.margins_from_od) {
    std::vector<std::string> rows, cols;
    for (const auto& u : data.residence) rows.push_back(u.id);
    cols = rows;
    for (const auto& u : data.outside) cols.push_back(u.id);
    const FlowMatrix od = load_od(*config.margins_from_od, rows, cols);
    derive_margins(data.residence, data.outside, od);
  }

  StudyArea area = make_study_area(std::move(data.residence),
                                   std::move(data.outside), config.mode);
  const MarginReport report = validate_margins(area);
  if (!report.pass() && !config.force)
    throw input_error("infeasible margins: total s_out " +
                      std::to_string(report.total_out) + " > total s_in " +
                      std::to_string(report.total_in) +
                      (report.negative_units.empty()
                           ? std::string{}
                           : "; negative counts on '" +
                                 report.negative_units.front() + "'"));
  return area;
}

// ---- case summaries CSV: case_id,mean_area_km2,beta,cpc ----

inline std::vector<CaseStudySummary> load_case_summaries(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open case file '" + path.string() + "'");
  std::vector<CaseStudySummary> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_checked = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_csv(line);
    for (auto& f : fields) f = detail::trim(f);
    if (!header_checked) {
      if (fields.size() < 3 || fields[0] != "case_id")
        throw parse_error("line 1: expected header case_id,mean_area_km2,beta[,cpc]");
      header_checked = true;
      continue;
    }
    CaseStudySummary s;
    s.case_id = fields[0];
    s.mean_area_km2 = detail::parse_double(fields[1], "mean_area_km2", line_no);
    s.beta_calibrated = detail::parse_double(fields[2], "beta", line_no);
    if (fields.size() > 3 && !fields[3].empty())
      s.cpc_calibrated = detail::parse_double(fields[3], "cpc", line_no);
    out.push_back(std::move(s));
  }
  return out;
}

inline std::string case_summaries_to_csv(
    const std::vector<CaseStudySummary>& cases) {
  std::ostringstream out;
  out.precision(17);
  out << "case_id,mean_area_km2,beta,cpc\n";
  for (const auto& c : cases)
    out << c.case_id << ',' << c.mean_area_km2 << ',' << c.beta_calibrated
        << ',' << c.cpc_calibrated << '\n';
  return out.str();
}

// ---- plot-ready tabular emitters ----

inline std::string calibration_trace_to_csv(const CalibrationResult& result) {
  std::ostringstream out;
  out.precision(17);
  out << "beta,mean_ks,mean_cpc\n";
  for (const auto& p : result.trace)
    out << p.beta << ',' << p.mean_ks << ',' << p.mean_cpc << '\n';
  return out.str();
}

inline std::string histogram_to_csv(const DistanceHistogram& h) {
  std::ostringstream out;
  out.precision(17);
  out << "bin_lo_m,bin_hi_m,mass\n";
  for (std::size_t b = 0; b < h.mass.size(); ++b)
    out << h.bin_edges[b] << ',' << h.bin_edges[b + 1] << ',' << h.mass[b]
        << '\n';
  return out.str();
}

}  // namespace commnet::io
