#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "commnet/matrix.hpp"

namespace commnet {

struct input_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class CoordinateMode { projected, geodetic };

/// One geographic unit. Coordinates are meters in projected mode and
/// degrees (x = longitude, y = latitude) in geodetic mode. Outside units
/// may have no surface and no out-commuter count.
struct SpatialUnit {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  std::optional<double> area_km2;
  std::int64_t s_in = 0;
  std::int64_t s_out = 0;
  // Resident population, only consumed by the radiation baseline.
  std::optional<double> population;
};

inline constexpr double kEarthRadiusM = 6'371'000.0;

inline double great_circle_m(double lon1, double lat1, double lon2,
                             double lat2) {
  constexpr double deg = std::numbers::pi / 180.0;
  const double phi1 = lat1 * deg;
  const double phi2 = lat2 * deg;
  const double dphi = (lat2 - lat1) * deg;
  const double dlam = (lon2 - lon1) * deg;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlam / 2) *
                       std::sin(dlam / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

/// n x N_TOT distance matrix in meters between residence units (rows) and
/// the extended unit list (columns).
inline Matrix<double> build_distance_matrix(
    const std::vector<SpatialUnit>& units_res,
    const std::vector<SpatialUnit>& units_ext, CoordinateMode mode) {
  auto check = [&](const SpatialUnit& u) {
    if (!std::isfinite(u.x) || !std::isfinite(u.y))
      throw input_error("non-finite coordinate for unit '" + u.id + "'");
    if (mode == CoordinateMode::geodetic && (u.y < -90.0 || u.y > 90.0))
      throw input_error("geodetic latitude out of [-90, 90] for unit '" +
                        u.id + "'");
  };
  for (const auto& u : units_res) check(u);
  for (const auto& u : units_ext) check(u);

  Matrix<double> d(units_res.size(), units_ext.size());
  for (std::size_t r = 0; r < units_res.size(); ++r) {
    const auto& a = units_res[r];
    for (std::size_t c = 0; c < units_ext.size(); ++c) {
      const auto& b = units_ext[c];
      if (mode == CoordinateMode::projected) {
        d(r, c) = std::hypot(a.x - b.x, a.y - b.y);
      } else {
        d(r, c) = great_circle_m(a.x, a.y, b.x, b.y);
      }
    }
  }
  return d;
}

/// The n residence units plus m surrounding units, with the distance
/// matrix precomputed. Immutable after construction.
struct StudyArea {
  std::vector<SpatialUnit> residence_units;
  std::vector<SpatialUnit> outside_units;
  CoordinateMode coordinate_mode = CoordinateMode::projected;
  Matrix<double> distances;  // n x N_TOT, meters

  std::size_t n() const { return residence_units.size(); }
  std::size_t m() const { return outside_units.size(); }
  std::size_t n_tot() const { return n() + m(); }

  const SpatialUnit& ext_unit(std::size_t i) const {
    return i < n() ? residence_units[i] : outside_units[i - n()];
  }

  std::vector<std::int64_t> s_in_vector() const {
    std::vector<std::int64_t> v(n_tot());
    for (std::size_t i = 0; i < n_tot(); ++i) v[i] = ext_unit(i).s_in;
    return v;
  }
  std::vector<std::int64_t> s_out_vector() const {
    std::vector<std::int64_t> v(n());
    for (std::size_t i = 0; i < n(); ++i) v[i] = residence_units[i].s_out;
    return v;
  }

  std::vector<std::string> residence_ids() const {
    std::vector<std::string> v;
    v.reserve(n());
    for (const auto& u : residence_units) v.push_back(u.id);
    return v;
  }
  std::vector<std::string> ext_ids() const {
    std::vector<std::string> v;
    v.reserve(n_tot());
    for (const auto& u : residence_units) v.push_back(u.id);
    for (const auto& u : outside_units) v.push_back(u.id);
    return v;
  }
};

inline StudyArea make_study_area(std::vector<SpatialUnit> residence,
                                 std::vector<SpatialUnit> outside,
                                 CoordinateMode mode) {
  StudyArea area;
  area.residence_units = std::move(residence);
  area.outside_units = std::move(outside);
  area.coordinate_mode = mode;
  std::vector<SpatialUnit> ext = area.residence_units;
  ext.insert(ext.end(), area.outside_units.begin(), area.outside_units.end());
  area.distances = build_distance_matrix(area.residence_units, ext, mode);
  return area;
}

enum class FlowShape { generated, comparison };

/// Integer origin-destination flows. Generated matrices are n x N_TOT;
/// comparison matrices are (n+1) x (n+1) with an "Out." row and column.
struct FlowMatrix {
  Matrix<std::int64_t> flows;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
  FlowShape shape = FlowShape::generated;

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : flows.data()) t += v;
    return t;
  }
};

/// Entrywise-real counterpart used for replica means and radiation output.
struct RealFlowMatrix {
  Matrix<double> flows;
  std::vector<std::string> row_labels;
  std::vector<std::string> col_labels;
};

struct MarginReport {
  std::int64_t total_out = 0;
  std::int64_t total_in = 0;
  bool feasible = false;
  std::vector<std::string> negative_units;

  bool pass() const { return feasible && negative_units.empty(); }
};

/// Feasibility check guarding generator termination: the commuters to
/// place must not exceed the total inbound capacity.
inline MarginReport validate_margins(const StudyArea& area) {
  if (area.n() == 0) throw input_error("study area has no residence units");
  MarginReport rep;
  for (const auto& u : area.residence_units) {
    rep.total_out += u.s_out;
    if (u.s_out < 0 || u.s_in < 0) rep.negative_units.push_back(u.id);
  }
  for (std::size_t i = 0; i < area.n_tot(); ++i) rep.total_in += area.ext_unit(i).s_in;
  for (const auto& u : area.outside_units)
    if (u.s_in < 0) rep.negative_units.push_back(u.id);
  rep.feasible = rep.total_out <= rep.total_in;
  return rep;
}

/// Mean surface of the residence units in km². Outside units are
/// job-search context only and do not enter the average.
inline double mean_unit_area(const StudyArea& area) {
  if (area.n() == 0) throw input_error("mean_unit_area: no residence units");
  double sum = 0.0;
  for (const auto& u : area.residence_units) {
    if (!u.area_km2 || *u.area_km2 <= 0.0)
      throw input_error("residence unit '" + u.id + "' has no positive area");
    sum += *u.area_km2;
  }
  return sum / static_cast<double>(area.n());
}

}  // namespace commnet
