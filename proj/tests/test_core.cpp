#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "commnet/core.hpp"

using namespace commnet;

namespace {

SpatialUnit unit(std::string id, double x, double y, double area = 1.0,
                 std::int64_t s_in = 0, std::int64_t s_out = 0) {
  SpatialUnit u;
  u.id = std::move(id);
  u.x = x;
  u.y = y;
  u.area_km2 = area;
  u.s_in = s_in;
  u.s_out = s_out;
  return u;
}

}  // namespace

TEST_CASE("projected distance: 3-4-5 triangle") {
  auto d = build_distance_matrix({unit("a", 0, 0)}, {unit("b", 3, 4)},
                                 CoordinateMode::projected);
  CHECK(d(0, 0) == Catch::Approx(5.0));
}

TEST_CASE("projected distance: identical points are zero") {
  auto d = build_distance_matrix({unit("a", 2, 7)}, {unit("b", 2, 7)},
                                 CoordinateMode::projected);
  CHECK(d(0, 0) == 0.0);
}

TEST_CASE("geodetic distance: one degree of longitude at the equator") {
  auto d = build_distance_matrix({unit("a", 0, 0)}, {unit("b", 1, 0)},
                                 CoordinateMode::geodetic);
  CHECK(d(0, 0) == Catch::Approx(111194.9266).margin(1.0));
}

TEST_CASE("distance input validation") {
  SpatialUnit bad = unit("bad", std::numeric_limits<double>::quiet_NaN(), 0);
  CHECK_THROWS_AS(
      build_distance_matrix({bad}, {unit("b", 0, 0)}, CoordinateMode::projected),
      input_error);
  CHECK_THROWS_AS(build_distance_matrix({unit("a", 0, 95)}, {unit("b", 0, 0)},
                                        CoordinateMode::geodetic),
                  input_error);
}

TEST_CASE("distance matrix is symmetric and triangle-inequal on random points") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> coord(-1e5, 1e5);
  std::vector<SpatialUnit> pts;
  for (int i = 0; i < 12; ++i)
    pts.push_back(unit("u" + std::to_string(i), coord(rng), coord(rng)));
  auto d = build_distance_matrix(pts, pts, CoordinateMode::projected);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) {
      CHECK(d(i, j) == Catch::Approx(d(j, i)));
      for (std::size_t k = 0; k < pts.size(); ++k)
        CHECK(d(i, j) <= d(i, k) + d(k, j) + 1e-9);
    }
}

TEST_CASE("validate_margins feasibility") {
  SECTION("pass when capacity covers demand") {
    auto area = make_study_area({unit("r", 0, 0, 1, 0, 5)},
                                {unit("o", 1, 0, 1, 10)},
                                CoordinateMode::projected);
    auto rep = validate_margins(area);
    CHECK(rep.pass());
    CHECK(rep.total_out == 5);
    CHECK(rep.total_in == 10);
  }
  SECTION("fail when demand exceeds capacity") {
    auto area = make_study_area({unit("r", 0, 0, 1, 0, 5)},
                                {unit("o", 1, 0, 1, 3)},
                                CoordinateMode::projected);
    CHECK_FALSE(validate_margins(area).pass());
  }
  SECTION("empty residence list is an input error") {
    auto area = make_study_area({}, {unit("o", 1, 0, 1, 3)},
                                CoordinateMode::projected);
    CHECK_THROWS_AS(validate_margins(area), input_error);
  }
  SECTION("negative counts are reported by unit id") {
    auto bad = unit("neg", 0, 0, 1, -1, 2);
    auto area = make_study_area({bad}, {unit("o", 1, 0, 1, 10)},
                                CoordinateMode::projected);
    auto rep = validate_margins(area);
    REQUIRE(rep.negative_units.size() == 1);
    CHECK(rep.negative_units[0] == "neg");
    CHECK_FALSE(rep.pass());
  }
}

TEST_CASE("mean_unit_area") {
  SECTION("arithmetic mean over residence units only") {
    auto area = make_study_area(
        {unit("a", 0, 0, 10.0), unit("b", 1, 0, 30.0)},
        {unit("o", 2, 0, 999.0)}, CoordinateMode::projected);
    CHECK(mean_unit_area(area) == Catch::Approx(20.0));
  }
  SECTION("single unit, Table-style value") {
    auto area =
        make_study_area({unit("cz", 0, 0, 822.54)}, {}, CoordinateMode::projected);
    CHECK(mean_unit_area(area) == Catch::Approx(822.54));
  }
  SECTION("invariant under permutation of units") {
    std::mt19937_64 rng(7);
    std::vector<SpatialUnit> units;
    std::uniform_real_distribution<double> a(0.1, 100.0);
    for (int i = 0; i < 20; ++i)
      units.push_back(unit("u" + std::to_string(i), i, 0, a(rng)));
    auto area1 = make_study_area(units, {}, CoordinateMode::projected);
    std::shuffle(units.begin(), units.end(), rng);
    auto area2 = make_study_area(units, {}, CoordinateMode::projected);
    CHECK(mean_unit_area(area1) == Catch::Approx(mean_unit_area(area2)));
  }
  SECTION("missing area on a residence unit is an error") {
    SpatialUnit u = unit("x", 0, 0);
    u.area_km2.reset();
    auto area = make_study_area({u}, {}, CoordinateMode::projected);
    CHECK_THROWS_AS(mean_unit_area(area), input_error);
  }
}
