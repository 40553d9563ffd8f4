#include <catch2/catch_amalgamated.hpp>

#include "commnet/calibration.hpp"

using namespace commnet;

namespace {

FlowMatrix flows(std::size_t rows, std::size_t cols,
                 std::vector<std::int64_t> values) {
  FlowMatrix fm;
  fm.flows = Matrix<std::int64_t>(rows, cols);
  fm.flows.data() = std::move(values);
  for (std::size_t r = 0; r < rows; ++r)
    fm.row_labels.push_back("r" + std::to_string(r));
  for (std::size_t c = 0; c < cols; ++c)
    fm.col_labels.push_back("c" + std::to_string(c));
  return fm;
}

DistanceHistogram hist(std::vector<double> edges, std::vector<double> mass) {
  DistanceHistogram h;
  h.bin_edges = std::move(edges);
  h.mass = std::move(mass);
  h.n_trips = 1;
  return h;
}

}  // namespace

TEST_CASE("distance distribution: trips counted into right-open bins") {
  Matrix<double> d(1, 2);
  d(0, 0) = 1000.0;  // 1 km
  d(0, 1) = 3000.0;  // 3 km
  auto f = flows(1, 2, {3, 1});
  auto h = distance_distribution(f, d, 2000.0);
  REQUIRE(h.mass.size() == 2);
  CHECK(h.mass[0] == Catch::Approx(0.75));
  CHECK(h.mass[1] == Catch::Approx(0.25));
  CHECK(h.n_trips == 4);
}

TEST_CASE("distance distribution: single flow occupies one bin") {
  Matrix<double> d(1, 1);
  d(0, 0) = 4500.0;
  auto h = distance_distribution(flows(1, 1, {7}), d, 2000.0);
  REQUIRE(h.mass.size() == 3);
  CHECK(h.mass[2] == Catch::Approx(1.0));
}

TEST_CASE("distance distribution: empty matrix is an error") {
  Matrix<double> d(1, 2);
  CHECK_THROWS_AS(distance_distribution(flows(1, 2, {0, 0}), d, 2000.0),
                  input_error);
}

TEST_CASE("distance distribution: mass sums to 1 on random flows") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> dist(0.0, 5e4);
  std::uniform_int_distribution<std::int64_t> count(0, 12);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix<double> d(4, 6);
    std::vector<std::int64_t> v(24);
    for (auto& x : d.data()) x = dist(rng);
    std::int64_t total = 0;
    for (auto& x : v) total += (x = count(rng));
    if (total == 0) v[0] = total = 1;
    auto h = distance_distribution(flows(4, 6, v), d, 1500.0);
    double sum = 0.0;
    for (double m : h.mass) sum += m;
    CHECK(sum == Catch::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("ks distance: fixtures") {
  auto a = hist({0, 1, 2}, {0.5, 0.5});
  SECTION("identical histograms") { CHECK(ks_distance(a, a) == 0.0); }
  SECTION("total separation") {
    auto x = hist({0, 1, 2}, {1.0, 0.0});
    auto y = hist({0, 1, 2}, {0.0, 1.0});
    CHECK(ks_distance(x, y) == Catch::Approx(1.0));
    CHECK(ks_distance(x, y, KsVariant::pmf) == Catch::Approx(1.0));
  }
  SECTION("cdf gap at an inner edge") {
    auto b = hist({0, 1, 2}, {0.25, 0.75});
    CHECK(ks_distance(a, b) == Catch::Approx(0.25));
  }
  SECTION("symmetry and bounds") {
    auto b = hist({0, 1, 2}, {0.1, 0.9});
    CHECK(ks_distance(a, b) == Catch::Approx(ks_distance(b, a)));
    CHECK(ks_distance(a, b) >= 0.0);
    CHECK(ks_distance(a, b) <= 1.0);
  }
  SECTION("mismatched grids are rebinned") {
    auto b = hist({0, 2}, {1.0});
    CHECK(ks_distance(a, b) == Catch::Approx(0.0).margin(1e-12));
  }
}

TEST_CASE("calibrate: degenerate search interval returns the bound") {
  auto area = make_study_area(
      {[] {
        SpatialUnit u;
        u.id = "r";
        u.area_km2 = 1.0;
        u.s_out = 50;
        return u;
      }()},
      {[] {
         SpatialUnit u;
         u.id = "o1";
         u.x = 4000.0;
         u.s_in = 100;
         return u;
       }(),
       [] {
         SpatialUnit u;
         u.id = "o2";
         u.x = 20000.0;
         u.s_in = 100;
         return u;
       }()},
      CoordinateMode::projected);
  GenerationConfig gen;
  gen.beta = 2e-4;
  gen.seed = 1;
  auto observed = generate_network(area, gen);

  CalibrationSearch search;
  search.beta_min = search.beta_max = 3e-4;
  auto result = calibrate_beta(area, observed, search, 4, 9);
  CHECK(result.beta_star == 3e-4);
  REQUIRE(result.trace.size() == 1);
  CHECK(result.ks_at_star == result.trace[0].mean_ks);
}

TEST_CASE("calibrate: trace minimum defines beta_star") {
  auto area = make_study_area(
      {[] {
        SpatialUnit u;
        u.id = "r";
        u.area_km2 = 1.0;
        u.s_out = 400;
        return u;
      }()},
      {[] {
         SpatialUnit u;
         u.id = "near";
         u.x = 3000.0;
         u.s_in = 500;
         return u;
       }(),
       [] {
         SpatialUnit u;
         u.id = "far";
         u.x = 30000.0;
         u.s_in = 500;
         return u;
       }()},
      CoordinateMode::projected);
  GenerationConfig gen;
  gen.beta = 1e-4;
  gen.seed = 21;
  auto observed = generate_network(area, gen);

  CalibrationSearch search;
  search.strategy = SearchStrategy::grid;
  search.grid_points = 12;
  auto result = calibrate_beta(area, observed, search, 8, 4, 1000.0);
  double min_ks = 1.0;
  for (const auto& p : result.trace) min_ks = std::min(min_ks, p.mean_ks);
  CHECK(result.ks_at_star == min_ks);
  CHECK(result.beta_star >= search.beta_min);
  CHECK(result.beta_star <= search.beta_max);
}
