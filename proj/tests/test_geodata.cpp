#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "helpers.hpp"
#include "pgr/errors.hpp"
#include "pgr/geodata.hpp"
#include "pgr/synthscene.hpp"

using namespace pgr;

TEST_CASE("ascii grid loads case-insensitive headers and south-first rows") {
  std::string dir = testutil::fresh_dir("geo_load");
  std::string path = dir + "/g.asc";
  {
    std::ofstream f(path);
    f << "NCOLS 2\n"
         "nrows 2\n"
         "xllcorner 10.0\n"
         "YLLCORNER 20.0\n"
         "cellsize 2.5\n"
         "NODATA_value -1\n"
         "10 15\n"
         "0 5\n";
  }
  geo::ElevationMap m = geo::load_elevation(path);
  CHECK(m.width_px == 2);
  CHECK(m.height_px == 2);
  CHECK(m.cell_size_m == 2.5);
  CHECK(m.x0 == 10.0);
  CHECK(m.y0 == 20.0);
  CHECK(m.nodata == -1.0);
  // Row 0 is the south edge; the file stores the north row first.
  CHECK(m.at(0, 0) == 0.0);
  CHECK(m.at(0, 1) == 5.0);
  CHECK(m.at(1, 0) == 10.0);
  CHECK(m.at(1, 1) == 15.0);
  CHECK(m.x_of_col(0) == doctest::Approx(11.25));
  CHECK(m.y_of_row(0) == doctest::Approx(21.25));
}

TEST_CASE("ascii grid value-count mismatch raises a parse error naming the file") {
  std::string dir = testutil::fresh_dir("geo_badrow");
  std::string path = dir + "/bad.asc";
  {
    std::ofstream f(path);
    f << "ncols 3\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 1\n"
         "1 2 3\n4 5\n";
  }
  try {
    geo::load_elevation(path);
    FAIL("expected parse_error");
  } catch (const parse_error& e) {
    CHECK(std::string(e.what()).find(path) != std::string::npos);
  }
  CHECK_THROWS_AS(geo::load_elevation(dir + "/missing.asc"), input_error);
}

TEST_CASE("a 225-cell row at 1.929 m spacing spans the 434 m test range") {
  geo::ElevationMap m = testutil::flat_map(225, 1.929, 0.0);
  CHECK(std::abs(m.width_px * m.cell_size_m - 434.0) < 0.05);
}

TEST_CASE("elevation save/load round trips bit-exactly") {
  std::string dir = testutil::fresh_dir("geo_roundtrip");
  dataset::SceneSpec spec;
  spec.map_px = 16;
  spec.cell_size_m = 1.929;
  geo::ElevationMap m = dataset::make_random_map(3, spec);
  geo::save_elevation(m, dir + "/m.asc");
  geo::ElevationMap r = geo::load_elevation(dir + "/m.asc");
  CHECK(r.width_px == m.width_px);
  CHECK(r.height_px == m.height_px);
  CHECK(r.cell_size_m == m.cell_size_m);
  CHECK(r.x0 == m.x0);
  CHECK(r.y0 == m.y0);
  REQUIRE(r.heights.size() == m.heights.size());
  for (size_t i = 0; i < m.heights.size(); ++i) CHECK(r.heights[i] == m.heights[i]);
}

TEST_CASE("height_at interpolates bilinearly and clamps at the map edge") {
  geo::ElevationMap m = testutil::flat_map(2, 1.0, 0.0);
  m.at(0, 0) = 0.0;
  m.at(0, 1) = 10.0;
  m.at(1, 0) = 20.0;
  m.at(1, 1) = 30.0;
  CHECK(geo::height_at(m, 1.0, 1.0) == doctest::Approx(15.0));
  CHECK(geo::height_at(m, 0.5, 0.5) == doctest::Approx(0.0));
  CHECK(geo::height_at(m, 1.5, 0.5) == doctest::Approx(10.0));
  CHECK(geo::height_at(m, 1.0, 0.5) == doctest::Approx(5.0));

  bool bad = false;
  CHECK(geo::height_at(m, 100.0, 0.5, &bad) == doctest::Approx(10.0));
  CHECK(bad);
  bad = false;
  geo::height_at(m, 1.0, 1.0, &bad);
  CHECK_FALSE(bad);
  m.at(1, 1) = m.nodata;
  bad = false;
  geo::height_at(m, 1.0, 1.0, &bad);
  CHECK(bad);
}

TEST_CASE("crop_tile of size one returns the addressed cell") {
  geo::ElevationMap m = testutil::flat_map(9, 2.0, 0.0);
  for (int r = 0; r < 9; ++r)
    for (int c = 0; c < 9; ++c) m.at(r, c) = r * 100.0 + c;
  geo::GridTile t = geo::crop_tile(m, m.x_of_col(4), m.y_of_row(4), 1);
  REQUIRE(t.size_px == 1);
  CHECK(t.valid(0, 0));
  CHECK(t.at(0, 0) == 404.0);
  CHECK(t.cell_size_m == 2.0);
}

TEST_CASE("crop_tile at a map corner invalidates off-map pixels") {
  geo::ElevationMap m = testutil::flat_map(60, 1.0, 5.0);
  geo::GridTile t = geo::crop_tile(m, m.x0, m.y0, 100);
  REQUIRE(t.size_px == 100);
  // The tile centers on cell (0,0): only its upper-right quadrant overlaps.
  CHECK(t.count_valid() == 2500);
  CHECK(t.valid(50, 50));
  CHECK_FALSE(t.valid(49, 50));
  CHECK_FALSE(t.valid(50, 49));
  CHECK(t.at(50, 50) == 5.0);
  CHECK(t.at(0, 0) == 0.0);  // invalid pixels hold zero
}

TEST_CASE("crop_tile in the interior keeps every pixel and the metric extent") {
  geo::ElevationMap m = testutil::flat_map(225, 1.929, 1.0);
  geo::GridTile t = geo::crop_tile(m, m.x_of_col(112), m.y_of_row(112), 100);
  CHECK(t.count_valid() == 10000);
  double area = (t.size_px * t.cell_size_m) * (t.size_px * t.cell_size_m);
  CHECK(std::abs(area - 37210.0) < 1.0);
}

static geo::GridTile numbered_tile(int n) {
  geo::GridTile t(n, 1.0);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) t.set(r, c, r * n + c + 1.0);
  return t;
}

TEST_CASE("rotate_tile by zero degrees returns the input unchanged") {
  geo::GridTile t = numbered_tile(5);
  t.clear(1, 3);
  geo::GridTile r = geo::rotate_tile(t, 0.0);
  CHECK(r.values == t.values);
  CHECK(r.mask == t.mask);
}

TEST_CASE("rotate_tile quarter turn is an exact index permutation") {
  // Storage is south-first, so this tile reads [[1,2,3],[4,5,6],[7,8,9]]
  // from the north; a counterclockwise quarter turn of that view is
  // [[3,6,9],[2,5,8],[1,4,7]].
  geo::GridTile t(3, 1.0);
  t.set(0, 0, 7);  t.set(0, 1, 8);  t.set(0, 2, 9);
  t.set(1, 0, 4);  t.set(1, 1, 5);  t.set(1, 2, 6);
  t.set(2, 0, 1);  t.set(2, 1, 2);  t.set(2, 2, 3);
  geo::GridTile r = geo::rotate_tile(t, 90.0);
  CHECK(r.at(0, 0) == 1);  CHECK(r.at(0, 1) == 4);  CHECK(r.at(0, 2) == 7);
  CHECK(r.at(1, 0) == 2);  CHECK(r.at(1, 1) == 5);  CHECK(r.at(1, 2) == 8);
  CHECK(r.at(2, 0) == 3);  CHECK(r.at(2, 1) == 6);  CHECK(r.at(2, 2) == 9);
  for (size_t i = 0; i < r.mask.size(); ++i) CHECK(r.mask[i] == 1);

  t.clear(0, 2);  // follows the same permutation
  geo::GridTile r2 = geo::rotate_tile(t, 90.0);
  CHECK_FALSE(r2.valid(2, 0));
  CHECK(r2.count_valid() == 8);
}

TEST_CASE("four quarter turns and a full turn are the identity") {
  geo::GridTile t = numbered_tile(7);
  t.clear(2, 5);
  geo::GridTile r = t;
  for (int k = 0; k < 4; ++k) r = geo::rotate_tile(r, 90.0);
  CHECK(r.values == t.values);
  CHECK(r.mask == t.mask);
  geo::GridTile full = geo::rotate_tile(t, 360.0);
  CHECK(full.values == t.values);
  CHECK(full.mask == t.mask);
  geo::GridTile ccw = geo::rotate_tile(geo::rotate_tile(t, 270.0), 90.0);
  CHECK(ccw.values == t.values);
}

TEST_CASE("fractional rotation keeps the center and drops unsupported pixels") {
  geo::GridTile t = numbered_tile(9);
  geo::GridTile r = geo::rotate_tile(t, 45.0);
  CHECK(r.at(4, 4) == doctest::Approx(t.at(4, 4)).epsilon(1e-12));
  CHECK_FALSE(r.valid(0, 0));
  CHECK_FALSE(r.valid(0, 8));
  CHECK_FALSE(r.valid(8, 0));
  CHECK_FALSE(r.valid(8, 8));
  CHECK(r.count_valid() < t.count_valid());

  // A hole in the source only ever removes validity downstream.
  geo::GridTile holed = t;
  holed.clear(4, 6);
  geo::GridTile rh = geo::rotate_tile(holed, 30.0);
  geo::GridTile rf = geo::rotate_tile(t, 30.0);
  for (int i = 0; i < 9; ++i)
    for (int j = 0; j < 9; ++j)
      if (rh.valid(i, j)) CHECK(rf.valid(i, j));
  CHECK(rh.count_valid() < rf.count_valid());
}

TEST_CASE("terrain_profile reproduces flat and linear terrain") {
  geo::ElevationMap flat = testutil::flat_map(20, 1.0, 7.0);
  geo::TerrainProfile p = geo::terrain_profile(flat, flat.x_of_col(2),
                                               flat.y_of_row(3),
                                               flat.x_of_col(15),
                                               flat.y_of_row(12), 7);
  REQUIRE(p.points.size() == 7);
  for (const auto& pt : p.points) CHECK(pt.height_m == doctest::Approx(7.0));
  CHECK(p.points.front().distance_m == 0.0);
  CHECK(p.points.back().distance_m == doctest::Approx(p.total_length_m));
  CHECK_FALSE(p.touched_nodata);

  geo::ElevationMap ramp = testutil::flat_map(40, 2.0, 0.0);
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 40; ++c) ramp.at(r, c) = ramp.x_of_col(c);
  geo::TerrainProfile q = geo::terrain_profile(ramp, ramp.x_of_col(3),
                                               ramp.y_of_row(5),
                                               ramp.x_of_col(30),
                                               ramp.y_of_row(5), 16);
  CHECK(q.total_length_m == doctest::Approx(27 * 2.0));
  for (size_t k = 0; k < q.points.size(); ++k) {
    double x = ramp.x_of_col(3) + q.points[k].distance_m;
    CHECK(q.points[k].height_m == doctest::Approx(x).epsilon(1e-9));
  }
}

TEST_CASE("terrain_profile rejects coincident endpoints") {
  geo::ElevationMap m = testutil::flat_map(10, 1.0, 0.0);
  CHECK_THROWS_AS(
      geo::terrain_profile(m, m.x_of_col(4), m.y_of_row(4), m.x_of_col(4),
                           m.y_of_row(4), 16),
      domain_error);
  CHECK_THROWS_AS(
      geo::terrain_profile(m, 1.0, 1.0, 2.0, 2.0, 1), input_error);
}

TEST_CASE("terrain_profile flags contact with nodata or the map edge") {
  geo::ElevationMap m = testutil::flat_map(10, 1.0, 2.0);
  geo::TerrainProfile p =
      geo::terrain_profile(m, m.x_of_col(5), m.y_of_row(5), -10.0, 5.5, 8);
  CHECK(p.touched_nodata);
  m.at(5, 3) = m.nodata;
  geo::TerrainProfile q = geo::terrain_profile(
      m, m.x_of_col(1), m.y_of_row(5), m.x_of_col(8), m.y_of_row(5), 30);
  CHECK(q.touched_nodata);
}
