#include "pgr/synthscene.hpp"

#include <algorithm>
#include <cmath>

#include "pgr/errors.hpp"
#include "pgr/rng.hpp"

namespace pgr::dataset {

geo::ElevationMap make_random_map(uint64_t seed, const SceneSpec& spec) {
  if (spec.map_px < 8) throw input_error("make_random_map: map too small");
  geo::ElevationMap map;
  map.width_px = spec.map_px;
  map.height_px = spec.map_px;
  map.cell_size_m = spec.cell_size_m;
  map.x0 = 0.0;
  map.y0 = 0.0;
  map.heights.assign(static_cast<size_t>(spec.map_px) * spec.map_px,
                     spec.base_height_m);

  rng::Engine eng = rng::make_engine(seed, 0x5343454eu);  // scene stream
  double extent = spec.map_px * spec.cell_size_m;

  struct Bump {
    double cx, cy, amp, sigma;
  };
  std::vector<Bump> bumps(spec.n_bumps);
  for (Bump& b : bumps) {
    b.cx = rng::uniform(eng, 0.0, extent);
    b.cy = rng::uniform(eng, 0.0, extent);
    b.amp = rng::uniform(eng, -spec.terrain_amp_m, spec.terrain_amp_m);
    b.sigma = rng::uniform(eng, 0.15, 0.35) * extent;
  }
  for (int r = 0; r < map.height_px; ++r) {
    double y = map.y_of_row(r);
    for (int c = 0; c < map.width_px; ++c) {
      double x = map.x_of_col(c);
      double h = map.at(r, c);
      for (const Bump& b : bumps) {
        double dx = x - b.cx, dy = y - b.cy;
        h += b.amp * std::exp(-(dx * dx + dy * dy) / (2.0 * b.sigma * b.sigma));
      }
      map.at(r, c) = h;
    }
  }

  int n_boxes = static_cast<int>(
      rng::uniform_int(eng, spec.min_boxes, spec.max_boxes));
  for (int b = 0; b < n_boxes; ++b) {
    double side_x = rng::uniform(eng, spec.min_box_side_m, spec.max_box_side_m);
    double side_y = rng::uniform(eng, spec.min_box_side_m, spec.max_box_side_m);
    double cx = rng::uniform(eng, 0.05 * extent, 0.95 * extent);
    double cy = rng::uniform(eng, 0.05 * extent, 0.95 * extent);
    double box_h =
        rng::uniform(eng, spec.min_box_height_m, spec.max_box_height_m);
    int c_lo = std::max(
        0, static_cast<int>(std::floor((cx - side_x / 2) / spec.cell_size_m)));
    int c_hi = std::min(
        map.width_px - 1,
        static_cast<int>(std::floor((cx + side_x / 2) / spec.cell_size_m)));
    int r_lo = std::max(
        0, static_cast<int>(std::floor((cy - side_y / 2) / spec.cell_size_m)));
    int r_hi = std::min(
        map.height_px - 1,
        static_cast<int>(std::floor((cy + side_y / 2) / spec.cell_size_m)));
    int rc = std::clamp((r_lo + r_hi) / 2, 0, map.height_px - 1);
    int cc = std::clamp((c_lo + c_hi) / 2, 0, map.width_px - 1);
    double roof = map.at(rc, cc) + box_h;  // flat roof over terrain
    for (int r = r_lo; r <= r_hi; ++r)
      for (int c = c_lo; c <= c_hi; ++c)
        map.at(r, c) = std::max(map.at(r, c), roof);
  }
  return map;
}

std::pair<double, double> choose_tx(const geo::ElevationMap& map, int tile_px,
                                    uint64_t seed) {
  int margin = tile_px / 2 + 1;
  if (map.width_px <= 2 * margin || map.height_px <= 2 * margin)
    throw input_error("choose_tx: map too small for the tile");

  std::vector<double> heights;
  for (int r = margin; r < map.height_px - margin; ++r)
    for (int c = margin; c < map.width_px - margin; ++c)
      if (!map.is_nodata(r, c)) heights.push_back(map.at(r, c));
  if (heights.empty()) throw domain_error("choose_tx: no valid interior cells");
  size_t q = heights.size() / 4;
  std::nth_element(heights.begin(), heights.begin() + q, heights.end());
  double q25 = heights[q];

  rng::Engine eng = rng::make_engine(seed, 0x54584c4fu);  // tx stream
  int r = 0, c = 0;
  for (int attempt = 0; attempt < 200; ++attempt) {
    r = static_cast<int>(rng::uniform_int(eng, margin, map.height_px - margin - 1));
    c = static_cast<int>(rng::uniform_int(eng, margin, map.width_px - margin - 1));
    if (map.is_nodata(r, c)) continue;
    if (map.at(r, c) <= q25 + 1.0) break;
  }
  return {map.x_of_col(c), map.y_of_row(r)};
}

}  // namespace pgr::dataset
