#pragma once

#include <cstdint>
#include <utility>

#include "pgr/geodata.hpp"

namespace pgr::dataset {

// Random test-range terrain: smooth Gaussian undulation on a raised
// base, with flat-roofed rectangular blocks standing in for buildings.
struct SceneSpec {
  int map_px = 160;
  double cell_size_m = 1.929;
  double base_height_m = 12.0;
  double terrain_amp_m = 6.0;
  int n_bumps = 6;
  int min_boxes = 4;
  int max_boxes = 10;
  double min_box_side_m = 8.0;
  double max_box_side_m = 30.0;
  double min_box_height_m = 6.0;
  double max_box_height_m = 20.0;
};

geo::ElevationMap make_random_map(uint64_t seed, const SceneSpec& spec = {});

// Ground-level transmitter cell at least tile_px/2 + 1 cells from every
// map edge; prefers cells near the low quartile of in-margin heights so
// the transmitter does not land on a roof.
std::pair<double, double> choose_tx(const geo::ElevationMap& map, int tile_px,
                                    uint64_t seed);

}  // namespace pgr::dataset
