#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pgr::geo {

// Regular elevation raster. Storage is row-major with row 0 at the
// SOUTH edge (y increases with row index); ASCII grid files store the
// north row first and are flipped on load. (x0, y0) is the outer corner
// of the south-west cell; the cell (row, col) center sits at
// (x0 + (col+0.5)*cell, y0 + (row+0.5)*cell).
struct ElevationMap {
  int width_px = 0;
  int height_px = 0;
  double cell_size_m = 0.0;
  double x0 = 0.0;
  double y0 = 0.0;
  double nodata = -9999.0;
  std::vector<double> heights;

  double at(int row, int col) const {
    return heights[static_cast<size_t>(row) * width_px + col];
  }
  double& at(int row, int col) {
    return heights[static_cast<size_t>(row) * width_px + col];
  }
  bool in_bounds(int row, int col) const {
    return row >= 0 && row < height_px && col >= 0 && col < width_px;
  }
  bool is_nodata(int row, int col) const { return at(row, col) == nodata; }
  double x_of_col(int col) const { return x0 + (col + 0.5) * cell_size_m; }
  double y_of_row(int row) const { return y0 + (row + 0.5) * cell_size_m; }
};

// Square raster cut from a map or produced by a generator. `mask`
// marks pixels carrying data; invalid pixels hold value 0. The center
// pixel is at index size_px/2 on both axes.
struct GridTile {
  int size_px = 0;
  double cell_size_m = 0.0;
  std::vector<double> values;
  std::vector<uint8_t> mask;

  GridTile() = default;
  GridTile(int n, double cell)
      : size_px(n),
        cell_size_m(cell),
        values(static_cast<size_t>(n) * n, 0.0),
        mask(static_cast<size_t>(n) * n, 0) {}

  int center() const { return size_px / 2; }
  size_t idx(int row, int col) const {
    return static_cast<size_t>(row) * size_px + col;
  }
  double at(int row, int col) const { return values[idx(row, col)]; }
  double& at(int row, int col) { return values[idx(row, col)]; }
  bool valid(int row, int col) const { return mask[idx(row, col)] != 0; }
  void set(int row, int col, double v) {
    values[idx(row, col)] = v;
    mask[idx(row, col)] = 1;
  }
  void clear(int row, int col) {
    values[idx(row, col)] = 0.0;
    mask[idx(row, col)] = 0;
  }
  size_t count_valid() const {
    size_t n = 0;
    for (uint8_t m : mask) n += m != 0;
    return n;
  }
};

struct ProfilePoint {
  double distance_m = 0.0;  // along-path distance from the first endpoint
  double height_m = 0.0;    // terrain height above the map datum
};

struct TerrainProfile {
  std::vector<ProfilePoint> points;
  double total_length_m = 0.0;
  bool touched_nodata = false;  // some sample hit nodata or left the map
};

// Parses an ESRI-style ASCII grid. Header keys are matched
// case-insensitively; NODATA_value is optional (default -9999).
// Throws parse_error naming the offending line.
ElevationMap load_elevation(const std::string& path);

// Writes the same format (north row first).
void save_elevation(const ElevationMap& map, const std::string& path);

// Height at (x, y) by bilinear interpolation between the four nearest
// cell centers, clamped at map edges. Sets *touched_nodata if any
// contributing cell is nodata or the point lies outside the map.
double height_at(const ElevationMap& map, double x, double y,
                 bool* touched_nodata = nullptr);

// Copies the size_px x size_px block of cells whose center pixel is the
// map cell nearest to (center_x, center_y). Cells outside the map or
// holding nodata come back mask-false.
GridTile crop_tile(const ElevationMap& map, double center_x, double center_y,
                   int size_px);

// Rotates counterclockwise about the center pixel with bilinear
// resampling. A result pixel is valid only if every source pixel with
// nonzero weight is valid; exact multiples of 90 degrees take an
// index-permutation path and are bit-exact.
GridTile rotate_tile(const GridTile& tile, double angle_deg);

// Samples n_points heights along the segment from (x1,y1) to (x2,y2),
// both endpoints included, by bilinear interpolation. Throws
// domain_error when the endpoints coincide.
TerrainProfile terrain_profile(const ElevationMap& map, double x1, double y1,
                               double x2, double y2, int n_points);

}  // namespace pgr::geo
