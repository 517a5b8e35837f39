#pragma once

#include <filesystem>
#include <string>

#include "pgr/geodata.hpp"

namespace testutil {

inline pgr::geo::ElevationMap flat_map(int n, double cell, double h) {
  pgr::geo::ElevationMap m;
  m.width_px = n;
  m.height_px = n;
  m.cell_size_m = cell;
  m.x0 = 0.0;
  m.y0 = 0.0;
  m.heights.assign(static_cast<size_t>(n) * n, h);
  return m;
}

// Per-test scratch directory, wiped on entry so reruns start clean.
inline std::string fresh_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / "pgr_tests" / tag;
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace testutil
