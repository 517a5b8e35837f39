#include "pgr/geodata.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pgr/errors.hpp"

namespace pgr::geo {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return s;
}

bool parse_double(const std::string& tok, double& out) {
  try {
    size_t pos = 0;
    out = std::stod(tok, &pos);
    return pos == tok.size();
  } catch (const std::exception&) {
    return false;
  }
}

}  // namespace

ElevationMap load_elevation(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw input_error("cannot open elevation file: " + path);

  ElevationMap map;
  bool saw_ncols = false, saw_nrows = false, saw_x0 = false, saw_y0 = false,
       saw_cell = false;
  long line_no = 0;
  std::string line;
  std::vector<double> north_first;

  // Header lines are `key value`; the first line whose leading token is
  // numeric starts the data block.
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;  // blank line
    if (!std::isalpha(static_cast<unsigned char>(key[0]))) {
      // Data begins on this line.
      if (!(saw_ncols && saw_nrows && saw_x0 && saw_y0 && saw_cell))
        throw parse_error(path, line_no, "data before a complete header");
      north_first.reserve(static_cast<size_t>(map.width_px) * map.height_px);
      std::istringstream ds(line);
      std::string tok;
      do {
        while (ds >> tok) {
          double v;
          if (!parse_double(tok, v))
            throw parse_error(path, line_no, "not a number: '" + tok + "'");
          north_first.push_back(v);
        }
        if (!std::getline(in, line)) break;
        ++line_no;
        ds = std::istringstream(line);
      } while (true);
      break;
    }
    std::string val;
    if (!(ls >> val))
      throw parse_error(path, line_no, "header key '" + key + "' has no value");
    std::string k = lower(key);
    double v;
    if (!parse_double(val, v))
      throw parse_error(path, line_no, "bad value for '" + key + "'");
    if (k == "ncols") {
      map.width_px = static_cast<int>(v);
      saw_ncols = true;
    } else if (k == "nrows") {
      map.height_px = static_cast<int>(v);
      saw_nrows = true;
    } else if (k == "xllcorner") {
      map.x0 = v;
      saw_x0 = true;
    } else if (k == "yllcorner") {
      map.y0 = v;
      saw_y0 = true;
    } else if (k == "cellsize") {
      map.cell_size_m = v;
      saw_cell = true;
    } else if (k == "nodata_value") {
      map.nodata = v;
    } else {
      throw parse_error(path, line_no, "unknown header key '" + key + "'");
    }
  }

  if (!(saw_ncols && saw_nrows && saw_x0 && saw_y0 && saw_cell))
    throw parse_error(path, line_no, "incomplete header");
  if (map.width_px <= 0 || map.height_px <= 0 || map.cell_size_m <= 0)
    throw parse_error(path, line_no, "non-positive grid dimensions");
  size_t want = static_cast<size_t>(map.width_px) * map.height_px;
  if (north_first.size() != want)
    throw parse_error(path, line_no,
                      "expected " + std::to_string(want) + " values, got " +
                          std::to_string(north_first.size()));

  // File stores the north row first; flip to row 0 = south.
  map.heights.resize(want);
  for (int r = 0; r < map.height_px; ++r) {
    const double* src =
        north_first.data() + static_cast<size_t>(r) * map.width_px;
    double* dst = map.heights.data() +
                  static_cast<size_t>(map.height_px - 1 - r) * map.width_px;
    std::copy(src, src + map.width_px, dst);
  }
  return map;
}

void save_elevation(const ElevationMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw input_error("cannot write elevation file: " + path);
  char buf[64];
  out << "ncols " << map.width_px << "\n";
  out << "nrows " << map.height_px << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", map.x0);
  out << "xllcorner " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", map.y0);
  out << "yllcorner " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", map.cell_size_m);
  out << "cellsize " << buf << "\n";
  std::snprintf(buf, sizeof buf, "%.17g", map.nodata);
  out << "NODATA_value " << buf << "\n";
  for (int r = map.height_px - 1; r >= 0; --r) {
    for (int c = 0; c < map.width_px; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", map.at(r, c));
      out << buf << (c + 1 == map.width_px ? "" : " ");
    }
    out << "\n";
  }
  if (!out) throw input_error("write failed: " + path);
}

double height_at(const ElevationMap& map, double x, double y,
                 bool* touched_nodata) {
  bool outside = x < map.x0 || x > map.x0 + map.width_px * map.cell_size_m ||
                 y < map.y0 || y > map.y0 + map.height_px * map.cell_size_m;
  double gx = (x - map.x0) / map.cell_size_m - 0.5;
  double gy = (y - map.y0) / map.cell_size_m - 0.5;
  int c0 = static_cast<int>(std::floor(gx));
  int r0 = static_cast<int>(std::floor(gy));
  double fx = gx - c0;
  double fy = gy - r0;
  double wts[4] = {(1 - fy) * (1 - fx), (1 - fy) * fx, fy * (1 - fx), fy * fx};
  int rows[4] = {r0, r0, r0 + 1, r0 + 1};
  int cols[4] = {c0, c0 + 1, c0, c0 + 1};
  bool hit_nodata = false;
  double sum = 0.0;
  for (int k = 0; k < 4; ++k) {
    if (wts[k] <= 0.0) continue;
    int r = std::clamp(rows[k], 0, map.height_px - 1);
    int c = std::clamp(cols[k], 0, map.width_px - 1);
    if (map.is_nodata(r, c)) hit_nodata = true;
    sum += wts[k] * map.at(r, c);
  }
  if (touched_nodata) *touched_nodata = hit_nodata || outside;
  return sum;
}

GridTile crop_tile(const ElevationMap& map, double center_x, double center_y,
                   int size_px) {
  if (size_px <= 0) throw input_error("crop_tile: size_px must be positive");
  GridTile tile(size_px, map.cell_size_m);
  int col_c = static_cast<int>(std::floor((center_x - map.x0) / map.cell_size_m));
  int row_c = static_cast<int>(std::floor((center_y - map.y0) / map.cell_size_m));
  int c = tile.center();
  for (int i = 0; i < size_px; ++i) {
    for (int j = 0; j < size_px; ++j) {
      int r = row_c - c + i;
      int q = col_c - c + j;
      if (map.in_bounds(r, q) && !map.is_nodata(r, q))
        tile.set(i, j, map.at(r, q));
    }
  }
  return tile;
}

namespace {

// Exact index permutation for multiples of 90 degrees; quarters = 1, 2, 3.
GridTile rotate_quarters(const GridTile& tile, int quarters) {
  int n = tile.size_px;
  int c = tile.center();
  GridTile out(n, tile.cell_size_m);
  for (int ti = 0; ti < n; ++ti) {
    for (int tj = 0; tj < n; ++tj) {
      int dx = tj - c, dy = ti - c;
      int sr, sc;
      switch (quarters) {
        case 1: sr = c - dx; sc = c + dy; break;
        case 2: sr = c - dy; sc = c - dx; break;
        default: sr = c + dx; sc = c - dy; break;
      }
      if (sr >= 0 && sr < n && sc >= 0 && sc < n && tile.valid(sr, sc))
        out.set(ti, tj, tile.at(sr, sc));
    }
  }
  return out;
}

}  // namespace

GridTile rotate_tile(const GridTile& tile, double angle_deg) {
  double a = std::fmod(angle_deg, 360.0);
  if (a < 0) a += 360.0;
  if (a == 0.0) return tile;
  if (std::fmod(a, 90.0) == 0.0)
    return rotate_quarters(tile, static_cast<int>(a / 90.0));

  int n = tile.size_px;
  int c = tile.center();
  GridTile out(n, tile.cell_size_m);
  double th = a * M_PI / 180.0;
  double ct = std::cos(th), st = std::sin(th);
  for (int ti = 0; ti < n; ++ti) {
    for (int tj = 0; tj < n; ++tj) {
      double dx = tj - c, dy = ti - c;
      double sx = ct * dx + st * dy;
      double sy = -st * dx + ct * dy;
      double gr = c + sy, gc = c + sx;
      int r0 = static_cast<int>(std::floor(gr));
      int c0 = static_cast<int>(std::floor(gc));
      double fr = gr - r0, fc = gc - c0;
      double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc),
                       fr * fc};
      int rows[4] = {r0, r0, r0 + 1, r0 + 1};
      int cols[4] = {c0, c0 + 1, c0, c0 + 1};
      double sum = 0.0;
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) {
        if (wts[k] <= 0.0) continue;
        int r = rows[k], q = cols[k];
        if (r < 0 || r >= n || q < 0 || q >= n || !tile.valid(r, q))
          ok = false;
        else
          sum += wts[k] * tile.at(r, q);
      }
      if (ok) out.set(ti, tj, sum);
    }
  }
  return out;
}

TerrainProfile terrain_profile(const ElevationMap& map, double x1, double y1,
                               double x2, double y2, int n_points) {
  if (n_points < 2) throw input_error("terrain_profile: need n_points >= 2");
  TerrainProfile prof;
  prof.total_length_m = std::hypot(x2 - x1, y2 - y1);
  if (!(prof.total_length_m > 0.0))
    throw domain_error("terrain_profile: endpoints coincide");
  prof.points.resize(n_points);
  for (int k = 0; k < n_points; ++k) {
    double t = static_cast<double>(k) / (n_points - 1);
    double x = x1 + t * (x2 - x1);
    double y = y1 + t * (y2 - y1);
    bool hit = false;
    double h = height_at(map, x, y, &hit);
    prof.touched_nodata = prof.touched_nodata || hit;
    prof.points[k] = {t * prof.total_length_m, h};
  }
  return prof;
}

}  // namespace pgr::geo
