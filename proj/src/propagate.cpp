#include "pgr/propagate.hpp"

#include <algorithm>
#include <cmath>

#include "pgr/errors.hpp"
#include "pgr/pngio.hpp"

namespace pgr::prop {

const char* generator_name(Generator g) {
  switch (g) {
    case Generator::rough: return "rough";
    case Generator::oracle: return "oracle";
    case Generator::model: return "model";
    default: return "measurement";
  }
}

double fspl_db(double distance_m, double frequency_hz) {
  if (distance_m <= 0.0) throw domain_error("fspl_db: distance must be > 0");
  if (frequency_hz <= 0.0) throw domain_error("fspl_db: frequency must be > 0");
  double lambda = speed_of_light_m_s / frequency_hz;
  return 20.0 * std::log10(4.0 * M_PI * distance_m / lambda);
}

double fresnel_nu(double h_m, double d1_m, double d2_m, double wavelength_m) {
  if (d1_m <= 0.0 || d2_m <= 0.0)
    throw domain_error("fresnel_nu: sub-path distances must be > 0");
  if (wavelength_m <= 0.0)
    throw domain_error("fresnel_nu: wavelength must be > 0");
  return h_m * std::sqrt(2.0 * (d1_m + d2_m) / (wavelength_m * d1_m * d2_m));
}

double knife_edge_loss_db(double nu) {
  if (nu <= -0.78) return 0.0;
  double t = nu - 0.1;
  return 6.9 + 20.0 * std::log10(std::sqrt(t * t + 1.0) + t);
}

namespace {

// Largest-nu interior sample of profile[a..b] against the straight line
// between (x_a, za) and (x_b, zb). Returns -1 if the span has no interior.
int principal_edge(const std::vector<geo::ProfilePoint>& pts, int a, int b,
                   double za, double zb, double wavelength_m, double* nu_out) {
  double xa = pts[a].distance_m, xb = pts[b].distance_m;
  double span = xb - xa;
  int best = -1;
  double best_nu = 0.0;
  for (int k = a + 1; k < b; ++k) {
    double d1 = pts[k].distance_m - xa;
    double d2 = xb - pts[k].distance_m;
    if (d1 <= 0.0 || d2 <= 0.0) continue;
    double line_z = za + (zb - za) * d1 / span;
    double nu = fresnel_nu(pts[k].height_m - line_z, d1, d2, wavelength_m);
    if (best < 0 || nu > best_nu) {
      best = k;
      best_nu = nu;
    }
  }
  if (best >= 0 && nu_out) *nu_out = best_nu;
  return best;
}

double deygout(const std::vector<geo::ProfilePoint>& pts, int a, int b,
               double za, double zb, double wavelength_m, int depth) {
  if (depth < 0 || b - a < 2) return 0.0;
  double nu = 0.0;
  int k = principal_edge(pts, a, b, za, zb, wavelength_m, &nu);
  if (k < 0 || nu <= -0.78) return 0.0;
  double zk = pts[k].height_m;
  return knife_edge_loss_db(nu) +
         deygout(pts, a, k, za, zk, wavelength_m, depth - 1) +
         deygout(pts, k, b, zk, zb, wavelength_m, depth - 1);
}

}  // namespace

double diffraction_loss_db(const std::vector<geo::ProfilePoint>& profile,
                           double z_tx_m, double z_rx_m, double wavelength_m,
                           int max_edges) {
  if (profile.size() < 3 || max_edges < 1) return 0.0;
  // depth d admits 2^(d+1)-1 edges: 1 -> 0, 3 -> 1, 7 -> 2, ...
  int depth = static_cast<int>(std::floor(std::log2(max_edges + 1.0))) - 1;
  return deygout(profile, 0, static_cast<int>(profile.size()) - 1, z_tx_m,
                 z_rx_m, wavelength_m, depth);
}

double two_ray_correction_db(double distance_m, double h_tx_agl_m,
                             double h_rx_agl_m, double wavelength_m,
                             double reflection_coeff) {
  if (distance_m <= 0.0)
    throw domain_error("two_ray_correction_db: distance must be > 0");
  double hs = h_tx_agl_m + h_rx_agl_m;
  double hd = h_tx_agl_m - h_rx_agl_m;
  double delta = std::sqrt(distance_m * distance_m + hs * hs) -
                 std::sqrt(distance_m * distance_m + hd * hd);
  double phi = 2.0 * M_PI * delta / wavelength_m;
  double re = 1.0 + reflection_coeff * std::cos(phi);
  double im = reflection_coeff * std::sin(phi);
  double mag = std::sqrt(re * re + im * im);
  return 20.0 * std::log10(std::max(mag, 1e-12));
}

namespace {

struct TxPoint {
  double x, y;   // snapped to the center of the TX map cell
  double z;      // antenna height above datum
  int row, col;
};

TxPoint snap_tx(const geo::ElevationMap& map, double tx_x, double tx_y,
                const LinkGeometry& link) {
  int col = static_cast<int>(std::floor((tx_x - map.x0) / map.cell_size_m));
  int row = static_cast<int>(std::floor((tx_y - map.y0) / map.cell_size_m));
  if (!map.in_bounds(row, col))
    throw domain_error("transmitter position is outside the map");
  if (map.is_nodata(row, col))
    throw domain_error("transmitter position falls on a nodata cell");
  TxPoint tx;
  tx.row = row;
  tx.col = col;
  tx.x = map.x_of_col(col);
  tx.y = map.y_of_row(row);
  tx.z = map.at(row, col) + link.tx_height_agl_m;
  return tx;
}

struct PointPg {
  double pg_db = 0.0;
  bool valid = false;
};

// Path gain from the snapped TX to an arbitrary map point. Horizontal
// distance, floored at half a cell for the degenerate center link.
PointPg point_path_gain(const geo::ElevationMap& map, const TxPoint& tx,
                        double x, double y, const LinkGeometry& link,
                        bool two_ray, double reflection_coeff, int max_edges) {
  PointPg out;
  bool rx_bad = false;
  geo::height_at(map, x, y, &rx_bad);
  if (rx_bad) return out;

  double lambda = link.wavelength_m();
  double d = std::hypot(x - tx.x, y - tx.y);
  double d_eff = std::max(d, 0.5 * map.cell_size_m);
  double pg = -fspl_db(d_eff, link.frequency_hz);
  double diff_loss = 0.0;
  if (d > 0.0) {
    int n = std::max(16, static_cast<int>(std::ceil(d / map.cell_size_m)) + 1);
    geo::TerrainProfile prof = geo::terrain_profile(map, tx.x, tx.y, x, y, n);
    if (prof.touched_nodata) return out;
    double z_rx = prof.points.back().height_m + link.rx_height_agl_m;
    diff_loss =
        diffraction_loss_db(prof.points, tx.z, z_rx, lambda, max_edges);
    pg -= diff_loss;
  }
  if (two_ray && diff_loss == 0.0)
    pg += two_ray_correction_db(d_eff, link.tx_height_agl_m,
                                link.rx_height_agl_m, lambda,
                                reflection_coeff);
  out.pg_db = pg;
  out.valid = true;
  return out;
}

}  // namespace

Heatmap oracle_truth(const geo::ElevationMap& map, double tx_x, double tx_y,
                     const LinkGeometry& link, int tile_px,
                     const OracleOptions& opts) {
  if (tile_px <= 0) throw input_error("oracle_truth: tile_px must be > 0");
  TxPoint tx = snap_tx(map, tx_x, tx_y, link);
  Heatmap hm;
  hm.generator = Generator::oracle;
  hm.tile = geo::GridTile(tile_px, map.cell_size_m);
  int c = hm.tile.center();
#pragma omp parallel for schedule(static)
  for (int i = 0; i < tile_px; ++i) {
    for (int j = 0; j < tile_px; ++j) {
      double x = map.x_of_col(tx.col - c + j);
      double y = map.y_of_row(tx.row - c + i);
      PointPg r = point_path_gain(map, tx, x, y, link, opts.two_ray,
                                  opts.reflection_coeff, opts.max_edges);
      if (r.valid) hm.tile.set(i, j, r.pg_db);
    }
  }
  return hm;
}

Heatmap rough_estimate(const geo::ElevationMap& map, double tx_x, double tx_y,
                       const LinkGeometry& link, int tile_px,
                       int coarse_factor) {
  if (tile_px <= 0) throw input_error("rough_estimate: tile_px must be > 0");
  if (coarse_factor < 1 || tile_px % coarse_factor != 0)
    throw input_error(
        "rough_estimate: coarse_factor must divide tile_px");
  TxPoint tx = snap_tx(map, tx_x, tx_y, link);
  int m = tile_px / coarse_factor;
  geo::GridTile coarse(m, map.cell_size_m * coarse_factor);
  int c = tile_px / 2;
#pragma omp parallel for schedule(static)
  for (int bi = 0; bi < m; ++bi) {
    for (int bj = 0; bj < m; ++bj) {
      // Node (bi, bj) sits at fine-pixel coordinate (bi+0.5)*f - 0.5.
      double pi = (bi + 0.5) * coarse_factor - 0.5;
      double pj = (bj + 0.5) * coarse_factor - 0.5;
      double x = map.x0 + (tx.col - c + pj + 0.5) * map.cell_size_m;
      double y = map.y0 + (tx.row - c + pi + 0.5) * map.cell_size_m;
      PointPg r = point_path_gain(map, tx, x, y, link, false, 0.0, 1);
      if (r.valid) coarse.set(bi, bj, r.pg_db);
    }
  }
  Heatmap hm;
  hm.generator = Generator::rough;
  hm.tile = upsample_bilinear(coarse, coarse_factor);
  hm.tile.cell_size_m = map.cell_size_m;
  return hm;
}

geo::GridTile upsample_bilinear(const geo::GridTile& coarse, int factor) {
  if (factor < 1) throw input_error("upsample_bilinear: factor must be >= 1");
  if (factor == 1) return coarse;
  int m = coarse.size_px;
  int n = m * factor;
  geo::GridTile out(n, coarse.cell_size_m / factor);
  for (int i = 0; i < n; ++i) {
    double gi = (i + 0.5) / factor - 0.5;
    int r0 = static_cast<int>(std::floor(gi));
    double fr = gi - r0;
    for (int j = 0; j < n; ++j) {
      double gj = (j + 0.5) / factor - 0.5;
      int c0 = static_cast<int>(std::floor(gj));
      double fc = gj - c0;
      double wts[4] = {(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc),
                       fr * fc};
      int rows[4] = {r0, r0, r0 + 1, r0 + 1};
      int cols[4] = {c0, c0 + 1, c0, c0 + 1};
      double sum = 0.0;
      bool ok = true;
      for (int k = 0; k < 4 && ok; ++k) {
        if (wts[k] <= 0.0) continue;
        int r = std::clamp(rows[k], 0, m - 1);
        int q = std::clamp(cols[k], 0, m - 1);
        if (!coarse.valid(r, q))
          ok = false;
        else
          sum += wts[k] * coarse.at(r, q);
      }
      if (ok) out.set(i, j, sum);
    }
  }
  return out;
}

void write_heatmap_png(const Heatmap& map, const std::string& path) {
  int n = map.tile.size_px;
  std::vector<uint8_t> gray(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i) {
    // PNG rows run north to south; tile row 0 is the south edge.
    uint8_t* row = gray.data() + static_cast<size_t>(n - 1 - i) * n;
    for (int j = 0; j < n; ++j) {
      if (!map.tile.valid(i, j)) continue;
      double g = (map.tile.at(i, j) + 250.0) / 200.0 * 255.0;
      row[j] = static_cast<uint8_t>(std::clamp(std::lround(g), 0L, 255L));
    }
  }
  png::write_gray8(path, n, n, gray);
}

}  // namespace pgr::prop
