#pragma once

#include <string>
#include <vector>

#include "pgr/geodata.hpp"

namespace pgr::prop {

inline constexpr double speed_of_light_m_s = 299792458.0;

struct LinkGeometry {
  double frequency_hz = 910e6;
  double tx_height_agl_m = 2.0;
  double rx_height_agl_m = 1.5;
  double wavelength_m() const { return speed_of_light_m_s / frequency_hz; }
};

enum class Generator { rough, oracle, model, measurement };

const char* generator_name(Generator g);

// Square grid of path gain values in dB (negative), one per RX pixel,
// with the TX at the center pixel.
struct Heatmap {
  geo::GridTile tile;
  Generator generator = Generator::rough;
};

// Free-space path loss 20*log10(4*pi*d/lambda), in dB.
double fspl_db(double distance_m, double frequency_hz);

// Knife-edge diffraction parameter nu = h*sqrt(2*(d1+d2)/(lambda*d1*d2)).
// h is the obstruction height above the direct ray, signed.
double fresnel_nu(double h_m, double d1_m, double d2_m, double wavelength_m);

// Approximate knife-edge loss J(nu), zero at and below nu = -0.78.
double knife_edge_loss_db(double nu);

// Diffraction loss over a sampled terrain profile between antennas at
// absolute heights z_tx and z_rx: the principal edge (largest nu) takes
// its knife-edge loss, then each side is solved the same way with the
// edge top as a path endpoint. At most max_edges edges contribute.
double diffraction_loss_db(const std::vector<geo::ProfilePoint>& profile,
                           double z_tx_m, double z_rx_m, double wavelength_m,
                           int max_edges = 3);

// Ground-bounce interference term 20*log10|1 + refl*exp(j*dphi)| added
// to the path gain of unobstructed links; heights are above ground.
double two_ray_correction_db(double distance_m, double h_tx_agl_m,
                             double h_rx_agl_m, double wavelength_m,
                             double reflection_coeff);

struct OracleOptions {
  double reflection_coeff = -0.9;
  bool two_ray = true;
  int max_edges = 3;
};

// Full-physics ground truth: FSPL + recursive multi-edge diffraction,
// plus the two-ray term on links with no diffracting edge. The TX snaps
// to the center of its nearest map cell; link distances are horizontal,
// floored at half a cell.
Heatmap oracle_truth(const geo::ElevationMap& map, double tx_x, double tx_y,
                     const LinkGeometry& link, int tile_px = 100,
                     const OracleOptions& opts = {});

// Coarse physics baseline: FSPL + single principal knife edge, computed
// on a (tile_px/coarse_factor)^2 grid of node points and upsampled
// bilinearly back to full resolution. tile_px must be divisible by
// coarse_factor.
Heatmap rough_estimate(const geo::ElevationMap& map, double tx_x, double tx_y,
                       const LinkGeometry& link, int tile_px = 100,
                       int coarse_factor = 4);

// Bilinear upsampling by an integer factor; input node (I, J) sits at
// output pixel coordinate ((I+0.5)*factor - 0.5). Output pixels whose
// interpolation touches an invalid node are mask-false. factor = 1
// returns the input unchanged.
geo::GridTile upsample_bilinear(const geo::GridTile& coarse, int factor);

// 8-bit grayscale export: -250 dB maps to 0, -50 dB to 255, linear in
// between; invalid pixels render as 0.
void write_heatmap_png(const Heatmap& map, const std::string& path);

}  // namespace pgr::prop
