#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgr/geodata.hpp"
#include "pgr/propagate.hpp"

namespace pgr::dataset {

// Path gain in [-250, -50] dB maps linearly onto [0, 1]; values outside
// the range clamp.
double normalize_pg(double pg_db);
double denormalize_pg(double value);

// One training example: co-registered elevation (m), coarse estimate
// (dB) and target (dB) tiles, plus the intersection of their masks.
struct Sample {
  int scenario_id = 0;
  double rotation_deg = 0.0;
  geo::GridTile elevation;
  geo::GridTile estimate;
  geo::GridTile target;
  std::vector<uint8_t> mask;
};

struct ScenarioOptions {
  prop::LinkGeometry link;
  int tile_px = 100;
  int coarse_factor = 4;
  prop::OracleOptions oracle;
  // Measurement-like corruption of the target: a constant bias plus
  // iid Gaussian noise on valid pixels.
  double target_offset_db = 0.0;
  double target_noise_sd_db = 0.0;
};

// Crops the elevation tile, runs both generators, applies target
// corruption, and emits n_augment samples: the unrotated tile plus
// n_augment-1 random rotations uniform in [0, 360). The seed and
// scenario id fix noise and angles.
std::vector<Sample> build_scenario(const geo::ElevationMap& map, double tx_x,
                                   double tx_y, int scenario_id,
                                   const ScenarioOptions& opts, int n_augment,
                                   uint64_t seed);

struct SplitPlan {
  std::vector<int> train_ids;
  std::vector<int> test_ids;
  double ratio = 0.0;
  uint64_t seed = 0;
};

// Seeded shuffle of scenario ids; round(ratio*n) go to train. Requires
// 0 < ratio < 1 and n >= 2; throws domain_error if a side ends up empty.
SplitPlan split_scenarios(const std::vector<int>& scenario_ids, double ratio,
                          uint64_t seed);

// Samples whose scenario_id is in `ids`, original order preserved.
std::vector<Sample> select_by_scenario(const std::vector<Sample>& samples,
                                       const std::vector<int>& ids);

// Binary tile container: magic "PGT1", version byte, dtype byte
// (1 = float32 LE, 2 = uint8), u32 rank, u32 dims, row-major payload.
void write_tile_f32(const std::string& path,
                    const std::vector<uint32_t>& dims,
                    const std::vector<float>& data);
std::vector<float> read_tile_f32(const std::string& path,
                                 std::vector<uint32_t>* dims);
void write_tile_u8(const std::string& path, const std::vector<uint32_t>& dims,
                   const std::vector<uint8_t>& data);
std::vector<uint8_t> read_tile_u8(const std::string& path,
                                  std::vector<uint32_t>* dims);

// Dataset directory: manifest.json plus four tile files per sample
// (elevation and the two dB grids as float32, the joint mask as uint8).
void write_samples(const std::vector<Sample>& samples, const std::string& dir);
std::vector<Sample> read_samples(const std::string& dir);

}  // namespace pgr::dataset
