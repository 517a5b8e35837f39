#include "pgr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "pgr/errors.hpp"
#include "pgr/rng.hpp"

namespace pgr::dataset {

double normalize_pg(double pg_db) {
  return std::clamp((pg_db + 250.0) / 200.0, 0.0, 1.0);
}

double denormalize_pg(double value) { return value * 200.0 - 250.0; }

std::vector<Sample> build_scenario(const geo::ElevationMap& map, double tx_x,
                                   double tx_y, int scenario_id,
                                   const ScenarioOptions& opts, int n_augment,
                                   uint64_t seed) {
  if (n_augment < 1)
    throw input_error("build_scenario: n_augment must be >= 1");

  geo::GridTile elevation = geo::crop_tile(map, tx_x, tx_y, opts.tile_px);
  geo::GridTile estimate =
      prop::rough_estimate(map, tx_x, tx_y, opts.link, opts.tile_px,
                           opts.coarse_factor)
          .tile;
  geo::GridTile target =
      prop::oracle_truth(map, tx_x, tx_y, opts.link, opts.tile_px, opts.oracle)
          .tile;

  rng::Engine eng =
      rng::make_engine(seed, static_cast<uint64_t>(scenario_id));
  if (opts.target_offset_db != 0.0 || opts.target_noise_sd_db > 0.0) {
    for (int i = 0; i < opts.tile_px; ++i)
      for (int j = 0; j < opts.tile_px; ++j) {
        double noise = opts.target_noise_sd_db > 0.0
                           ? rng::normal(eng, 0.0, opts.target_noise_sd_db)
                           : 0.0;
        if (target.valid(i, j))
          target.at(i, j) += opts.target_offset_db + noise;
      }
  }

  std::vector<Sample> samples;
  samples.reserve(n_augment);
  for (int k = 0; k < n_augment; ++k) {
    double angle = k == 0 ? 0.0 : rng::uniform(eng, 0.0, 360.0);
    Sample s;
    s.scenario_id = scenario_id;
    s.rotation_deg = angle;
    s.elevation = k == 0 ? elevation : geo::rotate_tile(elevation, angle);
    s.estimate = k == 0 ? estimate : geo::rotate_tile(estimate, angle);
    s.target = k == 0 ? target : geo::rotate_tile(target, angle);
    s.mask.resize(s.elevation.mask.size());
    for (size_t i = 0; i < s.mask.size(); ++i)
      s.mask[i] = s.elevation.mask[i] && s.estimate.mask[i] &&
                  s.target.mask[i];
    samples.push_back(std::move(s));
  }
  return samples;
}

SplitPlan split_scenarios(const std::vector<int>& scenario_ids, double ratio,
                          uint64_t seed) {
  size_t n = scenario_ids.size();
  if (n < 2) throw input_error("split_scenarios: need at least 2 scenarios");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw input_error("split_scenarios: ratio must be in (0, 1)");
  std::vector<int> ids = scenario_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
    throw input_error("split_scenarios: duplicate scenario ids");
  rng::Engine eng = rng::make_engine(seed, 0x53504c49u);  // split stream
  rng::shuffle(ids, eng);
  size_t n_train = static_cast<size_t>(std::lround(ratio * n));
  if (n_train < 1 || n_train >= n)
    throw domain_error("split_scenarios: split leaves one side empty");
  SplitPlan plan;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.train_ids.assign(ids.begin(), ids.begin() + n_train);
  plan.test_ids.assign(ids.begin() + n_train, ids.end());
  std::sort(plan.train_ids.begin(), plan.train_ids.end());
  std::sort(plan.test_ids.begin(), plan.test_ids.end());
  return plan;
}

std::vector<Sample> select_by_scenario(const std::vector<Sample>& samples,
                                       const std::vector<int>& ids) {
  std::vector<Sample> out;
  for (const Sample& s : samples)
    if (std::find(ids.begin(), ids.end(), s.scenario_id) != ids.end())
      out.push_back(s);
  return out;
}

namespace {

constexpr char kTileMagic[4] = {'P', 'G', 'T', '1'};
constexpr uint8_t kTileVersion = 1;
constexpr uint8_t kDtypeF32 = 1;
constexpr uint8_t kDtypeU8 = 2;

void put_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}

uint32_t get_u32(std::ifstream& f, const std::string& path) {
  uint32_t v = 0;
  if (!f.read(reinterpret_cast<char*>(&v), 4))
    throw input_error("truncated tile file: " + path);
  return v;
}

size_t element_count(const std::vector<uint32_t>& dims,
                     const std::string& path) {
  if (dims.empty()) throw input_error("tile has no dimensions: " + path);
  size_t n = 1;
  for (uint32_t d : dims) {
    if (d == 0) throw input_error("tile has a zero dimension: " + path);
    n *= d;
  }
  return n;
}

void write_tile(const std::string& path, uint8_t dtype,
                const std::vector<uint32_t>& dims, const void* data,
                size_t elem_size) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot write tile: " + path);
  f.write(kTileMagic, 4);
  f.put(static_cast<char>(kTileVersion));
  f.put(static_cast<char>(dtype));
  put_u32(f, static_cast<uint32_t>(dims.size()));
  for (uint32_t d : dims) put_u32(f, d);
  size_t n = element_count(dims, path);
  f.write(reinterpret_cast<const char*>(data),
          static_cast<std::streamsize>(n * elem_size));
  if (!f) throw input_error("tile write failed: " + path);
}

std::vector<char> read_tile(const std::string& path, uint8_t want_dtype,
                            size_t elem_size, std::vector<uint32_t>* dims) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw input_error("cannot open tile: " + path);
  char magic[4];
  if (!f.read(magic, 4) || std::memcmp(magic, kTileMagic, 4) != 0)
    throw input_error("not a tile file: " + path);
  int version = f.get();
  int dtype = f.get();
  if (version != kTileVersion)
    throw input_error("unsupported tile version: " + path);
  if (dtype != want_dtype)
    throw input_error("tile dtype mismatch: " + path);
  uint32_t rank = get_u32(f, path);
  if (rank == 0 || rank > 8)
    throw input_error("bad tile rank: " + path);
  std::vector<uint32_t> d(rank);
  for (uint32_t& x : d) x = get_u32(f, path);
  size_t n = element_count(d, path);
  std::vector<char> payload(n * elem_size);
  if (!f.read(payload.data(), static_cast<std::streamsize>(payload.size())))
    throw input_error("truncated tile payload: " + path);
  if (dims) *dims = std::move(d);
  return payload;
}

}  // namespace

void write_tile_f32(const std::string& path,
                    const std::vector<uint32_t>& dims,
                    const std::vector<float>& data) {
  if (data.size() != element_count(dims, path))
    throw input_error("tile dims do not match payload: " + path);
  write_tile(path, kDtypeF32, dims, data.data(), sizeof(float));
}

std::vector<float> read_tile_f32(const std::string& path,
                                 std::vector<uint32_t>* dims) {
  std::vector<char> raw = read_tile(path, kDtypeF32, sizeof(float), dims);
  std::vector<float> out(raw.size() / sizeof(float));
  std::memcpy(out.data(), raw.data(), raw.size());
  return out;
}

void write_tile_u8(const std::string& path, const std::vector<uint32_t>& dims,
                   const std::vector<uint8_t>& data) {
  if (data.size() != element_count(dims, path))
    throw input_error("tile dims do not match payload: " + path);
  write_tile(path, kDtypeU8, dims, data.data(), 1);
}

std::vector<uint8_t> read_tile_u8(const std::string& path,
                                  std::vector<uint32_t>* dims) {
  std::vector<char> raw = read_tile(path, kDtypeU8, 1, dims);
  return std::vector<uint8_t>(raw.begin(), raw.end());
}

namespace {

// Pixels outside the joint mask are stored and reloaded as zeros.
std::vector<float> tile_to_f32(const geo::GridTile& t,
                               const std::vector<uint8_t>& joint_mask) {
  std::vector<float> v(t.values.size());
  for (size_t i = 0; i < v.size(); ++i)
    v[i] = joint_mask[i] ? static_cast<float>(t.values[i]) : 0.0f;
  return v;
}

geo::GridTile tile_from_parts(int size_px, double cell,
                              const std::vector<float>& values,
                              const std::vector<uint8_t>& mask) {
  geo::GridTile t(size_px, cell);
  for (size_t i = 0; i < t.values.size(); ++i) {
    t.mask[i] = mask[i] ? 1 : 0;
    t.values[i] = t.mask[i] ? values[i] : 0.0;
  }
  return t;
}

std::string sample_prefix(size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%05zu", index);
  return buf;
}

}  // namespace

void write_samples(const std::vector<Sample>& samples,
                   const std::string& dir) {
  int n = samples.empty() ? 0 : samples.front().elevation.size_px;
  double cell = samples.empty() ? 0.0 : samples.front().elevation.cell_size_m;
  for (const Sample& s : samples)
    if (s.elevation.size_px != n || s.estimate.size_px != n ||
        s.target.size_px != n)
      throw input_error("write_samples: inconsistent tile sizes");

  std::filesystem::create_directories(dir);
  std::vector<uint32_t> dims = {static_cast<uint32_t>(n),
                                static_cast<uint32_t>(n)};
  nlohmann::json manifest;
  manifest["format"] = "pgt-dataset";
  manifest["version"] = 1;
  manifest["tile_px"] = n;
  manifest["cell_size_m"] = cell;
  manifest["count"] = samples.size();
  nlohmann::json list = nlohmann::json::array();
  for (size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    std::string prefix = sample_prefix(i);
    std::string base = dir + "/" + prefix;
    write_tile_f32(base + "_elev.pgt", dims, tile_to_f32(s.elevation, s.mask));
    write_tile_f32(base + "_est.pgt", dims, tile_to_f32(s.estimate, s.mask));
    write_tile_f32(base + "_tgt.pgt", dims, tile_to_f32(s.target, s.mask));
    write_tile_u8(base + "_mask.pgt", dims, s.mask);
    nlohmann::json e;
    e["prefix"] = prefix;
    e["scenario_id"] = s.scenario_id;
    e["rotation_deg"] = s.rotation_deg;
    list.push_back(e);
  }
  manifest["samples"] = list;
  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw input_error("cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";
}

std::vector<Sample> read_samples(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw input_error("missing dataset manifest in " + dir);
  nlohmann::json manifest;
  try {
    mf >> manifest;
  } catch (const std::exception& e) {
    throw input_error("bad dataset manifest in " + dir + ": " + e.what());
  }
  if (manifest.value("format", "") != "pgt-dataset")
    throw input_error("not a dataset directory: " + dir);
  int n = manifest.at("tile_px").get<int>();
  double cell = manifest.at("cell_size_m").get<double>();
  size_t want = static_cast<size_t>(n) * n;

  std::vector<Sample> samples;
  for (const auto& e : manifest.at("samples")) {
    std::string base = dir + "/" + e.at("prefix").get<std::string>();
    std::vector<uint32_t> dims;
    Sample s;
    s.scenario_id = e.at("scenario_id").get<int>();
    s.rotation_deg = e.at("rotation_deg").get<double>();
    std::vector<float> elev = read_tile_f32(base + "_elev.pgt", &dims);
    std::vector<float> est = read_tile_f32(base + "_est.pgt", nullptr);
    std::vector<float> tgt = read_tile_f32(base + "_tgt.pgt", nullptr);
    s.mask = read_tile_u8(base + "_mask.pgt", nullptr);
    if (dims.size() != 2 || dims[0] != static_cast<uint32_t>(n) ||
        dims[1] != static_cast<uint32_t>(n) || est.size() != want ||
        tgt.size() != want || s.mask.size() != want)
      throw input_error("sample tiles disagree with manifest: " + base);
    s.elevation = tile_from_parts(n, cell, elev, s.mask);
    s.estimate = tile_from_parts(n, cell, est, s.mask);
    s.target = tile_from_parts(n, cell, tgt, s.mask);
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace pgr::dataset
