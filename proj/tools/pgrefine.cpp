#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <CLI11.hpp>

#include "pgr/dataset.hpp"
#include "pgr/errors.hpp"
#include "pgr/evalkit.hpp"
#include "pgr/geodata.hpp"
#include "pgr/manifest.hpp"
#include "pgr/propagate.hpp"
#include "pgr/rng.hpp"
#include "pgr/sounder.hpp"
#include "pgr/synthscene.hpp"
#include "pgr/unet.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using pgr::cli::RunManifest;

RunManifest start_manifest(const std::string& command,
                           const std::vector<std::string>& args,
                           uint64_t seed) {
  RunManifest m;
  m.command = command;
  m.args = args;
  m.master_seed = seed;
  m.started_at = std::time(nullptr);
  return m;
}

void apply_threads(int n) {
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#else
  (void)n;
#endif
}

// TX list CSV: header "x_m,y_m", one transmitter per row.
std::vector<std::pair<double, double>> load_tx_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw pgr::input_error("cannot open TX list: " + path);
  std::string line;
  if (!std::getline(f, line) || line.rfind("x_m,y_m", 0) != 0)
    throw pgr::parse_error(path + ":1: expected header x_m,y_m");
  std::vector<std::pair<double, double>> txs;
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    double x = 0.0, y = 0.0;
    char extra = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf%c", &x, &y, &extra) < 2)
      throw pgr::parse_error(path + ":" + std::to_string(line_no) +
                             ": expected x_m,y_m");
    txs.emplace_back(x, y);
  }
  if (txs.empty()) throw pgr::input_error("TX list has no rows: " + path);
  return txs;
}

// ------------------------------------------------------------------ gen

struct GenOpts {
  std::string out_dir;
  std::string map_path;  // empty: one random map per scenario
  std::string tx_file;
  int scenarios = 8;
  uint64_t seed = 0;
  int tile_px = 100;
  int coarse_factor = 4;
  int augment = 1;
  int map_px = 160;
  double cell_m = 1.929;
  double freq_hz = 910e6;
  double tx_agl = 2.0;
  double rx_agl = 1.5;
  double offset_range_db = 0.0;
  double noise_sd_db = 0.0;
  bool no_two_ray = false;
  bool pngs = false;
  bool save_maps = false;
};

int run_gen(const GenOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("gen", args, o.seed);
  pgr::dataset::SceneSpec scene;
  scene.map_px = o.map_px;
  scene.cell_size_m = o.cell_m;

  pgr::dataset::ScenarioOptions so;
  so.link.frequency_hz = o.freq_hz;
  so.link.tx_height_agl_m = o.tx_agl;
  so.link.rx_height_agl_m = o.rx_agl;
  so.tile_px = o.tile_px;
  so.coarse_factor = o.coarse_factor;
  so.oracle.two_ray = !o.no_two_ray;
  so.target_noise_sd_db = o.noise_sd_db;

  bool fixed_map = !o.map_path.empty();
  if (fixed_map != !o.tx_file.empty())
    throw pgr::input_error("gen: --map and --tx-file go together");
  pgr::geo::ElevationMap base;
  std::vector<std::pair<double, double>> txs;
  if (fixed_map) {
    man.add_input(o.map_path);
    man.add_input(o.tx_file);
    base = pgr::geo::load_elevation(o.map_path);
    txs = load_tx_csv(o.tx_file);
  }
  int n_scen = fixed_map ? static_cast<int>(txs.size()) : o.scenarios;

  pgr::rng::Engine offset_eng = pgr::rng::make_engine(o.seed, 0x4f464653u);
  std::filesystem::create_directories(o.out_dir);

  std::vector<pgr::dataset::Sample> all;
  pgr::geo::ElevationMap random_map;
  for (int s = 0; s < n_scen; ++s) {
    uint64_t scen_seed = o.seed + static_cast<uint64_t>(s);
    double tx_x = 0.0, tx_y = 0.0;
    if (fixed_map) {
      std::tie(tx_x, tx_y) = txs[s];
    } else {
      random_map = pgr::dataset::make_random_map(scen_seed, scene);
      std::tie(tx_x, tx_y) =
          pgr::dataset::choose_tx(random_map, o.tile_px, scen_seed);
    }
    const pgr::geo::ElevationMap& map = fixed_map ? base : random_map;
    so.target_offset_db =
        o.offset_range_db > 0.0
            ? pgr::rng::uniform(offset_eng, -o.offset_range_db,
                                o.offset_range_db)
            : 0.0;
    std::vector<pgr::dataset::Sample> samples = pgr::dataset::build_scenario(
        map, tx_x, tx_y, s, so, o.augment, o.seed);
    if (o.save_maps && !fixed_map) {
      char name[64];
      std::snprintf(name, sizeof name, "map_s%04d.asc", s);
      pgr::geo::save_elevation(map, o.out_dir + "/" + name);
    }
    if (o.pngs) {
      char name[64];
      pgr::prop::Heatmap hm;
      hm.generator = pgr::prop::Generator::oracle;
      hm.tile = samples.front().target;
      std::snprintf(name, sizeof name, "target_s%04d.png", s);
      pgr::prop::write_heatmap_png(hm, o.out_dir + "/" + name);
      hm.generator = pgr::prop::Generator::rough;
      hm.tile = samples.front().estimate;
      std::snprintf(name, sizeof name, "estimate_s%04d.png", s);
      pgr::prop::write_heatmap_png(hm, o.out_dir + "/" + name);
    }
    for (auto& smp : samples) all.push_back(std::move(smp));
  }
  pgr::dataset::write_samples(all, o.out_dir);
  man.write(o.out_dir + "/run_manifest.json");
  std::printf("wrote %zu samples from %d scenarios to %s\n", all.size(),
              n_scen, o.out_dir.c_str());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
  std::string data_dir;
  std::string out_model;
  std::string report;
  int epochs = 20;
  int batch = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
  double split_ratio = 0.0;  // 0 = train on everything
  uint64_t split_seed = 1;
  bool verbose = false;
};

int run_train(const TrainOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("train", args, o.seed);
  man.add_input(o.data_dir + "/manifest.json");
  std::vector<pgr::dataset::Sample> samples =
      pgr::dataset::read_samples(o.data_dir);

  std::vector<pgr::dataset::Sample> train_set = samples;
  std::vector<pgr::dataset::Sample> test_set;
  if (o.split_ratio > 0.0) {
    std::vector<int> ids;
    for (const auto& s : samples)
      if (std::find(ids.begin(), ids.end(), s.scenario_id) == ids.end())
        ids.push_back(s.scenario_id);
    pgr::dataset::SplitPlan plan =
        pgr::dataset::split_scenarios(ids, o.split_ratio, o.split_seed);
    train_set = pgr::dataset::select_by_scenario(samples, plan.train_ids);
    test_set = pgr::dataset::select_by_scenario(samples, plan.test_ids);
  }

  pgr::unet::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  cfg.seed = o.seed;
  cfg.verbose = o.verbose;
  pgr::unet::TrainResult result = pgr::unet::train(train_set, cfg);
  pgr::unet::save_params(result.params, o.out_model);

  {
    std::ofstream hist(o.out_model + ".history.csv");
    if (!hist)
      throw pgr::input_error("cannot write " + o.out_model + ".history.csv");
    hist << "epoch,loss\n";
    for (size_t i = 0; i < result.epoch_loss.size(); ++i) {
      char row[64];
      std::snprintf(row, sizeof row, "%zu,%.17g\n", i + 1,
                    result.epoch_loss[i]);
      hist << row;
    }
  }

  nlohmann::json rep;
  rep["epochs"] = o.epochs;
  rep["train_samples"] = train_set.size();
  rep["epoch_loss"] = result.epoch_loss;
  if (!test_set.empty()) {
    pgr::evalkit::CompareResult cmp =
        pgr::evalkit::baseline_compare(result.params, test_set);
    rep["test_nrmse_model"] = cmp.model.nrmse;
    rep["test_nrmse_baseline"] = cmp.baseline.nrmse;
    rep["test_nrmse_ratio"] = cmp.nrmse_ratio;
    std::printf("test nrmse: model %.5f baseline %.5f ratio %.3f\n",
                cmp.model.nrmse, cmp.baseline.nrmse, cmp.nrmse_ratio);
  }
  if (!o.report.empty()) {
    std::ofstream f(o.report);
    if (!f) throw pgr::input_error("cannot write report: " + o.report);
    f << rep.dump(2) << "\n";
  }
  man.write(o.out_model + ".manifest.json");
  std::printf("model written to %s (final loss %.6g)\n", o.out_model.c_str(),
              result.epoch_loss.empty() ? 0.0 : result.epoch_loss.back());
  return 0;
}

// -------------------------------------------------------------- predict

struct PredictOpts {
  std::string model;
  std::string map_path;
  double tx_x = 0.0, tx_y = 0.0;
  int tile_px = 100;
  int coarse_factor = 4;
  double freq_hz = 910e6;
  double tx_agl = 2.0;
  double rx_agl = 1.5;
  std::string out_prefix;
  bool pngs = false;
  bool time = false;
};

void write_grid(const pgr::geo::GridTile& tile, const std::string& base) {
  int n = tile.size_px;
  std::vector<uint32_t> dims = {static_cast<uint32_t>(n),
                                static_cast<uint32_t>(n)};
  std::vector<float> vals(tile.values.size());
  for (size_t i = 0; i < vals.size(); ++i)
    vals[i] = static_cast<float>(tile.values[i]);
  pgr::dataset::write_tile_f32(base + ".pgt", dims, vals);
  pgr::dataset::write_tile_u8(base + "_mask.pgt", dims, tile.mask);
}

int run_predict(const PredictOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("predict", args, 0);
  man.add_input(o.model);
  man.add_input(o.map_path);

  pgr::geo::ElevationMap map = pgr::geo::load_elevation(o.map_path);
  pgr::prop::LinkGeometry link{o.freq_hz, o.tx_agl, o.rx_agl};
  auto t0 = std::chrono::steady_clock::now();
  pgr::prop::Heatmap rough = pgr::prop::rough_estimate(
      map, o.tx_x, o.tx_y, link, o.tile_px, o.coarse_factor);
  auto t1 = std::chrono::steady_clock::now();
  pgr::geo::GridTile elev =
      pgr::geo::crop_tile(map, o.tx_x, o.tx_y, o.tile_px);
  pgr::unet::ModelParams params = pgr::unet::load_params(o.model);
  auto t2 = std::chrono::steady_clock::now();
  pgr::prop::Heatmap refined = pgr::unet::predict(params, elev, rough.tile);
  auto t3 = std::chrono::steady_clock::now();
  if (o.time) {
    auto ms = [](auto a, auto b) {
      return std::chrono::duration<double, std::milli>(b - a).count();
    };
    std::printf("timing: rough_estimate %.1f ms, refine %.1f ms\n",
                ms(t0, t1), ms(t2, t3));
  }

  write_grid(rough.tile, o.out_prefix + "_estimate");
  write_grid(refined.tile, o.out_prefix + "_refined");
  if (o.pngs) {
    pgr::prop::write_heatmap_png(rough, o.out_prefix + "_estimate.png");
    pgr::prop::write_heatmap_png(refined, o.out_prefix + "_refined.png");
  }
  man.write(o.out_prefix + ".manifest.json");
  std::printf("wrote %s_estimate.pgt and %s_refined.pgt\n",
              o.out_prefix.c_str(), o.out_prefix.c_str());
  return 0;
}

// ----------------------------------------------------------------- eval

struct EvalOpts {
  std::string model;
  std::string data_dir;
  std::string pred_dir;   // tile-directory mode: compare two .pgt trees
  std::string truth_dir;
  std::string report;
  std::string ecdf;
  double split_ratio = 0.0;  // evaluate the test side of this split
  uint64_t split_seed = 1;
};

// Pools |pred - truth| over all .pgt tiles present in both directories,
// honoring per-tile "<stem>_mask.pgt" masks when both sides have one.
int run_eval_dirs(const EvalOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("eval", args, 0);
  namespace fs = std::filesystem;
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(o.pred_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string name = entry.path().filename().string();
    if (name.size() < 4 || name.substr(name.size() - 4) != ".pgt") continue;
    if (name.size() > 9 && name.substr(name.size() - 9) == "_mask.pgt")
      continue;
    names.push_back(name);
  }
  std::sort(names.begin(), names.end());
  if (names.empty())
    throw pgr::input_error("no .pgt tiles in " + o.pred_dir);

  std::vector<double> errors;
  for (const std::string& name : names) {
    std::vector<uint32_t> pd, td;
    std::vector<float> pred =
        pgr::dataset::read_tile_f32(o.pred_dir + "/" + name, &pd);
    std::vector<float> truth =
        pgr::dataset::read_tile_f32(o.truth_dir + "/" + name, &td);
    if (pd != td)
      throw pgr::input_error("tile shape mismatch for " + name);
    std::string mask_name = name.substr(0, name.size() - 4) + "_mask.pgt";
    std::vector<uint8_t> mask(pred.size(), 1);
    if (fs::exists(o.pred_dir + "/" + mask_name) &&
        fs::exists(o.truth_dir + "/" + mask_name)) {
      std::vector<uint8_t> pm =
          pgr::dataset::read_tile_u8(o.pred_dir + "/" + mask_name, nullptr);
      std::vector<uint8_t> tm =
          pgr::dataset::read_tile_u8(o.truth_dir + "/" + mask_name, nullptr);
      if (pm.size() != pred.size() || tm.size() != pred.size())
        throw pgr::input_error("mask shape mismatch for " + name);
      for (size_t i = 0; i < mask.size(); ++i) mask[i] = pm[i] && tm[i];
    }
    for (size_t i = 0; i < pred.size(); ++i)
      if (mask[i]) errors.push_back(std::abs(double(pred[i]) - truth[i]));
  }
  pgr::evalkit::EvalReport rep =
      pgr::evalkit::report_from_errors(std::move(errors));
  std::printf("tiles %zu pixels %zu\n", names.size(), rep.n_pixels);
  std::printf("nrmse %.5f rmse %.3f dB median |err| %.3f dB\n", rep.nrmse,
              rep.rmse_db, rep.median_abs_err_db);
  std::string primary = o.report.empty() ? o.pred_dir + "/eval" : o.report;
  if (!o.report.empty()) pgr::evalkit::write_report_json(rep, o.report);
  if (!o.ecdf.empty()) pgr::evalkit::write_ecdf_csv(rep, o.ecdf);
  man.write(primary + ".manifest.json");
  return 0;
}

int run_eval(const EvalOpts& o, const std::vector<std::string>& args) {
  if (!o.pred_dir.empty() || !o.truth_dir.empty()) {
    if (o.pred_dir.empty() || o.truth_dir.empty())
      throw pgr::input_error("eval: --pred and --truth go together");
    if (!o.model.empty() || !o.data_dir.empty())
      throw pgr::input_error(
          "eval: --pred/--truth excludes --model/--data");
    return run_eval_dirs(o, args);
  }
  if (o.model.empty() || o.data_dir.empty())
    throw pgr::input_error("eval: need --model and --data, or --pred and --truth");
  RunManifest man = start_manifest("eval", args, o.split_seed);
  man.add_input(o.model);
  man.add_input(o.data_dir + "/manifest.json");

  std::vector<pgr::dataset::Sample> samples =
      pgr::dataset::read_samples(o.data_dir);
  if (o.split_ratio > 0.0) {
    std::vector<int> ids;
    for (const auto& s : samples)
      if (std::find(ids.begin(), ids.end(), s.scenario_id) == ids.end())
        ids.push_back(s.scenario_id);
    pgr::dataset::SplitPlan plan =
        pgr::dataset::split_scenarios(ids, o.split_ratio, o.split_seed);
    samples = pgr::dataset::select_by_scenario(samples, plan.test_ids);
  }
  pgr::unet::ModelParams params = pgr::unet::load_params(o.model);
  pgr::evalkit::CompareResult cmp =
      pgr::evalkit::baseline_compare(params, samples);
  std::printf("pixels %zu\n", cmp.model.n_pixels);
  std::printf("model:    nrmse %.5f rmse %.3f dB median |err| %.3f dB\n",
              cmp.model.nrmse, cmp.model.rmse_db, cmp.model.median_abs_err_db);
  std::printf("baseline: nrmse %.5f rmse %.3f dB median |err| %.3f dB\n",
              cmp.baseline.nrmse, cmp.baseline.rmse_db,
              cmp.baseline.median_abs_err_db);
  std::printf("nrmse ratio (model/baseline) %.3f\n", cmp.nrmse_ratio);

  std::string primary = o.report.empty() ? o.data_dir + "/eval" : o.report;
  if (!o.report.empty()) {
    pgr::evalkit::write_report_json(cmp.model, o.report);
  }
  if (!o.ecdf.empty()) pgr::evalkit::write_ecdf_csv(cmp.model, o.ecdf);
  man.write(primary + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------- sweep

struct SweepOpts {
  std::string data_dir;
  std::string ratios = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9";
  int repeats = 3;
  int epochs = 8;
  int batch = 8;
  double lr = 1e-3;
  uint64_t seed = 0;
  std::string out_csv;
};

int run_sweep(const SweepOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("sweep", args, o.seed);
  man.add_input(o.data_dir + "/manifest.json");

  std::vector<double> ratios;
  std::stringstream ss(o.ratios);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) ratios.push_back(std::stod(tok));

  std::vector<pgr::dataset::Sample> samples =
      pgr::dataset::read_samples(o.data_dir);
  pgr::unet::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  std::vector<pgr::evalkit::SweepPoint> points =
      pgr::evalkit::split_sweep(samples, ratios, o.repeats, cfg, o.seed);
  for (const auto& p : points)
    std::printf("ratio %.3f train %d test %d nrmse %.5f +- %.5f\n", p.ratio,
                p.n_train_scenarios, p.n_test_scenarios, p.mean_nrmse,
                p.sd_nrmse);
  pgr::evalkit::write_sweep_csv(points, o.out_csv);
  man.write(o.out_csv + ".manifest.json");
  return 0;
}

// ---------------------------------------------------------------- sound

struct SoundOpts {
  std::string iq_path;
  std::string gps_path;
  std::string cal_file;
  double chip_rate = 0.0;
  uint64_t code_seed = 1;
  double threshold_db = 3.0;
  int guard = 5;
  double noise_gate_db = 15.0;
  double p_tx_dbm = 0.0, g_amp_db = 0.0, g_ant_db = 0.0;
  double l_cable_db = 0.0, l_att_db = 0.0, p_rx_otc_db = 0.0;
  int smooth_window = 1;
  std::string out_csv;
};

// Calibration JSON keys mirror the CalibrationParams fields; explicit
// flags override file values.
pgr::sounder::CalibrationParams load_cal_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw pgr::input_error("cannot open calibration file: " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const std::exception& e) {
    throw pgr::parse_error("bad calibration JSON " + path + ": " + e.what());
  }
  pgr::sounder::CalibrationParams cal;
  cal.p_tx_dbm = j.value("p_tx_dbm", 0.0);
  cal.g_amp_db = j.value("g_amp_db", 0.0);
  cal.g_ant_db = j.value("g_ant_db", 0.0);
  cal.l_cable_db = j.value("l_cable_db", 0.0);
  cal.l_att_db = j.value("l_att_db", 0.0);
  cal.p_rx_otc_db = j.value("p_rx_otc_db", 0.0);
  return cal;
}

int run_sound(const SoundOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("sound", args, o.code_seed);
  man.add_input(o.iq_path);
  man.add_input(o.iq_path + ".json");
  man.add_input(o.gps_path);
  if (!o.cal_file.empty()) man.add_input(o.cal_file);

  pgr::sounder::SounderConfig cfg;
  cfg.chip_rate_hz = o.chip_rate;
  cfg.codeword_seed = static_cast<uint16_t>(o.code_seed);
  cfg.threshold_db = o.threshold_db;
  cfg.guard = o.guard;
  cfg.noise_gate_db = o.noise_gate_db;
  cfg.cal = {o.p_tx_dbm, o.g_amp_db,   o.g_ant_db,
             o.l_cable_db, o.l_att_db, o.p_rx_otc_db};

  pgr::sounder::PathGainTrace trace =
      pgr::sounder::process_capture(o.iq_path, o.gps_path, cfg);
  if (o.smooth_window > 1)
    trace = pgr::sounder::moving_average(trace, o.smooth_window);
  pgr::sounder::write_trace_csv(trace, o.out_csv);
  man.write(o.out_csv + ".manifest.json");
  std::printf("wrote %zu trace points to %s\n", trace.points.size(),
              o.out_csv.c_str());
  return 0;
}

// --------------------------------------------------------------- refine

struct RefineOpts {
  std::string model;
  std::string data_dir;
  double holdout = 0.5;
  int epochs = 5;
  int batch = 8;
  double lr = 2e-4;
  uint64_t seed = 0;
  std::string out_model;
  std::string report;
};

int run_refine(const RefineOpts& o, const std::vector<std::string>& args) {
  RunManifest man = start_manifest("refine", args, o.seed);
  man.add_input(o.model);
  man.add_input(o.data_dir + "/manifest.json");

  std::vector<pgr::dataset::Sample> samples =
      pgr::dataset::read_samples(o.data_dir);
  pgr::unet::ModelParams params = pgr::unet::load_params(o.model);
  pgr::unet::TrainConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch;
  cfg.learning_rate = o.lr;
  pgr::evalkit::RefineResult r = pgr::evalkit::refine_experiment(
      params, samples, o.holdout, cfg, o.seed);
  pgr::unet::save_params(r.refined, o.out_model);
  std::printf("holdout nrmse before %.5f after %.5f\n", r.before.nrmse,
              r.after.nrmse);
  if (!o.report.empty()) {
    nlohmann::json rep;
    rep["nrmse_before"] = r.before.nrmse;
    rep["nrmse_after"] = r.after.nrmse;
    rep["median_before_db"] = r.before.median_abs_err_db;
    rep["median_after_db"] = r.after.median_abs_err_db;
    std::ofstream f(o.report);
    if (!f) throw pgr::input_error("cannot write report: " + o.report);
    f << rep.dump(2) << "\n";
  }
  man.write(o.out_model + ".manifest.json");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  CLI::App app{"path gain heatmap toolkit: synthesis, sounding, refinement"};
  app.set_version_flag("--version", std::string(pgr::cli::kVersion));
  app.require_subcommand(1);
  int rc = 0;
  int threads = 0;
  app.add_option("--threads", threads, "cap worker threads (0 = default)");

  GenOpts gen;
  CLI::App* g = app.add_subcommand("gen", "synthesize a scenario dataset");
  g->add_option("--out", gen.out_dir, "output dataset directory")->required();
  g->add_option("--map", gen.map_path,
                "elevation grid; scenarios come from --tx-file");
  g->add_option("--tx-file", gen.tx_file, "TX list CSV (x_m,y_m)");
  g->add_option("--random-scenarios,--scenarios", gen.scenarios,
                "number of synthetic scenarios");
  g->add_option("--seed", gen.seed, "master seed");
  g->add_option("--tile-px", gen.tile_px, "tile size in pixels");
  g->add_option("--coarse-factor", gen.coarse_factor, "estimate grid factor");
  g->add_option("--augment", gen.augment, "samples per scenario");
  g->add_option("--map-px", gen.map_px, "synthetic map size in pixels");
  g->add_option("--cell-m", gen.cell_m, "cell size in meters");
  g->add_option("--freq-hz", gen.freq_hz, "carrier frequency");
  g->add_option("--tx-agl", gen.tx_agl, "TX antenna height AGL");
  g->add_option("--rx-agl", gen.rx_agl, "RX antenna height AGL");
  g->add_option("--offset-range-db", gen.offset_range_db,
                "per-scenario uniform target offset range");
  g->add_option("--noise-sd-db", gen.noise_sd_db, "target noise sd");
  g->add_flag("--no-two-ray", gen.no_two_ray, "disable the two-ray term");
  g->add_flag("--pngs", gen.pngs, "write preview PNGs");
  g->add_flag("--save-maps", gen.save_maps, "write elevation grids");
  g->callback([&] {
    apply_threads(threads);
    rc = run_gen(gen, args);
  });

  TrainOpts tr;
  CLI::App* t = app.add_subcommand("train", "train a refiner");
  t->add_option("--data", tr.data_dir, "dataset directory")->required();
  t->add_option("--out", tr.out_model, "output model file")->required();
  t->add_option("--report", tr.report, "metrics JSON path");
  t->add_option("--epochs", tr.epochs, "training epochs");
  t->add_option("--batch", tr.batch, "batch size");
  t->add_option("--lr", tr.lr, "learning rate");
  t->add_option("--seed", tr.seed, "master seed");
  t->add_option("--ratio,--split-ratio", tr.split_ratio,
                "train fraction; rest becomes a test report");
  t->add_option("--split-seed", tr.split_seed, "split seed");
  t->add_flag("--verbose", tr.verbose, "per-epoch loss to stderr");
  t->callback([&] {
    apply_threads(threads);
    rc = run_train(tr, args);
  });

  PredictOpts pr;
  CLI::App* p = app.add_subcommand("predict", "refine one heatmap");
  p->add_option("--model", pr.model, "model file")->required();
  p->add_option("--map", pr.map_path, "elevation grid")->required();
  p->add_option("--tx-x", pr.tx_x, "TX x in map coordinates")->required();
  p->add_option("--tx-y", pr.tx_y, "TX y in map coordinates")->required();
  p->add_option("--tile-px", pr.tile_px, "tile size in pixels");
  p->add_option("--coarse-factor", pr.coarse_factor, "estimate grid factor");
  p->add_option("--freq-hz", pr.freq_hz, "carrier frequency");
  p->add_option("--tx-agl", pr.tx_agl, "TX antenna height AGL");
  p->add_option("--rx-agl", pr.rx_agl, "RX antenna height AGL");
  p->add_option("--out-prefix", pr.out_prefix, "output path prefix")
      ->required();
  p->add_flag("--pngs", pr.pngs, "also write PNG previews");
  p->add_flag("--time", pr.time, "print stage timings");
  p->callback([&] {
    apply_threads(threads);
    rc = run_predict(pr, args);
  });

  EvalOpts ev;
  CLI::App* e = app.add_subcommand("eval", "compare a model to the baseline");
  e->add_option("--model", ev.model, "model file");
  e->add_option("--data", ev.data_dir, "dataset directory");
  e->add_option("--pred", ev.pred_dir, "predicted-tile directory");
  e->add_option("--truth", ev.truth_dir, "truth-tile directory");
  e->add_option("--report", ev.report, "report JSON path");
  e->add_option("--ecdf", ev.ecdf, "ECDF CSV path");
  e->add_option("--split-ratio", ev.split_ratio,
                "evaluate only the test side of this split");
  e->add_option("--split-seed", ev.split_seed, "split seed");
  e->callback([&] {
    apply_threads(threads);
    rc = run_eval(ev, args);
  });

  SweepOpts sw;
  CLI::App* s = app.add_subcommand("sweep", "training-set size sweep");
  s->add_option("--data", sw.data_dir, "dataset directory")->required();
  s->add_option("--ratios", sw.ratios, "comma-separated train ratios");
  s->add_option("--repeats", sw.repeats, "splits per ratio");
  s->add_option("--epochs", sw.epochs, "epochs per run");
  s->add_option("--batch", sw.batch, "batch size");
  s->add_option("--lr", sw.lr, "learning rate");
  s->add_option("--seed", sw.seed, "master seed");
  s->add_option("--out", sw.out_csv, "output CSV")->required();
  s->callback([&] {
    apply_threads(threads);
    rc = run_sweep(sw, args);
  });

  SoundOpts so;
  CLI::App* d = app.add_subcommand("sound", "process a sounding capture");
  d->add_option("--iq", so.iq_path, "IQ capture file")->required();
  d->add_option("--gps", so.gps_path, "GPS track CSV")->required();
  d->add_option("--cal", so.cal_file, "calibration JSON");
  d->add_option("--chip-rate", so.chip_rate, "codeword chip rate Hz")
      ->required();
  d->add_option("--code-seed", so.code_seed, "codeword LFSR seed");
  d->add_option("--threshold-db", so.threshold_db, "peak threshold");
  d->add_option("--guard", so.guard, "peak guard lags");
  d->add_option("--noise-gate-db", so.noise_gate_db,
                "tap power margin over the CIR median");
  d->add_option("--p-tx-dbm", so.p_tx_dbm, "generator power");
  d->add_option("--g-amp-db", so.g_amp_db, "TX amplifier gain");
  d->add_option("--g-ant-db", so.g_ant_db, "combined antenna gain");
  d->add_option("--l-cable-db", so.l_cable_db, "calibration cable loss");
  d->add_option("--l-att-db", so.l_att_db, "calibration attenuators");
  d->add_option("--p-rx-otc-db", so.p_rx_otc_db,
                "digital power of the cabled capture");
  d->add_option("--smooth-window", so.smooth_window, "moving average window");
  d->add_option("--out", so.out_csv, "output trace CSV")->required();
  d->callback([&] {
    apply_threads(threads);
    if (!so.cal_file.empty()) {
      pgr::sounder::CalibrationParams cal = load_cal_json(so.cal_file);
      if (!d->count("--p-tx-dbm")) so.p_tx_dbm = cal.p_tx_dbm;
      if (!d->count("--g-amp-db")) so.g_amp_db = cal.g_amp_db;
      if (!d->count("--g-ant-db")) so.g_ant_db = cal.g_ant_db;
      if (!d->count("--l-cable-db")) so.l_cable_db = cal.l_cable_db;
      if (!d->count("--l-att-db")) so.l_att_db = cal.l_att_db;
      if (!d->count("--p-rx-otc-db")) so.p_rx_otc_db = cal.p_rx_otc_db;
    }
    rc = run_sound(so, args);
  });

  RefineOpts rf;
  CLI::App* r = app.add_subcommand("refine", "adapt a model to new data");
  r->add_option("--model", rf.model, "pretrained model")->required();
  r->add_option("--data", rf.data_dir, "measurement dataset directory")
      ->required();
  r->add_option("--holdout", rf.holdout, "held-out scenario fraction");
  r->add_option("--epochs", rf.epochs, "fine-tuning epochs");
  r->add_option("--batch", rf.batch, "batch size");
  r->add_option("--lr", rf.lr, "fine-tuning learning rate");
  r->add_option("--seed", rf.seed, "master seed");
  r->add_option("--out", rf.out_model, "refined model file")->required();
  r->add_option("--report", rf.report, "report JSON path");
  r->callback([&] {
    apply_threads(threads);
    rc = run_refine(rf, args);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    int code = app.exit(err);
    return code == 0 ? 0 : 2;
  } catch (const pgr::domain_error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 3;
  } catch (const pgr::error& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 2;
  }
  return rc;
}
