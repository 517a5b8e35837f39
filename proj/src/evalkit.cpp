#include "pgr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "pgr/errors.hpp"
#include "pgr/rng.hpp"

namespace pgr::evalkit {

double nrmse(const prop::Heatmap& pred, const prop::Heatmap& truth) {
  const geo::GridTile& a = pred.tile;
  const geo::GridTile& b = truth.tile;
  if (a.size_px != b.size_px) throw input_error("nrmse: tile sizes differ");
  double sum = 0.0;
  size_t n = 0;
  for (size_t i = 0; i < a.values.size(); ++i) {
    if (!a.mask[i] || !b.mask[i]) continue;
    double d = a.values[i] - b.values[i];
    sum += d * d;
    ++n;
  }
  if (n == 0) throw domain_error("nrmse: no jointly valid pixels");
  return std::sqrt(sum / static_cast<double>(n)) / 200.0;
}

EvalReport report_from_errors(std::vector<double> abs_errors_db) {
  if (abs_errors_db.empty())
    throw domain_error("report_from_errors: no errors to pool");
  EvalReport r;
  r.n_pixels = abs_errors_db.size();
  double sq = 0.0;
  for (double e : abs_errors_db) sq += e * e;
  r.rmse_db = std::sqrt(sq / static_cast<double>(r.n_pixels));
  r.nrmse = r.rmse_db / 200.0;

  std::sort(abs_errors_db.begin(), abs_errors_db.end());
  size_t n = abs_errors_db.size();
  r.median_abs_err_db = n % 2 == 1
                            ? abs_errors_db[n / 2]
                            : 0.5 * (abs_errors_db[n / 2 - 1] +
                                     abs_errors_db[n / 2]);
  size_t points = std::min<size_t>(n, 512);
  r.ecdf.reserve(points);
  for (size_t i = 0; i < points; ++i) {
    double q = static_cast<double>(i + 1) / static_cast<double>(points);
    size_t at = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
    r.ecdf.emplace_back(abs_errors_db[std::min(at, n) - 1], q);
  }
  return r;
}

namespace {

void pool_tile_errors(const geo::GridTile& pred, const geo::GridTile& truth,
                      const std::vector<uint8_t>& mask,
                      std::vector<double>& out) {
  for (size_t i = 0; i < mask.size(); ++i) {
    if (!mask[i] || !pred.mask[i] || !truth.mask[i]) continue;
    out.push_back(std::abs(pred.values[i] - truth.values[i]));
  }
}

}  // namespace

EvalReport evaluate_model(const unet::ModelParams& params,
                          const std::vector<dataset::Sample>& samples) {
  if (samples.empty()) throw input_error("evaluate_model: no samples");
  unet::Model<float> model = unet::model_from_params<float>(params);
  unet::Workspace<float> ws;
  std::vector<double> errors;
  for (const dataset::Sample& s : samples) {
    unet::Tensor<float> input =
        unet::assemble_input<float>(s.elevation, s.estimate);
    unet::Tensor<float> out = model.forward(input, ws);
    int n = s.elevation.size_px;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        size_t k = static_cast<size_t>(i) * n + j;
        if (!s.mask[k]) continue;
        double pred = dataset::denormalize_pg(out.v[k]);
        errors.push_back(std::abs(pred - s.target.values[k]));
      }
  }
  return report_from_errors(std::move(errors));
}

EvalReport evaluate_baseline(const std::vector<dataset::Sample>& samples) {
  if (samples.empty()) throw input_error("evaluate_baseline: no samples");
  std::vector<double> errors;
  for (const dataset::Sample& s : samples)
    pool_tile_errors(s.estimate, s.target, s.mask, errors);
  return report_from_errors(std::move(errors));
}

CompareResult baseline_compare(const unet::ModelParams& params,
                               const std::vector<dataset::Sample>& samples) {
  CompareResult r;
  r.model = evaluate_model(params, samples);
  r.baseline = evaluate_baseline(samples);
  r.nrmse_ratio = r.baseline.nrmse > 0.0 ? r.model.nrmse / r.baseline.nrmse
                                         : 0.0;
  return r;
}

std::vector<SweepPoint> split_sweep(const std::vector<dataset::Sample>& samples,
                                    const std::vector<double>& ratios,
                                    int repeats, const unet::TrainConfig& cfg,
                                    uint64_t seed) {
  if (repeats < 1) throw input_error("split_sweep: repeats must be >= 1");
  if (ratios.empty()) throw input_error("split_sweep: no ratios");
  std::vector<int> ids;
  for (const dataset::Sample& s : samples)
    if (std::find(ids.begin(), ids.end(), s.scenario_id) == ids.end())
      ids.push_back(s.scenario_id);

  std::vector<SweepPoint> points;
  for (size_t ri = 0; ri < ratios.size(); ++ri) {
    SweepPoint pt;
    pt.ratio = ratios[ri];
    pt.repeats = repeats;
    std::vector<double> scores;
    for (int rep = 0; rep < repeats; ++rep) {
      uint64_t run_seed = rng::mix(seed ^ (ri * 1000003ull + rep + 1));
      dataset::SplitPlan plan =
          dataset::split_scenarios(ids, ratios[ri], run_seed);
      std::vector<dataset::Sample> train_set =
          dataset::select_by_scenario(samples, plan.train_ids);
      std::vector<dataset::Sample> test_set =
          dataset::select_by_scenario(samples, plan.test_ids);
      unet::TrainConfig run_cfg = cfg;
      run_cfg.seed = run_seed;
      unet::TrainResult tr = unet::train(train_set, run_cfg);
      scores.push_back(evaluate_model(tr.params, test_set).nrmse);
      pt.n_train_scenarios = static_cast<int>(plan.train_ids.size());
      pt.n_test_scenarios = static_cast<int>(plan.test_ids.size());
    }
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(scores.size());
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    pt.mean_nrmse = mean;
    pt.sd_nrmse = scores.size() > 1
                      ? std::sqrt(var / static_cast<double>(scores.size() - 1))
                      : 0.0;
    points.push_back(pt);
  }
  return points;
}

RefineResult refine_experiment(const unet::ModelParams& pretrained,
                               const std::vector<dataset::Sample>& measurement,
                               double holdout_fraction,
                               const unet::TrainConfig& cfg, uint64_t seed) {
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0))
    throw input_error("refine_experiment: holdout_fraction must be in (0,1)");
  std::vector<int> ids;
  for (const dataset::Sample& s : measurement)
    if (std::find(ids.begin(), ids.end(), s.scenario_id) == ids.end())
      ids.push_back(s.scenario_id);
  // Train side of the split is the adaptation set.
  dataset::SplitPlan plan =
      dataset::split_scenarios(ids, 1.0 - holdout_fraction, seed);
  std::vector<dataset::Sample> adapt =
      dataset::select_by_scenario(measurement, plan.train_ids);
  std::vector<dataset::Sample> holdout =
      dataset::select_by_scenario(measurement, plan.test_ids);

  RefineResult r;
  r.before = evaluate_model(pretrained, holdout);
  unet::TrainConfig run_cfg = cfg;
  run_cfg.seed = seed;
  unet::TrainResult tr = unet::train_from(pretrained, adapt, run_cfg);
  r.refined = std::move(tr.params);
  r.after = evaluate_model(r.refined, holdout);
  return r;
}

void write_report_json(const EvalReport& report, const std::string& path) {
  nlohmann::json j;
  j["n_pixels"] = report.n_pixels;
  j["rmse_db"] = report.rmse_db;
  j["nrmse"] = report.nrmse;
  j["median_abs_err_db"] = report.median_abs_err_db;
  nlohmann::json curve = nlohmann::json::array();
  for (const auto& [err, frac] : report.ecdf)
    curve.push_back({{"abs_err_db", err}, {"fraction", frac}});
  j["ecdf"] = curve;
  std::ofstream f(path);
  if (!f) throw input_error("cannot write report: " + path);
  f << j.dump(2) << "\n";
}

void write_ecdf_csv(const EvalReport& report, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw input_error("cannot write ecdf: " + path);
  f << "abs_err_db,fraction\n";
  char buf[64];
  for (const auto& [err, frac] : report.ecdf) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f\n", err, frac);
    f << buf;
  }
}

void write_sweep_csv(const std::vector<SweepPoint>& points,
                     const std::string& path) {
  std::ofstream f(path);
  if (!f) throw input_error("cannot write sweep: " + path);
  f << "ratio,repeats,mean_nrmse,sd_nrmse,n_train_scenarios,n_test_scenarios\n";
  char buf[160];
  for (const SweepPoint& p : points) {
    std::snprintf(buf, sizeof buf, "%.4f,%d,%.8f,%.8f,%d,%d\n", p.ratio,
                  p.repeats, p.mean_nrmse, p.sd_nrmse, p.n_train_scenarios,
                  p.n_test_scenarios);
    f << buf;
  }
}

}  // namespace pgr::evalkit
