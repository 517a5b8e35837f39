#pragma once

#include <string>
#include <vector>

#include "pgr/dataset.hpp"
#include "pgr/propagate.hpp"
#include "pgr/unet.hpp"

namespace pgr::evalkit {

// Error statistics pooled over pixels. nrmse is the dB RMSE divided by
// the 200 dB display range; the ECDF holds up to 512 evenly spaced
// quantiles of the absolute dB error as (error, fraction <=) pairs.
struct EvalReport {
  size_t n_pixels = 0;
  double rmse_db = 0.0;
  double nrmse = 0.0;
  double median_abs_err_db = 0.0;
  std::vector<std::pair<double, double>> ecdf;
};

// Normalized RMSE between two heatmaps over their joint mask.
double nrmse(const prop::Heatmap& pred, const prop::Heatmap& truth);

EvalReport report_from_errors(std::vector<double> abs_errors_db);

// Model predictions against sample targets, pooled over all pixels.
EvalReport evaluate_model(const unet::ModelParams& params,
                          const std::vector<dataset::Sample>& samples);

// The coarse estimates against the same targets.
EvalReport evaluate_baseline(const std::vector<dataset::Sample>& samples);

struct CompareResult {
  EvalReport model;
  EvalReport baseline;
  double nrmse_ratio = 0.0;  // model / baseline
};

CompareResult baseline_compare(const unet::ModelParams& params,
                               const std::vector<dataset::Sample>& samples);

struct SweepPoint {
  double ratio = 0.0;
  int repeats = 0;
  double mean_nrmse = 0.0;
  double sd_nrmse = 0.0;  // sample standard deviation, 0 for one repeat
  int n_train_scenarios = 0;
  int n_test_scenarios = 0;
};

// For each train ratio: `repeats` fresh scenario splits, a model
// trained from scratch on each train side, and the test-side nrmse
// aggregated across repeats. Splits, init and shuffling all derive
// from `seed`.
std::vector<SweepPoint> split_sweep(const std::vector<dataset::Sample>& samples,
                                    const std::vector<double>& ratios,
                                    int repeats, const unet::TrainConfig& cfg,
                                    uint64_t seed);

struct RefineResult {
  EvalReport before;
  EvalReport after;
  unet::ModelParams refined;
};

// Domain adaptation: hold out `holdout_fraction` of the measurement
// scenarios, evaluate the pretrained model on them, fine-tune on the
// rest, evaluate again.
RefineResult refine_experiment(const unet::ModelParams& pretrained,
                               const std::vector<dataset::Sample>& measurement,
                               double holdout_fraction,
                               const unet::TrainConfig& cfg, uint64_t seed);

void write_report_json(const EvalReport& report, const std::string& path);
void write_ecdf_csv(const EvalReport& report, const std::string& path);
void write_sweep_csv(const std::vector<SweepPoint>& points,
                     const std::string& path);

}  // namespace pgr::evalkit
