#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/model.hpp"
#include "mmcast/trainer.hpp"
#include "mmcast/verification.hpp"

namespace mmcast {

/// A trajectory with its split, normalization, climatology and training tensor.
struct ExperimentData {
  Trajectory trajectory;
  DatasetSplit split;
  NormStats norm;
  Climatology climatology;
  std::shared_ptr<const TrainingData> train;
};

ExperimentData prepare_data(Trajectory trajectory, std::array<double, 3> split_fractions,
                            int cycle_length_days);

/// Test-range initializations at the two daily synoptic slots (step 0 and the
/// half-day step), each leaving room for `n_leads` verifying states. Returns
/// `count` evenly spaced picks, or every candidate if there are fewer.
std::vector<std::int64_t> evaluation_initializations(IndexRange test, int n_leads, int count,
                                                     int steps_per_day);

struct Evaluation {
  MetricSeries rmse;
  MetricSeries acc;
  std::vector<std::int64_t> init_time_indices;
};

/// Rolls the model out from every initialization and scores it against the
/// trajectory, streaming so no archive is held in memory.
Evaluation evaluate_model(ForecastModel& model, const ExperimentData& data,
                          const std::vector<std::int64_t>& inits, int n_leads, int batch = 8);

struct AblationConfig {
  ModelConfig model = ModelConfig::compact();
  TrainConfig train;
  int n_leads = 56;
  int n_initializations = 32;
  int min_lead = 24;               // leads compared for the verdict
  double channel_fraction = 0.6;   // share of channels the buffer arm must win
};

struct AblationResult {
  std::string pretrain_hash;
  Evaluation buffer_arm;
  Evaluation plain_arm;
  /// RMSE(plain) - RMSE(buffer) per (channel, lead); positive favours the buffer.
  std::vector<std::vector<double>> rmse_difference;
  std::vector<bool> channel_won;  // mean RMSE over leads >= min_lead is lower with the buffer
  double fraction_won = 0.0;
  bool passed = false;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Pretrains once, then finetunes two arms from the same checkpoint: (a) with
/// the configured replay buffer and (b) with mix_ratio 0, i.e. plain
/// single-step training. Writes runs and tables under `out_dir` when given.
AblationResult run_ablation(const ExperimentData& data, const AblationConfig& cfg,
                            const std::filesystem::path& out_dir = {}, bool force = false,
                            const ProgressFn& progress = {});

void write_difference_table(const std::filesystem::path& path, const AblationResult& result,
                            const std::vector<std::string>& channel_labels, int steps_per_day);

}  // namespace mmcast
