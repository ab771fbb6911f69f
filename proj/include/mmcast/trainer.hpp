#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/manifest.hpp"
#include "mmcast/model.hpp"
#include "mmcast/objective.hpp"
#include "mmcast/replay_buffer.hpp"

namespace mmcast {

struct TrainConfig {
  int batch_size = 8;
  std::int64_t pretrain_steps = 2000;
  std::int64_t finetune_steps = 2000;
  double peak_lr = 3e-4;
  double warmup_fraction = 0.05;  // of each stage, followed by cosine decay to zero
  double clip_norm = 1.0;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t data_seed = 1;
  bool deterministic = true;
  LossConfig loss;
  BufferConfig buffer;

  void validate() const;
  void describe(Manifest& m) const;  // train.*, loss.*, buffer.*
  static TrainConfig from_manifest(const Manifest& m);
};

enum class Stage { Pretrain, Finetune };
std::string to_string(Stage stage);
Stage stage_from_string(const std::string& text);

/// Normalized training states, stacked for fast batch assembly.
struct TrainingData {
  IndexRange range;
  NormStats norm;
  std::vector<double> latitude_weights;
  torch::Tensor states;  // (range.size(), C, W, H), float32

  torch::Tensor state(std::int64_t time_index) const;

  static std::shared_ptr<const TrainingData> from_trajectory(const Trajectory& traj,
                                                             IndexRange range,
                                                             const NormStats& norm);
};

struct StepRecord {
  std::int64_t step = 0;  // 1-based within the stage
  Stage stage = Stage::Pretrain;
  double loss = 0.0;
  double lr = 0.0;
  int n_dataset = 0;
  int n_buffer = 0;
  double mean_depth = 0.0;
  int max_depth = 0;
  std::size_t buffer_size = 0;
  std::int64_t graph_nodes = 0;  // autograd nodes behind the loss
  std::string draws;             // provenance and depth per sample, e.g. "d0 b3"
};

inline constexpr const char* kLossHistoryHeader =
    "step\tstage\tloss\tlr\tn_dataset\tn_buffer\tmean_depth\tmax_depth\tbuffer_size\tdraws";
std::string format_step_record(const StepRecord& r);

/// Number of distinct autograd nodes reachable from `loss`.
std::int64_t count_graph_nodes(const torch::Tensor& loss);

/// One training stage. Pretraining draws through an always-empty buffer, so a
/// finetune stage with mix_ratio 0 consumes the data RNG identically.
class Trainer {
 public:
  Trainer(ForecastModel model, std::shared_ptr<const TrainingData> data, TrainConfig cfg,
          Stage stage);

  /// Fills the buffer with depth-1 predictions from a separate RNG stream.
  void warmup_buffer();

  StepRecord step();

  double learning_rate(std::int64_t step_index) const;  // 0-based
  std::int64_t steps_done() const { return steps_done_; }
  std::int64_t total_steps() const;
  Stage stage() const { return stage_; }

  ForecastModel& model() { return model_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  const TrainConfig& config() const { return cfg_; }
  const TrainingData& data() const { return *data_; }

  /// Model checkpoint plus optimizer moments, RNG streams and buffer.
  void save_state(const std::filesystem::path& dir, const Manifest& extra = {});
  void load_state(const std::filesystem::path& dir);

 private:
  torch::Tensor draw_input(const ReplayDraw& draw) const;
  std::string diagnose(const torch::Tensor& mean, const torch::Tensor& target) const;

  ForecastModel model_;
  std::shared_ptr<const TrainingData> data_;
  TrainConfig cfg_;
  Stage stage_;
  ReplayBuffer buffer_;
  std::unique_ptr<torch::optim::AdamW> optimizer_;
  std::mt19937_64 rng_;
  std::mt19937_64 warmup_rng_;
  std::int64_t steps_done_ = 0;
};

struct RunOptions {
  std::filesystem::path run_dir;  // empty: keep everything in memory
  std::int64_t checkpoint_interval = 500;
  std::optional<std::int64_t> stop_after;  // stop once this many steps are done
  bool resume = false;
  bool force = false;
  Manifest extra;  // provenance recorded in the run manifest
};

struct StageResult {
  ForecastModel model{nullptr};
  std::vector<StepRecord> history;
  bool completed = false;
  std::string checkpoint_hash;  // of the final checkpoint, when written
  std::filesystem::path checkpoint_dir;
};

/// Drives a Trainer, writing manifest.txt, loss_history.tsv,
/// checkpoints/step_XXXXXXXX and final/ under run_dir.
StageResult run_stage(Trainer& trainer, const RunOptions& opts);

StageResult pretrain_single_step(ForecastModel model, std::shared_ptr<const TrainingData> data,
                                 const TrainConfig& cfg, const RunOptions& opts = {});

StageResult finetune_with_buffer(ForecastModel model, std::shared_ptr<const TrainingData> data,
                                 const TrainConfig& cfg, const RunOptions& opts = {});

/// Most recent resumable checkpoint in a run directory, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace mmcast
