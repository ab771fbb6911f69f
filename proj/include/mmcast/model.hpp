#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/grid.hpp"
#include "mmcast/manifest.hpp"

namespace mmcast {

/// Hyperparameters of the encode-fuse-decode forecaster. All modalities share
/// one patch size and token width so their token grids line up.
struct ModelConfig {
  int patch_lat = 4;
  int patch_lon = 4;
  int embed_dim = 64;
  int encoder_depth = 2;
  int fuser_depth = 4;
  int decoder_depth = 2;
  int encoder_heads = 4;  // also used by the decoders
  int fuser_heads = 6;
  double mlp_ratio = 4.0;
  double dropout = 0.0;
  double log_var_min = -10.0;
  double log_var_max = 10.0;
  bool zero_init_head = true;
  std::uint64_t param_seed = 0;

  void validate(const ModalitySchema& schema) const;
  void describe(Manifest& m, const std::string& prefix = "model.") const;
  static ModelConfig from_manifest(const Manifest& m, const std::string& prefix = "model.");

  /// Narrower, shallower variant used where many thousands of CPU training
  /// steps must fit in a short budget.
  static ModelConfig compact();
};

/// Per-element Gaussian parameters; log_variance holds s = log(sigma^2).
struct GaussianPrediction {
  torch::Tensor mean;
  torch::Tensor log_variance;
};

/// Pre-norm multi-head self-attention over the token axis.
class AttentionImpl : public torch::nn::Module {
 public:
  AttentionImpl(int dim, int heads, double dropout);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  int heads_;
  torch::nn::Linear qkv_{nullptr}, proj_{nullptr};
  torch::nn::Dropout drop_{nullptr};
};
TORCH_MODULE(Attention);

class BlockImpl : public torch::nn::Module {
 public:
  BlockImpl(int dim, int heads, double mlp_ratio, double dropout);
  torch::Tensor forward(torch::Tensor x);

 private:
  torch::nn::LayerNorm norm1_{nullptr}, norm2_{nullptr};
  Attention attn_{nullptr};
  torch::nn::Linear fc1_{nullptr}, fc2_{nullptr};
  torch::nn::Dropout drop_{nullptr};
};
TORCH_MODULE(Block);

/// Non-overlapping patching with reflect padding on the trailing edges.
class PatchGrid {
 public:
  PatchGrid() = default;
  PatchGrid(int n_lat, int n_lon, int patch_lat, int patch_lon);

  int n_tokens() const { return rows_ * cols_; }
  int patch_area() const { return patch_lat_ * patch_lon_; }

  /// (B, C, W, H) -> (B, n_tokens, C * patch_area)
  torch::Tensor patchify(const torch::Tensor& x) const;
  /// (B, n_tokens, C * patch_area) -> (B, C, W, H), cropping any padding.
  torch::Tensor unpatchify(const torch::Tensor& tokens, int channels) const;

 private:
  int n_lat_ = 0, n_lon_ = 0, patch_lat_ = 1, patch_lon_ = 1;
  int pad_lat_ = 0, pad_lon_ = 0, rows_ = 0, cols_ = 0;
};

class ModalEncoderImpl : public torch::nn::Module {
 public:
  ModalEncoderImpl(int channels, int patch_area, const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& patches, const torch::Tensor& position);

 private:
  torch::nn::Linear embed_{nullptr};
  torch::nn::ModuleList blocks_;
};
TORCH_MODULE(ModalEncoder);

class CrossModalFuserImpl : public torch::nn::Module {
 public:
  CrossModalFuserImpl(int dim, const ModelConfig& cfg);
  torch::Tensor forward(const torch::Tensor& tokens);

 private:
  torch::nn::ModuleList blocks_;
  torch::nn::LayerNorm norm_{nullptr};
};
TORCH_MODULE(CrossModalFuser);

class ModalDecoderImpl : public torch::nn::Module {
 public:
  ModalDecoderImpl(int fused_dim, int channels, int patch_area, const ModelConfig& cfg);
  /// Returns (B, n_tokens, 2 * channels * patch_area): increments then raw log-variances.
  torch::Tensor forward(const torch::Tensor& fused);
  torch::nn::Linear& head() { return head_; }

 private:
  torch::nn::Linear input_{nullptr};
  torch::nn::ModuleList blocks_;
  torch::nn::LayerNorm norm_{nullptr};
  torch::nn::Linear head_{nullptr};
};
TORCH_MODULE(ModalDecoder);

/// Slice -> per-modality encoders -> channel concat + transformer fuser ->
/// per-modality decoders -> concat. The mean is residual on the input.
class ForecastModelImpl : public torch::nn::Module {
 public:
  ForecastModelImpl(ModelConfig config, ModalitySchema schema, GridSpec grid);

  /// (B, C_m, W, H) normalized slice -> (B, n_tokens, embed_dim).
  torch::Tensor encode(const torch::Tensor& slice, const std::string& modality);
  /// Channel-wise concat of aligned token grids, then the fusion transformer.
  torch::Tensor fuse(const std::vector<torch::Tensor>& tokens);
  /// Mean and clamped log-variance for one modality, each (B, C_m, W, H).
  /// `base` is the modality's input slice the mean is residual on; an
  /// undefined tensor decodes the bare increment.
  std::pair<torch::Tensor, torch::Tensor> decode(const torch::Tensor& fused,
                                                 const std::string& modality,
                                                 const torch::Tensor& base = {});
  /// (B, C, W, H) or (C, W, H) normalized state -> Gaussian parameters of the next state.
  GaussianPrediction forward(const torch::Tensor& state);

  const ModelConfig& config() const { return config_; }
  const ModalitySchema& schema() const { return schema_; }
  const GridSpec& grid() const { return grid_; }
  int n_tokens() const { return patches_.n_tokens(); }
  int fused_dim() const { return config_.embed_dim * static_cast<int>(schema_.modalities.size()); }
  std::vector<ModalDecoder>& decoders() { return decoders_; }
  /// Number of forward() calls since construction.
  std::int64_t forward_calls() const { return forward_calls_; }

 private:
  ModelConfig config_;
  ModalitySchema schema_;
  GridSpec grid_;
  PatchGrid patches_;
  torch::Tensor position_;
  std::vector<ModalEncoder> encoders_;
  CrossModalFuser fuser_{nullptr};
  std::vector<ModalDecoder> decoders_;
  std::int64_t forward_calls_ = 0;
};
TORCH_MODULE(ForecastModel);

/// Everything a checkpoint records besides the parameters themselves.
struct CheckpointInfo {
  ModelConfig config;
  ModalitySchema schema;
  GridSpec grid;
  NormStats norm;
  std::int64_t step = 0;
  std::string content_hash;
  Manifest extra;  // caller-supplied provenance (data dir, run config, ...)
};

class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// NaN or Inf produced during training or inference.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes manifest.txt and params.bin; returns the SHA-256 of params.bin.
std::string save_checkpoint(const std::filesystem::path& dir, ForecastModel& model,
                            const NormStats& norm, std::int64_t step, const Manifest& extra = {});

struct LoadedCheckpoint {
  ForecastModel model{nullptr};
  CheckpointInfo info;
};

/// Throws IntegrityError when params.bin does not match the recorded hash.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// Parameter serialization shared with optimizer state files.
void write_tensors(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, torch::Tensor>>& tensors);
std::vector<std::pair<std::string, torch::Tensor>> read_tensors(const std::filesystem::path& path);

torch::Tensor to_tensor(const Field& field);
Field to_field(const torch::Tensor& tensor);

}  // namespace mmcast
