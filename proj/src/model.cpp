#include "mmcast/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "mmcast/hash.hpp"
#include "mmcast/storage.hpp"

namespace mmcast {

namespace F = torch::nn::functional;

void ModelConfig::validate(const ModalitySchema& schema) const {
  if (patch_lat < 1 || patch_lon < 1) throw ConfigError("patch sizes must be positive");
  if (embed_dim < 1) throw ConfigError("embed_dim must be positive");
  if (encoder_depth < 0 || decoder_depth < 0 || fuser_depth < 1) {
    throw ConfigError("encoder/decoder depth must be >= 0 and fuser depth >= 1");
  }
  if (encoder_heads < 1 || embed_dim % encoder_heads != 0) {
    throw ConfigError("embed_dim must be divisible by encoder_heads");
  }
  const int fused = embed_dim * static_cast<int>(schema.modalities.size());
  if (fuser_heads < 1 || fused % fuser_heads != 0) {
    throw ConfigError("fused width " + std::to_string(fused) + " must be divisible by fuser_heads");
  }
  if (!(mlp_ratio > 0.0)) throw ConfigError("mlp_ratio must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(log_var_min < log_var_max)) throw ConfigError("log-variance clamp range is empty");
}

void ModelConfig::describe(Manifest& m, const std::string& p) const {
  m.set(p + "patch_lat", patch_lat);
  m.set(p + "patch_lon", patch_lon);
  m.set(p + "embed_dim", embed_dim);
  m.set(p + "encoder_depth", encoder_depth);
  m.set(p + "fuser_depth", fuser_depth);
  m.set(p + "decoder_depth", decoder_depth);
  m.set(p + "encoder_heads", encoder_heads);
  m.set(p + "fuser_heads", fuser_heads);
  m.set(p + "mlp_ratio", mlp_ratio);
  m.set(p + "dropout", dropout);
  m.set(p + "log_var_min", log_var_min);
  m.set(p + "log_var_max", log_var_max);
  m.set(p + "zero_init_head", zero_init_head);
  m.set(p + "param_seed", param_seed);
}

ModelConfig ModelConfig::from_manifest(const Manifest& m, const std::string& p) {
  ModelConfig c;
  c.patch_lat = static_cast<int>(m.get_int(p + "patch_lat"));
  c.patch_lon = static_cast<int>(m.get_int(p + "patch_lon"));
  c.embed_dim = static_cast<int>(m.get_int(p + "embed_dim"));
  c.encoder_depth = static_cast<int>(m.get_int(p + "encoder_depth"));
  c.fuser_depth = static_cast<int>(m.get_int(p + "fuser_depth"));
  c.decoder_depth = static_cast<int>(m.get_int(p + "decoder_depth"));
  c.encoder_heads = static_cast<int>(m.get_int(p + "encoder_heads"));
  c.fuser_heads = static_cast<int>(m.get_int(p + "fuser_heads"));
  c.mlp_ratio = m.get_double(p + "mlp_ratio");
  c.dropout = m.get_double(p + "dropout");
  c.log_var_min = m.get_double(p + "log_var_min");
  c.log_var_max = m.get_double(p + "log_var_max");
  c.zero_init_head = m.get_bool(p + "zero_init_head");
  c.param_seed = m.get_uint(p + "param_seed");
  return c;
}

ModelConfig ModelConfig::compact() {
  ModelConfig c;
  c.embed_dim = 32;
  c.encoder_depth = 1;
  c.fuser_depth = 2;
  c.decoder_depth = 1;
  c.encoder_heads = 4;
  c.fuser_heads = 4;
  return c;
}

AttentionImpl::AttentionImpl(int dim, int heads, double dropout) : heads_(heads) {
  qkv_ = register_module("qkv", torch::nn::Linear(dim, 3 * dim));
  proj_ = register_module("proj", torch::nn::Linear(dim, dim));
  drop_ = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor AttentionImpl::forward(const torch::Tensor& x) {
  const auto B = x.size(0);
  const auto N = x.size(1);
  const auto D = x.size(2);
  const auto head_dim = D / heads_;
  auto qkv = qkv_(x).view({B, N, 3, heads_, head_dim}).permute({2, 0, 3, 1, 4});
  auto q = qkv[0];
  auto k = qkv[1];
  auto v = qkv[2];
  auto scores = torch::matmul(q, k.transpose(-2, -1)) / std::sqrt(static_cast<double>(head_dim));
  auto weights = drop_(torch::softmax(scores, -1));
  auto out = torch::matmul(weights, v).transpose(1, 2).reshape({B, N, D});
  return proj_(out);
}

BlockImpl::BlockImpl(int dim, int heads, double mlp_ratio, double dropout) {
  const auto hidden = static_cast<int64_t>(std::lround(dim * mlp_ratio));
  norm1_ = register_module("norm1", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  attn_ = register_module("attn", Attention(dim, heads, dropout));
  norm2_ = register_module("norm2", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
  fc1_ = register_module("fc1", torch::nn::Linear(dim, hidden));
  fc2_ = register_module("fc2", torch::nn::Linear(hidden, dim));
  drop_ = register_module("drop", torch::nn::Dropout(dropout));
}

torch::Tensor BlockImpl::forward(torch::Tensor x) {
  x = x + drop_(attn_(norm1_(x)));
  return x + drop_(fc2_(torch::gelu(fc1_(norm2_(x)))));
}

PatchGrid::PatchGrid(int n_lat, int n_lon, int patch_lat, int patch_lon)
    : n_lat_(n_lat), n_lon_(n_lon), patch_lat_(patch_lat), patch_lon_(patch_lon) {
  pad_lat_ = (patch_lat - n_lat % patch_lat) % patch_lat;
  pad_lon_ = (patch_lon - n_lon % patch_lon) % patch_lon;
  if (pad_lat_ >= n_lat || pad_lon_ >= n_lon) {
    throw ConfigError("patch size " + std::to_string(patch_lat) + "x" + std::to_string(patch_lon) +
                      " cannot tile a " + std::to_string(n_lat) + "x" + std::to_string(n_lon) +
                      " grid with reflect padding");
  }
  rows_ = (n_lat + pad_lat_) / patch_lat;
  cols_ = (n_lon + pad_lon_) / patch_lon;
}

torch::Tensor PatchGrid::patchify(const torch::Tensor& x) const {
  auto padded = x;
  if (pad_lat_ > 0 || pad_lon_ > 0) {
    padded = F::pad(x, F::PadFuncOptions({0, pad_lon_, 0, pad_lat_}).mode(torch::kReflect));
  }
  const auto B = x.size(0);
  const auto C = x.size(1);
  return padded.view({B, C, rows_, patch_lat_, cols_, patch_lon_})
      .permute({0, 2, 4, 1, 3, 5})
      .reshape({B, n_tokens(), C * patch_area()});
}

torch::Tensor PatchGrid::unpatchify(const torch::Tensor& tokens, int channels) const {
  const auto B = tokens.size(0);
  auto full = tokens.view({B, rows_, cols_, channels, patch_lat_, patch_lon_})
                  .permute({0, 3, 1, 4, 2, 5})
                  .reshape({B, channels, rows_ * patch_lat_, cols_ * patch_lon_});
  if (pad_lat_ == 0 && pad_lon_ == 0) return full;
  return full.narrow(2, 0, n_lat_).narrow(3, 0, n_lon_);
}

namespace {

torch::nn::ModuleList make_blocks(int depth, int dim, int heads, const ModelConfig& cfg) {
  torch::nn::ModuleList blocks;
  for (int i = 0; i < depth; ++i) blocks->push_back(Block(dim, heads, cfg.mlp_ratio, cfg.dropout));
  return blocks;
}

torch::Tensor run_blocks(torch::nn::ModuleList& blocks, torch::Tensor x) {
  for (const auto& block : *blocks) x = block->as<Block>()->forward(x);
  return x;
}

}  // namespace

ModalEncoderImpl::ModalEncoderImpl(int channels, int patch_area, const ModelConfig& cfg) {
  embed_ = register_module("embed", torch::nn::Linear(channels * patch_area, cfg.embed_dim));
  blocks_ = register_module(
      "blocks", make_blocks(cfg.encoder_depth, cfg.embed_dim, cfg.encoder_heads, cfg));
}

torch::Tensor ModalEncoderImpl::forward(const torch::Tensor& patches, const torch::Tensor& position) {
  return run_blocks(blocks_, embed_(patches) + position);
}

CrossModalFuserImpl::CrossModalFuserImpl(int dim, const ModelConfig& cfg) {
  blocks_ = register_module("blocks", make_blocks(cfg.fuser_depth, dim, cfg.fuser_heads, cfg));
  norm_ = register_module("norm", torch::nn::LayerNorm(torch::nn::LayerNormOptions({dim})));
}

torch::Tensor CrossModalFuserImpl::forward(const torch::Tensor& tokens) {
  return norm_(run_blocks(blocks_, tokens));
}

ModalDecoderImpl::ModalDecoderImpl(int fused_dim, int channels, int patch_area,
                                   const ModelConfig& cfg) {
  input_ = register_module("input", torch::nn::Linear(fused_dim, cfg.embed_dim));
  blocks_ = register_module(
      "blocks", make_blocks(cfg.decoder_depth, cfg.embed_dim, cfg.encoder_heads, cfg));
  norm_ = register_module("norm",
                          torch::nn::LayerNorm(torch::nn::LayerNormOptions({cfg.embed_dim})));
  head_ = register_module("head", torch::nn::Linear(cfg.embed_dim, 2 * channels * patch_area));
  if (cfg.zero_init_head) {
    torch::NoGradGuard no_grad;
    head_->weight.zero_();
    head_->bias.zero_();
  }
}

torch::Tensor ModalDecoderImpl::forward(const torch::Tensor& fused) {
  return head_(norm_(run_blocks(blocks_, input_(fused))));
}

ForecastModelImpl::ForecastModelImpl(ModelConfig config, ModalitySchema schema, GridSpec grid)
    : config_(std::move(config)), schema_(std::move(schema)), grid_(std::move(grid)) {
  schema_.validate();
  grid_.validate();
  config_.validate(schema_);
  patches_ = PatchGrid(grid_.n_lat(), grid_.n_lon, config_.patch_lat, config_.patch_lon);

  torch::manual_seed(config_.param_seed);
  position_ = register_parameter(
      "position", torch::randn({1, patches_.n_tokens(), config_.embed_dim}) * 0.02);
  for (const auto& m : schema_.modalities) {
    encoders_.push_back(register_module(
        "encoder_" + m.name, ModalEncoder(m.channels, patches_.patch_area(), config_)));
  }
  fuser_ = register_module("fuser", CrossModalFuser(fused_dim(), config_));
  for (const auto& m : schema_.modalities) {
    decoders_.push_back(register_module(
        "decoder_" + m.name,
        ModalDecoder(fused_dim(), m.channels, patches_.patch_area(), config_)));
  }
}

torch::Tensor ForecastModelImpl::encode(const torch::Tensor& slice, const std::string& modality) {
  const auto index = schema_.index_of(modality);
  const auto& m = schema_.modalities[index];
  if (slice.dim() != 4 || slice.size(1) != m.channels || slice.size(2) != grid_.n_lat() ||
      slice.size(3) != grid_.n_lon) {
    throw SchemaError("modality '" + modality + "' expects a (B, " + std::to_string(m.channels) +
                      ", W, H) slice");
  }
  if (!torch::isfinite(slice).all().item<bool>()) {
    throw std::invalid_argument("non-finite values in modality '" + modality + "' input");
  }
  return encoders_[index]->forward(patches_.patchify(slice), position_);
}

torch::Tensor ForecastModelImpl::fuse(const std::vector<torch::Tensor>& tokens) {
  if (tokens.empty()) throw SchemaError("nothing to fuse");
  for (const auto& t : tokens) {
    if (t.dim() != 3 || t.size(1) != tokens.front().size(1) || t.size(0) != tokens.front().size(0)) {
      throw SchemaError("token grids disagree in batch or token count");
    }
  }
  auto fused = torch::cat(tokens, -1);
  if (fused.size(-1) != fused_dim()) {
    throw SchemaError("fused width " + std::to_string(fused.size(-1)) + " != " +
                      std::to_string(fused_dim()));
  }
  return fuser_->forward(fused);
}

std::pair<torch::Tensor, torch::Tensor> ForecastModelImpl::decode(const torch::Tensor& fused,
                                                                  const std::string& modality,
                                                                  const torch::Tensor& base) {
  const auto index = schema_.index_of(modality);
  const int channels = schema_.modalities[index].channels;
  auto out = patches_.unpatchify(decoders_[index]->forward(fused), 2 * channels);
  auto increment = out.narrow(1, 0, channels);
  auto log_var = torch::clamp(out.narrow(1, channels, channels), config_.log_var_min,
                              config_.log_var_max);
  auto mean = base.defined() ? base + increment : increment;
  return {mean, log_var};
}

GaussianPrediction ForecastModelImpl::forward(const torch::Tensor& state) {
  ++forward_calls_;
  const bool unbatched = state.dim() == 3;
  auto x = unbatched ? state.unsqueeze(0) : state;
  if (x.dim() != 4 || x.size(1) != schema_.total_channels()) {
    throw SchemaError("forward expects (B, " + std::to_string(schema_.total_channels()) +
                      ", W, H) input");
  }
  std::vector<torch::Tensor> slices;
  std::vector<torch::Tensor> tokens;
  for (std::size_t i = 0; i < schema_.modalities.size(); ++i) {
    const auto& m = schema_.modalities[i];
    slices.push_back(x.narrow(1, schema_.channel_offset(i), m.channels));
    tokens.push_back(encode(slices.back(), m.name));
  }
  auto fused = fuse(tokens);
  std::vector<torch::Tensor> means;
  std::vector<torch::Tensor> log_vars;
  for (std::size_t i = 0; i < schema_.modalities.size(); ++i) {
    auto [mean, log_var] = decode(fused, schema_.modalities[i].name, slices[i]);
    means.push_back(mean);
    log_vars.push_back(log_var);
  }
  GaussianPrediction pred{torch::cat(means, 1), torch::cat(log_vars, 1)};
  if (unbatched) {
    pred.mean = pred.mean.squeeze(0);
    pred.log_variance = pred.log_variance.squeeze(0);
  }
  return pred;
}

namespace {

constexpr char kTensorMagic[8] = {'M', 'M', 'C', 'T', '0', '0', '0', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw FormatError("truncated tensor file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

}  // namespace

void write_tensors(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, torch::Tensor>>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(kTensorMagic, sizeof(kTensorMagic));
  write_u64(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().to(torch::kCPU, torch::kFloat).contiguous();
    write_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(out, static_cast<std::uint64_t>(t.dim()));
    for (auto d : t.sizes()) write_u64(out, static_cast<std::uint64_t>(d));
    write_floats(out, {t.data_ptr<float>(), static_cast<std::size_t>(t.numel())});
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

std::vector<std::pair<std::string, torch::Tensor>> read_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw FormatError(path.string() + " is not a tensor file");
  }
  const auto count = read_u64(in);
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name(read_u64(in), '\0');
    in.read(name.data(), static_cast<std::streamsize>(name.size()));
    const auto ndim = read_u64(in);
    std::vector<int64_t> sizes(ndim);
    for (auto& s : sizes) s = static_cast<int64_t>(read_u64(in));
    auto t = torch::empty(sizes, torch::kFloat);
    read_floats(in, {t.data_ptr<float>(), static_cast<std::size_t>(t.numel())});
    tensors.emplace_back(std::move(name), std::move(t));
  }
  return tensors;
}

std::string save_checkpoint(const std::filesystem::path& dir, ForecastModel& model,
                            const NormStats& norm, std::int64_t step, const Manifest& extra) {
  std::filesystem::create_directories(dir);
  std::vector<std::pair<std::string, torch::Tensor>> tensors;
  for (const auto& item : model->named_parameters()) tensors.emplace_back(item.key(), item.value());
  write_tensors(dir / "params.bin", tensors);
  const auto hash = sha256_file(dir / "params.bin");

  Manifest m;
  m.set("kind", "checkpoint");
  model->config().describe(m);
  describe_schema(m, model->schema());
  describe_grid(m, model->grid());
  m.set("norm.mean", norm.mean);
  m.set("norm.std", norm.std);
  m.set("step", step);
  m.set("param_format", "mmct-v1 float32-le");
  m.set("content_hash", hash);
  for (const auto& [k, v] : extra.entries()) {
    if (!m.contains(k)) m.set(k, v);
  }
  m.write(dir / "manifest.txt");
  return hash;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir) {
  const auto m = Manifest::read(dir / "manifest.txt");
  if (m.get("kind") != "checkpoint") throw FormatError(dir.string() + " is not a checkpoint");
  LoadedCheckpoint out;
  out.info.config = ModelConfig::from_manifest(m);
  out.info.schema = schema_from_manifest(m);
  out.info.grid = grid_from_manifest(m);
  out.info.norm.mean = m.get_doubles("norm.mean");
  out.info.norm.std = m.get_doubles("norm.std");
  out.info.step = m.get_int("step");
  out.info.content_hash = m.get("content_hash");
  out.info.extra = m;

  const auto actual = sha256_file(dir / "params.bin");
  if (actual != out.info.content_hash) {
    throw IntegrityError("checkpoint " + dir.string() + " hash mismatch: manifest records " +
                         out.info.content_hash + ", params.bin hashes to " + actual);
  }
  out.model = ForecastModel(out.info.config, out.info.schema, out.info.grid);
  auto params = out.model->named_parameters();
  const auto tensors = read_tensors(dir / "params.bin");
  if (tensors.size() != params.size()) throw FormatError("checkpoint parameter count mismatch");
  torch::NoGradGuard no_grad;
  for (const auto& [name, tensor] : tensors) {
    auto* p = params.find(name);
    if (!p || !p->sizes().equals(tensor.sizes())) {
      throw FormatError("checkpoint parameter '" + name + "' missing or misshapen");
    }
    p->copy_(tensor);
  }
  return out;
}

torch::Tensor to_tensor(const Field& field) {
  return torch::from_blob(const_cast<float*>(field.data().data()),
                          {field.channels(), field.n_lat(), field.n_lon()}, torch::kFloat)
      .clone();
}

Field to_field(const torch::Tensor& tensor) {
  auto t = tensor.detach().to(torch::kCPU, torch::kFloat).contiguous();
  if (t.dim() != 3) throw SchemaError("expected a (C, W, H) tensor");
  const auto* p = t.data_ptr<float>();
  return Field(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)),
               std::vector<float>(p, p + t.numel()));
}

}  // namespace mmcast
