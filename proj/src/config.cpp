#include "mmcast/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mmcast/seeds.hpp"

namespace mmcast {

namespace {

std::string d(double v) { return format_double(v); }

std::vector<ConfigKey> build_schema() {
  const SimParams sim;
  const ModelConfig model;
  const TrainConfig train;
  const AblationConfig ablation;
  using T = ValueType;
  return {
      {"seed", T::UInt, std::nullopt, "master seed; every random stream is derived from it"},
      {"sim.n_lat", T::Int, std::to_string(sim.grid.n_lat()), "latitude rows W"},
      {"sim.n_lon", T::Int, std::to_string(sim.grid.n_lon), "longitude columns H"},
      {"sim.n_levels", T::Int, std::to_string(sim.n_levels), "pressure levels per atmospheric modality"},
      {"sim.n_steps", T::Int, "2880", "trajectory length after spin-up"},
      {"sim.diffusion", T::Double, d(sim.diffusion), "diffusivity, cells^2 per unit time"},
      {"sim.dt", T::Double, d(sim.dt), "integrator time step"},
      {"sim.wave_amplitude", T::Double, d(sim.wave_amplitude), "traveling-wave wind amplitude"},
      {"sim.n_waves", T::Int, std::to_string(sim.n_waves), "number of traveling waves"},
      {"sim.rotation", T::Double, d(sim.rotation), "zonal jet strength"},
      {"sim.relaxation_rate", T::Double, d(sim.relaxation_rate), "relaxation toward equilibrium"},
      {"sim.seasonal_amplitude", T::Double, d(sim.seasonal_amplitude), "seasonal temperature swing"},
      {"sim.forcing_amplitude", T::Double, d(sim.forcing_amplitude), "random forcing strength"},
      {"sim.steps_per_day", T::Int, std::to_string(sim.steps_per_day), "model steps per toy day"},
      {"sim.cycle_length_days", T::Int, std::to_string(sim.cycle_length_days), "toy year in days"},
      {"sim.spinup_steps", T::Int, std::to_string(sim.spinup_steps), "discarded spin-up steps"},
      {"data.split_train", T::Double, "0.8", "training fraction"},
      {"data.split_val", T::Double, "0.1", "validation fraction"},
      {"data.split_test", T::Double, "0.1", "test fraction"},
      {"model.patch_lat", T::Int, std::to_string(model.patch_lat), "patch rows"},
      {"model.patch_lon", T::Int, std::to_string(model.patch_lon), "patch columns"},
      {"model.embed_dim", T::Int, std::to_string(model.embed_dim), "token width per modality"},
      {"model.encoder_depth", T::Int, std::to_string(model.encoder_depth), "encoder blocks"},
      {"model.fuser_depth", T::Int, std::to_string(model.fuser_depth), "fusion blocks"},
      {"model.decoder_depth", T::Int, std::to_string(model.decoder_depth), "decoder blocks"},
      {"model.encoder_heads", T::Int, std::to_string(model.encoder_heads), "encoder/decoder heads"},
      {"model.fuser_heads", T::Int, std::to_string(model.fuser_heads), "fusion heads"},
      {"model.mlp_ratio", T::Double, d(model.mlp_ratio), "MLP hidden width ratio"},
      {"model.dropout", T::Double, d(model.dropout), "dropout probability"},
      {"model.log_var_min", T::Double, d(model.log_var_min), "log-variance clamp floor"},
      {"model.log_var_max", T::Double, d(model.log_var_max), "log-variance clamp ceiling"},
      {"model.zero_init_head", T::Bool, "true", "start as the persistence forecast"},
      {"train.batch_size", T::Int, std::to_string(train.batch_size), "samples per step"},
      {"train.pretrain_steps", T::Int, std::to_string(train.pretrain_steps), "single-step stage length"},
      {"train.finetune_steps", T::Int, std::to_string(train.finetune_steps), "buffer stage length"},
      {"train.peak_lr", T::Double, d(train.peak_lr), "peak learning rate"},
      {"train.warmup_fraction", T::Double, d(train.warmup_fraction), "linear warmup share of a stage"},
      {"train.clip_norm", T::Double, d(train.clip_norm), "gradient norm clip"},
      {"train.weight_decay", T::Double, d(train.weight_decay), "decoupled weight decay"},
      {"train.beta1", T::Double, d(train.beta1), "first-moment decay"},
      {"train.beta2", T::Double, d(train.beta2), "second-moment decay"},
      {"train.adam_eps", T::Double, d(train.adam_eps), "optimizer epsilon"},
      {"train.deterministic", T::Bool, "true", "single-threaded, reproducible execution"},
      {"train.checkpoint_interval", T::Int, "500", "steps between resumable checkpoints; 0 disables"},
      {"loss.include_constant", T::Bool, "false", "add 0.5 log(2 pi) per element"},
      {"loss.latitude_weight_in_loss", T::Bool, "true", "weight loss rows by cos(latitude)"},
      {"buffer.capacity", T::Int, std::to_string(train.buffer.capacity), "replay buffer size N"},
      {"buffer.mix_ratio", T::Double, d(train.buffer.mix_ratio), "probability of a buffer draw"},
      {"buffer.warmup_pushes", T::Int, std::to_string(train.buffer.warmup_pushes),
       "entries required before buffer draws start"},
      {"buffer.max_ar_depth", T::OptionalInt, std::to_string(*train.buffer.max_ar_depth),
       "depth cap for stored predictions, or none"},
      {"forecast.n_steps", T::Int, "56", "rollout length"},
      {"eval.n_leads", T::Int, std::to_string(ablation.n_leads), "verified leads per initialization"},
      {"eval.n_initializations", T::Int, std::to_string(ablation.n_initializations),
       "test initializations"},
      {"eval.acc_threshold", T::Double, "0.6", "skill threshold for lead-time extraction"},
      {"ablation.min_lead", T::Int, std::to_string(ablation.min_lead), "first lead in the verdict"},
      {"ablation.channel_fraction", T::Double, d(ablation.channel_fraction),
       "share of channels the buffer arm must win"},
  };
}

const ConfigKey* find_key(const std::string& key) {
  const auto& schema = config_schema();
  auto it = std::find_if(schema.begin(), schema.end(), [&](const auto& k) { return k.key == key; });
  return it == schema.end() ? nullptr : &*it;
}

std::string valid_keys() {
  std::string out;
  for (const auto& k : config_schema()) out += (out.empty() ? "" : ", ") + k.key;
  return out;
}

std::string type_name(ValueType t) {
  switch (t) {
    case ValueType::Int: return "an integer";
    case ValueType::UInt: return "a non-negative integer";
    case ValueType::Double: return "a number";
    case ValueType::Bool: return "true or false";
    case ValueType::String: return "a string";
    case ValueType::OptionalInt: return "an integer or none";
  }
  return "a value";
}

template <typename N>
bool parse_number(const std::string& text, N& out) {
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, out);
  return ec == std::errc() && ptr == end;
}

bool well_typed(ValueType t, const std::string& v) {
  std::int64_t i = 0;
  std::uint64_t u = 0;
  double x = 0.0;
  switch (t) {
    case ValueType::Int: return parse_number(v, i);
    case ValueType::UInt: return parse_number(v, u);
    case ValueType::Double: return parse_number(v, x);
    case ValueType::Bool: return v == "true" || v == "false";
    case ValueType::String: return true;
    case ValueType::OptionalInt: return v == "none" || parse_number(v, i);
  }
  return false;
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& source,
                           std::optional<std::uint64_t> seed_override) {
  RunConfig cfg;
  for (const auto& k : config_schema()) {
    if (k.default_value) cfg.values_.emplace_back(k.key, *k.default_value);
  }
  std::vector<std::string> seen;
  std::vector<KeyValueLine> lines;
  try {
    lines = parse_key_values(text, source);
  } catch (const FormatError& e) {
    throw ValidationError(e.what());
  }
  for (const auto& line : lines) {
    const auto where = source + ":" + std::to_string(line.line) + ": ";
    if (std::find(seen.begin(), seen.end(), line.key) != seen.end()) {
      throw ValidationError(where + "duplicate key '" + line.key + "'");
    }
    seen.push_back(line.key);
    try {
      cfg.set(line.key, line.value);
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
  if (seed_override) cfg.override_seed(*seed_override);
  if (!std::any_of(cfg.values_.begin(), cfg.values_.end(),
                   [](const auto& kv) { return kv.first == "seed"; })) {
    throw ValidationError(source + ": missing required field 'seed'");
  }
  // Cross-field checks surface here rather than deep inside a run.
  try {
    cfg.sim_params().validate();
    const auto f = cfg.split_fractions();
    if (std::abs(f[0] + f[1] + f[2] - 1.0) > 1e-9) throw ConfigError("data.split_* must sum to 1");
    cfg.model_config().validate(cfg.sim_params().schema());
    cfg.train_config().validate();
  } catch (const ConfigError& e) {
    throw ValidationError(source + ": " + e.what());
  } catch (const GridError& e) {
    throw ValidationError(source + ": " + e.what());
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path,
                          std::optional<std::uint64_t> seed_override) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read config " + path.string());
  std::stringstream text;
  text << in.rdbuf();
  return parse(text.str(), path.string(), seed_override);
}

RunConfig RunConfig::defaults(std::uint64_t seed) {
  return parse("seed = " + std::to_string(seed) + "\n", "<defaults>");
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const auto* spec = find_key(key);
  if (!spec) throw ValidationError("unknown key '" + key + "'; valid keys: " + valid_keys());
  if (!well_typed(spec->type, value)) {
    throw ValidationError("field '" + key + "' expects " + type_name(spec->type) + ", got '" +
                          value + "'");
  }
  auto it = std::find_if(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
  if (it != values_.end()) {
    it->second = value;
    return;
  }
  // Keep schema order so manifests are stable.
  const auto& schema = config_schema();
  const auto rank = [&](const std::string& k) {
    return std::find_if(schema.begin(), schema.end(), [&](const auto& s) { return s.key == k; }) -
           schema.begin();
  };
  auto pos = std::find_if(values_.begin(), values_.end(),
                          [&](const auto& kv) { return rank(kv.first) > rank(key); });
  values_.insert(pos, {key, value});
}

const std::string& RunConfig::raw(const std::string& key) const {
  auto it = std::find_if(values_.begin(), values_.end(), [&](const auto& kv) { return kv.first == key; });
  if (it == values_.end()) throw ValidationError("missing required field '" + key + "'");
  return it->second;
}

std::int64_t RunConfig::get_int(const std::string& key) const {
  std::int64_t v = 0;
  parse_number(raw(key), v);
  return v;
}

std::uint64_t RunConfig::get_uint(const std::string& key) const {
  std::uint64_t v = 0;
  parse_number(raw(key), v);
  return v;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0.0;
  parse_number(raw(key), v);
  return v;
}

bool RunConfig::get_bool(const std::string& key) const { return raw(key) == "true"; }

std::optional<int> RunConfig::get_optional_int(const std::string& key) const {
  if (raw(key) == "none") return std::nullopt;
  return static_cast<int>(get_int(key));
}

SimParams RunConfig::sim_params() const {
  SimParams p;
  p.grid = GridSpec::regular(static_cast<int>(get_int("sim.n_lat")), static_cast<int>(get_int("sim.n_lon")));
  p.n_levels = static_cast<int>(get_int("sim.n_levels"));
  p.diffusion = get_double("sim.diffusion");
  p.dt = get_double("sim.dt");
  p.wave_amplitude = get_double("sim.wave_amplitude");
  p.n_waves = static_cast<int>(get_int("sim.n_waves"));
  p.rotation = get_double("sim.rotation");
  p.relaxation_rate = get_double("sim.relaxation_rate");
  p.seasonal_amplitude = get_double("sim.seasonal_amplitude");
  p.forcing_amplitude = get_double("sim.forcing_amplitude");
  p.steps_per_day = static_cast<int>(get_int("sim.steps_per_day"));
  p.cycle_length_days = static_cast<int>(get_int("sim.cycle_length_days"));
  p.spinup_steps = static_cast<int>(get_int("sim.spinup_steps"));
  p.seed = derive_seed(seed(), "sim");
  return p;
}

std::array<double, 3> RunConfig::split_fractions() const {
  return {get_double("data.split_train"), get_double("data.split_val"), get_double("data.split_test")};
}

ModelConfig RunConfig::model_config() const {
  ModelConfig c;
  c.patch_lat = static_cast<int>(get_int("model.patch_lat"));
  c.patch_lon = static_cast<int>(get_int("model.patch_lon"));
  c.embed_dim = static_cast<int>(get_int("model.embed_dim"));
  c.encoder_depth = static_cast<int>(get_int("model.encoder_depth"));
  c.fuser_depth = static_cast<int>(get_int("model.fuser_depth"));
  c.decoder_depth = static_cast<int>(get_int("model.decoder_depth"));
  c.encoder_heads = static_cast<int>(get_int("model.encoder_heads"));
  c.fuser_heads = static_cast<int>(get_int("model.fuser_heads"));
  c.mlp_ratio = get_double("model.mlp_ratio");
  c.dropout = get_double("model.dropout");
  c.log_var_min = get_double("model.log_var_min");
  c.log_var_max = get_double("model.log_var_max");
  c.zero_init_head = get_bool("model.zero_init_head");
  c.param_seed = derive_seed(seed(), "params");
  return c;
}

TrainConfig RunConfig::train_config() const {
  TrainConfig c;
  c.batch_size = static_cast<int>(get_int("train.batch_size"));
  c.pretrain_steps = get_int("train.pretrain_steps");
  c.finetune_steps = get_int("train.finetune_steps");
  c.peak_lr = get_double("train.peak_lr");
  c.warmup_fraction = get_double("train.warmup_fraction");
  c.clip_norm = get_double("train.clip_norm");
  c.weight_decay = get_double("train.weight_decay");
  c.beta1 = get_double("train.beta1");
  c.beta2 = get_double("train.beta2");
  c.adam_eps = get_double("train.adam_eps");
  c.deterministic = get_bool("train.deterministic");
  c.data_seed = derive_seed(seed(), "data");
  c.loss.include_constant = get_bool("loss.include_constant");
  c.loss.latitude_weight_in_loss = get_bool("loss.latitude_weight_in_loss");
  c.buffer.capacity = static_cast<std::size_t>(get_int("buffer.capacity"));
  c.buffer.mix_ratio = get_double("buffer.mix_ratio");
  c.buffer.warmup_pushes = static_cast<std::size_t>(get_int("buffer.warmup_pushes"));
  c.buffer.max_ar_depth = get_optional_int("buffer.max_ar_depth");
  return c;
}

AblationConfig RunConfig::ablation_config() const {
  AblationConfig c;
  c.model = model_config();
  c.train = train_config();
  c.n_leads = static_cast<int>(get_int("eval.n_leads"));
  c.n_initializations = static_cast<int>(get_int("eval.n_initializations"));
  c.min_lead = static_cast<int>(get_int("ablation.min_lead"));
  c.channel_fraction = get_double("ablation.channel_fraction");
  return c;
}

Manifest RunConfig::to_manifest() const {
  Manifest m;
  for (const auto& [k, v] : values_) m.set("config." + k, v);
  return m;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace mmcast
