#include "mmcast/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "mmcast/seeds.hpp"
#include "mmcast/storage.hpp"

namespace mmcast {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train.batch_size must be at least 1");
  if (pretrain_steps < 0 || finetune_steps < 0) throw ConfigError("stage lengths must be >= 0");
  if (!(peak_lr >= 0.0)) throw ConfigError("train.peak_lr must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
    throw ConfigError("train.warmup_fraction must lie in [0, 1]");
  }
  if (!(clip_norm > 0.0)) throw ConfigError("train.clip_norm must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("optimizer betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ConfigError("train.adam_eps must be positive");
  buffer.validate();
}

void TrainConfig::describe(Manifest& m) const {
  m.set("train.batch_size", batch_size);
  m.set("train.pretrain_steps", pretrain_steps);
  m.set("train.finetune_steps", finetune_steps);
  m.set("train.peak_lr", peak_lr);
  m.set("train.warmup_fraction", warmup_fraction);
  m.set("train.clip_norm", clip_norm);
  m.set("train.weight_decay", weight_decay);
  m.set("train.beta1", beta1);
  m.set("train.beta2", beta2);
  m.set("train.adam_eps", adam_eps);
  m.set("train.data_seed", data_seed);
  m.set("train.deterministic", deterministic);
  loss.describe(m);
  m.set("buffer.capacity", static_cast<std::int64_t>(buffer.capacity));
  m.set("buffer.mix_ratio", buffer.mix_ratio);
  m.set("buffer.warmup_pushes", static_cast<std::int64_t>(buffer.warmup_pushes));
  m.set("buffer.max_ar_depth", buffer.max_ar_depth ? std::to_string(*buffer.max_ar_depth) : "none");
}

TrainConfig TrainConfig::from_manifest(const Manifest& m) {
  TrainConfig c;
  c.batch_size = static_cast<int>(m.get_int("train.batch_size"));
  c.pretrain_steps = m.get_int("train.pretrain_steps");
  c.finetune_steps = m.get_int("train.finetune_steps");
  c.peak_lr = m.get_double("train.peak_lr");
  c.warmup_fraction = m.get_double("train.warmup_fraction");
  c.clip_norm = m.get_double("train.clip_norm");
  c.weight_decay = m.get_double("train.weight_decay");
  c.beta1 = m.get_double("train.beta1");
  c.beta2 = m.get_double("train.beta2");
  c.adam_eps = m.get_double("train.adam_eps");
  c.data_seed = m.get_uint("train.data_seed");
  c.deterministic = m.get_bool("train.deterministic");
  c.loss = LossConfig::from_manifest(m);
  c.buffer.capacity = static_cast<std::size_t>(m.get_int("buffer.capacity"));
  c.buffer.mix_ratio = m.get_double("buffer.mix_ratio");
  c.buffer.warmup_pushes = static_cast<std::size_t>(m.get_int("buffer.warmup_pushes"));
  const auto depth = m.get("buffer.max_ar_depth");
  c.buffer.max_ar_depth = depth == "none" ? std::nullopt : std::optional<int>(std::stoi(depth));
  return c;
}

std::string to_string(Stage stage) { return stage == Stage::Pretrain ? "pretrain" : "finetune"; }

Stage stage_from_string(const std::string& text) {
  if (text == "pretrain") return Stage::Pretrain;
  if (text == "finetune") return Stage::Finetune;
  throw FormatError("unknown stage '" + text + "'");
}

torch::Tensor TrainingData::state(std::int64_t time_index) const {
  if (!range.contains(time_index)) {
    throw RangeError("time index " + std::to_string(time_index) + " outside the training range");
  }
  return states[time_index - range.begin];
}

std::shared_ptr<const TrainingData> TrainingData::from_trajectory(const Trajectory& traj,
                                                                  IndexRange range,
                                                                  const NormStats& norm) {
  auto data = std::make_shared<TrainingData>();
  data->range = range;
  data->norm = norm;
  data->latitude_weights = mmcast::latitude_weights(traj.grid);
  const int C = traj.schema.total_channels();
  data->states = torch::empty({range.size(), C, traj.grid.n_lat(), traj.grid.n_lon}, torch::kFloat);
  auto* out = data->states.data_ptr<float>();
  for (auto t = range.begin; t < range.end; ++t) {
    const auto field = norm.normalize(traj.at_time(t).values);
    std::memcpy(out, field.data().data(), field.size() * sizeof(float));
    out += field.size();
  }
  return data;
}

std::string format_step_record(const StepRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%lld\t%s\t%.9g\t%.9g\t%d\t%d\t%.4f\t%d\t%zu\t",
                static_cast<long long>(r.step), to_string(r.stage).c_str(), r.loss, r.lr,
                r.n_dataset, r.n_buffer, r.mean_depth, r.max_depth, r.buffer_size);
  return buf + r.draws;
}

std::int64_t count_graph_nodes(const torch::Tensor& loss) {
  std::unordered_set<const torch::autograd::Node*> seen;
  std::vector<const torch::autograd::Node*> stack;
  if (loss.grad_fn()) stack.push_back(loss.grad_fn().get());
  while (!stack.empty()) {
    const auto* node = stack.back();
    stack.pop_back();
    if (!seen.insert(node).second) continue;
    for (const auto& edge : node->next_edges()) {
      if (edge.function) stack.push_back(edge.function.get());
    }
  }
  return static_cast<std::int64_t>(seen.size());
}

Trainer::Trainer(ForecastModel model, std::shared_ptr<const TrainingData> data, TrainConfig cfg,
                 Stage stage)
    : model_(std::move(model)),
      data_(std::move(data)),
      cfg_(std::move(cfg)),
      stage_(stage),
      buffer_(cfg_.buffer, data_->range),
      rng_(derive_seed(cfg_.data_seed, "batches")),
      warmup_rng_(derive_seed(cfg_.data_seed, "buffer_warmup")) {
  cfg_.validate();
  if (data_->range.size() < 3) throw RangeError("training range needs at least 3 states");
  if (cfg_.deterministic) torch::set_num_threads(1);
  optimizer_ = std::make_unique<torch::optim::AdamW>(
      model_->parameters(), torch::optim::AdamWOptions(cfg_.peak_lr)
                                .betas({cfg_.beta1, cfg_.beta2})
                                .eps(cfg_.adam_eps)
                                .weight_decay(cfg_.weight_decay));
}

std::int64_t Trainer::total_steps() const {
  return stage_ == Stage::Pretrain ? cfg_.pretrain_steps : cfg_.finetune_steps;
}

double Trainer::learning_rate(std::int64_t i) const {
  const auto total = std::max<std::int64_t>(total_steps(), 1);
  const auto warm = std::max<std::int64_t>(1, std::llround(cfg_.warmup_fraction * total));
  if (i < warm) return cfg_.peak_lr * static_cast<double>(i + 1) / static_cast<double>(warm);
  const double progress =
      static_cast<double>(i - warm) / static_cast<double>(std::max<std::int64_t>(1, total - warm));
  return cfg_.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * std::min(progress, 1.0)));
}

void Trainer::warmup_buffer() {
  if (stage_ != Stage::Finetune) return;
  const auto& range = data_->range;
  std::uniform_int_distribution<std::int64_t> pick(range.begin, range.end - 3);
  torch::NoGradGuard no_grad;
  model_->eval();
  while (buffer_.total_pushed() < static_cast<std::int64_t>(cfg_.buffer.warmup_pushes)) {
    const auto want = static_cast<std::int64_t>(cfg_.buffer.warmup_pushes) - buffer_.total_pushed();
    const auto n = std::min<std::int64_t>(want, cfg_.batch_size);
    std::vector<std::int64_t> times;
    std::vector<torch::Tensor> inputs;
    for (std::int64_t i = 0; i < n; ++i) {
      times.push_back(pick(warmup_rng_));
      inputs.push_back(data_->state(times.back()));
    }
    const auto pred = model_->forward(torch::stack(inputs));
    for (std::int64_t i = 0; i < n; ++i) {
      buffer_.record_prediction(to_field(pred.mean[i]), 0, times[i], 0);
    }
  }
}

torch::Tensor Trainer::draw_input(const ReplayDraw& draw) const {
  if (draw.provenance == Provenance::Buffer) return to_tensor(draw.entry->prediction);
  return data_->state(draw.input_time_index);
}

std::string Trainer::diagnose(const torch::Tensor& mean, const torch::Tensor& target) const {
  torch::NoGradGuard no_grad;
  const auto r = (target - mean).abs().transpose(0, 1).reshape({target.size(1), -1});
  const auto labels = model_->schema().channel_labels();
  std::ostringstream out;
  out << "per-channel |residual| (mean, max):";
  for (int64_t c = 0; c < r.size(0); ++c) {
    out << " " << labels[c] << "=(" << r[c].mean().item<double>() << ", "
        << r[c].max().item<double>() << ")";
  }
  return out.str();
}

StepRecord Trainer::step() {
  if (steps_done_ >= total_steps()) throw std::logic_error("stage already finished");
  torch::manual_seed(derive_seed(cfg_.data_seed, "dropout") + static_cast<std::uint64_t>(steps_done_));
  const double lr = learning_rate(steps_done_);
  for (auto& group : optimizer_->param_groups()) {
    static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  }

  StepRecord rec;
  rec.stage = stage_;
  rec.lr = lr;
  std::vector<ReplayDraw> draws;
  std::vector<torch::Tensor> inputs;
  std::vector<torch::Tensor> targets;
  for (int i = 0; i < cfg_.batch_size; ++i) {
    draws.push_back(buffer_.sample(rng_));
    const auto& d = draws.back();
    inputs.push_back(draw_input(d));
    targets.push_back(data_->state(d.target_time_index));
    if (d.provenance == Provenance::Buffer) {
      ++rec.n_buffer;
    } else {
      ++rec.n_dataset;
    }
    rec.mean_depth += d.ar_depth;
    rec.max_depth = std::max(rec.max_depth, d.ar_depth);
    if (!rec.draws.empty()) rec.draws += ' ';
    rec.draws += (d.provenance == Provenance::Buffer ? 'b' : 'd') + std::to_string(d.ar_depth);
  }
  rec.mean_depth /= cfg_.batch_size;

  const auto input = torch::stack(inputs);
  const auto target = torch::stack(targets);
  model_->train();
  const auto pred = model_->forward(input);
  const auto label = "step " + std::to_string(steps_done_ + 1) + " (" + to_string(stage_) + ")";
  if (!torch::isfinite(pred.mean).all().item<bool>() ||
      !torch::isfinite(pred.log_variance).all().item<bool>()) {
    throw NumericError("non-finite model output at " + label + "; " + diagnose(pred.mean, target));
  }
  auto loss = uncertainty_nll(pred.mean, pred.log_variance, target, data_->latitude_weights, cfg_.loss);
  rec.loss = loss.item<double>();
  if (!std::isfinite(rec.loss)) {
    throw NumericError("non-finite loss at " + label + "; " + diagnose(pred.mean, target));
  }
  rec.graph_nodes = count_graph_nodes(loss);

  optimizer_->zero_grad();
  loss.backward();
  torch::nn::utils::clip_grad_norm_(model_->parameters(), cfg_.clip_norm);
  optimizer_->step();
  ++steps_done_;
  rec.step = steps_done_;

  if (stage_ == Stage::Finetune) {
    const auto means = pred.mean.detach();
    for (std::size_t i = 0; i < draws.size(); ++i) {
      buffer_.record_prediction(to_field(means[static_cast<int64_t>(i)]), draws[i].ar_depth,
                                draws[i].input_time_index, steps_done_);
    }
  }
  rec.buffer_size = buffer_.size();
  return rec;
}

namespace {

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void rng_from_string(std::mt19937_64& rng, const std::string& text) {
  std::istringstream in(text);
  in >> rng;
  if (!in) throw FormatError("corrupt RNG state");
}

}  // namespace

void Trainer::save_state(const fs::path& dir, const Manifest& extra) {
  fs::create_directories(dir);
  Manifest model_extra = extra;
  model_extra.set("stage", to_string(stage_));
  save_checkpoint(dir / "model", model_, data_->norm, steps_done_, model_extra);

  std::vector<std::pair<std::string, torch::Tensor>> moments;
  Manifest state;
  state.set("kind", "trainer_state");
  state.set("stage", to_string(stage_));
  state.set("steps_done", steps_done_);
  state.set("rng", rng_to_string(rng_));
  state.set("warmup_rng", rng_to_string(warmup_rng_));
  auto& opt_state = optimizer_->state();
  for (const auto& item : model_->named_parameters()) {
    auto it = opt_state.find(item.value().unsafeGetTensorImpl());
    if (it == opt_state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamWParamState&>(*it->second);
    moments.emplace_back("exp_avg." + item.key(), s.exp_avg());
    moments.emplace_back("exp_avg_sq." + item.key(), s.exp_avg_sq());
    state.set("adam_step." + item.key(), s.step());
  }
  write_tensors(dir / "optimizer.bin", moments);
  buffer_.save(dir / "buffer");
  state.write(dir / "trainer_state.txt");
}

void Trainer::load_state(const fs::path& dir) {
  const auto state = Manifest::read(dir / "trainer_state.txt");
  if (stage_from_string(state.get("stage")) != stage_) {
    throw FormatError("trainer state in " + dir.string() + " belongs to another stage");
  }
  const auto loaded = load_checkpoint(dir / "model");
  auto params = model_->named_parameters();
  {
    torch::NoGradGuard no_grad;
    for (const auto& item : loaded.model->named_parameters()) {
      auto* p = params.find(item.key());
      if (!p || !p->sizes().equals(item.value().sizes())) {
        throw FormatError("trainer state does not match the model architecture");
      }
      p->copy_(item.value());
    }
  }
  std::map<std::string, torch::Tensor> moments;
  for (auto& [name, t] : read_tensors(dir / "optimizer.bin")) moments[name] = t;
  auto& opt_state = optimizer_->state();
  opt_state.clear();
  for (const auto& item : params) {
    const auto step_key = "adam_step." + item.key();
    if (!state.contains(step_key)) continue;
    auto s = std::make_unique<torch::optim::AdamWParamState>();
    s->step(state.get_int(step_key));
    s->exp_avg(moments.at("exp_avg." + item.key()).clone());
    s->exp_avg_sq(moments.at("exp_avg_sq." + item.key()).clone());
    opt_state[item.value().unsafeGetTensorImpl()] = std::move(s);
  }
  steps_done_ = state.get_int("steps_done");
  rng_from_string(rng_, state.get("rng"));
  rng_from_string(warmup_rng_, state.get("warmup_rng"));
  buffer_ = ReplayBuffer::load(dir / "buffer");
}

std::optional<fs::path> latest_checkpoint(const fs::path& run_dir) {
  std::ifstream in(run_dir / "latest.txt");
  std::string rel;
  if (!in || !std::getline(in, rel) || rel.empty()) return std::nullopt;
  return run_dir / rel;
}

namespace {

void write_latest(const fs::path& run_dir, const std::string& rel) {
  std::ofstream out(run_dir / "latest.txt");
  out << rel << "\n";
}

void truncate_history(const fs::path& path, std::int64_t keep_through) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (lines.empty() || std::stoll(line.substr(0, line.find('\t'))) <= keep_through) {
      lines.push_back(line);
    }
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const auto& l : lines) out << l << "\n";
}

}  // namespace

StageResult run_stage(Trainer& trainer, const RunOptions& opts) {
  StageResult result;
  const bool persist = !opts.run_dir.empty();
  Manifest run_manifest;
  run_manifest.set("kind", "run");
  run_manifest.set("stage", to_string(trainer.stage()));
  trainer.config().describe(run_manifest);
  trainer.model()->config().describe(run_manifest);
  run_manifest.set("checkpoint_interval", opts.checkpoint_interval);
  run_manifest.merge(opts.extra);

  std::ofstream history;
  if (persist) {
    const auto latest = opts.resume ? latest_checkpoint(opts.run_dir) : std::nullopt;
    if (latest) {
      trainer.load_state(*latest);
      truncate_history(opts.run_dir / "loss_history.tsv", trainer.steps_done());
      history.open(opts.run_dir / "loss_history.tsv", std::ios::app);
    } else {
      prepare_output_dir(opts.run_dir, opts.force || opts.resume);
      run_manifest.write(opts.run_dir / "manifest.txt");
      history.open(opts.run_dir / "loss_history.tsv", std::ios::trunc);
      history << kLossHistoryHeader << "\n";
    }
    if (!history) throw FormatError("cannot write loss history in " + opts.run_dir.string());
  }

  const auto checkpoint = [&](const std::string& rel) {
    trainer.save_state(opts.run_dir / rel, run_manifest);
    write_latest(opts.run_dir, rel);
  };

  while (trainer.steps_done() < trainer.total_steps()) {
    if (opts.stop_after && trainer.steps_done() >= *opts.stop_after) break;
    auto rec = trainer.step();
    if (persist) history << format_step_record(rec) << "\n" << std::flush;
    result.history.push_back(std::move(rec));
    const bool at_interval =
        opts.checkpoint_interval > 0 && trainer.steps_done() % opts.checkpoint_interval == 0;
    const bool stopping = opts.stop_after && trainer.steps_done() >= *opts.stop_after;
    if (persist && trainer.steps_done() < trainer.total_steps() && (at_interval || stopping)) {
      char name[64];
      std::snprintf(name, sizeof(name), "checkpoints/step_%08lld",
                    static_cast<long long>(trainer.steps_done()));
      checkpoint(name);
    }
  }

  result.completed = trainer.steps_done() >= trainer.total_steps();
  if (persist && result.completed) {
    checkpoint("final");
    result.checkpoint_dir = opts.run_dir / "final" / "model";
    result.checkpoint_hash = Manifest::read(result.checkpoint_dir / "manifest.txt").get("content_hash");
  }
  result.model = trainer.model();
  return result;
}

StageResult pretrain_single_step(ForecastModel model, std::shared_ptr<const TrainingData> data,
                                 const TrainConfig& cfg, const RunOptions& opts) {
  Trainer trainer(std::move(model), std::move(data), cfg, Stage::Pretrain);
  return run_stage(trainer, opts);
}

StageResult finetune_with_buffer(ForecastModel model, std::shared_ptr<const TrainingData> data,
                                 const TrainConfig& cfg, const RunOptions& opts) {
  Trainer trainer(std::move(model), std::move(data), cfg, Stage::Finetune);
  const bool resuming = opts.resume && !opts.run_dir.empty() && latest_checkpoint(opts.run_dir);
  if (!resuming) trainer.warmup_buffer();
  return run_stage(trainer, opts);
}

}  // namespace mmcast
