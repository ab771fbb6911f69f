#include "mmcast/replay_buffer.hpp"

#include <algorithm>
#include <fstream>

#include "mmcast/manifest.hpp"
#include "mmcast/storage.hpp"

namespace mmcast {

std::string to_string(Provenance p) { return p == Provenance::Dataset ? "dataset" : "buffer"; }

void BufferConfig::validate() const {
  if (capacity < 1) throw ConfigError("buffer capacity must be at least 1");
  if (!(mix_ratio >= 0.0 && mix_ratio <= 1.0)) throw ConfigError("buffer mix_ratio must lie in [0, 1]");
  if (max_ar_depth && *max_ar_depth < 1) throw ConfigError("buffer max_ar_depth must be at least 1");
}

ReplayBuffer::ReplayBuffer(BufferConfig config, IndexRange training_range)
    : config_(std::move(config)), training_range_(training_range) {
  config_.validate();
}

void ReplayBuffer::push(BufferEntry entry) {
  if (entry.ar_depth < 1) throw RangeError("buffer entries need ar_depth >= 1");
  if (!training_range_.contains(entry.valid_time_index) ||
      !training_range_.contains(entry.valid_time_index + 1)) {
    throw RangeError("prediction valid at " + std::to_string(entry.valid_time_index) +
                     " has no target inside the training range [" +
                     std::to_string(training_range_.begin) + ", " +
                     std::to_string(training_range_.end) + ")");
  }
  if (!entries_.empty() && !entries_.front().prediction.same_shape(entry.prediction)) {
    throw SchemaError("buffer entry shape differs from stored entries");
  }
  if (entries_.size() >= config_.capacity) entries_.pop_front();
  entries_.push_back(std::move(entry));
  ++total_pushed_;
}

bool ReplayBuffer::record_prediction(Field prediction, int input_ar_depth,
                                     std::int64_t input_time_index, std::int64_t model_version) {
  const int depth = input_ar_depth + 1;
  if (config_.max_ar_depth && depth > *config_.max_ar_depth) return false;
  const auto valid = input_time_index + 1;
  if (!training_range_.contains(valid) || !training_range_.contains(valid + 1)) return false;
  push(BufferEntry{std::move(prediction), valid, depth, model_version});
  return true;
}

ReplayDraw ReplayBuffer::sample(std::mt19937_64& rng) const {
  if (training_range_.size() < 2) throw RangeError("training range holds no (input, target) pair");
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  const bool from_buffer = coin(rng) < config_.mix_ratio && sampling_enabled();
  ReplayDraw draw;
  if (from_buffer) {
    std::uniform_int_distribution<std::size_t> pick(0, entries_.size() - 1);
    const auto& entry = entries_[pick(rng)];
    draw.provenance = Provenance::Buffer;
    draw.input_time_index = entry.valid_time_index;
    draw.ar_depth = entry.ar_depth;
    draw.entry = &entry;
  } else {
    std::uniform_int_distribution<std::int64_t> pick(training_range_.begin, training_range_.end - 2);
    draw.provenance = Provenance::Dataset;
    draw.input_time_index = pick(rng);
    draw.ar_depth = 0;
  }
  draw.target_time_index = draw.input_time_index + 1;
  return draw;
}

int ReplayBuffer::max_depth() const {
  int depth = 0;
  for (const auto& e : entries_) depth = std::max(depth, e.ar_depth);
  return depth;
}

void ReplayBuffer::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.set("kind", "replay_buffer");
  m.set("capacity", static_cast<std::int64_t>(config_.capacity));
  m.set("mix_ratio", config_.mix_ratio);
  m.set("warmup_pushes", static_cast<std::int64_t>(config_.warmup_pushes));
  m.set("max_ar_depth", config_.max_ar_depth ? std::to_string(*config_.max_ar_depth) : "none");
  m.set("train_begin", training_range_.begin);
  m.set("train_end", training_range_.end);
  m.set("total_pushed", total_pushed_);
  m.set("n_entries", static_cast<std::int64_t>(entries_.size()));
  if (!entries_.empty()) {
    const auto& f = entries_.front().prediction;
    m.set("shape", std::to_string(f.channels()) + "," + std::to_string(f.n_lat()) + "," +
                       std::to_string(f.n_lon()));
  }
  std::ofstream out(dir / "buffer.bin", std::ios::binary);
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    m.set("entry." + std::to_string(i), std::to_string(e.valid_time_index) + "," +
                                            std::to_string(e.ar_depth) + "," +
                                            std::to_string(e.model_version));
    write_floats(out, e.prediction.data());
  }
  if (!out) throw FormatError("failed writing replay buffer data");
  m.write(dir / "buffer_manifest.txt");
}

ReplayBuffer ReplayBuffer::load(const std::filesystem::path& dir) {
  const auto m = Manifest::read(dir / "buffer_manifest.txt");
  BufferConfig cfg;
  cfg.capacity = static_cast<std::size_t>(m.get_int("capacity"));
  cfg.mix_ratio = m.get_double("mix_ratio");
  cfg.warmup_pushes = static_cast<std::size_t>(m.get_int("warmup_pushes"));
  const auto depth = m.get("max_ar_depth");
  cfg.max_ar_depth = depth == "none" ? std::nullopt : std::optional<int>(std::stoi(depth));
  ReplayBuffer buffer(cfg, {m.get_int("train_begin"), m.get_int("train_end")});
  const auto n = m.get_int("n_entries");
  if (n > 0) {
    const auto shape = split_doubles(m.get("shape"));
    std::ifstream in(dir / "buffer.bin", std::ios::binary);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto meta = split_list(m.get("entry." + std::to_string(i)));
      if (meta.size() != 3) throw FormatError("malformed buffer entry metadata");
      BufferEntry e;
      e.prediction = Field(static_cast<int>(shape.at(0)), static_cast<int>(shape.at(1)),
                           static_cast<int>(shape.at(2)));
      read_floats(in, e.prediction.data());
      e.valid_time_index = std::stoll(meta[0]);
      e.ar_depth = std::stoi(meta[1]);
      e.model_version = std::stoll(meta[2]);
      buffer.entries_.push_back(std::move(e));
    }
  }
  buffer.total_pushed_ = m.get_int("total_pushed");
  return buffer;
}

}  // namespace mmcast
