#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

#include "mmcast/atmosphere.hpp"
#include "mmcast/grid.hpp"

namespace mmcast {

class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

enum class Provenance { Dataset, Buffer };
std::string to_string(Provenance p);

/// Where buffer storage lives. Entries are plain host vectors.
enum class Placement { Host, Accelerator };

/// A stored model prediction in normalized space. `valid_time_index` is the
/// time the prediction is for; its training target is the truth one step later.
struct BufferEntry {
  Field prediction;
  std::int64_t valid_time_index = 0;
  int ar_depth = 1;
  std::int64_t model_version = 0;
};

struct BufferConfig {
  std::size_t capacity = 512;
  double mix_ratio = 0.5;
  std::size_t warmup_pushes = 64;
  std::optional<int> max_ar_depth = 12;

  void validate() const;
};

/// One training input chosen by ReplayBuffer::sample.
struct ReplayDraw {
  Provenance provenance = Provenance::Dataset;
  std::int64_t input_time_index = 0;   // valid time of the input state
  std::int64_t target_time_index = 0;  // input_time_index + 1
  int ar_depth = 0;                    // model applications behind the input; 0 for real states
  const BufferEntry* entry = nullptr;  // set for buffer draws
};

/// Bounded FIFO of past predictions, reused as training inputs.
class ReplayBuffer {
 public:
  ReplayBuffer(BufferConfig config, IndexRange training_range);

  /// Appends, evicting the oldest entry first when full. Throws RangeError when
  /// the entry has no ground-truth successor inside the training range.
  void push(BufferEntry entry);

  /// Stores a prediction made from an input of depth `input_ar_depth` valid at
  /// `input_time_index`. Returns false (nothing stored) when the new depth
  /// exceeds max_ar_depth or the prediction has no target in range.
  bool record_prediction(Field prediction, int input_ar_depth, std::int64_t input_time_index,
                         std::int64_t model_version);

  /// With probability mix_ratio (once warm) a uniform buffer entry, otherwise a
  /// uniform dataset pair. Always consumes the provenance coin, then one index.
  ReplayDraw sample(std::mt19937_64& rng) const;

  bool sampling_enabled() const { return entries_.size() >= config_.warmup_pushes && !entries_.empty(); }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::deque<BufferEntry>& entries() const { return entries_; }
  const BufferConfig& config() const { return config_; }
  const IndexRange& training_range() const { return training_range_; }
  std::int64_t total_pushed() const { return total_pushed_; }
  int max_depth() const;
  Placement placement() const { return Placement::Host; }

  void save(const std::filesystem::path& dir) const;
  static ReplayBuffer load(const std::filesystem::path& dir);

 private:
  BufferConfig config_;
  IndexRange training_range_;
  std::deque<BufferEntry> entries_;
  std::int64_t total_pushed_ = 0;
};

}  // namespace mmcast
