#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mmcast/grid.hpp"

namespace mmcast {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parameters of the synthetic multi-level atmosphere. Winds are expressed in
/// grid cells per unit time, diffusion in cells^2 per unit time.
struct SimParams {
  GridSpec grid = GridSpec::regular(32, 64);
  int n_levels = 4;
  double diffusion = 0.05;
  double dt = 1.0;
  double wave_amplitude = 0.3;   // peak wind per traveling wave at the lowest level
  int n_waves = 3;
  double rotation = 0.2;         // zonal jet strength at the lowest level
  double relaxation_rate = 0.02;
  double seasonal_amplitude = 8.0;
  double forcing_amplitude = 0.15; // stochastic forcing on temperature and humidity
  int steps_per_day = 4;
  int cycle_length_days = 36;
  int spinup_steps = 144;
  std::uint64_t seed = 0;

  ModalitySchema schema() const { return ModalitySchema::standard(n_levels); }

  /// Upper bound on max(|u|, |v|) over all levels, cells and times.
  double max_wind_bound() const;

  /// Throws ConfigError, including when max_wind_bound() * dt exceeds two cells.
  void validate() const;
};

constexpr double kMaxCourant = 2.0;

struct Trajectory {
  GridSpec grid;
  ModalitySchema schema;
  int steps_per_day = 4;
  std::vector<StateTensor> states;

  std::int64_t size() const { return static_cast<std::int64_t>(states.size()); }
  const StateTensor& at_time(std::int64_t time_index) const;
};

Trajectory simulate(const SimParams& params, std::int64_t n_steps);

/// Half-open [begin, end) range of time indices.
struct IndexRange {
  std::int64_t begin = 0;
  std::int64_t end = 0;

  std::int64_t size() const { return end - begin; }
  bool contains(std::int64_t t) const { return t >= begin && t < end; }
  bool operator==(const IndexRange&) const = default;
};

struct DatasetSplit {
  IndexRange train;
  IndexRange val;
  IndexRange test;
};

/// Chronological split; each fraction is floored to a count and the rounding
/// remainder goes to the last split.
DatasetSplit split_dataset(std::int64_t n_steps, std::array<double, 3> fractions);

constexpr double kStdFloor = 1e-6;

struct NormStats {
  std::vector<double> mean;
  std::vector<double> std;

  int channels() const { return static_cast<int>(mean.size()); }
  Field normalize(const Field& physical) const;
  Field denormalize(const Field& normalized) const;
};

NormStats compute_norm_stats(const Trajectory& traj, IndexRange range);

class Climatology {
 public:
  Climatology() = default;
  Climatology(int cycle_length_days, int steps_per_day, std::vector<Field> days,
              std::vector<int> group_sizes);

  int cycle_length_days() const { return cycle_length_days_; }
  int steps_per_day() const { return steps_per_day_; }
  int day_of_cycle(std::int64_t time_index) const;

  const Field& day(int d) const { return days_.at(d); }
  /// Mean field for the day-of-cycle containing `time_index`.
  const Field& at_time(std::int64_t time_index) const;
  const std::vector<int>& group_sizes() const { return group_sizes_; }

 private:
  int cycle_length_days_ = 0;
  int steps_per_day_ = 4;
  std::vector<Field> days_;
  std::vector<int> group_sizes_;
};

Climatology compute_climatology(const Trajectory& traj, IndexRange train_range,
                                int cycle_length_days);

}  // namespace mmcast
