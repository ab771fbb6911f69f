#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/grid.hpp"
#include "mmcast/manifest.hpp"

namespace mmcast {

namespace fs = std::filesystem;

/// Refusal to reuse a non-empty output directory without force.
class OutputDirError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Creates `dir`, refusing to reuse a non-empty directory unless `force`.
void prepare_output_dir(const fs::path& dir, bool force);

/// Raw little-endian float32 I/O in (channel, lat, lon) order.
void write_field(const fs::path& path, const Field& field);
Field read_field(const fs::path& path, int channels, int n_lat, int n_lon);
void write_floats(std::ostream& out, std::span<const float> values);
void read_floats(std::istream& in, std::span<float> values);

/// "state_00000042.bin"
std::string state_filename(std::int64_t time_index);

void describe_grid(Manifest& m, const GridSpec& grid);
GridSpec grid_from_manifest(const Manifest& m);
void describe_schema(Manifest& m, const ModalitySchema& schema);
ModalitySchema schema_from_manifest(const Manifest& m);
void describe_sim_params(Manifest& m, const SimParams& params);
SimParams sim_params_from_manifest(const Manifest& m);

/// Trajectory directory: manifest.txt plus one state file per time index.
void write_trajectory(const fs::path& dir, const Trajectory& traj, const SimParams& params,
                      bool force = false);

/// Forecast archive: the same layout with kind = forecast and a link to the
/// initial condition and checkpoint that produced it.
struct ForecastArchiveInfo {
  std::int64_t init_time_index = 0;
  std::string initial_condition;  // trajectory directory the initial state came from
  std::string checkpoint_hash;
};

void write_forecast_archive(const fs::path& dir, const std::vector<StateTensor>& states,
                            const GridSpec& grid, const ModalitySchema& schema, int steps_per_day,
                            const ForecastArchiveInfo& info, bool force = false);

/// Reads trajectory or forecast directories. A trajectory read as a forecast
/// behaves like one initialised one step before its first state.
class ArchiveReader {
 public:
  explicit ArchiveReader(fs::path dir);

  const Manifest& manifest() const { return manifest_; }
  const GridSpec& grid() const { return grid_; }
  const ModalitySchema& schema() const { return schema_; }
  const fs::path& dir() const { return dir_; }
  std::string kind() const { return manifest_.get("kind"); }
  int steps_per_day() const { return steps_per_day_; }
  std::int64_t first_time_index() const { return first_; }
  std::int64_t count() const { return count_; }
  std::int64_t init_time_index() const;
  bool has_time(std::int64_t t) const { return t >= first_ && t < first_ + count_; }

  StateTensor read_state(std::int64_t time_index) const;
  Trajectory read_all() const;

 private:
  fs::path dir_;
  Manifest manifest_;
  GridSpec grid_;
  ModalitySchema schema_;
  int steps_per_day_ = 4;
  std::int64_t first_ = 0;
  std::int64_t count_ = 0;
};

bool is_archive_dir(const fs::path& dir);

}  // namespace mmcast
