#include "mmcast/storage.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

namespace mmcast {

namespace {

constexpr const char* kManifestName = "manifest.txt";

std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0x0000FF00u) | ((v << 8) & 0x00FF0000u) | (v << 24);
}

}  // namespace

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir)) {
    if (!fs::is_directory(dir)) throw OutputDirError(dir.string() + " exists and is not a directory");
    if (!fs::is_empty(dir)) {
      if (!force) {
        throw OutputDirError("output directory " + dir.string() +
                          " is not empty (use --force to overwrite)");
      }
      fs::remove_all(dir);
    }
  }
  fs::create_directories(dir);
}

void write_floats(std::ostream& out, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) {
      auto bits = byteswap32(std::bit_cast<std::uint32_t>(v));
      out.write(reinterpret_cast<const char*>(&bits), sizeof(bits));
    }
  }
}

void read_floats(std::istream& in, std::span<float> values) {
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes()));
  if (!in) throw FormatError("truncated float data");
  if constexpr (std::endian::native != std::endian::little) {
    for (float& v : values) v = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(v)));
  }
}

void write_field(const fs::path& path, const Field& field) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  write_floats(out, field.data());
  if (!out) throw FormatError("failed writing " + path.string());
}

Field read_field(const fs::path& path, int channels, int n_lat, int n_lon) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw FormatError("cannot read " + path.string());
  Field field(channels, n_lat, n_lon);
  const auto expected = static_cast<std::streamoff>(field.size() * sizeof(float));
  if (in.tellg() != expected) {
    throw FormatError(path.string() + " has " + std::to_string(in.tellg()) + " bytes, expected " +
                      std::to_string(expected));
  }
  in.seekg(0);
  read_floats(in, field.data());
  return field;
}

std::string state_filename(std::int64_t time_index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "state_%08lld.bin", static_cast<long long>(time_index));
  return buf;
}

void describe_grid(Manifest& m, const GridSpec& grid) {
  m.set("grid.n_lat", grid.n_lat());
  m.set("grid.n_lon", grid.n_lon);
  m.set("grid.latitudes", grid.latitudes);
}

GridSpec grid_from_manifest(const Manifest& m) {
  GridSpec grid;
  grid.latitudes = m.get_doubles("grid.latitudes");
  grid.n_lon = static_cast<int>(m.get_int("grid.n_lon"));
  if (grid.n_lat() != m.get_int("grid.n_lat")) throw FormatError("grid.n_lat disagrees with grid.latitudes");
  grid.validate();
  return grid;
}

void describe_schema(Manifest& m, const ModalitySchema& schema) {
  m.set("schema.n_modalities", static_cast<int>(schema.modalities.size()));
  for (std::size_t i = 0; i < schema.modalities.size(); ++i) {
    const auto& mod = schema.modalities[i];
    std::string labels;
    for (std::size_t c = 0; c < mod.level_labels.size(); ++c) labels += (c ? "," : "") + mod.level_labels[c];
    m.set("schema.modality." + std::to_string(i), mod.name + ":" + labels);
  }
}

ModalitySchema schema_from_manifest(const Manifest& m) {
  ModalitySchema schema;
  const auto n = m.get_int("schema.n_modalities");
  for (std::int64_t i = 0; i < n; ++i) {
    const auto& entry = m.get("schema.modality." + std::to_string(i));
    const auto colon = entry.find(':');
    if (colon == std::string::npos) throw FormatError("malformed schema entry '" + entry + "'");
    Modality mod;
    mod.name = entry.substr(0, colon);
    mod.level_labels = split_list(entry.substr(colon + 1));
    mod.channels = static_cast<int>(mod.level_labels.size());
    schema.modalities.push_back(std::move(mod));
  }
  schema.validate();
  return schema;
}

void describe_sim_params(Manifest& m, const SimParams& p) {
  describe_grid(m, p.grid);
  m.set("sim.n_levels", p.n_levels);
  m.set("sim.diffusion", p.diffusion);
  m.set("sim.dt", p.dt);
  m.set("sim.wave_amplitude", p.wave_amplitude);
  m.set("sim.n_waves", p.n_waves);
  m.set("sim.rotation", p.rotation);
  m.set("sim.relaxation_rate", p.relaxation_rate);
  m.set("sim.seasonal_amplitude", p.seasonal_amplitude);
  m.set("sim.forcing_amplitude", p.forcing_amplitude);
  m.set("sim.steps_per_day", p.steps_per_day);
  m.set("sim.cycle_length_days", p.cycle_length_days);
  m.set("sim.spinup_steps", p.spinup_steps);
  m.set("sim.seed", p.seed);
}

SimParams sim_params_from_manifest(const Manifest& m) {
  SimParams p;
  p.grid = grid_from_manifest(m);
  p.n_levels = static_cast<int>(m.get_int("sim.n_levels"));
  p.diffusion = m.get_double("sim.diffusion");
  p.dt = m.get_double("sim.dt");
  p.wave_amplitude = m.get_double("sim.wave_amplitude");
  p.n_waves = static_cast<int>(m.get_int("sim.n_waves"));
  p.rotation = m.get_double("sim.rotation");
  p.relaxation_rate = m.get_double("sim.relaxation_rate");
  p.seasonal_amplitude = m.get_double("sim.seasonal_amplitude");
  p.forcing_amplitude = m.get_double("sim.forcing_amplitude");
  p.steps_per_day = static_cast<int>(m.get_int("sim.steps_per_day"));
  p.cycle_length_days = static_cast<int>(m.get_int("sim.cycle_length_days"));
  p.spinup_steps = static_cast<int>(m.get_int("sim.spinup_steps"));
  p.seed = m.get_uint("sim.seed");
  return p;
}

namespace {

void write_states(const fs::path& dir, const std::vector<StateTensor>& states) {
  for (const auto& s : states) write_field(dir / state_filename(s.time_index), s.values);
}

void describe_states(Manifest& m, const std::vector<StateTensor>& states) {
  m.set("first_time_index", states.empty() ? std::int64_t{0} : states.front().time_index);
  m.set("n_states", static_cast<std::int64_t>(states.size()));
  m.set("value_type", "float32-le");
  m.set("layout", "channel,lat,lon");
}

}  // namespace

void write_trajectory(const fs::path& dir, const Trajectory& traj, const SimParams& params,
                      bool force) {
  prepare_output_dir(dir, force);
  Manifest m;
  m.set("kind", "trajectory");
  describe_schema(m, traj.schema);
  describe_sim_params(m, params);
  describe_states(m, traj.states);
  write_states(dir, traj.states);
  m.write(dir / kManifestName);
}

void write_forecast_archive(const fs::path& dir, const std::vector<StateTensor>& states,
                            const GridSpec& grid, const ModalitySchema& schema, int steps_per_day,
                            const ForecastArchiveInfo& info, bool force) {
  prepare_output_dir(dir, force);
  Manifest m;
  m.set("kind", "forecast");
  describe_grid(m, grid);
  describe_schema(m, schema);
  m.set("sim.steps_per_day", steps_per_day);
  m.set("init_time_index", info.init_time_index);
  m.set("initial_condition", info.initial_condition);
  m.set("checkpoint_hash", info.checkpoint_hash);
  describe_states(m, states);
  write_states(dir, states);
  m.write(dir / kManifestName);
}

bool is_archive_dir(const fs::path& dir) { return fs::is_regular_file(dir / kManifestName); }

ArchiveReader::ArchiveReader(fs::path dir) : dir_(std::move(dir)) {
  manifest_ = Manifest::read(dir_ / kManifestName);
  const auto kind = manifest_.get("kind");
  if (kind != "trajectory" && kind != "forecast") {
    throw FormatError(dir_.string() + " is not a trajectory or forecast archive");
  }
  grid_ = grid_from_manifest(manifest_);
  schema_ = schema_from_manifest(manifest_);
  steps_per_day_ = static_cast<int>(manifest_.get_int("sim.steps_per_day"));
  first_ = manifest_.get_int("first_time_index");
  count_ = manifest_.get_int("n_states");
}

std::int64_t ArchiveReader::init_time_index() const {
  if (kind() == "forecast") return manifest_.get_int("init_time_index");
  return first_ - 1;
}

StateTensor ArchiveReader::read_state(std::int64_t time_index) const {
  if (!has_time(time_index)) {
    throw FormatError(dir_.string() + " has no state at time index " + std::to_string(time_index));
  }
  StateTensor s{read_field(dir_ / state_filename(time_index), schema_.total_channels(), grid_.n_lat(),
                           grid_.n_lon),
                time_index};
  return s;
}

Trajectory ArchiveReader::read_all() const {
  Trajectory traj;
  traj.grid = grid_;
  traj.schema = schema_;
  traj.steps_per_day = steps_per_day_;
  traj.states.reserve(static_cast<std::size_t>(count_));
  for (auto t = first_; t < first_ + count_; ++t) traj.states.push_back(read_state(t));
  return traj;
}

}  // namespace mmcast
