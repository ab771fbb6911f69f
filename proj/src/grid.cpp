#include "mmcast/grid.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <set>

namespace mmcast {

namespace {

constexpr std::array<const char*, 6> kModalityNames = {"s", "z", "q", "u", "v", "t"};

// Pressure levels used for labels, bottom up.
constexpr std::array<int, 8> kPressureLevels = {1000, 850, 700, 500, 300, 200, 100, 50};

double cos_deg(double degrees) {
  // Exact zero at the poles keeps the all-pole check meaningful.
  if (std::abs(degrees) == 90.0) return 0.0;
  return std::cos(degrees * std::numbers::pi / 180.0);
}

}  // namespace

GridSpec GridSpec::regular(int n_lat, int n_lon) {
  if (n_lat < 1 || n_lon < 1) throw GridError("grid dimensions must be positive");
  GridSpec grid;
  grid.n_lon = n_lon;
  grid.latitudes.resize(n_lat);
  const double spacing = 180.0 / n_lat;
  for (int w = 0; w < n_lat; ++w) grid.latitudes[w] = 90.0 - (w + 0.5) * spacing;
  return grid;
}

void GridSpec::validate() const {
  if (latitudes.empty()) throw GridError("grid has no latitude rows");
  if (n_lon < 1) throw GridError("grid needs at least one longitude");
  for (double lat : latitudes) {
    if (!std::isfinite(lat) || lat < -90.0 || lat > 90.0) {
      throw GridError("latitude " + std::to_string(lat) + " outside [-90, 90]");
    }
  }
  if (latitudes.size() > 1) {
    const bool ascending = latitudes[1] > latitudes[0];
    for (std::size_t i = 1; i < latitudes.size(); ++i) {
      const bool step_up = latitudes[i] > latitudes[i - 1];
      if (latitudes[i] == latitudes[i - 1] || step_up != ascending) {
        throw GridError("latitudes must be strictly monotone");
      }
    }
  }
}

int ModalitySchema::total_channels() const {
  int total = 0;
  for (const auto& m : modalities) total += m.channels;
  return total;
}

int ModalitySchema::channel_offset(std::size_t modality_index) const {
  int offset = 0;
  for (std::size_t i = 0; i < modality_index; ++i) offset += modalities.at(i).channels;
  return offset;
}

std::size_t ModalitySchema::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < modalities.size(); ++i) {
    if (modalities[i].name == name) return i;
  }
  throw SchemaError("unknown modality '" + name + "'");
}

std::vector<std::string> ModalitySchema::channel_labels() const {
  std::vector<std::string> labels;
  for (const auto& m : modalities) {
    for (int c = 0; c < m.channels; ++c) {
      labels.push_back(c < static_cast<int>(m.level_labels.size()) ? m.level_labels[c]
                                                                    : m.name + std::to_string(c));
    }
  }
  return labels;
}

void ModalitySchema::validate() const {
  if (modalities.empty()) throw SchemaError("schema has no modalities");
  std::set<std::string> seen;
  for (const auto& m : modalities) {
    if (std::find(kModalityNames.begin(), kModalityNames.end(), m.name) == kModalityNames.end()) {
      throw SchemaError("modality name '" + m.name + "' not in {s, z, q, u, v, t}");
    }
    if (!seen.insert(m.name).second) throw SchemaError("duplicate modality '" + m.name + "'");
    if (m.channels < 1) throw SchemaError("modality '" + m.name + "' has no channels");
    if (static_cast<int>(m.level_labels.size()) != m.channels) {
      throw SchemaError("modality '" + m.name + "' needs one label per channel");
    }
  }
}

ModalitySchema ModalitySchema::standard(int n_levels) {
  if (n_levels < 1 || n_levels > static_cast<int>(kPressureLevels.size())) {
    throw SchemaError("n_levels must be in [1, " + std::to_string(kPressureLevels.size()) + "]");
  }
  ModalitySchema schema;
  schema.modalities.push_back({"s", 4, {"t2m", "u10", "v10", "msl"}});
  for (const char* name : {"z", "q", "u", "v", "t"}) {
    Modality m{name, n_levels, {}};
    for (int l = 0; l < n_levels; ++l) m.level_labels.push_back(name + std::to_string(kPressureLevels[l]));
    schema.modalities.push_back(std::move(m));
  }
  return schema;
}

Field::Field(int channels, int n_lat, int n_lon, float fill)
    : channels_(channels),
      n_lat_(n_lat),
      n_lon_(n_lon),
      data_(static_cast<std::size_t>(channels) * n_lat * n_lon, fill) {
  if (channels < 0 || n_lat < 0 || n_lon < 0) throw GridError("negative field dimension");
}

Field::Field(int channels, int n_lat, int n_lon, std::vector<float> data)
    : channels_(channels), n_lat_(n_lat), n_lon_(n_lon), data_(std::move(data)) {
  if (data_.size() != static_cast<std::size_t>(channels) * n_lat * n_lon) {
    throw GridError("field data size does not match its shape");
  }
}

bool Field::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

void check_state(const StateTensor& state, const ModalitySchema& schema, const GridSpec& grid) {
  const Field& f = state.values;
  if (f.channels() != schema.total_channels()) {
    throw SchemaError("state has " + std::to_string(f.channels()) + " channels, schema expects " +
                      std::to_string(schema.total_channels()));
  }
  if (f.n_lat() != grid.n_lat() || f.n_lon() != grid.n_lon) {
    throw GridError("state spatial shape does not match the grid");
  }
  if (!f.all_finite()) {
    throw GridError("state at time index " + std::to_string(state.time_index) +
                    " holds non-finite values");
  }
}

std::vector<double> latitude_weights(const GridSpec& grid) {
  grid.validate();
  const auto n = grid.latitudes.size();
  std::vector<double> cosines(n);
  double total = 0.0;
  for (std::size_t w = 0; w < n; ++w) {
    cosines[w] = std::max(0.0, cos_deg(grid.latitudes[w]));
    total += cosines[w];
  }
  if (total <= 0.0) throw GridError("degenerate grid: every row lies on a pole");
  std::vector<double> weights(n);
  for (std::size_t w = 0; w < n; ++w) weights[w] = static_cast<double>(n) * cosines[w] / total;
  return weights;
}

ModalitySlices slice_modalities(const Field& values, const ModalitySchema& schema) {
  if (values.channels() != schema.total_channels()) {
    throw SchemaError("cannot slice " + std::to_string(values.channels()) +
                      " channels with a schema of " + std::to_string(schema.total_channels()));
  }
  ModalitySlices slices;
  slices.reserve(schema.modalities.size());
  const auto plane = values.plane_size();
  int offset = 0;
  for (const auto& m : schema.modalities) {
    const auto begin = values.data().begin() + static_cast<std::ptrdiff_t>(offset * plane);
    std::vector<float> data(begin, begin + static_cast<std::ptrdiff_t>(m.channels * plane));
    slices.emplace_back(m.name, Field(m.channels, values.n_lat(), values.n_lon(), std::move(data)));
    offset += m.channels;
  }
  return slices;
}

Field concat_modalities(const ModalitySlices& slices) {
  if (slices.empty()) throw SchemaError("nothing to concatenate");
  const int n_lat = slices.front().second.n_lat();
  const int n_lon = slices.front().second.n_lon();
  int channels = 0;
  for (const auto& [name, f] : slices) {
    if (f.n_lat() != n_lat || f.n_lon() != n_lon) {
      throw SchemaError("modality '" + name + "' has mismatched spatial dimensions");
    }
    channels += f.channels();
  }
  std::vector<float> data;
  data.reserve(static_cast<std::size_t>(channels) * n_lat * n_lon);
  for (const auto& [name, f] : slices) data.insert(data.end(), f.data().begin(), f.data().end());
  return Field(channels, n_lat, n_lon, std::move(data));
}

}  // namespace mmcast
