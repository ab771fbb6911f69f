#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mmcast {

class GridError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Regular latitude-longitude grid. Longitudes are implicit and uniform on
/// [0, 360); latitude depends only on the row index.
struct GridSpec {
  std::vector<double> latitudes;  // degrees, strictly monotone
  int n_lon = 0;

  int n_lat() const { return static_cast<int>(latitudes.size()); }

  /// Cell-centred rows from north to south, so no row sits on a pole.
  static GridSpec regular(int n_lat, int n_lon);

  void validate() const;

  bool operator==(const GridSpec&) const = default;
};

struct Modality {
  std::string name;  // one of s, z, q, u, v, t
  int channels = 0;
  std::vector<std::string> level_labels;

  bool operator==(const Modality&) const = default;
};

/// Ordered partition of the channel axis into modalities. The order is part
/// of the contract: slicing, concatenation and decoding all follow it.
struct ModalitySchema {
  std::vector<Modality> modalities;

  int total_channels() const;
  int channel_offset(std::size_t modality_index) const;
  std::size_t index_of(const std::string& name) const;
  std::vector<std::string> channel_labels() const;

  void validate() const;

  /// s (t2m, u10, v10, msl) followed by z, q, u, v, t at `n_levels` levels.
  static ModalitySchema standard(int n_levels);

  bool operator==(const ModalitySchema&) const = default;
};

/// Dense (channel, lat, lon) float array.
class Field {
 public:
  Field() = default;
  Field(int channels, int n_lat, int n_lon, float fill = 0.0f);
  Field(int channels, int n_lat, int n_lon, std::vector<float> data);

  int channels() const { return channels_; }
  int n_lat() const { return n_lat_; }
  int n_lon() const { return n_lon_; }
  std::size_t plane_size() const { return static_cast<std::size_t>(n_lat_) * n_lon_; }
  std::size_t size() const { return data_.size(); }

  float& at(int c, int w, int h) { return data_[index(c, w, h)]; }
  float at(int c, int w, int h) const { return data_[index(c, w, h)]; }

  std::span<float> channel(int c) { return {data_.data() + c * plane_size(), plane_size()}; }
  std::span<const float> channel(int c) const {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  std::vector<float>& data() { return data_; }
  const std::vector<float>& data() const { return data_; }

  bool all_finite() const;
  bool same_shape(const Field& other) const {
    return channels_ == other.channels_ && n_lat_ == other.n_lat_ && n_lon_ == other.n_lon_;
  }

  bool operator==(const Field&) const = default;

 private:
  std::size_t index(int c, int w, int h) const {
    return (static_cast<std::size_t>(c) * n_lat_ + w) * n_lon_ + h;
  }

  int channels_ = 0;
  int n_lat_ = 0;
  int n_lon_ = 0;
  std::vector<float> data_;
};

/// One atmosphere snapshot at an integer step index.
struct StateTensor {
  Field values;
  std::int64_t time_index = 0;
};

/// Throws SchemaError/GridError when the state does not match, or when it
/// holds non-finite values.
void check_state(const StateTensor& state, const ModalitySchema& schema, const GridSpec& grid);

/// W * cos(lat_w) / sum cos(lat), so the mean over rows is exactly one.
std::vector<double> latitude_weights(const GridSpec& grid);

using ModalitySlices = std::vector<std::pair<std::string, Field>>;

ModalitySlices slice_modalities(const Field& values, const ModalitySchema& schema);

Field concat_modalities(const ModalitySlices& slices);

}  // namespace mmcast
