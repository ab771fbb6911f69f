#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/grid.hpp"

namespace mmcast {

enum class MetricKind { Rmse, Acc };
std::string to_string(MetricKind kind);

/// Average over initializations for one (channel, lead). Undefined
/// per-initialization values are excluded and counted.
struct MetricCell {
  double value = 0.0;
  int n_defined = 0;
  int n_undefined = 0;

  bool defined() const { return n_defined > 0; }
};

class MetricSeries {
 public:
  MetricSeries() = default;
  MetricSeries(MetricKind kind, std::vector<std::string> channel_labels, int n_leads);

  MetricKind kind() const { return kind_; }
  const std::vector<std::string>& channel_labels() const { return labels_; }
  int n_channels() const { return static_cast<int>(labels_.size()); }
  int n_leads() const { return n_leads_; }
  int n_initializations() const { return n_initializations_; }

  /// `lead` counts model steps and starts at 1.
  const MetricCell& at(int channel, int lead) const;
  /// Values for leads 1..n_leads, NaN where undefined.
  std::vector<double> values(int channel) const;

 private:
  friend class MetricAccumulator;
  MetricCell& cell(int channel, int lead);

  MetricKind kind_ = MetricKind::Rmse;
  std::vector<std::string> labels_;
  int n_leads_ = 0;
  int n_initializations_ = 0;
  std::vector<MetricCell> cells_;
};

/// Latitude-weighted RMSE of one forecast field, per channel.
std::vector<double> field_rmse(const Field& forecast, const Field& truth,
                               std::span<const double> weights);

/// Latitude-weighted anomaly correlation per channel; nullopt where either
/// anomaly has zero weighted norm.
std::vector<std::optional<double>> field_acc(const Field& forecast, const Field& truth,
                                             const Field& climatology,
                                             std::span<const double> weights);

/// Streams per-initialization results into a MetricSeries.
class MetricAccumulator {
 public:
  MetricAccumulator(MetricKind kind, std::vector<std::string> channel_labels, int n_leads);

  void add(int lead, std::span<const double> per_channel);
  void add(int lead, std::span<const std::optional<double>> per_channel);
  /// Marks the end of one initialization.
  void next_initialization() { ++series_.n_initializations_; }

  MetricSeries finish() const;

 private:
  MetricSeries series_;
  std::vector<double> sums_;
};

/// Forecast (or truth) fields aligned by initialization and lead:
/// fields[i][k] is valid at init_time_indices[i] + k + 1.
struct ForecastSet {
  std::vector<std::int64_t> init_time_indices;
  std::vector<std::vector<Field>> fields;

  int n_leads() const { return fields.empty() ? 0 : static_cast<int>(fields.front().size()); }
};

MetricSeries rmse(const ForecastSet& forecasts, const ForecastSet& truths, const GridSpec& grid,
                  std::vector<std::string> channel_labels);

MetricSeries acc(const ForecastSet& forecasts, const ForecastSet& truths,
                 const Climatology& climatology, const GridSpec& grid,
                 std::vector<std::string> channel_labels);

struct SkillfulLead {
  int lead_steps = 0;
  double days = 0.0;
  double fractional_days = 0.0;  // linear interpolation to the threshold crossing
  bool unbounded = false;        // every lead passed
};

/// Longest lead such that every lead up to it has ACC above `threshold`.
SkillfulLead skillful_lead_time(std::span<const double> acc_by_lead, double threshold,
                                int steps_per_day = 4);
SkillfulLead skillful_lead_time(const MetricSeries& acc_series, int channel, double threshold,
                                int steps_per_day = 4);

inline constexpr const char* kMetricTableHeader =
    "metric,channel,lead_steps,lead_days,value,n_defined,n_undefined";

/// Delimited table, one row per (metric, channel, lead).
void write_metric_table(const std::filesystem::path& path, const std::vector<MetricSeries>& series,
                        int steps_per_day);

}  // namespace mmcast
