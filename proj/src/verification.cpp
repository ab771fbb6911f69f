#include "mmcast/verification.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "mmcast/manifest.hpp"

namespace mmcast {

namespace {

void check_weights(const Field& f, std::span<const double> weights) {
  if (static_cast<int>(weights.size()) != f.n_lat()) {
    throw GridError("latitude weights do not match the field's rows");
  }
}

void check_aligned(const ForecastSet& forecasts, const ForecastSet& truths) {
  if (forecasts.init_time_indices != truths.init_time_indices) {
    throw SchemaError("forecast and truth archives cover different initializations");
  }
  if (forecasts.fields.size() != forecasts.init_time_indices.size() ||
      truths.fields.size() != truths.init_time_indices.size()) {
    throw SchemaError("archive initialization count disagrees with its fields");
  }
  for (std::size_t i = 0; i < forecasts.fields.size(); ++i) {
    if (forecasts.fields[i].size() != truths.fields[i].size() ||
        forecasts.fields[i].size() != forecasts.fields.front().size()) {
      throw SchemaError("forecast and truth archives have different lead counts");
    }
  }
}

}  // namespace

std::string to_string(MetricKind kind) { return kind == MetricKind::Rmse ? "RMSE" : "ACC"; }

MetricSeries::MetricSeries(MetricKind kind, std::vector<std::string> channel_labels, int n_leads)
    : kind_(kind),
      labels_(std::move(channel_labels)),
      n_leads_(n_leads),
      cells_(labels_.size() * static_cast<std::size_t>(std::max(n_leads, 0))) {}

const MetricCell& MetricSeries::at(int channel, int lead) const {
  if (channel < 0 || channel >= n_channels() || lead < 1 || lead > n_leads_) {
    throw std::out_of_range("metric cell out of range");
  }
  return cells_[static_cast<std::size_t>(channel) * n_leads_ + (lead - 1)];
}

MetricCell& MetricSeries::cell(int channel, int lead) {
  return const_cast<MetricCell&>(std::as_const(*this).at(channel, lead));
}

std::vector<double> MetricSeries::values(int channel) const {
  std::vector<double> out(n_leads_);
  for (int lead = 1; lead <= n_leads_; ++lead) {
    const auto& c = at(channel, lead);
    out[lead - 1] = c.defined() ? c.value : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<double> field_rmse(const Field& forecast, const Field& truth,
                               std::span<const double> weights) {
  if (!forecast.same_shape(truth)) throw SchemaError("forecast and truth shapes differ");
  check_weights(truth, weights);
  const int W = truth.n_lat();
  const int H = truth.n_lon();
  std::vector<double> out(truth.channels());
  for (int c = 0; c < truth.channels(); ++c) {
    double total = 0.0;
    for (int w = 0; w < W; ++w) {
      double row = 0.0;
      for (int h = 0; h < H; ++h) {
        const double e = static_cast<double>(truth.at(c, w, h)) - forecast.at(c, w, h);
        row += e * e;
      }
      total += weights[w] * row;
    }
    out[c] = std::sqrt(total / (static_cast<double>(W) * H));
  }
  return out;
}

std::vector<std::optional<double>> field_acc(const Field& forecast, const Field& truth,
                                             const Field& climatology,
                                             std::span<const double> weights) {
  if (!forecast.same_shape(truth) || !climatology.same_shape(truth)) {
    throw SchemaError("forecast, truth and climatology shapes differ");
  }
  check_weights(truth, weights);
  std::vector<std::optional<double>> out(truth.channels());
  for (int c = 0; c < truth.channels(); ++c) {
    double cross = 0.0, truth_sq = 0.0, forecast_sq = 0.0;
    for (int w = 0; w < truth.n_lat(); ++w) {
      double row_cross = 0.0, row_truth = 0.0, row_forecast = 0.0;
      for (int h = 0; h < truth.n_lon(); ++h) {
        const double clim = climatology.at(c, w, h);
        const double a = truth.at(c, w, h) - clim;
        const double f = forecast.at(c, w, h) - clim;
        row_cross += a * f;
        row_truth += a * a;
        row_forecast += f * f;
      }
      cross += weights[w] * row_cross;
      truth_sq += weights[w] * row_truth;
      forecast_sq += weights[w] * row_forecast;
    }
    if (truth_sq > 0.0 && forecast_sq > 0.0) {
      out[c] = std::clamp(cross / std::sqrt(truth_sq * forecast_sq), -1.0, 1.0);
    }
  }
  return out;
}

MetricAccumulator::MetricAccumulator(MetricKind kind, std::vector<std::string> channel_labels,
                                     int n_leads)
    : series_(kind, std::move(channel_labels), n_leads),
      sums_(series_.cells_.size(), 0.0) {}

void MetricAccumulator::add(int lead, std::span<const double> per_channel) {
  if (static_cast<int>(per_channel.size()) != series_.n_channels()) {
    throw SchemaError("metric channel count mismatch");
  }
  for (int c = 0; c < series_.n_channels(); ++c) {
    auto& cell = series_.cell(c, lead);
    sums_[static_cast<std::size_t>(c) * series_.n_leads_ + lead - 1] += per_channel[c];
    ++cell.n_defined;
  }
}

void MetricAccumulator::add(int lead, std::span<const std::optional<double>> per_channel) {
  if (static_cast<int>(per_channel.size()) != series_.n_channels()) {
    throw SchemaError("metric channel count mismatch");
  }
  for (int c = 0; c < series_.n_channels(); ++c) {
    auto& cell = series_.cell(c, lead);
    if (per_channel[c]) {
      sums_[static_cast<std::size_t>(c) * series_.n_leads_ + lead - 1] += *per_channel[c];
      ++cell.n_defined;
    } else {
      ++cell.n_undefined;
    }
  }
}

MetricSeries MetricAccumulator::finish() const {
  MetricSeries out = series_;
  for (std::size_t i = 0; i < out.cells_.size(); ++i) {
    auto& cell = out.cells_[i];
    cell.value = cell.n_defined > 0 ? sums_[i] / cell.n_defined
                                    : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

MetricSeries rmse(const ForecastSet& forecasts, const ForecastSet& truths, const GridSpec& grid,
                  std::vector<std::string> channel_labels) {
  check_aligned(forecasts, truths);
  const auto weights = latitude_weights(grid);
  MetricAccumulator acc(MetricKind::Rmse, std::move(channel_labels), forecasts.n_leads());
  for (std::size_t i = 0; i < forecasts.fields.size(); ++i) {
    for (int k = 0; k < forecasts.n_leads(); ++k) {
      acc.add(k + 1, field_rmse(forecasts.fields[i][k], truths.fields[i][k], weights));
    }
    acc.next_initialization();
  }
  return acc.finish();
}

MetricSeries acc(const ForecastSet& forecasts, const ForecastSet& truths,
                 const Climatology& climatology, const GridSpec& grid,
                 std::vector<std::string> channel_labels) {
  check_aligned(forecasts, truths);
  const auto weights = latitude_weights(grid);
  MetricAccumulator accumulator(MetricKind::Acc, std::move(channel_labels), forecasts.n_leads());
  for (std::size_t i = 0; i < forecasts.fields.size(); ++i) {
    for (int k = 0; k < forecasts.n_leads(); ++k) {
      const auto valid = forecasts.init_time_indices[i] + k + 1;
      const auto per_channel = field_acc(forecasts.fields[i][k], truths.fields[i][k],
                                         climatology.at_time(valid), weights);
      accumulator.add(k + 1, std::span<const std::optional<double>>(per_channel));
    }
    accumulator.next_initialization();
  }
  return accumulator.finish();
}

SkillfulLead skillful_lead_time(std::span<const double> acc_by_lead, double threshold,
                                int steps_per_day) {
  SkillfulLead out;
  const int n = static_cast<int>(acc_by_lead.size());
  int last = 0;
  while (last < n && std::isfinite(acc_by_lead[last]) && acc_by_lead[last] > threshold) ++last;
  out.lead_steps = last;
  out.days = static_cast<double>(last) / steps_per_day;
  out.unbounded = n > 0 && last == n;
  if (last == 0) return out;  // fails from the first lead on
  double crossing = last;
  if (last < n && std::isfinite(acc_by_lead[last])) {
    const double pass = acc_by_lead[last - 1];
    const double fail = acc_by_lead[last];
    crossing += (pass - threshold) / (pass - fail);
  }
  out.fractional_days = crossing / steps_per_day;
  return out;
}

SkillfulLead skillful_lead_time(const MetricSeries& acc_series, int channel, double threshold,
                                int steps_per_day) {
  if (acc_series.kind() != MetricKind::Acc) throw SchemaError("skillful lead time needs an ACC series");
  const auto values = acc_series.values(channel);
  return skillful_lead_time(values, threshold, steps_per_day);
}

void write_metric_table(const std::filesystem::path& path, const std::vector<MetricSeries>& series,
                        int steps_per_day) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << kMetricTableHeader << "\n";
  for (const auto& s : series) {
    for (int c = 0; c < s.n_channels(); ++c) {
      for (int lead = 1; lead <= s.n_leads(); ++lead) {
        const auto& cell = s.at(c, lead);
        out << to_string(s.kind()) << ',' << s.channel_labels()[c] << ',' << lead << ','
            << format_double(static_cast<double>(lead) / steps_per_day) << ','
            << (cell.defined() ? format_double(cell.value) : std::string("nan")) << ','
            << cell.n_defined << ',' << cell.n_undefined << "\n";
      }
    }
  }
  if (!out) throw FormatError("failed writing " + path.string());
}

}  // namespace mmcast
