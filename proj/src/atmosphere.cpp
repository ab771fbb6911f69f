#include "mmcast/atmosphere.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace mmcast {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kGasConstant = 287.0;
constexpr std::array<double, 8> kPressure = {1000, 850, 700, 500, 300, 200, 100, 50};

double level_factor(int level) { return 1.0 + 0.2 * level; }

// Fractional row coordinate in (0, 1), north to south.
double row_coord(double w, int n_lat) { return (w + 0.5) / n_lat; }

struct Wave {
  int zonal = 1;
  int meridional = 1;
  double stream_amplitude = 0.0;
  double frequency = 0.0;     // phase speed in radians per unit time
  double phase = 0.0;
  double level_shift = 0.0;   // phase offset per level
  double mod_frequency = 0.0; // slow amplitude modulation
  double mod_phase = 0.0;

  double profile(double y) const {
    const double s = std::sin(kPi * y);
    return s * s * std::sin(meridional * kPi * y);
  }
};

struct ForcingMode {
  int zonal;
  int meridional;
};

constexpr std::array<ForcingMode, 6> kForcingModes = {
    ForcingMode{1, 1}, {2, 1}, {1, 2}, {3, 2}, {2, 3}, {4, 1}};

std::vector<Wave> draw_waves(const SimParams& p, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> zonal(1, 3);
  std::uniform_int_distribution<int> meridional(1, 3);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Wave> waves(p.n_waves);
  const int n_lat = p.grid.n_lat();
  for (auto& wave : waves) {
    wave.zonal = zonal(rng);
    wave.meridional = meridional(rng);
    const double share = 0.5 + 0.5 * unit(rng);
    wave.frequency = 0.03 + 0.09 * unit(rng);
    wave.phase = 2.0 * kPi * unit(rng);
    wave.level_shift = 0.6 * (unit(rng) - 0.5);
    wave.mod_frequency = 0.005 + 0.015 * unit(rng);
    wave.mod_phase = 2.0 * kPi * unit(rng);
    // Scale the stream function so the discrete zonal wind peaks at `share * wave_amplitude`.
    double max_dp = 0.0;
    for (int w = 0; w < n_lat; ++w) {
      const double dp = 0.5 * (wave.profile(row_coord(w + 1, n_lat)) -
                               wave.profile(row_coord(w - 1, n_lat)));
      max_dp = std::max(max_dp, std::abs(dp));
    }
    wave.stream_amplitude = max_dp > 0.0 ? p.wave_amplitude * share / max_dp : 0.0;
  }
  return waves;
}

double wave_v_bound(const Wave& wave, int n_lat, int n_lon) {
  double max_p = 0.0;
  for (int w = 0; w < n_lat; ++w) max_p = std::max(max_p, std::abs(wave.profile(row_coord(w, n_lat))));
  return wave.stream_amplitude * max_p * std::abs(std::sin(2.0 * kPi * wave.zonal / n_lon));
}

double jet_profile(double y) {
  const double s = std::sin(kPi * y);
  return s * s;
}

class Integrator {
 public:
  Integrator(const SimParams& p) : p_(p), rng_(p.seed), n_lat_(p.grid.n_lat()), n_lon_(p.grid.n_lon) {
    waves_ = draw_waves(p, rng_);
    const auto plane = static_cast<std::size_t>(n_lat_) * n_lon_;
    temperature_.assign(p.n_levels, std::vector<double>(plane));
    humidity_.assign(p.n_levels, std::vector<double>(plane));
    u_.assign(p.n_levels, std::vector<double>(plane));
    v_.assign(p.n_levels, std::vector<double>(plane));
    scratch_.resize(plane);
  }

  void initialize(std::int64_t time_index) {
    std::vector<double> anomaly(scratch_.size());
    for (int l = 0; l < p_.n_levels; ++l) {
      smooth_noise(anomaly, 2.0);
      for (int w = 0; w < n_lat_; ++w) {
        for (int h = 0; h < n_lon_; ++h) {
          temperature_[l][idx(w, h)] = t_equilibrium(w, h, l, time_index) + anomaly[idx(w, h)];
        }
      }
      smooth_noise(anomaly, 0.1);
      for (int w = 0; w < n_lat_; ++w) {
        for (int h = 0; h < n_lon_; ++h) {
          humidity_[l][idx(w, h)] = q_equilibrium(w, l, time_index) * (1.0 + anomaly[idx(w, h)]);
        }
      }
    }
    update_winds(time_index);
  }

  // Advance from `time_index` to `time_index + 1`.
  void step(std::int64_t time_index) {
    const double dt = p_.dt;
    std::vector<double> forcing(scratch_.size());
    for (int l = 0; l < p_.n_levels; ++l) {
      advect(temperature_[l], l);
      advect(humidity_[l], l);
      diffuse(temperature_[l]);
      diffuse(humidity_[l]);
      const double relax = p_.relaxation_rate * dt;
      for (int w = 0; w < n_lat_; ++w) {
        const double q_eq = q_equilibrium(w, l, time_index + 1);
        for (int h = 0; h < n_lon_; ++h) {
          auto& t = temperature_[l][idx(w, h)];
          auto& q = humidity_[l][idx(w, h)];
          t += relax * (t_equilibrium(w, h, l, time_index + 1) - t);
          q += relax * (q_eq - q);
        }
      }
      if (p_.forcing_amplitude > 0.0) {
        smooth_noise(forcing, p_.forcing_amplitude * std::sqrt(dt));
        for (std::size_t i = 0; i < forcing.size(); ++i) temperature_[l][i] += forcing[i];
        smooth_noise(forcing, 0.05 * p_.forcing_amplitude * std::sqrt(dt));
        for (std::size_t i = 0; i < forcing.size(); ++i) humidity_[l][i] += forcing[i];
      }
    }
    update_winds(time_index + 1);
  }

  StateTensor snapshot(std::int64_t time_index, const ModalitySchema& schema) const {
    const int L = p_.n_levels;
    Field f(schema.total_channels(), n_lat_, n_lon_);
    std::vector<std::vector<double>> smooth_t(L);
    for (int l = 0; l < L; ++l) smooth_t[l] = box_smooth(temperature_[l]);

    const double t_ref = 268.0;
    std::vector<double> msl(scratch_.size());
    for (std::size_t i = 0; i < msl.size(); ++i) msl[i] = 1013.0 + 0.8 * (t_ref - smooth_t[0][i]);

    // s: t2m, u10, v10, msl
    for (int w = 0; w < n_lat_; ++w) {
      for (int h = 0; h < n_lon_; ++h) {
        const auto i = idx(w, h);
        f.at(0, w, h) = static_cast<float>(temperature_[0][i] + 1.5);
        f.at(1, w, h) = static_cast<float>(0.7 * u_[0][i]);
        f.at(2, w, h) = static_cast<float>(0.7 * v_[0][i]);
        f.at(3, w, h) = static_cast<float>(msl[i]);
      }
    }
    const int z0 = schema.channel_offset(schema.index_of("z"));
    const int q0 = schema.channel_offset(schema.index_of("q"));
    const int u0 = schema.channel_offset(schema.index_of("u"));
    const int v0 = schema.channel_offset(schema.index_of("v"));
    const int t0 = schema.channel_offset(schema.index_of("t"));
    std::vector<double> z(scratch_.size());
    for (int l = 0; l < L; ++l) {
      for (std::size_t i = 0; i < z.size(); ++i) {
        if (l == 0) {
          // Hypsometric layer from msl to the lowest level.
          z[i] = kGasConstant * smooth_t[0][i] * std::log(msl[i] / kPressure[0]);
        } else {
          z[i] += kGasConstant * 0.5 * (smooth_t[l - 1][i] + smooth_t[l][i]) *
                  std::log(kPressure[l - 1] / kPressure[l]);
        }
      }
      for (int w = 0; w < n_lat_; ++w) {
        for (int h = 0; h < n_lon_; ++h) {
          const auto i = idx(w, h);
          f.at(z0 + l, w, h) = static_cast<float>(z[i]);
          f.at(q0 + l, w, h) = static_cast<float>(humidity_[l][i]);
          f.at(u0 + l, w, h) = static_cast<float>(u_[l][i]);
          f.at(v0 + l, w, h) = static_cast<float>(v_[l][i]);
          f.at(t0 + l, w, h) = static_cast<float>(temperature_[l][i]);
        }
      }
    }
    return StateTensor{std::move(f), time_index};
  }

 private:
  std::size_t idx(int w, int h) const { return static_cast<std::size_t>(w) * n_lon_ + h; }

  double latitude(int w) const { return p_.grid.latitudes[w] * kPi / 180.0; }

  double season(std::int64_t time_index) const {
    const double days = static_cast<double>(time_index) / p_.steps_per_day;
    return std::cos(2.0 * kPi * days / p_.cycle_length_days);
  }

  double t_equilibrium(int w, int h, int level, std::int64_t time_index) const {
    const double lat = latitude(w);
    const double s = std::sin(lat);
    return 288.0 - 10.0 * level - 40.0 * s * s + p_.seasonal_amplitude * s * season(time_index) +
           3.0 * std::cos(2.0 * kPi * h / n_lon_ + 0.7 * level) * std::cos(lat);
  }

  double q_equilibrium(int w, int level, std::int64_t time_index) const {
    const double lat = latitude(w);
    const double c = std::cos(lat);
    return 12.0 * std::exp(-0.6 * level) * (0.3 + 0.7 * c * c) *
           (1.0 + 0.015 * p_.seasonal_amplitude * std::sin(lat) * season(time_index));
  }

  void update_winds(std::int64_t time_index) {
    const double t = static_cast<double>(time_index) * p_.dt;
    for (int l = 0; l < p_.n_levels; ++l) {
      const double lf = level_factor(l);
      auto& u = u_[l];
      auto& v = v_[l];
      for (int w = 0; w < n_lat_; ++w) {
        const double jet = p_.rotation * lf * jet_profile(row_coord(w, n_lat_));
        for (int h = 0; h < n_lon_; ++h) u[idx(w, h)] = jet, v[idx(w, h)] = 0.0;
      }
      for (const auto& wave : waves_) {
        const double amp = wave.stream_amplitude * lf *
                           (0.75 + 0.25 * std::cos(wave.mod_frequency * t + wave.mod_phase));
        const double k = 2.0 * kPi * wave.zonal / n_lon_;
        const double offset = -wave.frequency * t + wave.phase + wave.level_shift * l;
        for (int w = 0; w < n_lat_; ++w) {
          const double p = wave.profile(row_coord(w, n_lat_));
          const double dp = 0.5 * (wave.profile(row_coord(w + 1, n_lat_)) -
                                   wave.profile(row_coord(w - 1, n_lat_)));
          for (int h = 0; h < n_lon_; ++h) {
            // Centred differences of the stream function: discretely non-divergent.
            const double c = std::cos(k * h + offset);
            const double dc = 0.5 * (std::cos(k * (h + 1) + offset) - std::cos(k * (h - 1) + offset));
            u[idx(w, h)] += -amp * dp * c;
            v[idx(w, h)] += amp * p * dc;
          }
        }
      }
    }
  }

  // First-order semi-Lagrangian step: bilinear interpolation at the departure
  // point, periodic in longitude, clamped at the first and last rows. A global
  // multiplicative fixer then restores the field's grid sum.
  void advect(std::vector<double>& field, int level) {
    double before = 0.0;
    for (double x : field) before += x;
    const auto& u = u_[level];
    const auto& v = v_[level];
    const double dt = p_.dt;
    for (int w = 0; w < n_lat_; ++w) {
      for (int h = 0; h < n_lon_; ++h) {
        const auto i = idx(w, h);
        double y = w - v[i] * dt;
        double x = h - u[i] * dt;
        y = std::clamp(y, 0.0, static_cast<double>(n_lat_ - 1));
        const double xf = std::floor(x);
        const double yf = std::floor(y);
        const double ax = x - xf;
        const double ay = y - yf;
        const int x0 = static_cast<int>(((static_cast<long>(xf) % n_lon_) + n_lon_) % n_lon_);
        const int x1 = (x0 + 1) % n_lon_;
        const int y0 = static_cast<int>(yf);
        const int y1 = std::min(y0 + 1, n_lat_ - 1);
        scratch_[i] = (1 - ay) * ((1 - ax) * field[idx(y0, x0)] + ax * field[idx(y0, x1)]) +
                      ay * ((1 - ax) * field[idx(y1, x0)] + ax * field[idx(y1, x1)]);
      }
    }
    double after = 0.0;
    for (double x : scratch_) after += x;
    if (after != 0.0) {
      const double fix = before / after;
      for (double& x : scratch_) x *= fix;
    }
    field.swap(scratch_);
  }

  void diffuse(std::vector<double>& field) {
    const double k = p_.diffusion * p_.dt;
    if (k == 0.0) return;
    for (int w = 0; w < n_lat_; ++w) {
      const int wn = std::max(w - 1, 0);
      const int ws = std::min(w + 1, n_lat_ - 1);
      for (int h = 0; h < n_lon_; ++h) {
        const int he = (h + 1) % n_lon_;
        const int hw = (h + n_lon_ - 1) % n_lon_;
        const double c = field[idx(w, h)];
        scratch_[idx(w, h)] = c + k * (field[idx(wn, h)] + field[idx(ws, h)] + field[idx(w, he)] +
                                       field[idx(w, hw)] - 4.0 * c);
      }
    }
    field.swap(scratch_);
  }

  std::vector<double> box_smooth(const std::vector<double>& field) const {
    std::vector<double> out(field.size());
    for (int w = 0; w < n_lat_; ++w) {
      for (int h = 0; h < n_lon_; ++h) {
        double sum = 0.0;
        for (int dw = -1; dw <= 1; ++dw) {
          const int ww = std::clamp(w + dw, 0, n_lat_ - 1);
          for (int dh = -1; dh <= 1; ++dh) sum += field[idx(ww, (h + dh + n_lon_) % n_lon_)];
        }
        out[idx(w, h)] = sum / 9.0;
      }
    }
    return out;
  }

  // Sum of a few low-order modes with Gaussian amplitudes and uniform phases.
  void smooth_noise(std::vector<double>& out, double amplitude) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::fill(out.begin(), out.end(), 0.0);
    const double norm = amplitude / std::sqrt(static_cast<double>(kForcingModes.size()));
    for (const auto& mode : kForcingModes) {
      const double a = normal(rng_) * norm;
      const double phase = 2.0 * kPi * unit(rng_);
      for (int w = 0; w < n_lat_; ++w) {
        const double m = std::sin(mode.meridional * kPi * row_coord(w, n_lat_));
        for (int h = 0; h < n_lon_; ++h) {
          out[idx(w, h)] += a * m * std::cos(2.0 * kPi * mode.zonal * h / n_lon_ + phase);
        }
      }
    }
  }

  const SimParams& p_;
  std::mt19937_64 rng_;
  int n_lat_;
  int n_lon_;
  std::vector<Wave> waves_;
  std::vector<std::vector<double>> temperature_, humidity_, u_, v_;
  std::vector<double> scratch_;
};

}  // namespace

double SimParams::max_wind_bound() const {
  std::mt19937_64 rng(seed);
  const auto waves = draw_waves(*this, rng);
  double u_bound = rotation;
  double v_bound = 0.0;
  for (const auto& wave : waves) {
    double max_dp = 0.0;
    for (int w = 0; w < grid.n_lat(); ++w) {
      max_dp = std::max(max_dp, std::abs(0.5 * (wave.profile(row_coord(w + 1, grid.n_lat())) -
                                                wave.profile(row_coord(w - 1, grid.n_lat())))));
    }
    u_bound += wave.stream_amplitude * max_dp;
    v_bound += wave_v_bound(wave, grid.n_lat(), grid.n_lon);
  }
  return level_factor(n_levels - 1) * std::max(u_bound, v_bound);
}

void SimParams::validate() const {
  try {
    grid.validate();
    (void)schema();
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (n_levels > 8) throw ConfigError("n_levels must be at most 8");
  if (!(dt > 0.0)) throw ConfigError("dt must be positive");
  if (diffusion < 0.0) throw ConfigError("diffusion must be non-negative");
  if (diffusion * dt > 0.25) throw ConfigError("diffusion * dt exceeds the explicit bound 0.25");
  if (wave_amplitude < 0.0 || rotation < 0.0 || n_waves < 0) {
    throw ConfigError("wave amplitude, rotation and wave count must be non-negative");
  }
  if (relaxation_rate < 0.0 || relaxation_rate * dt > 1.0) {
    throw ConfigError("relaxation_rate * dt must lie in [0, 1]");
  }
  if (forcing_amplitude < 0.0) throw ConfigError("forcing_amplitude must be non-negative");
  if (steps_per_day < 1 || cycle_length_days < 1) throw ConfigError("calendar sizes must be positive");
  if (spinup_steps < 0) throw ConfigError("spinup_steps must be non-negative");
  const double courant = max_wind_bound() * dt;
  if (courant > kMaxCourant) {
    throw ConfigError("unstable time step: max wind * dt = " + std::to_string(courant) +
                      " cells exceeds the bound of " + std::to_string(kMaxCourant));
  }
}

const StateTensor& Trajectory::at_time(std::int64_t time_index) const {
  if (states.empty()) throw std::out_of_range("empty trajectory");
  const auto pos = time_index - states.front().time_index;
  if (pos < 0 || pos >= size()) {
    throw std::out_of_range("time index " + std::to_string(time_index) + " outside trajectory");
  }
  return states[static_cast<std::size_t>(pos)];
}

Trajectory simulate(const SimParams& params, std::int64_t n_steps) {
  params.validate();
  if (n_steps < 1) throw ConfigError("n_steps must be at least 1");
  Trajectory traj;
  traj.grid = params.grid;
  traj.schema = params.schema();
  traj.steps_per_day = params.steps_per_day;
  traj.states.reserve(static_cast<std::size_t>(n_steps));

  Integrator integrator(params);
  std::int64_t t = -params.spinup_steps;
  integrator.initialize(t);
  for (; t < 0; ++t) integrator.step(t);
  traj.states.push_back(integrator.snapshot(0, traj.schema));
  for (std::int64_t k = 1; k < n_steps; ++k) {
    integrator.step(k - 1);
    traj.states.push_back(integrator.snapshot(k, traj.schema));
  }
  return traj;
}

DatasetSplit split_dataset(std::int64_t n_steps, std::array<double, 3> fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
  const auto count = [&](double f) {
    return static_cast<std::int64_t>(std::floor(f * static_cast<double>(n_steps) + 1e-9));
  };
  const std::int64_t n_train = count(fractions[0]);
  const std::int64_t n_val = count(fractions[1]);
  const std::int64_t n_test = n_steps - n_train - n_val;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw ConfigError("split of " + std::to_string(n_steps) + " steps leaves an empty range");
  }
  return {{0, n_train}, {n_train, n_train + n_val}, {n_train + n_val, n_steps}};
}

Field NormStats::normalize(const Field& physical) const {
  if (physical.channels() != channels()) throw SchemaError("normalization channel mismatch");
  Field out(physical.channels(), physical.n_lat(), physical.n_lon());
  for (int c = 0; c < physical.channels(); ++c) {
    auto src = physical.channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = static_cast<float>((static_cast<double>(src[i]) - mean[c]) / std[c]);
    }
  }
  return out;
}

Field NormStats::denormalize(const Field& normalized) const {
  if (normalized.channels() != channels()) throw SchemaError("normalization channel mismatch");
  Field out(normalized.channels(), normalized.n_lat(), normalized.n_lon());
  for (int c = 0; c < normalized.channels(); ++c) {
    auto src = normalized.channel(c);
    auto dst = out.channel(c);
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = static_cast<float>(static_cast<double>(src[i]) * std[c] + mean[c]);
    }
  }
  return out;
}

NormStats compute_norm_stats(const Trajectory& traj, IndexRange range) {
  if (range.size() < 1) throw ConfigError("normalization range is empty");
  const int C = traj.schema.total_channels();
  std::vector<double> sum(C, 0.0);
  std::vector<double> count(C, 0.0);
  for (auto t = range.begin; t < range.end; ++t) {
    const Field& f = traj.at_time(t).values;
    for (int c = 0; c < C; ++c) {
      for (float v : f.channel(c)) sum[c] += v;
      count[c] += static_cast<double>(f.plane_size());
    }
  }
  NormStats stats;
  stats.mean.resize(C);
  stats.std.resize(C);
  for (int c = 0; c < C; ++c) stats.mean[c] = sum[c] / count[c];
  // Second pass for the variance keeps cancellation error small.
  std::vector<double> sq(C, 0.0);
  for (auto t = range.begin; t < range.end; ++t) {
    const Field& f = traj.at_time(t).values;
    for (int c = 0; c < C; ++c) {
      for (float v : f.channel(c)) {
        const double d = v - stats.mean[c];
        sq[c] += d * d;
      }
    }
  }
  for (int c = 0; c < C; ++c) stats.std[c] = std::max(std::sqrt(sq[c] / count[c]), kStdFloor);
  return stats;
}

Climatology::Climatology(int cycle_length_days, int steps_per_day, std::vector<Field> days,
                         std::vector<int> group_sizes)
    : cycle_length_days_(cycle_length_days),
      steps_per_day_(steps_per_day),
      days_(std::move(days)),
      group_sizes_(std::move(group_sizes)) {
  if (static_cast<int>(days_.size()) != cycle_length_days_) {
    throw ConfigError("climatology needs one field per day of the cycle");
  }
}

int Climatology::day_of_cycle(std::int64_t time_index) const {
  std::int64_t day = time_index >= 0 ? time_index / steps_per_day_
                                     : -((-time_index + steps_per_day_ - 1) / steps_per_day_);
  auto d = day % cycle_length_days_;
  if (d < 0) d += cycle_length_days_;
  return static_cast<int>(d);
}

const Field& Climatology::at_time(std::int64_t time_index) const {
  if (days_.empty()) throw ConfigError("climatology is empty");
  return days_[static_cast<std::size_t>(day_of_cycle(time_index))];
}

Climatology compute_climatology(const Trajectory& traj, IndexRange train_range,
                                int cycle_length_days) {
  if (cycle_length_days < 1) throw ConfigError("cycle length must be positive");
  const std::int64_t cycle_steps = static_cast<std::int64_t>(cycle_length_days) * traj.steps_per_day;
  if (train_range.size() < cycle_steps) {
    throw ConfigError("training range of " + std::to_string(train_range.size()) +
                      " steps is shorter than one climatology cycle (" +
                      std::to_string(cycle_steps) + " steps)");
  }
  const auto& first = traj.at_time(train_range.begin).values;
  const auto n = first.size();
  std::vector<std::vector<double>> sums(cycle_length_days, std::vector<double>(n, 0.0));
  std::vector<int> sizes(cycle_length_days, 0);
  Climatology probe(cycle_length_days, traj.steps_per_day,
                    std::vector<Field>(cycle_length_days), std::vector<int>(cycle_length_days));
  for (auto t = train_range.begin; t < train_range.end; ++t) {
    const int d = probe.day_of_cycle(t);
    const auto& data = traj.at_time(t).values.data();
    auto& acc = sums[d];
    for (std::size_t i = 0; i < n; ++i) acc[i] += data[i];
    ++sizes[d];
  }
  std::vector<Field> days;
  days.reserve(cycle_length_days);
  for (int d = 0; d < cycle_length_days; ++d) {
    std::vector<float> mean(n);
    for (std::size_t i = 0; i < n; ++i) mean[i] = static_cast<float>(sums[d][i] / sizes[d]);
    days.emplace_back(first.channels(), first.n_lat(), first.n_lon(), std::move(mean));
  }
  return Climatology(cycle_length_days, traj.steps_per_day, std::move(days), std::move(sizes));
}

}  // namespace mmcast
