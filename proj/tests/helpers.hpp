#pragma once

#include <filesystem>
#include <fstream>
#include <iterator>
#include <random>
#include <string>

#include "mmcast/atmosphere.hpp"
#include "mmcast/grid.hpp"

namespace mmcast::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mmcast_test_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

inline Field random_field(int c, int w, int h, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<float> n(0.0f, static_cast<float>(scale));
  Field f(c, w, h);
  for (auto& v : f.data()) v = n(rng);
  return f;
}

/// Trajectory with hand-set states, time indices 0..n-1.
inline Trajectory make_trajectory(const GridSpec& grid, const ModalitySchema& schema, int n,
                                  std::mt19937_64& rng, int steps_per_day = 4) {
  Trajectory t{grid, schema, steps_per_day, {}};
  for (int i = 0; i < n; ++i) {
    t.states.push_back({random_field(schema.total_channels(), grid.n_lat(), grid.n_lon, rng), i});
  }
  return t;
}

inline SimParams small_sim(std::uint64_t seed = 3) {
  SimParams p;
  p.grid = GridSpec::regular(8, 16);
  p.n_levels = 1;
  p.cycle_length_days = 4;
  p.spinup_steps = 8;
  p.seed = seed;
  return p;
}

}  // namespace mmcast::testing
