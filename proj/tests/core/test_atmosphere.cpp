#include <doctest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "mmcast/atmosphere.hpp"

using namespace mmcast;

namespace {

SimParams still_params() {
  auto p = testing::small_sim(7);
  p.diffusion = 0.0;
  p.wave_amplitude = 0.0;
  p.rotation = 0.0;
  p.relaxation_rate = 0.0;
  p.forcing_amplitude = 0.0;
  p.spinup_steps = 0;
  return p;
}

double channel_mean(const Field& f, int c) {
  double s = 0.0;
  for (float v : f.channel(c)) s += v;
  return s / static_cast<double>(f.plane_size());
}

}  // namespace

TEST_CASE("no dynamics keeps temperature and humidity constant") {
  const auto p = still_params();
  const auto traj = simulate(p, 20);
  const auto& schema = traj.schema;
  const int q0 = schema.channel_offset(schema.index_of("q"));
  const int t0 = schema.channel_offset(schema.index_of("t"));
  const auto& first = traj.states.front().values;
  for (const auto& s : traj.states) {
    for (int l = 0; l < p.n_levels; ++l) {
      for (int w = 0; w < first.n_lat(); ++w) {
        for (int h = 0; h < first.n_lon(); ++h) {
          REQUIRE(s.values.at(q0 + l, w, h) == first.at(q0 + l, w, h));
          REQUIRE(s.values.at(t0 + l, w, h) == first.at(t0 + l, w, h));
        }
      }
    }
  }
}

TEST_CASE("simulate is deterministic per seed") {
  const auto p = testing::small_sim(9);
  const auto a = simulate(p, 30);
  const auto b = simulate(p, 30);
  REQUIRE(a.size() == 30);
  for (std::int64_t t = 0; t < a.size(); ++t) {
    CHECK(a.states[t].time_index == t);
    CHECK(a.states[t].values == b.states[t].values);
  }
  auto other = p;
  other.seed = 10;
  CHECK_FALSE(simulate(other, 30).states.back().values == a.states.back().values);
}

TEST_CASE("pure advection conserves mean humidity") {
  auto p = still_params();
  p.wave_amplitude = 0.3;
  p.rotation = 0.2;
  const auto traj = simulate(p, 101);
  const int q0 = traj.schema.channel_offset(traj.schema.index_of("q"));
  const double start = channel_mean(traj.states.front().values, q0);
  const double end = channel_mean(traj.states.back().values, q0);
  CHECK(std::abs(end - start) / std::abs(start) < 1e-3);
  CHECK_FALSE(traj.states.back().values == traj.states.front().values);
}

TEST_CASE("default toy atmosphere has 24 channels and stays finite") {
  SimParams p;
  p.seed = 1;
  p.validate();
  const auto traj = simulate(p, 8);
  CHECK(traj.schema.total_channels() == 24);
  CHECK(traj.grid.n_lat() == 32);
  CHECK(traj.grid.n_lon == 64);
  for (const auto& s : traj.states) check_state(s, traj.schema, traj.grid);
}

TEST_CASE("parameter validation") {
  auto p = testing::small_sim();
  p.dt = 20.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = testing::small_sim();
  p.diffusion = 1.0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  p = testing::small_sim();
  p.n_levels = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);
  CHECK_THROWS_AS(simulate(testing::small_sim(), 0), ConfigError);
}

TEST_CASE("unstable time step is reported with the Courant number") {
  auto p = testing::small_sim();
  p.wave_amplitude = 5.0;
  try {
    p.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("unstable time step") != std::string::npos);
  }
}

TEST_CASE("split_dataset examples") {
  const auto a = split_dataset(100, {0.8, 0.1, 0.1});
  CHECK(a.train == IndexRange{0, 80});
  CHECK(a.val == IndexRange{80, 90});
  CHECK(a.test == IndexRange{90, 100});
  const auto b = split_dataset(10, {0.5, 0.2, 0.3});
  CHECK(b.train == IndexRange{0, 5});
  CHECK(b.val == IndexRange{5, 7});
  CHECK(b.test == IndexRange{7, 10});
  CHECK_THROWS_AS(split_dataset(100, {1.0, 0.0, 0.0}), ConfigError);
  CHECK_THROWS_AS(split_dataset(100, {0.5, 0.2, 0.2}), ConfigError);
  CHECK_THROWS_AS(split_dataset(3, {0.9, 0.05, 0.05}), ConfigError);
}

TEST_CASE("norm stats standardize the training range") {
  std::mt19937_64 rng(2);
  const auto grid = GridSpec::regular(4, 8);
  const auto schema = ModalitySchema::standard(1);
  auto traj = testing::make_trajectory(grid, schema, 20, rng);
  for (auto& s : traj.states) {
    for (auto& v : s.values.channel(0)) v = v * 3.0f + 100.0f;
    for (auto& v : s.values.channel(1)) v = 5.0f;
  }
  const IndexRange train{0, 12};
  const auto stats = compute_norm_stats(traj, train);
  CHECK(stats.mean[1] == doctest::Approx(5.0));
  CHECK(stats.std[1] == kStdFloor);

  for (int c : {0, 2}) {
    double sum = 0.0, sq = 0.0, n = 0.0;
    for (auto t = train.begin; t < train.end; ++t) {
      const auto normalized = stats.normalize(traj.at_time(t).values);
      for (float v : normalized.channel(c)) {
        sum += v;
        sq += static_cast<double>(v) * v;
        n += 1.0;
      }
    }
    const double mean = sum / n;
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(std::sqrt(sq / n - mean * mean) - 1.0) < 1e-6);
  }

  const auto round = stats.denormalize(stats.normalize(traj.states[3].values));
  for (std::size_t i = 0; i < round.size(); ++i) {
    CHECK(round.data()[i] == doctest::Approx(traj.states[3].values.data()[i]).epsilon(1e-5));
  }
}

TEST_CASE("norm stats and climatology never read outside the training range") {
  std::mt19937_64 rng(4);
  const auto grid = GridSpec::regular(2, 4);
  const auto schema = ModalitySchema::standard(1);
  auto traj = testing::make_trajectory(grid, schema, 24, rng, 2);
  const IndexRange train{0, 16};
  const auto stats = compute_norm_stats(traj, train);
  const auto clim = compute_climatology(traj, train, 2);
  for (auto t = train.end; t < traj.size(); ++t) {
    for (auto& v : traj.states[t].values.data()) v = std::nanf("");
  }
  const auto poisoned = compute_norm_stats(traj, train);
  CHECK(poisoned.mean == stats.mean);
  CHECK(poisoned.std == stats.std);
  const auto clim2 = compute_climatology(traj, train, 2);
  for (int d = 0; d < 2; ++d) CHECK(clim2.day(d) == clim.day(d));
}

TEST_CASE("climatology groups by day of cycle") {
  std::mt19937_64 rng(6);
  const auto grid = GridSpec::regular(2, 3);
  ModalitySchema schema{{{"s", 2, {"a", "b"}}}};
  const auto traj = testing::make_trajectory(grid, schema, 20, rng, 4);
  const auto clim = compute_climatology(traj, {0, 16}, 2);
  CHECK(clim.group_sizes() == std::vector<int>{8, 8});
  for (int c = 0; c < 2; ++c) {
    for (int w = 0; w < 2; ++w) {
      for (int h = 0; h < 3; ++h) {
        double sum = 0.0;
        for (int t : {0, 1, 2, 3, 8, 9, 10, 11}) sum += traj.states[t].values.at(c, w, h);
        CHECK(clim.day(0).at(c, w, h) == doctest::Approx(sum / 8.0).epsilon(1e-6));
      }
    }
  }
  CHECK(clim.day_of_cycle(0) == 0);
  CHECK(clim.day_of_cycle(5) == 1);
  CHECK(clim.day_of_cycle(9) == 0);
  CHECK(&clim.at_time(13) == &clim.day(1));
  CHECK_THROWS_AS(compute_climatology(traj, {0, 16}, 5), ConfigError);
}

TEST_CASE("constant trajectory has constant climatology") {
  const auto grid = GridSpec::regular(2, 2);
  ModalitySchema schema{{{"s", 1, {"a"}}}};
  Trajectory traj{grid, schema, 4, {}};
  for (int t = 0; t < 24; ++t) traj.states.push_back({Field(1, 2, 2, 3.25f), t});
  const auto clim = compute_climatology(traj, {0, 24}, 3);
  for (int d = 0; d < 3; ++d) {
    for (float v : clim.day(d).data()) CHECK(v == 3.25f);
  }
}
