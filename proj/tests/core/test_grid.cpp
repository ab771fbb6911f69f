#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "mmcast/grid.hpp"

using namespace mmcast;

TEST_CASE("latitude weights: hand values") {
  GridSpec one{{0.0}, 4};
  CHECK(latitude_weights(one)[0] == doctest::Approx(1.0).epsilon(1e-15));

  GridSpec three{{60.0, 0.0, -60.0}, 4};
  const auto w = latitude_weights(three);
  REQUIRE(w.size() == 3);
  CHECK(std::abs(w[0] - 0.75) < 1e-12);
  CHECK(std::abs(w[1] - 1.5) < 1e-12);
  CHECK(std::abs(w[2] - 0.75) < 1e-12);

  GridSpec poles{{90.0, 0.0, -90.0}, 2};
  const auto p = latitude_weights(poles);
  CHECK(p[0] == 0.0);
  CHECK(std::abs(p[1] - 3.0) < 1e-12);
  CHECK(p[2] == 0.0);
}

TEST_CASE("latitude weights: unit mean and reversal symmetry on random grids") {
  std::mt19937_64 rng(11);
  std::uniform_int_distribution<int> rows(1, 40);
  std::uniform_real_distribution<double> lat(-89.0, 89.0);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = rows(rng);
    std::vector<double> lats(n);
    for (auto& l : lats) l = lat(rng);
    std::sort(lats.begin(), lats.end(), std::greater<>());
    lats.erase(std::unique(lats.begin(), lats.end()), lats.end());
    GridSpec grid{lats, 3};
    const auto w = latitude_weights(grid);
    const double mean = std::accumulate(w.begin(), w.end(), 0.0) / static_cast<double>(w.size());
    CHECK(std::abs(mean - 1.0) < 1e-12);

    GridSpec reversed{{lats.rbegin(), lats.rend()}, 3};
    const auto r = latitude_weights(reversed);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(std::abs(w[i] - r[w.size() - 1 - i]) < 1e-12);
  }
}

TEST_CASE("latitude weights: degenerate and invalid grids") {
  CHECK_THROWS_AS(latitude_weights(GridSpec{{90.0, -90.0}, 2}), GridError);
  CHECK_THROWS_AS(latitude_weights(GridSpec{{}, 2}), GridError);
  CHECK_THROWS_AS(latitude_weights(GridSpec{{10.0, 10.0}, 2}), GridError);
  CHECK_THROWS_AS(latitude_weights(GridSpec{{10.0, 20.0, 0.0}, 2}), GridError);
  CHECK_THROWS_AS(latitude_weights(GridSpec{{95.0}, 2}), GridError);
  CHECK_THROWS_AS(GridSpec::regular(0, 4), GridError);
}

TEST_CASE("regular grid rows avoid the poles") {
  const auto g = GridSpec::regular(32, 64);
  CHECK(g.n_lat() == 32);
  CHECK(g.latitudes.front() < 90.0);
  CHECK(g.latitudes.back() > -90.0);
  CHECK(std::abs(g.latitudes.front() + g.latitudes.back()) < 1e-12);
}

TEST_CASE("standard schema layout") {
  const auto s = ModalitySchema::standard(4);
  CHECK(s.total_channels() == 24);
  CHECK(s.modalities.size() == 6);
  CHECK(s.modalities[0].name == "s");
  CHECK(s.channel_offset(1) == 4);
  CHECK(s.index_of("t") == 5);
  const auto labels = s.channel_labels();
  CHECK(labels.size() == 24);
  CHECK(labels[0] == "t2m");
  s.validate();

  ModalitySchema dup{{{"z", 1, {"a"}}, {"z", 1, {"b"}}}};
  CHECK_THROWS_AS(dup.validate(), SchemaError);
  ModalitySchema bad{{{"w", 1, {"a"}}}};
  CHECK_THROWS_AS(bad.validate(), SchemaError);
}

TEST_CASE("slice and concat: example shapes and errors") {
  ModalitySchema schema{{{"s", 1, {"t2m"}}, {"z", 2, {"500", "850"}}}};
  std::mt19937_64 rng(1);
  const auto f = testing::random_field(3, 4, 5, rng);
  const auto slices = slice_modalities(f, schema);
  REQUIRE(slices.size() == 2);
  CHECK(slices[0].first == "s");
  CHECK(slices[0].second.channels() == 1);
  CHECK(slices[1].second.channels() == 2);
  CHECK(slices[1].second.at(1, 3, 4) == f.at(2, 3, 4));

  CHECK_THROWS_AS(slice_modalities(testing::random_field(4, 4, 5, rng), schema), SchemaError);
  CHECK_THROWS_AS(concat_modalities({}), SchemaError);
  ModalitySlices mismatched{{"s", Field(1, 4, 5)}, {"z", Field(2, 4, 6)}};
  CHECK_THROWS_AS(concat_modalities(mismatched), SchemaError);
}

TEST_CASE("slice and concat are inverse on random shapes") {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> dim(1, 6);
  const std::vector<std::string> names{"s", "z", "q", "u", "v", "t"};
  for (int trial = 0; trial < 100; ++trial) {
    ModalitySchema schema;
    const int n_mod = dim(rng);
    for (int m = 0; m < n_mod; ++m) {
      const int c = dim(rng);
      std::vector<std::string> labels;
      for (int k = 0; k < c; ++k) labels.push_back(names[m] + std::to_string(k));
      schema.modalities.push_back({names[m], c, labels});
    }
    const auto f = testing::random_field(schema.total_channels(), dim(rng), dim(rng), rng);
    const auto slices = slice_modalities(f, schema);
    CHECK(concat_modalities(slices) == f);
    const auto again = slice_modalities(concat_modalities(slices), schema);
    REQUIRE(again.size() == slices.size());
    for (std::size_t i = 0; i < slices.size(); ++i) CHECK(again[i].second == slices[i].second);
  }
}

TEST_CASE("check_state rejects mismatches and non-finite values") {
  const auto grid = GridSpec::regular(4, 8);
  const auto schema = ModalitySchema::standard(1);
  StateTensor ok{Field(schema.total_channels(), 4, 8), 0};
  check_state(ok, schema, grid);
  StateTensor wrong_c{Field(3, 4, 8), 0};
  CHECK_THROWS_AS(check_state(wrong_c, schema, grid), SchemaError);
  StateTensor wrong_grid{Field(schema.total_channels(), 4, 7), 0};
  CHECK_THROWS_AS(check_state(wrong_grid, schema, grid), GridError);
  auto nan = ok;
  nan.values.at(2, 1, 1) = std::nanf("");
  CHECK_THROWS_AS(check_state(nan, schema, grid), GridError);
}
