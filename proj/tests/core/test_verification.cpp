#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "helpers.hpp"
#include "mmcast/verification.hpp"
#include "oracles.hpp"

using namespace mmcast;

namespace {

ForecastSet single(const Field& f, std::int64_t init = 0) {
  return {{init}, {{f}}};
}

Climatology flat_climatology(const Field& like, float value = 0.0f) {
  Field c(like.channels(), like.n_lat(), like.n_lon(), value);
  return Climatology(1, 4, {c}, {1});
}

}  // namespace

TEST_CASE("metrics match loop oracles on every grid up to 4x8") {
  std::mt19937_64 rng(2024);
  for (int w = 1; w <= 4; ++w) {
    for (int h = 1; h <= 8; ++h) {
      for (int trial = 0; trial < 20; ++trial) {
        REQUIRE(oracle::metric_oracle_max_error(w, h, rng) < 1e-12);
      }
    }
  }
}

TEST_CASE("rmse hand examples") {
  const GridSpec one{{0.0}, 1};
  Field f(1, 1, 1, 2.0f), t(1, 1, 1, 0.0f);
  CHECK(rmse(single(f), single(t), one, {"a"}).at(0, 1).value == doctest::Approx(2.0));
  CHECK(rmse(single(t), single(t), one, {"a"}).at(0, 1).value == 0.0);

  // Rows at 60 and 0 degrees weigh 2/3 and 4/3; error 3 on the first row only.
  const GridSpec two{{60.0, 0.0}, 1};
  Field e(1, 2, 1, 0.0f);
  e.at(0, 0, 0) = 3.0f;
  const double expected = std::sqrt((2.0 / 3.0) * 9.0 / 2.0);
  CHECK(std::abs(rmse(single(e), single(Field(1, 2, 1)), two, {"a"}).at(0, 1).value - expected) <
        1e-12);
}

TEST_CASE("rmse is scale equivariant and reduces to unweighted on one row") {
  std::mt19937_64 rng(8);
  const GridSpec grid{{40.0, 10.0, -30.0}, 5};
  const auto f = testing::random_field(2, 3, 5, rng);
  const auto t = testing::random_field(2, 3, 5, rng);
  Field fk = f, tk = t;
  for (auto& v : fk.data()) v *= -4.0f;
  for (auto& v : tk.data()) v *= -4.0f;
  const auto base = rmse(single(f), single(t), grid, {"a", "b"});
  const auto scaled = rmse(single(fk), single(tk), grid, {"a", "b"});
  for (int c = 0; c < 2; ++c) {
    CHECK(scaled.at(c, 1).value == doctest::Approx(4.0 * base.at(c, 1).value).epsilon(1e-6));
  }

  const GridSpec row{{37.0}, 6};
  const auto a = testing::random_field(1, 1, 6, rng);
  const auto b = testing::random_field(1, 1, 6, rng);
  double s = 0.0;
  for (int h = 0; h < 6; ++h) s += std::pow(static_cast<double>(a.at(0, 0, h)) - b.at(0, 0, h), 2);
  CHECK(std::abs(rmse(single(a), single(b), row, {"a"}).at(0, 1).value - std::sqrt(s / 6)) < 1e-12);
}

TEST_CASE("acc identities") {
  std::mt19937_64 rng(3);
  const GridSpec grid{{50.0, 20.0, -10.0, -45.0}, 8};
  const auto truth = testing::random_field(3, 4, 8, rng);
  const auto clim = flat_climatology(truth, 0.25f);
  const std::vector<std::string> labels{"a", "b", "c"};

  const auto same = acc(single(truth), single(truth), clim, grid, labels);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(same.at(c, 1).value - 1.0) < 1e-12);

  Field flipped = truth;
  for (auto& v : flipped.data()) v = 0.5f - v;  // anomaly negated around 0.25
  const auto neg = acc(single(flipped), single(truth), clim, grid, labels);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(neg.at(c, 1).value + 1.0) < 1e-6);

  Field scaled = truth;
  for (auto& v : scaled.data()) v = 0.25f + 3.0f * (v - 0.25f);
  const auto other = testing::random_field(3, 4, 8, rng);
  const auto a1 = acc(single(other), single(truth), clim, grid, labels);
  const auto a2 = acc(single(other), single(scaled), clim, grid, labels);
  for (int c = 0; c < 3; ++c) CHECK(a1.at(c, 1).value == doctest::Approx(a2.at(c, 1).value).epsilon(1e-6));
}

TEST_CASE("acc of a climatology forecast is undefined and counted") {
  std::mt19937_64 rng(4);
  const GridSpec grid{{30.0, -30.0}, 4};
  const auto truth = testing::random_field(1, 2, 4, rng);
  const auto other = testing::random_field(1, 2, 4, rng);
  const auto clim = flat_climatology(truth, 0.0f);
  ForecastSet fc{{0, 1}, {{Field(1, 2, 4, 0.0f)}, {other}}};
  ForecastSet tr{{0, 1}, {{truth}, {truth}}};
  const auto a = acc(fc, tr, clim, grid, {"a"});
  const auto& cell = a.at(0, 1);
  CHECK(cell.n_defined == 1);
  CHECK(cell.n_undefined == 1);
  const auto expected = oracle::acc_one(other, truth, clim.day(0), 0, {30.0, -30.0});
  CHECK(std::abs(cell.value - *expected) < 1e-12);

  ForecastSet all_clim{{0}, {{Field(1, 2, 4, 0.0f)}}};
  const auto u = acc(all_clim, single(truth), clim, grid, {"a"});
  CHECK_FALSE(u.at(0, 1).defined());
  CHECK(std::isnan(u.values(0)[0]));
}

TEST_CASE("misaligned archives are rejected") {
  const GridSpec grid{{0.0}, 2};
  Field f(1, 1, 2);
  CHECK_THROWS_AS(rmse(single(f, 0), single(f, 1), grid, {"a"}), SchemaError);
  ForecastSet two_leads{{0}, {{f, f}}};
  CHECK_THROWS_AS(rmse(two_leads, single(f), grid, {"a"}), SchemaError);
  CHECK_THROWS_AS(rmse(single(f), single(Field(1, 1, 3)), grid, {"a"}), SchemaError);
}

TEST_CASE("skillful lead time") {
  const std::vector<double> series{0.9, 0.7, 0.5};
  const auto s = skillful_lead_time(series, 0.6);
  CHECK(s.lead_steps == 2);
  CHECK(s.days == 0.5);
  CHECK(std::abs(s.fractional_days - 0.625) < 1e-12);
  CHECK_FALSE(s.unbounded);

  const std::vector<double> above{0.95, 0.9, 0.8, 0.7};
  const auto a = skillful_lead_time(above, 0.6);
  CHECK(a.unbounded);
  CHECK(a.lead_steps == 4);
  CHECK(a.days == 1.0);

  const std::vector<double> below{0.5, 0.9};
  const auto b = skillful_lead_time(below, 0.6);
  CHECK(b.lead_steps == 0);
  CHECK(b.days == 0.0);
  CHECK(b.fractional_days == 0.0);
  CHECK_FALSE(b.unbounded);

  const std::vector<double> at_threshold{0.6};
  CHECK(skillful_lead_time(at_threshold, 0.6).lead_steps == 0);

  MetricSeries rmse_series(MetricKind::Rmse, {"a"}, 3);
  CHECK_THROWS_AS(skillful_lead_time(rmse_series, 0, 0.6), SchemaError);
}

TEST_CASE("metric table layout") {
  MetricAccumulator acc_r(MetricKind::Rmse, {"z500"}, 2);
  acc_r.add(1, std::vector<double>{1.5});
  acc_r.add(2, std::vector<double>{2.5});
  acc_r.next_initialization();
  MetricAccumulator acc_a(MetricKind::Acc, {"z500"}, 2);
  acc_a.add(1, std::vector<std::optional<double>>{0.75});
  acc_a.add(2, std::vector<std::optional<double>>{std::nullopt});
  acc_a.next_initialization();
  const auto r = acc_r.finish();
  CHECK(r.n_initializations() == 1);

  const auto dir = testing::scratch_dir("table");
  std::filesystem::create_directories(dir);
  write_metric_table(dir / "m.csv", {r, acc_a.finish()}, 4);
  std::ifstream in(dir / "m.csv");
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() ==
        "metric,channel,lead_steps,lead_days,value,n_defined,n_undefined\n"
        "RMSE,z500,1,0.25,1.5,1,0\n"
        "RMSE,z500,2,0.5,2.5,1,0\n"
        "ACC,z500,1,0.25,0.75,1,0\n"
        "ACC,z500,2,0.5,nan,0,1\n");
}
