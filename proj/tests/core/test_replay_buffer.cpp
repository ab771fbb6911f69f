#include <doctest.h>

#include <list>
#include <random>

#include "helpers.hpp"
#include "mmcast/replay_buffer.hpp"
#include "oracles.hpp"

using namespace mmcast;

namespace {

BufferEntry entry(std::int64_t id, std::int64_t valid = 0, int depth = 1) {
  return {Field(1, 1, 1, static_cast<float>(id)), valid, depth, id};
}

BufferConfig config(std::size_t capacity, double mix = 0.5, std::size_t warmup = 0) {
  BufferConfig c;
  c.capacity = capacity;
  c.mix_ratio = mix;
  c.warmup_pushes = warmup;
  return c;
}

}  // namespace

TEST_CASE("FIFO eviction example") {
  ReplayBuffer b(config(2), {0, 10});
  b.push(entry(1));
  CHECK(b.size() == 1);
  b.push(entry(2));
  b.push(entry(3));
  REQUIRE(b.size() == 2);
  CHECK(b.entries()[0].model_version == 2);
  CHECK(b.entries()[1].model_version == 3);
  CHECK(b.total_pushed() == 3);
}

TEST_CASE("FIFO matches a list oracle over random push sequences") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> cap(1, 8), len(0, 30);
  for (int seq = 0; seq < 10000; ++seq) {
    const auto capacity = static_cast<std::size_t>(cap(rng));
    ReplayBuffer b(config(capacity), {0, 100});
    std::list<std::int64_t> oracle;
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      b.push(entry(i));
      oracle.push_back(i);
      if (oracle.size() > capacity) oracle.pop_front();
      REQUIRE(b.size() <= capacity);
      REQUIRE(b.size() == oracle.size());
      auto it = oracle.begin();
      for (const auto& e : b.entries()) REQUIRE(e.model_version == *it++);
    }
  }
}

TEST_CASE("entries need a target inside the training range") {
  ReplayBuffer b(config(4), {10, 20});
  CHECK_THROWS_AS(b.push(entry(1, 19)), RangeError);
  CHECK_THROWS_AS(b.push(entry(1, 9)), RangeError);
  CHECK_THROWS_AS(b.push(entry(1, 12, 0)), RangeError);
  b.push(entry(1, 18));
  CHECK_THROWS_AS(b.push(BufferEntry{Field(2, 1, 1), 12, 1, 0}), SchemaError);
  CHECK_FALSE(b.record_prediction(Field(1, 1, 1), 0, 18, 0));
  CHECK(b.size() == 1);
}

TEST_CASE("recorded depth is input depth plus one, capped") {
  BufferConfig cfg = config(64);
  cfg.max_ar_depth = 12;
  ReplayBuffer b(cfg, {0, 100});
  CHECK(b.record_prediction(Field(1, 1, 1), 0, 5, 0));
  CHECK(b.entries().back().ar_depth == 1);
  CHECK(b.entries().back().valid_time_index == 6);
  CHECK(b.record_prediction(Field(1, 1, 1), 3, 5, 0));
  CHECK(b.entries().back().ar_depth == 4);
  CHECK_FALSE(b.record_prediction(Field(1, 1, 1), 12, 5, 0));
  CHECK(b.record_prediction(Field(1, 1, 1), 11, 5, 0));
  CHECK(b.max_depth() == 12);

  std::mt19937_64 rng(2);
  for (int i = 0; i < 2000; ++i) {
    const auto d = b.sample(rng);
    if (d.provenance == Provenance::Buffer) {
      const int before = static_cast<int>(b.size());
      const bool stored = b.record_prediction(Field(1, 1, 1), d.ar_depth, d.input_time_index, i);
      if (stored) {
        CHECK(b.entries().back().ar_depth == d.ar_depth + 1);
        CHECK(b.entries().back().valid_time_index == d.input_time_index + 1);
      } else {
        CHECK(static_cast<int>(b.size()) == before);
      }
    } else {
      const bool has_target = d.input_time_index + 2 < b.training_range().end;
      CHECK(b.record_prediction(Field(1, 1, 1), 0, d.input_time_index, i) == has_target);
    }
  }
  for (const auto& e : b.entries()) CHECK(e.ar_depth <= 12);
}

TEST_CASE("draws carry consistent indices") {
  ReplayBuffer b(config(8, 0.5), {3, 9});
  for (int t = 3; t < 8; ++t) b.push(entry(t, t, 2));
  std::mt19937_64 rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto d = b.sample(rng);
    CHECK(d.target_time_index == d.input_time_index + 1);
    CHECK(d.input_time_index >= 3);
    CHECK(d.target_time_index < 9);
    if (d.provenance == Provenance::Buffer) {
      REQUIRE(d.entry != nullptr);
      CHECK(d.ar_depth == 2);
    } else {
      CHECK(d.ar_depth == 0);
      CHECK(d.entry == nullptr);
    }
  }
}

TEST_CASE("mix ratio extremes and warmup gate") {
  std::mt19937_64 rng(5);
  ReplayBuffer zero(config(4, 0.0), {0, 10});
  zero.push(entry(1));
  ReplayBuffer one(config(4, 1.0), {0, 10});
  one.push(entry(1));
  ReplayBuffer cold(config(4, 1.0, 3), {0, 10});
  cold.push(entry(1));
  ReplayBuffer empty(config(4, 1.0), {0, 10});
  for (int i = 0; i < 200; ++i) {
    CHECK(zero.sample(rng).provenance == Provenance::Dataset);
    CHECK(one.sample(rng).provenance == Provenance::Buffer);
    CHECK(cold.sample(rng).provenance == Provenance::Dataset);
    CHECK(empty.sample(rng).provenance == Provenance::Dataset);
  }
}

TEST_CASE("mix ratio frequency lies within binomial 99% bounds") {
  constexpr int kDraws = 10000;
  for (double rho : {0.25, 0.5, 0.75}) {
    ReplayBuffer b(config(16, rho), {0, 50});
    for (int i = 0; i < 16; ++i) b.push(entry(i, i));
    std::mt19937_64 rng(static_cast<std::uint64_t>(rho * 1000));
    int hits = 0;
    for (int i = 0; i < kDraws; ++i) hits += b.sample(rng).provenance == Provenance::Buffer;
    const auto [lo, hi] = oracle::binomial_interval(kDraws, rho, 0.99);
    CHECK(hits >= lo);
    CHECK(hits <= hi);
  }
  const auto [lo, hi] = oracle::binomial_interval(kDraws, 0.5, 0.99);
  CHECK(lo >= 4500);
  CHECK(hi <= 5500);
}

TEST_CASE("buffer save and load round trip") {
  BufferConfig cfg = config(3, 0.4, 2);
  cfg.max_ar_depth = std::nullopt;
  ReplayBuffer b(cfg, {0, 40});
  std::mt19937_64 rng(9);
  for (int i = 0; i < 5; ++i) b.push({testing::random_field(2, 3, 4, rng), i, i + 1, 10 + i});
  const auto dir = testing::scratch_dir("buffer");
  b.save(dir);
  const auto back = ReplayBuffer::load(dir);
  CHECK(back.size() == 3);
  CHECK(back.total_pushed() == 5);
  CHECK(back.config().mix_ratio == 0.4);
  CHECK_FALSE(back.config().max_ar_depth.has_value());
  CHECK(back.training_range() == IndexRange{0, 40});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.entries()[i].prediction == b.entries()[i].prediction);
    CHECK(back.entries()[i].ar_depth == b.entries()[i].ar_depth);
    CHECK(back.entries()[i].valid_time_index == b.entries()[i].valid_time_index);
    CHECK(back.entries()[i].model_version == b.entries()[i].model_version);
  }
  std::mt19937_64 r1(1), r2(1);
  for (int i = 0; i < 50; ++i) CHECK(b.sample(r1).input_time_index == back.sample(r2).input_time_index);
}

TEST_CASE("buffer config validation") {
  CHECK_THROWS_AS(ReplayBuffer(config(0), {0, 10}), ConfigError);
  CHECK_THROWS_AS(ReplayBuffer(config(2, 1.5), {0, 10}), ConfigError);
  ReplayBuffer tiny(config(2), {0, 1});
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS(tiny.sample(rng), RangeError);
}
