#include "doctest_torch.hpp"

#include <limits>

#include "mmcast/forecast.hpp"
#include "nn_fixtures.hpp"

using namespace mmcast;
using testing::make_small_model;
using testing::small_data;

TEST_CASE("zero-initialized model forecasts persistence bitwise") {
  auto model = make_small_model();
  const auto& d = small_data();
  const auto& init = d.trajectory.at_time(d.split.test.begin);
  const auto r = rollout(model, d.norm, init, 56);
  REQUIRE(r.states.size() == 56);
  for (std::int64_t k = 0; k < 56; ++k) {
    CHECK(r.states[k].values == init.values);
    CHECK(r.states[k].time_index == init.time_index + k + 1);
  }
}

TEST_CASE("one step equals the denormalized mean") {
  auto pre = pretrain_single_step(make_small_model(), small_data().train, testing::small_train(20));
  auto& model = pre.model;
  const auto& d = small_data();
  const auto& init = d.trajectory.at_time(d.split.test.begin + 3);
  const auto r = rollout(model, d.norm, init, 1, {true});
  torch::NoGradGuard guard;
  model->eval();
  const auto x = to_tensor(d.norm.normalize(init.values));
  const auto pred = model->forward(x);
  const auto expected = d.norm.denormalize(to_field(pred.mean));
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.states[0].values.data()[i] ==
          doctest::Approx(expected.data()[i]).epsilon(1e-5));
  }
  REQUIRE(r.log_variances.size() == 1);
  CHECK(r.log_variances[0] == to_field(pred.log_variance));
}

TEST_CASE("rollout prefix property, batching and evaluation count") {
  auto pre = pretrain_single_step(make_small_model(), small_data().train, testing::small_train(20));
  auto& model = pre.model;
  const auto& d = small_data();
  const auto& a = d.trajectory.at_time(d.split.test.begin);
  const auto& b = d.trajectory.at_time(d.split.test.begin + 2);

  const auto before = model->forward_calls();
  const auto long_run = rollout(model, d.norm, a, 56);
  CHECK(model->forward_calls() - before == 56);
  CHECK(long_run.model_evaluations == 56);
  CHECK(long_run.step_seconds.size() == 56);
  const auto short_run = rollout(model, d.norm, a, 10);
  for (int k = 0; k < 10; ++k) CHECK(short_run.states[k].values == long_run.states[k].values);
  CHECK_FALSE(long_run.states[55].values == a.values);

  const auto calls = model->forward_calls();
  const auto batch = rollout_batch(model, d.norm, {a, b}, 10);
  CHECK(model->forward_calls() - calls == 10);
  REQUIRE(batch.size() == 2);
  for (int k = 0; k < 10; ++k) {
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      CHECK(batch[0].states[k].values.data()[i] ==
            doctest::Approx(short_run.states[k].values.data()[i]).epsilon(1e-5));
    }
  }
  CHECK(batch[1].states[0].time_index == b.time_index + 1);
  CHECK(rollout(model, d.norm, a, 0).states.empty());
}

TEST_CASE("a model that blows up reports the failing step") {
  auto model = make_small_model();
  const auto& d = small_data();
  {
    torch::NoGradGuard guard;
    for (auto& dec : model->decoders()) dec->head()->bias.fill_(std::numeric_limits<float>::infinity());
  }
  try {
    rollout(model, d.norm, d.trajectory.at_time(d.split.test.begin), 20);
    FAIL("expected NumericError");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()) == "non-finite forecast at step 1");
  }
}

TEST_CASE("rollout rejects mismatched inputs") {
  auto model = make_small_model();
  const auto& d = small_data();
  StateTensor bad{Field(3, 8, 16), 0};
  CHECK_THROWS_AS(rollout(model, d.norm, bad, 2), SchemaError);
  NormStats wrong{{0.0}, {1.0}};
  CHECK_THROWS_AS(rollout(model, wrong, d.trajectory.states[0], 2), SchemaError);
}
