#include "doctest_torch.hpp"

#include <cmath>
#include <numbers>

#include "mmcast/objective.hpp"
#include "oracles_nn.hpp"

using namespace mmcast;

namespace {

const LossConfig kPlain{false, false};

torch::Tensor scalar(double v) {
  return torch::full({1, 1}, v, torch::TensorOptions().dtype(torch::kDouble));
}

double nll(double mu, double s, double x, const LossConfig& cfg = kPlain) {
  return uncertainty_nll(scalar(mu), scalar(s), scalar(x), {}, cfg).item<double>();
}

}  // namespace

TEST_CASE("nll hand values") {
  CHECK(nll(0.3, 0.0, 0.3) == 0.0);
  CHECK(std::abs(nll(0.0, 0.0, 1.0) - 0.5) < 1e-15);
  CHECK(std::abs(nll(0.0, std::log(4.0), 2.0) - 0.5 * (std::log(4.0) + 1.0)) < 1e-12);
  CHECK(std::abs(nll(0.0, std::log(4.0), 2.0) - 1.19315) < 1e-5);
  const LossConfig with_constant{true, false};
  CHECK(std::abs(nll(0.0, 0.0, 0.0, with_constant) - 0.5 * std::log(2.0 * std::numbers::pi)) < 1e-12);
}

TEST_CASE("zero residual at unit variance is exactly zero for any shape") {
  for (auto shape : {std::vector<int64_t>{3, 5}, {2, 4, 6}, {2, 3, 4, 5}}) {
    auto x = torch::randn(shape);
    std::vector<double> w(static_cast<std::size_t>(shape[shape.size() - 2]), 1.0);
    CHECK(uncertainty_nll(x, torch::zeros(shape), x, w, {}).item<float>() == 0.0f);
    CHECK(uncertainty_nll(x, torch::zeros(shape), x, {}, kPlain).item<float>() == 0.0f);
  }
}

TEST_CASE("scan over s finds the minimum at log r^2") {
  for (double r : {0.5, 1.0, 3.0}) {
    double best_s = 0.0, best = 1e300;
    for (int i = 0; i <= 20000; ++i) {
      const double s = -6.0 + 12.0 * i / 20000.0;
      const double v = nll(0.0, s, r);
      if (v < best) best = v, best_s = s;
    }
    CHECK(std::abs(best_s - std::log(r * r)) < 1e-3);
    const auto g = nll_gradients(scalar(0.0), scalar(std::log(r * r)), scalar(r), {}, kPlain);
    CHECK(std::abs(g.d_log_variance.item<double>()) < 1e-15);
  }
}

TEST_CASE("closed-form gradient examples") {
  auto g = nll_gradients(scalar(1.0), scalar(0.0), scalar(1.0), {}, kPlain);
  CHECK(g.d_mean.item<double>() == 0.0);
  CHECK(g.d_log_variance.item<double>() == 0.5);

  // Latitude weighting scales each row by w/N.
  const auto opts = torch::TensorOptions().dtype(torch::kDouble);
  const std::vector<double> w{0.5, 1.5};
  auto z = torch::zeros({2, 3}, opts);
  auto gw = nll_gradients(z, z, z, w, {});
  CHECK(std::abs(gw.d_log_variance[0][0].item<double>() - 0.5 * 0.5 / 6.0) < 1e-15);
  CHECK(std::abs(gw.d_log_variance[1][2].item<double>() - 0.5 * 1.5 / 6.0) < 1e-15);
}

TEST_CASE("autograd backward matches the closed form") {
  torch::manual_seed(3);
  const auto opts = torch::TensorOptions().dtype(torch::kDouble);
  auto mu = torch::randn({2, 3, 4, 5}, opts).requires_grad_(true);
  auto s = torch::randn({2, 3, 4, 5}, opts).requires_grad_(true);
  auto x = torch::randn({2, 3, 4, 5}, opts);
  const std::vector<double> w{0.2, 0.9, 1.3, 1.6};
  uncertainty_nll(mu, s, x, w).backward();
  const auto g = nll_gradients(mu.detach(), s.detach(), x, w);
  CHECK(torch::allclose(mu.grad(), g.d_mean, 0.0, 1e-15));
  CHECK(torch::allclose(s.grad(), g.d_log_variance, 0.0, 1e-15));
}

TEST_CASE("gradients match central differences") {
  torch::manual_seed(11);
  const std::vector<double> w{0.6, 1.4, 1.0};
  for (int trial = 0; trial < 10; ++trial) {
    CHECK(oracle::nll_fd_max_relative_error({2, 3, 4}, w, {}) < 1e-4);
    CHECK(oracle::nll_fd_max_relative_error({2, 3, 4}, {}, kPlain) < 1e-4);
  }
}

TEST_CASE("unit variance reduces to half the mean squared error") {
  torch::manual_seed(5);
  const auto opts = torch::TensorOptions().dtype(torch::kDouble);
  for (int trial = 0; trial < 20; ++trial) {
    auto mu = torch::randn({3, 4, 6}, opts);
    auto x = torch::randn({3, 4, 6}, opts);
    const double loss = uncertainty_nll(mu, torch::zeros_like(mu), x, {}, kPlain).item<double>();
    const double half_mse = 0.5 * (mu - x).pow(2).mean().item<double>();
    CHECK(std::abs(loss - half_mse) / half_mse < 1e-10);
  }
}

TEST_CASE("weighted loss uses the latitude weights") {
  const auto opts = torch::TensorOptions().dtype(torch::kDouble);
  auto mu = torch::zeros({1, 2, 1}, opts);
  auto x = torch::tensor({1.0, 2.0}, opts).view({1, 2, 1});
  const std::vector<double> w{0.5, 1.5};
  const double expected = (0.5 * 0.5 * 1.0 + 1.5 * 0.5 * 4.0) / 2.0;
  CHECK(std::abs(uncertainty_nll(mu, torch::zeros_like(mu), x, w).item<double>() - expected) < 1e-15);
}

TEST_CASE("loss input validation") {
  auto a = torch::zeros({2, 3, 4});
  CHECK_THROWS_AS(uncertainty_nll(a, torch::zeros({2, 3, 5}), a, {}, kPlain), std::invalid_argument);
  const std::vector<double> short_w{1.0, 1.0};
  CHECK_THROWS_AS(uncertainty_nll(a, a, a, short_w, {}), std::invalid_argument);
  auto bad = a.clone();
  bad[0][0][0] = std::nanf("");
  CHECK_THROWS_AS(uncertainty_nll(bad, a, a, {}, kPlain), std::invalid_argument);
  CHECK_THROWS_AS(uncertainty_nll(a, a, bad, {}, kPlain), std::invalid_argument);
}

TEST_CASE("loss config manifest round trip") {
  Manifest m;
  LossConfig c{true, false};
  c.describe(m);
  const auto back = LossConfig::from_manifest(m);
  CHECK(back.include_constant);
  CHECK_FALSE(back.latitude_weight_in_loss);
}
