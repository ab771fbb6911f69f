#include "mmcast/forecast.hpp"

#include <chrono>

namespace mmcast {

namespace {

torch::Tensor channel_tensor(const std::vector<double>& values) {
  return torch::tensor(values, torch::kDouble).view({1, -1, 1, 1});
}

}  // namespace

std::vector<Rollout> rollout_batch(ForecastModel& model, const NormStats& norm,
                                   const std::vector<StateTensor>& initials, std::int64_t n_steps,
                                   const RolloutOptions& opts) {
  if (n_steps < 0) throw std::invalid_argument("n_steps must be >= 0");
  if (initials.empty()) return {};
  for (const auto& s : initials) check_state(s, model->schema(), model->grid());
  if (norm.channels() != model->schema().total_channels()) {
    throw SchemaError("normalization statistics do not match the schema");
  }
  torch::NoGradGuard no_grad;
  model->eval();
  const auto mean = channel_tensor(norm.mean);
  const auto std = channel_tensor(norm.std);

  std::vector<torch::Tensor> stack;
  for (const auto& s : initials) stack.push_back(to_tensor(s.values));
  auto physical = torch::stack(stack);

  std::vector<Rollout> out(initials.size());
  for (std::int64_t k = 0; k < n_steps; ++k) {
    const auto start = std::chrono::steady_clock::now();
    const auto x = ((physical.to(torch::kDouble) - mean) / std).to(torch::kFloat);
    const auto pred = model->forward(x);
    const auto increment = ((pred.mean - x).to(torch::kDouble) * std).to(torch::kFloat);
    physical = physical + increment;
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!torch::isfinite(physical).all().item<bool>()) {
      throw NumericError("non-finite forecast at step " + std::to_string(k + 1));
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto b = static_cast<int64_t>(i);
      out[i].states.push_back({to_field(physical[b]), initials[i].time_index + k + 1});
      if (opts.keep_log_variance) out[i].log_variances.push_back(to_field(pred.log_variance[b]));
      ++out[i].model_evaluations;
      out[i].step_seconds.push_back(seconds);
    }
  }
  return out;
}

Rollout rollout(ForecastModel& model, const NormStats& norm, const StateTensor& initial,
                std::int64_t n_steps, const RolloutOptions& opts) {
  auto batch = rollout_batch(model, norm, {initial}, n_steps, opts);
  return std::move(batch.front());
}

}  // namespace mmcast
