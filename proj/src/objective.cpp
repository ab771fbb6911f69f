#include "mmcast/objective.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace mmcast {

void LossConfig::describe(Manifest& m, const std::string& p) const {
  m.set(p + "include_constant", include_constant);
  m.set(p + "latitude_weight_in_loss", latitude_weight_in_loss);
}

LossConfig LossConfig::from_manifest(const Manifest& m, const std::string& p) {
  LossConfig c;
  c.include_constant = m.get_bool(p + "include_constant");
  c.latitude_weight_in_loss = m.get_bool(p + "latitude_weight_in_loss");
  return c;
}

namespace {

void check_inputs(const torch::Tensor& mean, const torch::Tensor& log_variance,
                  const torch::Tensor& target, std::span<const double> weights,
                  const LossConfig& cfg) {
  if (!mean.sizes().equals(log_variance.sizes()) || !mean.sizes().equals(target.sizes())) {
    throw std::invalid_argument("loss inputs differ in shape: mean " + std::string(c10::str(mean.sizes())) +
                                ", log-variance " + c10::str(log_variance.sizes()) + ", target " +
                                c10::str(target.sizes()));
  }
  if (mean.dim() < 2) throw std::invalid_argument("loss inputs need (..., W, H) layout");
  if (cfg.latitude_weight_in_loss && static_cast<int64_t>(weights.size()) != mean.size(-2)) {
    throw std::invalid_argument("latitude weights do not match the W axis");
  }
  for (const auto* t : {&mean, &log_variance, &target}) {
    if (!torch::isfinite(*t).all().item<bool>()) {
      throw std::invalid_argument("non-finite values in loss inputs");
    }
  }
}

/// Per-element reduction weight, broadcastable against the inputs.
torch::Tensor element_weights(const torch::Tensor& like, std::span<const double> weights,
                              const LossConfig& cfg) {
  const double n = static_cast<double>(like.numel());
  if (!cfg.latitude_weight_in_loss) return torch::full({1}, 1.0 / n, like.options());
  std::vector<double> scaled(weights.begin(), weights.end());
  for (auto& w : scaled) w /= n;
  return torch::tensor(scaled, torch::TensorOptions().dtype(torch::kDouble))
      .to(like.options())
      .view({static_cast<int64_t>(scaled.size()), 1});
}

torch::Tensor nll_value(const torch::Tensor& mean, const torch::Tensor& log_variance,
                        const torch::Tensor& target, const torch::Tensor& w, bool constant) {
  auto r = target - mean;
  auto per = 0.5 * (log_variance + r * r * torch::exp(-log_variance));
  if (constant) per = per + 0.5 * std::log(2.0 * std::numbers::pi);
  return (per * w).sum();
}

std::pair<torch::Tensor, torch::Tensor> closed_form(const torch::Tensor& mean,
                                                    const torch::Tensor& log_variance,
                                                    const torch::Tensor& target,
                                                    const torch::Tensor& w) {
  auto r = target - mean;
  auto inv = torch::exp(-log_variance);
  auto d_mean = -r * inv * w;
  auto d_log_variance = 0.5 * (1.0 - r * r * inv) * w;
  return {d_mean, d_log_variance};
}

class NllFunction : public torch::autograd::Function<NllFunction> {
 public:
  static torch::Tensor forward(torch::autograd::AutogradContext* ctx, const torch::Tensor& mean,
                               const torch::Tensor& log_variance, const torch::Tensor& target,
                               const torch::Tensor& w, bool constant) {
    ctx->save_for_backward({mean, log_variance, target, w});
    return nll_value(mean, log_variance, target, w, constant);
  }

  static torch::autograd::variable_list backward(torch::autograd::AutogradContext* ctx,
                                                 torch::autograd::variable_list grad_output) {
    const auto saved = ctx->get_saved_variables();
    auto [d_mean, d_log_variance] = closed_form(saved[0], saved[1], saved[2], saved[3]);
    const auto& g = grad_output[0];
    return {d_mean * g, d_log_variance * g, torch::Tensor(), torch::Tensor(), torch::Tensor()};
  }
};

}  // namespace

torch::Tensor uncertainty_nll(const torch::Tensor& mean, const torch::Tensor& log_variance,
                              const torch::Tensor& target, std::span<const double> latitude_weights,
                              const LossConfig& cfg) {
  check_inputs(mean, log_variance, target, latitude_weights, cfg);
  const auto w = element_weights(mean, latitude_weights, cfg);
  return NllFunction::apply(mean, log_variance, target.detach(), w, cfg.include_constant);
}

NllGradients nll_gradients(const torch::Tensor& mean, const torch::Tensor& log_variance,
                           const torch::Tensor& target, std::span<const double> latitude_weights,
                           const LossConfig& cfg) {
  check_inputs(mean, log_variance, target, latitude_weights, cfg);
  torch::NoGradGuard no_grad;
  const auto w = element_weights(mean, latitude_weights, cfg);
  auto [d_mean, d_log_variance] = closed_form(mean, log_variance, target, w);
  return {d_mean.expand_as(mean).contiguous(), d_log_variance.expand_as(mean).contiguous()};
}

}  // namespace mmcast
