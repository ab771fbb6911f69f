#pragma once

#include <torch/torch.h>

#include <span>

#include "mmcast/manifest.hpp"

namespace mmcast {

struct LossConfig {
  bool include_constant = false;  // adds 0.5 * log(2 pi) per element
  bool latitude_weight_in_loss = true;

  void describe(Manifest& m, const std::string& prefix = "loss.") const;
  static LossConfig from_manifest(const Manifest& m, const std::string& prefix = "loss.");
};

/// Gaussian negative log-likelihood with per-element log-variance s:
///   L = 0.5 * (s + (x - mu)^2 * exp(-s)), averaged over every element, each
///   element scaled by its row's latitude weight when enabled.
/// Inputs are (B, C, W, H) or (C, W, H); `latitude_weights` has W entries.
/// Backward uses the closed-form gradients below.
torch::Tensor uncertainty_nll(const torch::Tensor& mean, const torch::Tensor& log_variance,
                              const torch::Tensor& target, std::span<const double> latitude_weights,
                              const LossConfig& cfg = {});

struct NllGradients {
  torch::Tensor d_mean;
  torch::Tensor d_log_variance;
};

NllGradients nll_gradients(const torch::Tensor& mean, const torch::Tensor& log_variance,
                           const torch::Tensor& target, std::span<const double> latitude_weights,
                           const LossConfig& cfg = {});

}  // namespace mmcast
