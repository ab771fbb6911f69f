#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "mmcast/atmosphere.hpp"
#include "mmcast/grid.hpp"
#include "mmcast/model.hpp"

namespace mmcast {

struct RolloutOptions {
  bool keep_log_variance = false;
};

struct Rollout {
  std::vector<StateTensor> states;        // physical space, time_index = init + k + 1
  std::vector<Field> log_variances;       // normalized space, only when requested
  std::int64_t model_evaluations = 0;
  std::vector<double> step_seconds;       // wall clock per step
};

/// Mean-only autoregression: each step feeds the previous predicted mean back
/// in. The model's increment is added in physical space, so an identity model
/// reproduces the initial state exactly. Throws NumericError naming the step
/// at which a non-finite value first appears.
Rollout rollout(ForecastModel& model, const NormStats& norm, const StateTensor& initial,
                std::int64_t n_steps, const RolloutOptions& opts = {});

/// Same recursion for several initial states at once; one model evaluation
/// per step covers the whole batch.
std::vector<Rollout> rollout_batch(ForecastModel& model, const NormStats& norm,
                                   const std::vector<StateTensor>& initials, std::int64_t n_steps,
                                   const RolloutOptions& opts = {});

}  // namespace mmcast
