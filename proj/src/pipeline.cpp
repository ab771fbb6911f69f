#include "mmcast/pipeline.hpp"

#include <fstream>

#include "mmcast/forecast.hpp"
#include "mmcast/storage.hpp"

namespace mmcast {

namespace fs = std::filesystem;

ExperimentData prepare_data(Trajectory trajectory, std::array<double, 3> split_fractions,
                            int cycle_length_days) {
  ExperimentData data;
  data.split = split_dataset(trajectory.size(), split_fractions);
  // Split ranges are positions; shift them onto the trajectory's time indices.
  const auto first = trajectory.states.front().time_index;
  for (auto* r : {&data.split.train, &data.split.val, &data.split.test}) {
    r->begin += first;
    r->end += first;
  }
  data.norm = compute_norm_stats(trajectory, data.split.train);
  data.climatology = compute_climatology(trajectory, data.split.train, cycle_length_days);
  data.train = TrainingData::from_trajectory(trajectory, data.split.train, data.norm);
  data.trajectory = std::move(trajectory);
  return data;
}

std::vector<std::int64_t> evaluation_initializations(IndexRange test, int n_leads, int count,
                                                     int steps_per_day) {
  std::vector<std::int64_t> candidates;
  const int half = steps_per_day / 2;
  for (auto t = test.begin; t + n_leads < test.end; ++t) {
    const auto slot = t % steps_per_day;
    if (slot == 0 || slot == half) candidates.push_back(t);
  }
  if (count <= 0 || static_cast<int>(candidates.size()) <= count) return candidates;
  std::vector<std::int64_t> picks;
  const double stride = static_cast<double>(candidates.size() - 1) / (count - 1);
  for (int i = 0; i < count; ++i) {
    picks.push_back(candidates[static_cast<std::size_t>(std::llround(i * stride))]);
  }
  return picks;
}

Evaluation evaluate_model(ForecastModel& model, const ExperimentData& data,
                          const std::vector<std::int64_t>& inits, int n_leads, int batch) {
  const auto labels = data.trajectory.schema.channel_labels();
  const auto weights = latitude_weights(data.trajectory.grid);
  MetricAccumulator rmse_acc(MetricKind::Rmse, labels, n_leads);
  MetricAccumulator acc_acc(MetricKind::Acc, labels, n_leads);
  for (std::size_t start = 0; start < inits.size(); start += static_cast<std::size_t>(batch)) {
    const auto end = std::min(inits.size(), start + static_cast<std::size_t>(batch));
    std::vector<StateTensor> initials;
    for (auto i = start; i < end; ++i) initials.push_back(data.trajectory.at_time(inits[i]));
    const auto rollouts = rollout_batch(model, data.norm, initials, n_leads);
    for (const auto& r : rollouts) {
      for (int k = 0; k < n_leads; ++k) {
        const auto& forecast = r.states[k];
        const auto& truth = data.trajectory.at_time(forecast.time_index).values;
        rmse_acc.add(k + 1, field_rmse(forecast.values, truth, weights));
        const auto a = field_acc(forecast.values, truth,
                                 data.climatology.at_time(forecast.time_index), weights);
        acc_acc.add(k + 1, std::span<const std::optional<double>>(a));
      }
      rmse_acc.next_initialization();
      acc_acc.next_initialization();
    }
  }
  return {rmse_acc.finish(), acc_acc.finish(), inits};
}

AblationResult run_ablation(const ExperimentData& data, const AblationConfig& cfg,
                            const fs::path& out_dir, bool force, const ProgressFn& progress) {
  if (out_dir.empty()) throw ConfigError("the ablation needs an output directory");
  const auto say = [&](const std::string& msg) {
    if (progress) progress(msg);
  };
  prepare_output_dir(out_dir, force);
  const auto& traj = data.trajectory;

  Manifest provenance;
  provenance.set("ablation.n_leads", cfg.n_leads);
  provenance.set("ablation.n_initializations", cfg.n_initializations);
  provenance.set("ablation.min_lead", cfg.min_lead);
  provenance.set("ablation.channel_fraction", cfg.channel_fraction);

  RunOptions pre_opts;
  pre_opts.run_dir = out_dir / "pretrain";
  pre_opts.checkpoint_interval = 0;
  pre_opts.extra = provenance;
  say("pretraining " + std::to_string(cfg.train.pretrain_steps) + " steps");
  ForecastModel model(cfg.model, traj.schema, traj.grid);
  const auto pre = pretrain_single_step(model, data.train, cfg.train, pre_opts);

  AblationResult result;
  result.pretrain_hash = pre.checkpoint_hash;
  const auto inits = evaluation_initializations(data.split.test, cfg.n_leads,
                                                cfg.n_initializations, traj.steps_per_day);

  const auto run_arm = [&](const std::string& name, double mix_ratio) {
    auto arm_cfg = cfg.train;
    arm_cfg.buffer.mix_ratio = mix_ratio;
    auto start = load_checkpoint(pre.checkpoint_dir);
    if (start.info.content_hash != result.pretrain_hash) {
      throw IntegrityError("arm " + name + " did not start from the shared pretrain checkpoint");
    }
    RunOptions opts;
    opts.run_dir = out_dir / name;
    opts.checkpoint_interval = 0;
    opts.extra = provenance;
    opts.extra.set("init_checkpoint", pre.checkpoint_dir.string());
    opts.extra.set("init_checkpoint_hash", result.pretrain_hash);
    say("finetuning arm " + name + " (mix_ratio " + format_double(mix_ratio) + ")");
    auto run = finetune_with_buffer(start.model, data.train, arm_cfg, opts);
    say("evaluating arm " + name + " on " + std::to_string(inits.size()) + " initializations");
    auto eval = evaluate_model(run.model, data, inits, cfg.n_leads);
    write_metric_table(opts.run_dir / "metrics.csv", {eval.rmse, eval.acc}, traj.steps_per_day);
    return eval;
  };
  result.buffer_arm = run_arm("arm_buffer", cfg.train.buffer.mix_ratio);
  result.plain_arm = run_arm("arm_plain", 0.0);

  const int n_channels = result.buffer_arm.rmse.n_channels();
  int won = 0;
  for (int c = 0; c < n_channels; ++c) {
    std::vector<double> diff(cfg.n_leads);
    double sum_buffer = 0.0, sum_plain = 0.0;
    for (int lead = 1; lead <= cfg.n_leads; ++lead) {
      const double b = result.buffer_arm.rmse.at(c, lead).value;
      const double p = result.plain_arm.rmse.at(c, lead).value;
      diff[lead - 1] = p - b;
      if (lead >= cfg.min_lead) {
        sum_buffer += b;
        sum_plain += p;
      }
    }
    result.rmse_difference.push_back(std::move(diff));
    result.channel_won.push_back(sum_buffer < sum_plain);
    won += sum_buffer < sum_plain ? 1 : 0;
  }
  result.fraction_won = n_channels > 0 ? static_cast<double>(won) / n_channels : 0.0;
  result.passed = result.fraction_won >= cfg.channel_fraction;

  write_difference_table(out_dir / "rmse_difference.csv", result, traj.schema.channel_labels(),
                         traj.steps_per_day);
  Manifest summary;
  summary.set("kind", "ablation");
  summary.set("pretrain_hash", result.pretrain_hash);
  summary.set("channels_won", won);
  summary.set("n_channels", n_channels);
  summary.set("fraction_won", result.fraction_won);
  summary.set("passed", result.passed);
  summary.merge(provenance);
  summary.write(out_dir / "summary.txt");
  return result;
}

void write_difference_table(const fs::path& path, const AblationResult& result,
                            const std::vector<std::string>& channel_labels, int steps_per_day) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write " + path.string());
  out << "channel,lead_steps,lead_days,rmse_buffer,rmse_plain,difference\n";
  for (std::size_t c = 0; c < result.rmse_difference.size(); ++c) {
    const auto& diff = result.rmse_difference[c];
    for (std::size_t k = 0; k < diff.size(); ++k) {
      const int lead = static_cast<int>(k) + 1;
      out << channel_labels[c] << ',' << lead << ','
          << format_double(static_cast<double>(lead) / steps_per_day) << ','
          << format_double(result.buffer_arm.rmse.at(static_cast<int>(c), lead).value) << ','
          << format_double(result.plain_arm.rmse.at(static_cast<int>(c), lead).value) << ','
          << format_double(diff[k]) << "\n";
    }
  }
}

}  // namespace mmcast
