#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "mmcast/config.hpp"
#include "mmcast/forecast.hpp"
#include "mmcast/hash.hpp"
#include "mmcast/pipeline.hpp"
#include "mmcast/plot.hpp"
#include "mmcast/storage.hpp"
#include "mmcast/trainer.hpp"
#include "mmcast/verification.hpp"

namespace fs = std::filesystem;
using namespace mmcast;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitRuntime = 2;

struct CommonFlags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed_override;
  bool deterministic = false;
  bool force = false;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* c = cmd->add_option("--config", f.config, "key = value run configuration");
  if (config_required) c->check(CLI::ExistingFile);
  cmd->add_option("--out", f.out, "output directory")->required();
  cmd->add_option("--seed-override", f.seed_override, "replace the config seed");
  cmd->add_flag("--deterministic", f.deterministic, "single-threaded reproducible execution");
  cmd->add_flag("--force", f.force, "overwrite a non-empty output directory");
}

RunConfig load_config(const CommonFlags& f, bool seed_required) {
  RunConfig cfg = f.config.empty()
                      ? (f.seed_override || !seed_required
                             ? RunConfig::defaults(f.seed_override.value_or(0))
                             : RunConfig::parse("", "<no config>"))
                      : RunConfig::load(f.config, f.seed_override);
  if (f.deterministic) cfg.set("train.deterministic", "true");
  if (cfg.get_bool("train.deterministic")) torch::set_num_threads(1);
  return cfg;
}

ExperimentData load_data(const std::string& dir, const RunConfig& cfg) {
  ArchiveReader reader(dir);
  if (reader.kind() != "trajectory") throw ValidationError(dir + " is not a trajectory directory");
  const int cycle = static_cast<int>(reader.manifest().get_int("sim.cycle_length_days"));
  return prepare_data(reader.read_all(), cfg.split_fractions(), cycle);
}

Manifest data_provenance(const std::string& dir) {
  Manifest m;
  m.set("data.dir", fs::absolute(dir).string());
  m.set("data.manifest_sha256", sha256_file(fs::path(dir) / "manifest.txt"));
  return m;
}

void print_stage(const StageResult& r) {
  if (!r.history.empty()) {
    std::printf("steps run: %zu, first loss %.6g, last loss %.6g\n", r.history.size(),
                r.history.front().loss, r.history.back().loss);
  }
  if (r.completed) {
    std::printf("checkpoint: %s\nsha256: %s\n", r.checkpoint_dir.string().c_str(),
                r.checkpoint_hash.c_str());
  } else {
    std::printf("stopped before the end of the stage; rerun with --resume to continue\n");
  }
}

int cmd_simulate(const CommonFlags& f) {
  const auto cfg = load_config(f, true);
  const auto params = cfg.sim_params();
  const auto start = std::chrono::steady_clock::now();
  const auto traj = simulate(params, cfg.sim_steps());
  write_trajectory(f.out, traj, params, f.force);
  auto m = Manifest::read(fs::path(f.out) / "manifest.txt");
  m.merge(cfg.to_manifest());
  m.write(fs::path(f.out) / "manifest.txt");
  std::printf("wrote %lld states (%d channels, %dx%d grid) to %s in %.1f s\n",
              static_cast<long long>(traj.size()), traj.schema.total_channels(), traj.grid.n_lat(),
              traj.grid.n_lon, f.out.c_str(),
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  return 0;
}

struct TrainFlags {
  std::string data;
  std::string init;
  std::optional<std::int64_t> stop_after;
  bool resume = false;
};

RunOptions run_options(const CommonFlags& f, const TrainFlags& t, const RunConfig& cfg) {
  RunOptions opts;
  opts.run_dir = f.out;
  opts.checkpoint_interval = cfg.get_int("train.checkpoint_interval");
  opts.stop_after = t.stop_after;
  opts.resume = t.resume;
  opts.force = f.force;
  opts.extra = cfg.to_manifest();
  opts.extra.merge(data_provenance(t.data));
  return opts;
}

int cmd_train(const CommonFlags& f, const TrainFlags& t) {
  const auto cfg = load_config(f, true);
  const auto data = load_data(t.data, cfg);
  ForecastModel model(cfg.model_config(), data.trajectory.schema, data.trajectory.grid);
  print_stage(pretrain_single_step(model, data.train, cfg.train_config(), run_options(f, t, cfg)));
  return 0;
}

int cmd_finetune(const CommonFlags& f, const TrainFlags& t) {
  const auto cfg = load_config(f, true);
  const auto data = load_data(t.data, cfg);
  auto init = load_checkpoint(t.init);
  auto opts = run_options(f, t, cfg);
  opts.extra.set("init_checkpoint", fs::absolute(t.init).string());
  opts.extra.set("init_checkpoint_hash", init.info.content_hash);
  print_stage(finetune_with_buffer(init.model, data.train, cfg.train_config(), opts));
  return 0;
}

struct ForecastFlags {
  std::string checkpoint;
  std::string data;
  std::int64_t init_time = 0;
  std::optional<std::int64_t> steps;
};

int cmd_forecast(const CommonFlags& f, const ForecastFlags& ff) {
  const auto cfg = load_config(f, false);
  auto ckpt = load_checkpoint(ff.checkpoint);
  ArchiveReader reader(ff.data);
  const auto initial = reader.read_state(ff.init_time);
  const auto n_steps = ff.steps.value_or(cfg.get_int("forecast.n_steps"));
  const auto result = rollout(ckpt.model, ckpt.info.norm, initial, n_steps);
  ForecastArchiveInfo info{ff.init_time, fs::absolute(ff.data).string(), ckpt.info.content_hash};
  write_forecast_archive(f.out, result.states, reader.grid(), reader.schema(), reader.steps_per_day(),
                         info, f.force);
  const double total = std::accumulate(result.step_seconds.begin(), result.step_seconds.end(), 0.0);
  std::printf("wrote %lld forecast states to %s (%lld model evaluations, %.4f s per step)\n",
              static_cast<long long>(result.states.size()), f.out.c_str(),
              static_cast<long long>(result.model_evaluations),
              n_steps > 0 ? total / static_cast<double>(n_steps) : 0.0);
  return 0;
}

struct VerifyFlags {
  std::vector<std::string> forecasts;
  std::string truth;
  std::optional<int> max_leads;
};

/// A run is one forecast archive or a directory of them.
std::vector<fs::path> run_archives(const fs::path& dir) {
  if (is_archive_dir(dir)) return {dir};
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && is_archive_dir(entry.path())) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw ValidationError(dir.string() + " holds no forecast archives");
  return out;
}

std::string run_label(const fs::path& dir) {
  auto p = dir;
  if (p.filename().empty()) p = p.parent_path();
  return p.filename().string();
}

void write_skill_table(const fs::path& path, const MetricSeries& acc_series, double threshold,
                       int steps_per_day) {
  std::ofstream out(path);
  out << "channel,threshold,lead_steps,lead_days,fractional_days,unbounded\n";
  for (int c = 0; c < acc_series.n_channels(); ++c) {
    const auto s = skillful_lead_time(acc_series, c, threshold, steps_per_day);
    out << acc_series.channel_labels()[c] << ',' << format_double(threshold) << ',' << s.lead_steps
        << ',' << format_double(s.days) << ',' << format_double(s.fractional_days) << ','
        << (s.unbounded ? "true" : "false") << "\n";
  }
}

void write_plots(const fs::path& dir, const std::vector<std::string>& labels,
                 const std::vector<std::pair<std::string, std::vector<MetricSeries>>>& runs) {
  fs::create_directories(dir);
  std::ofstream legend(dir / "legend.txt");
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto rgb = palette_color(r);
    legend << runs[r].first << " rgb(" << int(rgb[0]) << "," << int(rgb[1]) << "," << int(rgb[2])
           << ")\n";
  }
  if (runs.empty()) return;
  for (std::size_t m = 0; m < runs.front().second.size(); ++m) {
    for (int c = 0; c < static_cast<int>(labels.size()); ++c) {
      std::vector<PlotSeries> series;
      for (const auto& [name, metrics] : runs) series.push_back({name, metrics[m].values(c)});
      write_line_plot_ppm(dir / (to_string(runs.front().second[m].kind()) + "_" + labels[c] + ".ppm"),
                          series);
    }
  }
}

int cmd_verify(const CommonFlags& f, const VerifyFlags& v) {
  const auto cfg = load_config(f, false);
  ArchiveReader truth_reader(v.truth);
  const auto truth_traj = truth_reader.read_all();
  auto split = split_dataset(truth_traj.size(), cfg.split_fractions());
  const auto first = truth_traj.states.front().time_index;
  split.train.begin += first;
  split.train.end += first;
  const int cycle = static_cast<int>(truth_reader.manifest().get_int("sim.cycle_length_days"));
  const auto climatology = compute_climatology(truth_traj, split.train, cycle);
  const auto labels = truth_traj.schema.channel_labels();
  const int spd = truth_traj.steps_per_day;
  const double threshold = cfg.get_double("eval.acc_threshold");

  prepare_output_dir(f.out, f.force);
  std::vector<std::pair<std::string, std::vector<MetricSeries>>> runs;
  std::map<std::string, int> used;
  for (const auto& dir : v.forecasts) {
    ForecastSet forecasts, truths;
    for (const auto& archive : run_archives(dir)) {
      ArchiveReader reader(archive);
      if (reader.schema() != truth_traj.schema || reader.grid() != truth_traj.grid) {
        throw ValidationError(archive.string() + " does not match the truth schema or grid");
      }
      auto n = reader.count();
      if (v.max_leads) n = std::min<std::int64_t>(n, *v.max_leads);
      const auto init = reader.init_time_index();
      forecasts.init_time_indices.push_back(init);
      truths.init_time_indices.push_back(init);
      auto& fc = forecasts.fields.emplace_back();
      auto& tr = truths.fields.emplace_back();
      for (std::int64_t k = 0; k < n; ++k) {
        const auto valid = reader.first_time_index() + k;
        if (valid != init + k + 1) throw ValidationError(archive.string() + " has a gap in its leads");
        fc.push_back(reader.read_state(valid).values);
        tr.push_back(truth_traj.at_time(valid).values);
      }
    }
    auto r = rmse(forecasts, truths, truth_traj.grid, labels);
    auto a = acc(forecasts, truths, climatology, truth_traj.grid, labels);
    auto label = run_label(dir);
    if (used[label]++) label += "_" + std::to_string(used[label]);
    write_metric_table(fs::path(f.out) / ("metrics_" + label + ".csv"), {r, a}, spd);
    write_skill_table(fs::path(f.out) / ("skill_" + label + ".csv"), a, threshold, spd);
    std::printf("%s: %d initializations, %d leads\n", label.c_str(), r.n_initializations(), r.n_leads());
    runs.emplace_back(label, std::vector<MetricSeries>{r, a});
  }
  write_plots(fs::path(f.out) / "plots", labels, runs);
  return 0;
}

struct AblateFlags {
  std::string data;
};

int cmd_ablate(const CommonFlags& f, const AblateFlags& a) {
  const auto cfg = load_config(f, true);
  const auto data = load_data(a.data, cfg);
  const auto start = std::chrono::steady_clock::now();
  const auto result = run_ablation(data, cfg.ablation_config(), f.out, f.force, [&](const std::string& msg) {
    std::printf("[%7.1f s] %s\n",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(),
                msg.c_str());
    std::fflush(stdout);
  });
  auto m = Manifest::read(fs::path(f.out) / "summary.txt");
  m.merge(cfg.to_manifest());
  m.merge(data_provenance(a.data));
  m.write(fs::path(f.out) / "summary.txt");
  const auto labels = data.trajectory.schema.channel_labels();
  write_plots(fs::path(f.out) / "plots", labels,
              {{"arm_buffer", {result.buffer_arm.rmse, result.buffer_arm.acc}},
               {"arm_plain", {result.plain_arm.rmse, result.plain_arm.acc}}});
  std::printf("shared pretrain checkpoint: %s\n", result.pretrain_hash.c_str());
  std::printf("buffer arm wins %.0f%% of channels at leads >= %d: %s\n", 100.0 * result.fraction_won,
              cfg.ablation_config().min_lead, result.passed ? "pass" : "fail");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mmcast: multi-modal toy weather forecasting"};
  app.require_subcommand(1);

  CommonFlags sim_f, train_f, fine_f, fc_f, ver_f, abl_f;
  TrainFlags train_t, fine_t;
  ForecastFlags fc;
  VerifyFlags ver;
  AblateFlags abl;

  auto* sim = app.add_subcommand("simulate", "integrate the toy atmosphere and write a trajectory");
  add_common(sim, sim_f, true);

  auto* train = app.add_subcommand("train", "single-step pretraining");
  add_common(train, train_f, true);
  train->add_option("--data", train_t.data, "trajectory directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--stop-after", train_t.stop_after, "stop after this many steps");
  train->add_flag("--resume", train_t.resume, "continue from the run's latest checkpoint");

  auto* fine = app.add_subcommand("finetune", "replay-buffer finetuning from a checkpoint");
  add_common(fine, fine_f, true);
  fine->add_option("--data", fine_t.data, "trajectory directory")->required()->check(CLI::ExistingDirectory);
  fine->add_option("--init", fine_t.init, "checkpoint directory to start from")->required()->check(CLI::ExistingDirectory);
  fine->add_option("--stop-after", fine_t.stop_after, "stop after this many steps");
  fine->add_flag("--resume", fine_t.resume, "continue from the run's latest checkpoint");

  auto* forecast = app.add_subcommand("forecast", "autoregressive rollout from one initial state");
  add_common(forecast, fc_f, false);
  forecast->add_option("--checkpoint", fc.checkpoint, "checkpoint directory")->required()->check(CLI::ExistingDirectory);
  forecast->add_option("--data", fc.data, "trajectory holding the initial state")->required()->check(CLI::ExistingDirectory);
  forecast->add_option("--init-time", fc.init_time, "time index of the initial state")->required();
  forecast->add_option("--steps", fc.steps, "rollout length (default: forecast.n_steps)");

  auto* verify = app.add_subcommand("verify", "score forecast archives against a trajectory");
  add_common(verify, ver_f, false);
  verify->add_option("--forecast", ver.forecasts, "forecast archive, or a directory of archives; repeatable")
      ->required()->check(CLI::ExistingDirectory);
  verify->add_option("--truth", ver.truth, "truth trajectory directory")->required()->check(CLI::ExistingDirectory);
  verify->add_option("--max-leads", ver.max_leads, "score at most this many leads per archive");

  auto* ablate = app.add_subcommand("ablate", "paired with/without replay buffer experiment");
  add_common(ablate, abl_f, true);
  ablate->add_option("--data", abl.data, "trajectory directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*sim) return cmd_simulate(sim_f);
    if (*train) return cmd_train(train_f, train_t);
    if (*fine) return cmd_finetune(fine_f, fine_t);
    if (*forecast) return cmd_forecast(fc_f, fc);
    if (*verify) return cmd_verify(ver_f, ver);
    if (*ablate) return cmd_ablate(abl_f, abl);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const OutputDirError& e) {
    std::fprintf(stderr, "validation error: %s\n", e.what());
    return kExitValidation;
  } catch (const IntegrityError& e) {
    std::fprintf(stderr, "integrity error: %s\n", e.what());
    return kExitRuntime;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}
