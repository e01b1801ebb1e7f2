#include "mmforge/pipeline.hpp"

#include <cstdio>
#include <memory>
#include <utility>

#include "mmforge/rng.hpp"

namespace mmforge {
namespace {

template <typename Fn>
auto stage(const std::string& name, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

std::vector<std::vector<double>> stride_subsample(const std::vector<std::vector<double>>& rows,
                                                  std::size_t cap) {
  if (cap == 0 || rows.size() <= cap) return rows;
  std::vector<std::vector<double>> kept;
  kept.reserve(cap);
  const std::size_t stride = (rows.size() + cap - 1) / cap;
  for (std::size_t i = 0; i < rows.size(); i += stride) kept.push_back(rows[i]);
  return kept;
}

std::string fmt_num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void append_machine_columns(std::string& row, const MooreMachine& mm, double perf) {
  const MachineStats st = mm.stats();
  row += "," + std::to_string(st.decision_points);
  row += "," + std::to_string(st.state_count);
  row += "," + std::to_string(st.obs_count);
  row += "," + fmt_num(perf);
}

}  // namespace

std::string pipeline_csv_header() {
  return "env,Nh,No,orig_dp,orig_states,orig_obs,orig_perf,"
         "pruned_dp,pruned_states,pruned_obs,pruned_perf,"
         "min_dp,min_states,min_obs,min_perf";
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
  PipelineResult out;
  Rng root(cfg.seed);
  const std::uint64_t init_seed = root.child("pipeline-init").next_u64();
  const std::uint64_t clone_seed = root.child("pipeline-clone").next_u64();
  const std::uint64_t rollout_seed = root.child("pipeline-rollouts").next_u64();
  const std::uint64_t tune_seed = root.child("pipeline-tune").next_u64();
  const std::uint64_t trace_seed = root.child("pipeline-traces").next_u64();
  const std::uint64_t prune_seed = root.child("pipeline-prune").next_u64();
  const std::uint64_t eval_base = root.child("pipeline-eval").next_u64();

  std::unique_ptr<Environment> env = make_env(cfg.env_spec);
  std::function<int(const std::vector<double>&)> expert;
  if (cfg.env_spec == "cartpole") {
    expert = cartpole_expert;
  } else {
    throw PipelineError("clone", "no scripted expert for env spec '" + cfg.env_spec + "'");
  }

  out.rpn = make_rpn(env->obs_dim(), env->action_count(), init_seed, cfg.feature_dim,
                     cfg.hidden_dim);

  CloneConfig clone_cfg = cfg.clone;
  clone_cfg.seed = clone_seed;
  out.clone_report = stage("clone", [&] { return clone_train(out.rpn, *env, expert, clone_cfg); });
  out.rpn_eval = stage("clone", [&] {
    RpnPolicy pol(out.rpn);
    return evaluate(pol, *env, cfg.eval_episodes, eval_base);
  });

  const RolloutData data = stage("rollouts", [&] {
    return collect_rollout_data(out.rpn, *env, cfg.qbn_rollout_episodes, rollout_seed);
  });
  const auto feature_rows = stride_subsample(data.features, cfg.qbn_sample_cap);
  const auto hidden_rows = stride_subsample(data.hiddens, cfg.qbn_sample_cap);

  Rng obs_rng = root.child("pipeline-obs-qbn");
  QbnParams obs_qbn = build_qbn(QbnKind::Observation, cfg.feature_dim, cfg.obs_bottleneck, obs_rng);
  QbnTrainConfig obs_train = cfg.qbn;
  obs_train.seed = obs_rng.next_u64();
  out.obs_qbn_report = stage("obs-qbn", [&] { return train_qbn(obs_qbn, feature_rows, obs_train); });

  Rng hid_rng = root.child("pipeline-hidden-qbn");
  QbnParams hidden_qbn =
      build_qbn(QbnKind::Hidden, cfg.hidden_dim, cfg.hidden_bottleneck, hid_rng);
  QbnTrainConfig hid_train = cfg.qbn;
  hid_train.seed = hid_rng.next_u64();
  out.hidden_qbn_report =
      stage("hidden-qbn", [&] { return train_qbn(hidden_qbn, hidden_rows, hid_train); });

  out.drpn = stage("insert", [&] { return insert_qbns(out.rpn, obs_qbn, hidden_qbn); });

  FineTuneConfig tune_cfg = cfg.tune;
  tune_cfg.seed = tune_seed;
  out.tune_report = stage("fine-tune", [&] { return fine_tune(out.drpn, *env, tune_cfg); });
  out.drpn_eval = stage("fine-tune", [&] {
    DrpnPolicy pol(out.drpn);
    return evaluate(pol, *env, cfg.eval_episodes, eval_base);
  });

  out.traces = stage("traces", [&] {
    return collect_transitions(out.drpn, *env, cfg.transition_episodes, trace_seed);
  });
  out.raw = stage("build", [&] { return build_from_traces(out.traces); });

  out.view = stage("reduce", [&] {
    return reduce_all(out.raw, visits_from_counts(out.raw), cfg.reduce_opts);
  });

  const ObsEncoder encoder = drpn_obs_encoder(out.drpn);
  out.raw_eval = stage("eval", [&] {
    MachinePolicy pol(out.raw, encoder);
    return evaluate(pol, *env, cfg.eval_episodes, eval_base);
  });

  PruneConfig prune_cfg = cfg.prune_cfg;
  prune_cfg.seed_base = prune_seed;
  PruneResult pruned = stage("prune", [&] { return prune(out.raw, *env, encoder, prune_cfg); });
  out.pruned = std::move(pruned.machine);
  out.prune_log = std::move(pruned.log);
  out.pruned_eval = stage("eval", [&] {
    MachinePolicy pol(out.pruned, encoder);
    return evaluate(pol, *env, cfg.eval_episodes, eval_base);
  });

  out.minimized = stage("minimize", [&] { return minimize(out.pruned); });
  out.min_eval = stage("eval", [&] {
    MachinePolicy pol(out.minimized, encoder);
    return evaluate(pol, *env, cfg.eval_episodes, eval_base);
  });

  std::string row = cfg.env_spec;
  row += "," + std::to_string(cfg.hidden_bottleneck);
  row += "," + std::to_string(cfg.obs_bottleneck);
  append_machine_columns(row, out.raw, out.raw_eval.mean_return);
  append_machine_columns(row, out.pruned, out.pruned_eval.mean_return);
  append_machine_columns(row, out.minimized, out.min_eval.mean_return);
  out.csv_row = std::move(row);
  return out;
}

}  // namespace mmforge
