#pragma once

// The end-to-end path from a scripted expert to a pruned machine: clone a
// recurrent policy, train the two bottlenecks on its rollouts, fine-tune the
// discretized stack, collect transition tuples, build and prune the machine,
// and minimize the result. One seed drives every stage through fixed labels,
// so a config reproduces its artifacts byte for byte.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/automaton.hpp"
#include "mmforge/policy.hpp"
#include "mmforge/pruner.hpp"
#include "mmforge/qbn.hpp"
#include "mmforge/reducer.hpp"

namespace mmforge {

struct PipelineError : std::runtime_error {
  PipelineError(const std::string& stage_name, const std::string& what)
      : std::runtime_error("stage " + stage_name + ": " + what), stage(stage_name) {}
  std::string stage;
};

struct PipelineConfig {
  std::string env_spec = "cartpole";
  std::uint64_t seed = 7;
  std::size_t feature_dim = 8;
  std::size_t hidden_dim = 8;
  std::size_t obs_bottleneck = 8;
  std::size_t hidden_bottleneck = 8;
  CloneConfig clone;
  QbnTrainConfig qbn;
  FineTuneConfig tune;
  PruneConfig prune_cfg;
  int qbn_rollout_episodes = 20;
  std::size_t qbn_sample_cap = 6000;  // stride-subsample larger bottleneck datasets
  int transition_episodes = 30;
  int eval_episodes = 20;
  ReduceOptions reduce_opts;
};

struct PipelineResult {
  RpnParams rpn;
  DiscretizedRpn drpn;
  std::vector<Trace> traces;
  MooreMachine raw;
  ReducedView view;  // interpretable reduction of the raw machine
  MooreMachine pruned;
  MooreMachine minimized;
  PruneLog prune_log;
  CloneReport clone_report;
  FineTuneReport tune_report;
  QbnTrainReport obs_qbn_report;
  QbnTrainReport hidden_qbn_report;
  EvalReport rpn_eval;
  EvalReport drpn_eval;
  EvalReport raw_eval;
  EvalReport pruned_eval;
  EvalReport min_eval;
  std::string csv_row;
};

std::string pipeline_csv_header();

PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace mmforge
