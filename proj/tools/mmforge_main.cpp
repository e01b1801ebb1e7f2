// mmforge: extract finite-state machines from small recurrent policies and
// analyze them. Subcommands cover the full pipeline and stage-by-stage entry
// points; every run is reproducible from its seed.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mmforge/attention.hpp"
#include "mmforge/automaton.hpp"
#include "mmforge/envs.hpp"
#include "mmforge/pipeline.hpp"
#include "mmforge/policy.hpp"
#include "mmforge/pruner.hpp"
#include "mmforge/qbn.hpp"
#include "mmforge/reducer.hpp"
#include "mmforge/trace.hpp"

namespace {

using namespace mmforge;

void write_text(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<double> read_vector_json(const std::string& path) {
  const nlohmann::json j = nlohmann::json::parse(read_text(path));
  if (!j.is_array()) throw std::runtime_error(path + ": expected a JSON array of numbers");
  std::vector<double> v;
  v.reserve(j.size());
  for (const auto& e : j) v.push_back(e.get<double>());
  return v;
}

std::vector<std::uint64_t> read_seed_file(const std::string& path) {
  std::istringstream in(read_text(path));
  std::vector<std::uint64_t> seeds;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    seeds.push_back(std::stoull(line));
  }
  if (seeds.empty()) throw std::runtime_error(path + ": no seeds found");
  return seeds;
}

// Rounds each raw observation entry to the nearest ternary value; the right
// binding for environments that already emit code-like observations.
TernaryCode identity_encode(const std::vector<double>& obs) { return nearest_ternary(obs); }

// Shared checkpoint flags: a combined bundle or the three-part form.
struct DrpnSource {
  std::string drpn_path;
  std::string policy_path;
  std::string qbn_h_path;
  std::string qbn_o_path;

  void add_options(CLI::App& cmd) {
    auto* bundle = cmd.add_option("--drpn", drpn_path, "Discretized policy bundle checkpoint");
    auto* pol = cmd.add_option("--policy", policy_path, "Continuous policy checkpoint");
    auto* qh = cmd.add_option("--qbn-h", qbn_h_path, "Hidden-state bottleneck checkpoint");
    auto* qo = cmd.add_option("--qbn-o", qbn_o_path, "Observation bottleneck checkpoint");
    bundle->excludes(pol)->excludes(qh)->excludes(qo);
    pol->needs(qh)->needs(qo);
  }

  bool given() const { return !drpn_path.empty() || !policy_path.empty(); }

  void require() const {
    if (!given()) throw CLI::ValidationError("--drpn or --policy/--qbn-h/--qbn-o is required");
  }

  DiscretizedRpn load() const {
    if (!drpn_path.empty()) return load_drpn(drpn_path);
    return insert_qbns(load_rpn(policy_path), load_qbn(qbn_o_path), load_qbn(qbn_h_path));
  }
};

void print_eval(const std::string& label, const EvalReport& r) {
  std::cout << label << ": mean return " << r.mean_return << " (std " << r.std_return
            << ") over " << r.episode_returns.size() << " episodes\n";
}

int run_pipeline_cmd(const PipelineConfig& cfg, const std::string& out_dir) {
  PipelineResult res = run_pipeline(cfg);

  print_eval("clone", res.rpn_eval);
  std::cout << "obs-qbn: loss " << res.obs_qbn_report.initial_loss << " -> "
            << res.obs_qbn_report.final_loss << " in " << res.obs_qbn_report.epochs_run
            << " epochs\n";
  std::cout << "hidden-qbn: loss " << res.hidden_qbn_report.initial_loss << " -> "
            << res.hidden_qbn_report.final_loss << " in " << res.hidden_qbn_report.epochs_run
            << " epochs\n";
  print_eval("fine-tune", res.drpn_eval);
  std::cout << "fine-tune: teacher agreement " << res.tune_report.final_agreement << "\n";
  print_eval("machine", res.raw_eval);
  print_eval("pruned", res.pruned_eval);
  print_eval("minimized", res.min_eval);
  std::cout << "pruned machine class: "
            << control_class_name(classify(res.pruned, res.prune_log)) << "\n";

  const std::filesystem::path dir(out_dir);
  std::filesystem::create_directories(dir);
  save_rpn((dir / "rpn.ckpt").string(), res.rpn);
  save_drpn((dir / "drpn.ckpt").string(), res.drpn);
  save_qbn((dir / "qbn_o.ckpt").string(), res.drpn.obs_qbn);
  save_qbn((dir / "qbn_h.ckpt").string(), res.drpn.hidden_qbn);
  save_traces((dir / "traces.jsonl").string(), res.traces);
  save_machine(res.raw, (dir / "raw.mm").string());
  save_machine(res.pruned, (dir / "pruned.mm").string());
  save_machine(res.minimized, (dir / "min.mm").string());
  write_text((dir / "machine.dot").string(), machine_to_dot(res.raw));
  write_text((dir / "view.dot").string(), view_to_dot(res.view));
  write_text((dir / "view.json").string(), view_to_json(res.view));
  write_text((dir / "prune.json").string(), prune_log_to_json(res.prune_log));

  const std::string csv = pipeline_csv_header() + "\n" + res.csv_row + "\n";
  write_text((dir / "results.csv").string(), csv);
  std::cout << csv;
  std::cout << "artifacts written to " << dir.string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Moore machine extraction and analysis for recurrent policies"};
  app.require_subcommand(1);

  // pipeline ---------------------------------------------------------------
  auto* pipe = app.add_subcommand(
      "pipeline", "Clone an expert, discretize, extract, reduce, prune, minimize");
  pipe->set_config("--config", "", "Flat key=value config file; flags win");
  PipelineConfig pcfg;
  std::string pipe_out = "out";
  pipe->add_option("--env", pcfg.env_spec, "Environment spec")->capture_default_str();
  pipe->add_option("--seed", pcfg.seed, "Root seed for every stage")
      ->envname("MMFORGE_SEED")
      ->capture_default_str();
  pipe->add_option("--nh", pcfg.hidden_bottleneck, "Hidden-state bottleneck size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pipe->add_option("--no", pcfg.obs_bottleneck, "Observation bottleneck size")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pipe->add_option("--feature-dim", pcfg.feature_dim, "Feature vector width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pipe->add_option("--hidden-dim", pcfg.hidden_dim, "GRU hidden width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  pipe->add_option("--clone-rounds", pcfg.clone.rounds, "Cloning data collection rounds")
      ->capture_default_str();
  pipe->add_option("--clone-episodes", pcfg.clone.episodes_per_round,
                   "Episodes collected per cloning round")
      ->capture_default_str();
  pipe->add_option("--clone-epochs", pcfg.clone.epochs, "Training epochs per cloning round")
      ->capture_default_str();
  pipe->add_option("--clone-target", pcfg.clone.target_return,
                   "Stop cloning early at this mean return");
  pipe->add_option("--qbn-epochs", pcfg.qbn.epochs, "Bottleneck training epochs")
      ->capture_default_str();
  pipe->add_option("--qbn-batch", pcfg.qbn.batch, "Bottleneck batch size")
      ->capture_default_str();
  pipe->add_option("--qbn-patience", pcfg.qbn.patience,
                   "Epochs without improvement before bottleneck early stop")
      ->capture_default_str();
  pipe->add_option("--qbn-rollouts", pcfg.qbn_rollout_episodes,
                   "Episodes of bottleneck training data")
      ->capture_default_str();
  pipe->add_option("--qbn-cap", pcfg.qbn_sample_cap, "Bottleneck dataset size cap")
      ->capture_default_str();
  pipe->add_option("--tune-rounds", pcfg.tune.rounds, "Fine-tuning rounds")
      ->capture_default_str();
  pipe->add_option("--tune-episodes", pcfg.tune.episodes_per_round,
                   "Episodes collected per fine-tuning round")
      ->capture_default_str();
  pipe->add_option("--tune-epochs", pcfg.tune.epochs, "Training epochs per fine-tuning round")
      ->capture_default_str();
  pipe->add_option("--tune-target", pcfg.tune.target_return,
                   "Stop fine-tuning early at this mean return");
  pipe->add_option("--episodes", pcfg.transition_episodes, "Episodes of transition tuples")
      ->capture_default_str();
  pipe->add_option("--eval-episodes", pcfg.eval_episodes, "Evaluation episodes per stage")
      ->capture_default_str();
  pipe->add_option("--prune-episodes", pcfg.prune_cfg.eval_episodes,
                   "Evaluation episodes per prune decision")
      ->capture_default_str();
  pipe->add_option("--tolerance", pcfg.prune_cfg.tolerance_fraction,
                   "Allowed return drop as a fraction of baseline")
      ->capture_default_str();
  pipe->add_option("--min-abs", pcfg.prune_cfg.tolerance_min_abs,
                   "Absolute floor on the allowed return drop")
      ->capture_default_str();
  pipe->add_option("--max-passes", pcfg.prune_cfg.max_passes, "Maximum pruning sweeps")
      ->capture_default_str();
  pipe->add_option("--warmup-end", pcfg.reduce_opts.warmup_end,
                   "State where the forced opening walk ends");
  pipe->add_option("--termination-start", pcfg.reduce_opts.termination_start,
                   "State where the forced closing walk begins");
  pipe->add_option("--out-dir", pipe_out, "Directory for all artifacts")->capture_default_str();
  pipe->callback([&] { run_pipeline_cmd(pcfg, pipe_out); });

  // trace ------------------------------------------------------------------
  auto* trace_cmd =
      app.add_subcommand("trace", "Roll a discretized policy and record transition tuples");
  trace_cmd->set_config("--config", "", "Flat key=value config file; flags win");
  DrpnSource trace_src;
  trace_src.add_options(*trace_cmd);
  std::string trace_env = "cartpole";
  int trace_episodes = 50;
  std::uint64_t trace_seed = 7;
  std::string trace_out;
  trace_cmd->add_option("--env", trace_env, "Environment spec")->capture_default_str();
  trace_cmd->add_option("--episodes", trace_episodes, "Episodes to record")
      ->capture_default_str();
  trace_cmd->add_option("--seed-base", trace_seed, "First episode seed")
      ->envname("MMFORGE_SEED")
      ->capture_default_str();
  trace_cmd->add_option("--out", trace_out, "Trace file to write")->required();
  trace_cmd->callback([&] {
    trace_src.require();
    const DiscretizedRpn d = trace_src.load();
    const auto env = make_env(trace_env);
    const auto traces = collect_transitions(d, *env, trace_episodes, trace_seed);
    save_traces(trace_out, traces);
    std::cout << "wrote " << traces.size() << " episodes to " << trace_out << "\n";
  });

  // extract ----------------------------------------------------------------
  auto* extract =
      app.add_subcommand("extract", "Build a machine from traces or fresh rollouts");
  extract->set_config("--config", "", "Flat key=value config file; flags win");
  DrpnSource extract_src;
  extract_src.add_options(*extract);
  std::string extract_traces;
  std::string extract_env = "cartpole";
  int extract_episodes = 50;
  std::uint64_t extract_seed = 7;
  std::string extract_out;
  std::string extract_save_traces;
  extract->add_option("--traces", extract_traces, "Existing trace file to build from");
  extract->add_option("--env", extract_env, "Environment spec for fresh rollouts")
      ->capture_default_str();
  extract->add_option("--episodes", extract_episodes, "Episodes to roll when no trace file")
      ->capture_default_str();
  extract->add_option("--seed-base", extract_seed, "First episode seed")
      ->envname("MMFORGE_SEED")
      ->capture_default_str();
  extract->add_option("--out", extract_out, "Machine file to write")->required();
  extract->add_option("--save-traces", extract_save_traces,
                      "Also write the rolled traces to this file");
  extract->callback([&] {
    std::vector<Trace> traces;
    if (!extract_traces.empty()) {
      traces = load_traces(extract_traces);
    } else if (extract_src.given()) {
      const DiscretizedRpn d = extract_src.load();
      const auto env = make_env(extract_env);
      traces = collect_transitions(d, *env, extract_episodes, extract_seed);
      if (!extract_save_traces.empty()) save_traces(extract_save_traces, traces);
    } else {
      throw CLI::ValidationError("extract needs --traces or a policy checkpoint");
    }
    const MooreMachine mm = build_from_traces(traces);
    save_machine(mm, extract_out);
    const MachineStats st = mm.stats();
    std::cout << "machine: " << st.state_count << " states, " << st.obs_count << " obs, "
              << st.decision_points << " decision points -> " << extract_out << "\n";
  });

  // reduce -----------------------------------------------------------------
  auto* reduce = app.add_subcommand("reduce", "Interpretable reduction of a machine");
  reduce->set_config("--config", "", "Flat key=value config file; flags win");
  std::string reduce_machine;
  ReduceOptions reduce_opts;
  std::string reduce_dot;
  std::string reduce_json;
  reduce->add_option("--machine", reduce_machine, "Machine file")->required();
  reduce->add_option("--warmup-end", reduce_opts.warmup_end,
                     "State where the forced opening walk ends");
  reduce->add_option("--termination-start", reduce_opts.termination_start,
                     "State where the forced closing walk begins");
  reduce->add_option("--dot", reduce_dot, "Write the reduced view as DOT");
  reduce->add_option("--json", reduce_json, "Write the reduced view as JSON");
  reduce->callback([&] {
    const MooreMachine mm = load_machine(reduce_machine);
    const ReducedView view = reduce_all(mm, visits_from_counts(mm), reduce_opts);
    if (!reduce_dot.empty()) write_text(reduce_dot, view_to_dot(view));
    if (!reduce_json.empty()) write_text(reduce_json, view_to_json(view));
    if (reduce_dot.empty() && reduce_json.empty()) std::cout << view_to_dot(view);
    std::cout << "view: " << view.nodes.size() << " nodes, " << view.arcs.size() << " arcs, "
              << view.decision_point_count() << " decision points\n";
  });

  // minimize ---------------------------------------------------------------
  auto* minimize_cmd = app.add_subcommand("minimize", "Minimize a machine");
  minimize_cmd->set_config("--config", "", "Flat key=value config file; flags win");
  std::string min_in;
  std::string min_out;
  minimize_cmd->add_option("--machine", min_in, "Machine file")->required();
  minimize_cmd->add_option("--out", min_out, "Minimized machine file")->required();
  minimize_cmd->callback([&] {
    const MooreMachine mm = load_machine(min_in);
    const MooreMachine reduced = minimize(mm);
    save_machine(reduced, min_out);
    std::cout << "minimized " << mm.states.size() << " states to " << reduced.states.size()
              << " -> " << min_out << "\n";
  });

  // prune ------------------------------------------------------------------
  auto* prune_cmd = app.add_subcommand("prune", "Functionally prune decision-point branches");
  prune_cmd->set_config("--config", "", "Flat key=value config file; flags win");
  std::string prune_machine;
  std::string prune_env = "cartpole";
  PruneConfig prune_cfg;
  std::string prune_seeds_file;
  std::string prune_out;
  std::string prune_log_path;
  DrpnSource prune_src;
  prune_src.add_options(*prune_cmd);
  prune_cmd->add_option("--machine", prune_machine, "Machine file")->required();
  prune_cmd->add_option("--env", prune_env, "Environment spec")->capture_default_str();
  prune_cmd->add_option("--episodes", prune_cfg.eval_episodes,
                        "Evaluation episodes per decision")
      ->capture_default_str();
  prune_cmd->add_option("--tolerance", prune_cfg.tolerance_fraction,
                        "Allowed return drop as a fraction of baseline")
      ->capture_default_str();
  prune_cmd->add_option("--min-abs", prune_cfg.tolerance_min_abs,
                        "Absolute floor on the allowed return drop")
      ->capture_default_str();
  prune_cmd->add_option("--max-passes", prune_cfg.max_passes, "Maximum pruning sweeps")
      ->capture_default_str();
  prune_cmd->add_option("--seed-base", prune_cfg.seed_base, "First evaluation seed")
      ->envname("MMFORGE_SEED")
      ->capture_default_str();
  prune_cmd->add_option("--seeds", prune_seeds_file,
                        "File with one evaluation seed per line; wins over --seed-base");
  prune_cmd->add_option("--out", prune_out, "Pruned machine file")->required();
  prune_cmd->add_option("--log", prune_log_path, "Prune log JSON file");
  prune_cmd->callback([&] {
    const MooreMachine mm = load_machine(prune_machine);
    const auto env = make_env(prune_env);
    if (!prune_seeds_file.empty()) prune_cfg.seed_list = read_seed_file(prune_seeds_file);
    const ObsEncoder enc =
        prune_src.given() ? drpn_obs_encoder(prune_src.load()) : ObsEncoder(identity_encode);
    const PruneResult res = prune(mm, *env, enc, prune_cfg);
    save_machine(res.machine, prune_out);
    if (!prune_log_path.empty()) write_text(prune_log_path, prune_log_to_json(res.log));
    std::cout << "decision points " << res.log.original_dp << " -> "
              << res.machine.decision_points().size() << ", return " << res.log.baseline_return
              << " -> " << res.log.final_return << " ("
              << control_class_name(classify(res.machine, res.log)) << ")\n";
  });

  // attend -----------------------------------------------------------------
  auto* attend = app.add_subcommand(
      "attend", "Attribute a code difference to observation features");
  attend->set_config("--config", "", "Flat key=value config file; flags win");
  std::string attend_qbn_o;
  std::string attend_policy;
  std::string attend_obs_a;
  std::string attend_obs_b;
  int attend_steps = 64;
  std::string attend_out;
  std::string attend_csv;
  attend->add_option("--qbn-o", attend_qbn_o, "Observation bottleneck checkpoint")->required();
  attend->add_option("--policy", attend_policy,
                     "Policy checkpoint whose feature stack precedes the encoder");
  attend->add_option("--obs-a", attend_obs_a, "JSON file holding the observation vector")
      ->required();
  attend->add_option("--obs-b", attend_obs_b, "JSON file holding the baseline vector")
      ->required();
  attend->add_option("--steps", attend_steps, "Integration steps")->capture_default_str();
  attend->add_option("--out", attend_out, "Attention map JSON file");
  attend->add_option("--csv", attend_csv, "Ranked feature CSV file");
  attend->callback([&] {
    const QbnParams qbn = load_qbn(attend_qbn_o);
    FeedForward phi;
    if (!attend_policy.empty()) phi = load_rpn(attend_policy).features;
    const ObsResponse response(attend_policy.empty() ? nullptr : &phi, qbn.encoder);
    const auto a = read_vector_json(attend_obs_a);
    const auto b = read_vector_json(attend_obs_b);
    const AttentionMap map = differential_map(response, a, b, attend_steps);
    if (!attend_out.empty()) write_text(attend_out, attention_map_to_json(map));
    if (!attend_csv.empty()) write_text(attend_csv, ranked_features_csv(map));
    if (attend_out.empty() && attend_csv.empty()) std::cout << attention_map_to_json(map);
    std::cout << map.components.size() << " differing components; feature order:";
    for (const std::size_t f : rank_features(map)) std::cout << " " << f;
    std::cout << "\n";
  });

  // eval -------------------------------------------------------------------
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy or machine");
  eval_cmd->set_config("--config", "", "Flat key=value config file; flags win");
  std::string eval_env = "cartpole";
  int eval_episodes = 20;
  std::uint64_t eval_seed = 100;
  std::string eval_machine;
  std::string eval_policy;
  bool eval_expert = false;
  DrpnSource eval_src;
  eval_src.add_options(*eval_cmd);
  eval_cmd->add_option("--env", eval_env, "Environment spec")->capture_default_str();
  eval_cmd->add_option("--episodes", eval_episodes, "Evaluation episodes")
      ->capture_default_str();
  eval_cmd->add_option("--seed-base", eval_seed, "First episode seed")
      ->envname("MMFORGE_SEED")
      ->capture_default_str();
  eval_cmd->add_option("--machine", eval_machine, "Run this machine as the policy");
  eval_cmd->add_option("--rpn", eval_policy, "Run this continuous policy checkpoint");
  eval_cmd->add_flag("--expert", eval_expert, "Run the scripted balancing expert");
  eval_cmd->callback([&] {
    const auto env = make_env(eval_env);
    std::unique_ptr<Policy> policy;
    MooreMachine mm;
    RpnParams rpn;
    DiscretizedRpn drpn;
    if (!eval_machine.empty()) {
      mm = load_machine(eval_machine);
      const ObsEncoder enc =
          eval_src.given() ? drpn_obs_encoder(eval_src.load()) : ObsEncoder(identity_encode);
      policy = std::make_unique<MachinePolicy>(mm, enc);
    } else if (!eval_policy.empty()) {
      rpn = load_rpn(eval_policy);
      policy = std::make_unique<RpnPolicy>(rpn);
    } else if (eval_src.given()) {
      drpn = eval_src.load();
      policy = std::make_unique<DrpnPolicy>(drpn);
    } else if (eval_expert) {
      if (eval_env != "cartpole") throw CLI::ValidationError("--expert needs --env cartpole");
      policy = std::make_unique<FunctionPolicy>(cartpole_expert);
    } else {
      throw CLI::ValidationError("eval needs --machine, --rpn, --drpn, or --expert");
    }
    print_eval(eval_env, evaluate(*policy, *env, eval_episodes, eval_seed));
  });

  // export-dot ---------------------------------------------------------------
  auto* exp = app.add_subcommand("export-dot", "Write a machine as Graphviz DOT");
  exp->set_config("--config", "", "Flat key=value config file; flags win");
  std::string exp_machine;
  std::string exp_out;
  exp->add_option("--machine", exp_machine, "Machine file")->required();
  exp->add_option("--out", exp_out, "DOT file; stdout when omitted");
  exp->callback([&] {
    const std::string dot = machine_to_dot(load_machine(exp_machine));
    if (exp_out.empty()) {
      std::cout << dot;
    } else {
      write_text(exp_out, dot);
    }
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
