#include "mmforge/pruner.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <json.hpp>

namespace mmforge {

double PruneConfig::tolerance(double baseline) const {
  return std::max(tolerance_fraction * std::abs(baseline), tolerance_min_abs);
}

std::vector<std::uint64_t> PruneConfig::seeds() const {
  if (!seed_list.empty()) return seed_list;
  std::vector<std::uint64_t> out;
  out.reserve(static_cast<std::size_t>(eval_episodes));
  for (int i = 0; i < eval_episodes; ++i) out.push_back(seed_base + static_cast<std::uint64_t>(i));
  return out;
}

std::vector<std::pair<int, int>> branch_order(const MooreMachine& mm) {
  std::vector<std::tuple<long long, int, int>> ranked;
  for (const int dp : mm.decision_points()) {
    for (const auto& [obs, tr] : mm.outgoing(dp)) {
      ranked.emplace_back(tr.count, dp, obs);
    }
  }
  std::sort(ranked.begin(), ranked.end());
  std::vector<std::pair<int, int>> order;
  order.reserve(ranked.size());
  for (const auto& [count, dp, obs] : ranked) order.emplace_back(dp, obs);
  return order;
}

namespace {

double mean_return(const MooreMachine& mm, Environment& env, const ObsEncoder& enc,
                   const PruneConfig& cfg, PruneLog& log) {
  try {
    MachinePolicy policy(mm, enc, cfg.fallback);
    return evaluate_seeds(policy, env, cfg.seeds()).mean_return;
  } catch (const std::exception& e) {
    throw EvaluationFailure(std::string("evaluation failed: ") + e.what(), log);
  }
}

}  // namespace

PruneResult prune(const MooreMachine& mm, Environment& env, ObsEncoder enc,
                  const PruneConfig& cfg) {
  PruneResult result;
  result.machine = mm;
  MooreMachine& m = result.machine;
  PruneLog& log = result.log;

  log.original_dp = static_cast<int>(mm.decision_points().size());
  log.baseline_return = mean_return(m, env, enc, cfg, log);
  log.tolerance = cfg.tolerance(log.baseline_return);
  log.final_return = log.baseline_return;

  for (int pass = 0; pass < cfg.max_passes; ++pass) {
    const auto candidates = branch_order(m);
    if (candidates.empty()) break;
    bool any_accepted = false;
    int rank = 0;
    for (const auto& [dp, obs] : candidates) {
      ++rank;
      // Earlier removals in this pass can demote a state below two targets
      // or make this branch the most frequent survivor; skip in both cases.
      if (!m.is_decision_point(dp)) continue;
      if (m.most_frequent_branch(dp) == obs) continue;
      auto it = m.transitions.find({dp, obs});
      if (it == m.transitions.end()) continue;

      const Transition removed = it->second;
      m.transitions.erase(it);
      const double measured = mean_return(m, env, enc, cfg, log);

      PruneAttempt attempt;
      attempt.pass = pass;
      attempt.rank = rank;
      attempt.decision_point = dp;
      attempt.branch_obs = obs;
      attempt.branch_target = removed.target;
      attempt.count = removed.count;
      attempt.measured_return = measured;
      attempt.accepted = measured >= log.baseline_return - log.tolerance;
      log.attempts.push_back(attempt);

      if (attempt.accepted) {
        any_accepted = true;
        log.final_return = measured;
      } else {
        m.transitions[{dp, obs}] = removed;
      }
    }
    if (!any_accepted) break;
  }

  m = drop_unreachable(m);
  log.final_return = mean_return(m, env, enc, cfg, log);
  return result;
}

MooreMachine drop_unreachable(const MooreMachine& mm) {
  std::set<int> reachable{mm.start_state};
  std::vector<int> frontier{mm.start_state};
  while (!frontier.empty()) {
    const int s = frontier.back();
    frontier.pop_back();
    for (const auto& [obs, tr] : mm.outgoing(s)) {
      if (reachable.insert(tr.target).second) frontier.push_back(tr.target);
    }
  }
  MooreMachine out;
  out.start_state = mm.start_state;
  out.obs_alphabet = mm.obs_alphabet;
  for (const auto& s : mm.states) {
    if (reachable.count(s.id) != 0) out.states.push_back(s);
  }
  for (const auto& [key, tr] : mm.transitions) {
    if (reachable.count(key.first) != 0) out.transitions[key] = tr;
  }
  return out;
}

ControlClass classify(const MooreMachine& pruned, const PruneLog& log) {
  const bool open_loop = pruned.decision_points().empty();
  if (!open_loop) return ControlClass::Reactive;
  return log.original_dp > 0 ? ControlClass::PrunedOpenLoop : ControlClass::OpenLoop;
}

const char* control_class_name(ControlClass c) {
  switch (c) {
    case ControlClass::OpenLoop: return "open-loop";
    case ControlClass::PrunedOpenLoop: return "pruned-open-loop";
    case ControlClass::Reactive: return "reactive";
  }
  return "reactive";
}

std::string prune_log_to_json(const PruneLog& log) {
  nlohmann::json j;
  j["baseline_return"] = log.baseline_return;
  j["tolerance"] = log.tolerance;
  j["original_dp"] = log.original_dp;
  j["final_return"] = log.final_return;
  j["attempts"] = nlohmann::json::array();
  for (const PruneAttempt& a : log.attempts) {
    j["attempts"].push_back({{"pass", a.pass},
                             {"rank", a.rank},
                             {"decision_point", a.decision_point},
                             {"branch_obs", a.branch_obs},
                             {"branch_target", a.branch_target},
                             {"count", a.count},
                             {"measured_return", a.measured_return},
                             {"accepted", a.accepted}});
  }
  return j.dump(2) + "\n";
}

}  // namespace mmforge
