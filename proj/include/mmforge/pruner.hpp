#pragma once

// Functional pruning of decision points. Branches are tried least-frequent
// first: a branch is removed when the machine, reevaluated on the same
// seeds, keeps its mean return within tolerance; otherwise the branch is
// restored exactly as it was. A removed branch is never rewritten anywhere,
// it simply stops existing, and the runtime most-frequent-branch fallback
// carries its traffic. The most frequent surviving branch of a decision
// point is never a candidate, so the fallback is always well defined.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/automaton.hpp"

namespace mmforge {

struct PruneConfig {
  int eval_episodes = 20;
  double tolerance_fraction = 0.01;  // of |baseline return|
  double tolerance_min_abs = 0.5;    // floor on the tolerance
  int max_passes = 3;                // candidate sweeps over the machine
  std::uint64_t seed_base = 9000;    // evaluation seeds, fixed across candidates
  std::vector<std::uint64_t> seed_list;  // explicit seeds; wins over seed_base
  Fallback fallback = Fallback::MostFrequentBranch;

  double tolerance(double baseline) const;
  std::vector<std::uint64_t> seeds() const;
};

struct PruneAttempt {
  int pass = 0;
  int rank = 0;  // position in that pass's least-frequent-first order
  int decision_point = -1;
  int branch_obs = -1;
  int branch_target = -1;
  long long count = 0;
  double measured_return = 0.0;
  bool accepted = false;
};

struct PruneLog {
  double baseline_return = 0.0;
  double tolerance = 0.0;
  int original_dp = 0;
  std::vector<PruneAttempt> attempts;
  double final_return = 0.0;
};

struct EvaluationFailure : std::runtime_error {
  explicit EvaluationFailure(const std::string& what, PruneLog log_so_far)
      : std::runtime_error(what), partial(std::move(log_so_far)) {}
  PruneLog partial;
};

struct PruneResult {
  MooreMachine machine;
  PruneLog log;
};

// Branches of every decision point in pruning order: ascending stored count,
// ties by state then obs id. The pruning loop itself skips whichever branch
// is each decision point's most frequent survivor at attempt time.
std::vector<std::pair<int, int>> branch_order(const MooreMachine& mm);

PruneResult prune(const MooreMachine& mm, Environment& env, ObsEncoder enc,
                  const PruneConfig& cfg);

// Drops states unreachable from the start after pruning; surviving states
// keep their original ids.
MooreMachine drop_unreachable(const MooreMachine& mm);

enum class ControlClass { OpenLoop, PrunedOpenLoop, Reactive };

ControlClass classify(const MooreMachine& pruned, const PruneLog& log);
const char* control_class_name(ControlClass c);

std::string prune_log_to_json(const PruneLog& log);

}  // namespace mmforge
