#pragma once

// Moore machines extracted from quantized recurrent policies. States carry
// the ternary hidden code and the action emitted on arrival; transitions are
// keyed by (state, obs id) and carry observation counts from extraction.

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mmforge/code.hpp"
#include "mmforge/envs.hpp"
#include "mmforge/trace.hpp"

namespace mmforge {

struct ConflictingTransition : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct EmptyInput : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DeadEnd : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct UnknownObservation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AlphabetMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// What to do when the current state has no arc for the bound observation.
enum class Fallback { Fail, MostFrequentBranch };

struct StateRecord {
  int id = -1;
  int action = -1;
  TernaryCode code;
};

struct Transition {
  int target = -1;
  long long count = 0;
};

struct MachineStats {
  int state_count = 0;
  int obs_count = 0;
  int decision_points = 0;
  long long transition_count = 0;
};

struct StepOutcome {
  int next_state = -1;
  int action = -1;
  int used_obs = -1;
  bool fallback_used = false;
};

struct MooreMachine {
  std::vector<StateRecord> states;  // ascending by id
  int start_state = -1;
  std::map<int, TernaryCode> obs_alphabet;
  std::map<std::pair<int, int>, Transition> transitions;

  const StateRecord* find_state(int id) const;
  const StateRecord& state(int id) const;  // std::out_of_range on unknown id
  std::vector<std::pair<int, Transition>> outgoing(int state_id) const;
  // Highest count wins, ties by lowest obs id; -1 when the state is terminal.
  int most_frequent_branch(int state_id) const;
  // A state is a decision point when its outgoing arcs reach >= 2 targets.
  bool is_decision_point(int state_id) const;
  std::vector<int> decision_points() const;
  MachineStats stats() const;

  // Follows (state, obs). Missing arcs raise DeadEnd under Fallback::Fail;
  // under MostFrequentBranch they reroute along the state's most frequent
  // arc (used_obs reports the arc taken), and a terminal state absorbs.
  StepOutcome step(int state_id, int obs_id, Fallback fb = Fallback::Fail) const;
};

// Builds the machine from quantized transition tuples. State and obs ids are
// assigned in order of first appearance; actions label the post-transition
// state, so a state reached under two different actions is a conflict, as is
// one (state, obs) pair leading to two targets.
MooreMachine build_from_traces(const std::vector<Trace>& traces);

// Totalizes the transition map: missing (state, obs) arcs are materialized
// along the state's most frequent branch with count 1, and terminal states
// become absorbing self-loops. Runtime fallback behavior is unchanged.
MooreMachine completed(const MooreMachine& mm);

// Completes, drops unreachable states, then merges states that emit the same
// action and agree, observation by observation, on successor blocks. Each
// merged state keeps the lowest member id and code; arc counts are the sum
// of the observed member counts, or 1 where no member arc was observed.
MooreMachine minimize(const MooreMachine& mm);

// Exhaustively compares emitted action sequences over every observation
// string up to the given depth, stepping both machines with the most
// frequent branch fallback. Obs id sets must agree (AlphabetMismatch).
bool equivalent(const MooreMachine& a, const MooreMachine& b, int depth);

std::string serialize(const MooreMachine& mm);
MooreMachine deserialize(const std::string& text);
void save_machine(const MooreMachine& mm, const std::string& path);
MooreMachine load_machine(const std::string& path);

// Maps a raw environment observation to a ternary code.
using ObsEncoder = std::function<TernaryCode(const std::vector<double>&)>;

// Runs a machine as a policy: observations are encoded and bound to the
// nearest alphabet code by Hamming distance (ties to the lowest obs id).
class MachinePolicy : public Policy {
 public:
  MachinePolicy(const MooreMachine& mm, ObsEncoder encoder,
                Fallback fb = Fallback::MostFrequentBranch);
  void begin_episode() override;
  int act(const std::vector<double>& obs) override;
  int current_state() const { return state_; }

 private:
  const MooreMachine* mm_;
  ObsEncoder enc_;
  Fallback fb_;
  int state_;
};

int bind_observation(const MooreMachine& mm, const TernaryCode& code);

struct VisitData {
  std::map<std::pair<int, int>, long long> arc_visits;
  std::map<int, long long> terminal_occupancy;  // state -> episodes ending there
};

struct RunReport {
  EvalReport eval;
  VisitData visits;
};

RunReport run_machine(const MooreMachine& mm, Environment& env, ObsEncoder enc,
                      int episodes, std::uint64_t seed_base,
                      Fallback fb = Fallback::MostFrequentBranch);

// Approximates visit data from the counts stored on the machine itself.
VisitData visits_from_counts(const MooreMachine& mm);

// Replays the machine in an environment and emits ternary traces built from
// the machine's own state and obs codes; extraction from these traces
// reproduces the reachable, visited part of the machine.
std::vector<Trace> machine_traces(const MooreMachine& mm, Environment& env, ObsEncoder enc,
                                  int episodes, std::uint64_t seed_base,
                                  Fallback fb = Fallback::MostFrequentBranch);

}  // namespace mmforge
