#pragma once

// Interpretable reductions of an extracted machine. The passes keep every
// state where behavior branches or ends and fold everything else away:
// run-once loops are unrolled into straight lines, linear runs collapse into
// macro arcs that remember their hidden states, parallel arcs with one
// target merge into a single abstract arc, and the forced walks into and out
// of an episode are marked as warmup and termination. Every view arc records
// exactly which machine transitions it covers, so a view can always be
// expanded back and checked against the machine it came from.

#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "mmforge/automaton.hpp"

namespace mmforge {

struct ReplayMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IndexOutOfRange : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ArcKind { Plain, Macro, Abstract };
enum class Phase { Core, Warmup, Termination };

struct ViewArc {
  ArcKind kind = ArcKind::Plain;
  int from = -1;
  int to = -1;
  std::vector<int> obs;     // Plain: one id; Macro: the hop sequence; Abstract: merged ids
  std::vector<int> hidden;  // Macro only: interior machine states in order
  Phase phase = Phase::Core;
  // The machine transitions this arc stands for, in replay order.
  std::vector<std::tuple<int, int, int>> covered;

  int length() const { return static_cast<int>(kind == ArcKind::Macro ? covered.size() : 1); }
};

struct ViewNode {
  int state_id = -1;
  int action = -1;
  bool is_start = false;
  bool is_terminal = false;
  bool is_decision_point = false;
};

struct ReducedView {
  MooreMachine machine;  // the (possibly unrolled) machine the view describes
  std::vector<ViewNode> nodes;
  std::vector<ViewArc> arcs;
  int warmup_end = -1;         // node where the forced opening walk ends
  int termination_start = -1;  // node where the forced closing walk begins

  const ViewNode* find_node(int state_id) const;
  int decision_point_count() const;
};

struct ReduceOptions {
  // Optional manual boundary pins. Naming a state that would otherwise be
  // hidden splits its macro there so the boundary can land on it.
  int warmup_end = -1;
  int termination_start = -1;
};

// Duplicates the head of every loop that runs exactly once per entry (each
// loop edge is traversed as often as the head is entered from outside, and
// the loop is only entered at its head), turning the loop into a straight
// line. Rewrites machine and visit data together; repeats until no loop
// qualifies.
MooreMachine unroll_once_loops(const MooreMachine& mm, VisitData& visits);

// Collapses the visited subgraph onto the retained states: the start, every
// terminal (occupied at episode end or without visited exits), every state
// with two or more distinct visited successors, and extra_retained. Linear
// runs between retained states become macro arcs.
ReducedView build_view(const MooreMachine& mm, const VisitData& visits,
                       const std::set<int>& extra_retained = {});

// Merges plain arcs that share source and target into one abstract arc.
void merge_parallel(ReducedView& view);

// Walks forward from the start and backward from the terminals while the
// view stays linear, marking those arcs Warmup and Termination. stop_at
// pins from ReduceOptions end the walks early.
void mark_boundaries(ReducedView& view, int warmup_stop = -1, int termination_stop = -1);

// Soundness of the reduction: every arc must replay through the machine
// exactly as covered, and the union of covered transitions must equal the
// visited transitions. Throws ReplayMismatch otherwise.
void check_expansion(const ReducedView& view, const VisitData& visits);

// unroll, collapse, merge, mark, check.
ReducedView reduce_all(const MooreMachine& mm, const VisitData& visits,
                       const ReduceOptions& opts = {});

std::string machine_to_dot(const MooreMachine& mm);
std::string view_to_dot(const ReducedView& view);
std::string view_to_json(const ReducedView& view);

}  // namespace mmforge
