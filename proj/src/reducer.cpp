#include "mmforge/reducer.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include <json.hpp>

namespace mmforge {

namespace {

using Arc = std::tuple<int, int, int>;  // state, obs, target

// Outgoing arcs that actually carried traffic, obs ascending.
std::map<int, std::vector<std::pair<int, int>>> visited_out(const MooreMachine& mm,
                                                            const VisitData& visits) {
  std::map<int, std::vector<std::pair<int, int>>> out;
  for (const auto& [key, n] : visits.arc_visits) {
    if (n <= 0) continue;
    auto it = mm.transitions.find(key);
    if (it == mm.transitions.end()) {
      throw ReplayMismatch("visit data names a transition the machine does not have");
    }
    out[key.first].emplace_back(key.second, it->second.target);
  }
  return out;
}

std::map<int, long long> visited_inflow(const VisitData& visits, const MooreMachine& mm) {
  std::map<int, long long> in;
  for (const auto& [key, n] : visits.arc_visits) {
    if (n <= 0) continue;
    in[mm.transitions.at(key).target] += n;
  }
  return in;
}

struct Cycle {
  std::vector<Arc> edges;  // starts and ends at the head
};

// A loop is unrollable when it is entered only at its head and every loop
// edge is traversed exactly once per such entry. Interior states then carry
// their full flow on a single visited arc, so the loop can be found by
// walking unique arcs until the head reappears.
bool find_once_loop(const MooreMachine& mm, const VisitData& visits, Cycle& found) {
  const auto vout = visited_out(mm, visits);
  const auto inflow = visited_inflow(visits, mm);

  for (const auto& head_state : mm.states) {
    const int h = head_state.id;
    auto occ = visits.terminal_occupancy.find(h);
    if (occ != visits.terminal_occupancy.end() && occ->second > 0) continue;
    auto hout = vout.find(h);
    if (hout == vout.end()) continue;

    for (const auto& [obs0, t0] : hout->second) {
      Cycle cand;
      cand.edges.emplace_back(h, obs0, t0);
      int cur = t0;
      bool closed = cur == h;
      std::set<int> on_path{h, t0};
      while (!closed) {
        auto it = vout.find(cur);
        if (it == vout.end() || it->second.size() != 1) break;
        const auto [obs, target] = it->second.front();
        cand.edges.emplace_back(cur, obs, target);
        if (target == h) {
          closed = true;
          break;
        }
        if (!on_path.insert(target).second) break;
        cur = target;
      }
      if (!closed) continue;

      const auto& [cs, co, ct] = cand.edges.back();
      auto hin = inflow.find(h);
      const long long closing = visits.arc_visits.at({cs, co});
      const long long entries = (hin == inflow.end() ? 0 : hin->second) - closing;
      if (entries <= 0) continue;

      bool eligible = true;
      for (const auto& [s, o, t] : cand.edges) {
        if (visits.arc_visits.at({s, o}) != entries) {
          eligible = false;
          break;
        }
      }
      for (std::size_t i = 0; eligible && i + 1 < cand.edges.size(); ++i) {
        const int interior = std::get<2>(cand.edges[i]);
        if (inflow.at(interior) != entries) eligible = false;
      }
      if (!eligible) continue;

      found = std::move(cand);
      return true;
    }
  }
  return false;
}

void apply_unroll(MooreMachine& mm, VisitData& visits, const Cycle& cycle) {
  const int h = std::get<0>(cycle.edges.front());
  const int copy_id = mm.states.back().id + 1;
  const StateRecord& head = mm.state(h);
  mm.states.push_back({copy_id, head.action, head.code});

  // The closing edge now lands on the copy, and the head's non-loop exits
  // move there, so the loop body is walked exactly once on the way through.
  const auto& [cs, co, ct] = cycle.edges.back();
  mm.transitions.at({cs, co}).target = copy_id;

  const int loop_obs = std::get<1>(cycle.edges.front());
  std::vector<std::pair<int, Transition>> exits;
  for (const auto& [obs, tr] : mm.outgoing(h)) {
    if (obs != loop_obs) exits.emplace_back(obs, tr);
  }
  for (const auto& [obs, tr] : exits) {
    mm.transitions.erase({h, obs});
    mm.transitions[{copy_id, obs}] = tr;
    auto vit = visits.arc_visits.find({h, obs});
    if (vit != visits.arc_visits.end()) {
      visits.arc_visits[{copy_id, obs}] = vit->second;
      visits.arc_visits.erase(vit);
    }
  }
}

}  // namespace

MooreMachine unroll_once_loops(const MooreMachine& mm, VisitData& visits) {
  MooreMachine out = mm;
  for (int pass = 0; pass < 1000; ++pass) {
    Cycle cycle;
    if (!find_once_loop(out, visits, cycle)) return out;
    apply_unroll(out, visits, cycle);
  }
  throw ReplayMismatch("loop unrolling did not converge");
}

const ViewNode* ReducedView::find_node(int state_id) const {
  for (const auto& n : nodes) {
    if (n.state_id == state_id) return &n;
  }
  return nullptr;
}

int ReducedView::decision_point_count() const {
  int n = 0;
  for (const auto& node : nodes) n += node.is_decision_point ? 1 : 0;
  return n;
}

ReducedView build_view(const MooreMachine& mm, const VisitData& visits,
                       const std::set<int>& extra_retained) {
  for (int id : extra_retained) {
    if (mm.find_state(id) == nullptr) {
      throw IndexOutOfRange("state " + std::to_string(id) + " is not in the machine");
    }
  }

  std::set<int> retained = extra_retained;
  std::size_t visited_arc_count = 0;

  for (int attempt = 0; attempt < static_cast<int>(mm.states.size()) + 1; ++attempt) {
    const auto vout = visited_out(mm, visits);
    visited_arc_count = 0;
    for (const auto& [s, arcs] : vout) visited_arc_count += arcs.size();

    // States in the visited subgraph: the start plus every endpoint of a
    // visited arc or episode end.
    std::set<int> universe{mm.start_state};
    for (const auto& [s, arcs] : vout) {
      universe.insert(s);
      for (const auto& [obs, t] : arcs) universe.insert(t);
    }
    for (const auto& [s, n] : visits.terminal_occupancy) {
      if (n > 0) universe.insert(s);
    }

    auto occupied = [&](int s) {
      auto it = visits.terminal_occupancy.find(s);
      return it != visits.terminal_occupancy.end() && it->second > 0;
    };
    retained.insert(mm.start_state);
    for (int s : universe) {
      auto it = vout.find(s);
      const std::size_t degree = it == vout.end() ? 0 : it->second.size();
      if (degree == 0 || occupied(s) || degree >= 2) retained.insert(s);
    }

    ReducedView view;
    view.machine = mm;
    bool retry = false;
    for (int r : retained) {
      auto it = vout.find(r);
      if (it == vout.end()) continue;
      for (const auto& [obs, target] : it->second) {
        ViewArc arc;
        arc.from = r;
        arc.obs.push_back(obs);
        arc.covered.emplace_back(r, obs, target);
        int cur = target;
        while (retained.find(cur) == retained.end()) {
          const auto& [next_obs, next_target] = vout.at(cur).front();
          arc.hidden.push_back(cur);
          arc.obs.push_back(next_obs);
          arc.covered.emplace_back(cur, next_obs, next_target);
          cur = next_target;
          if (arc.covered.size() > visited_arc_count) break;
        }
        if (retained.find(cur) == retained.end()) {
          // A hidden cycle never reaches a retained state; pin its entry
          // down and rebuild.
          retained.insert(arc.hidden.front());
          retry = true;
          break;
        }
        arc.to = cur;
        arc.kind = arc.covered.size() == 1 ? ArcKind::Plain : ArcKind::Macro;
        view.arcs.push_back(std::move(arc));
      }
      if (retry) break;
    }
    if (retry) continue;

    for (int s : retained) {
      if (universe.find(s) == universe.end()) continue;
      ViewNode node;
      node.state_id = s;
      node.action = mm.state(s).action;
      node.is_start = s == mm.start_state;
      auto it = vout.find(s);
      node.is_terminal = it == vout.end() || occupied(s);
      if (it != vout.end()) {
        std::set<int> targets;
        for (const auto& [obs, t] : it->second) targets.insert(t);
        node.is_decision_point = targets.size() >= 2;
      }
      view.nodes.push_back(node);
    }
    std::sort(view.arcs.begin(), view.arcs.end(), [](const ViewArc& a, const ViewArc& b) {
      return std::tie(a.from, a.obs.front(), a.to) < std::tie(b.from, b.obs.front(), b.to);
    });
    return view;
  }
  throw ReplayMismatch("view construction did not converge");
}

void merge_parallel(ReducedView& view) {
  std::map<std::tuple<int, int, Phase>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < view.arcs.size(); ++i) {
    const ViewArc& a = view.arcs[i];
    if (a.kind == ArcKind::Plain) groups[{a.from, a.to, a.phase}].push_back(i);
  }
  std::set<std::size_t> drop;
  std::vector<ViewArc> merged;
  for (const auto& [key, idxs] : groups) {
    if (idxs.size() < 2) continue;
    ViewArc abs;
    abs.kind = ArcKind::Abstract;
    abs.from = std::get<0>(key);
    abs.to = std::get<1>(key);
    abs.phase = std::get<2>(key);
    for (std::size_t i : idxs) {
      abs.obs.push_back(view.arcs[i].obs.front());
      abs.covered.push_back(view.arcs[i].covered.front());
      drop.insert(i);
    }
    std::sort(abs.obs.begin(), abs.obs.end());
    std::sort(abs.covered.begin(), abs.covered.end());
    merged.push_back(std::move(abs));
  }
  if (merged.empty()) return;
  std::vector<ViewArc> arcs;
  for (std::size_t i = 0; i < view.arcs.size(); ++i) {
    if (drop.find(i) == drop.end()) arcs.push_back(std::move(view.arcs[i]));
  }
  for (auto& a : merged) arcs.push_back(std::move(a));
  std::sort(arcs.begin(), arcs.end(), [](const ViewArc& a, const ViewArc& b) {
    return std::tie(a.from, a.obs.front(), a.to) < std::tie(b.from, b.obs.front(), b.to);
  });
  view.arcs = std::move(arcs);
}

void mark_boundaries(ReducedView& view, int warmup_stop, int termination_stop) {
  auto arcs_from = [&](int s) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < view.arcs.size(); ++i) {
      if (view.arcs[i].from == s) out.push_back(i);
    }
    return out;
  };
  auto arcs_into = [&](int s) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < view.arcs.size(); ++i) {
      if (view.arcs[i].to == s) in.push_back(i);
    }
    return in;
  };

  int cur = view.machine.start_state;
  std::set<int> walked{cur};
  while (cur != warmup_stop) {
    const auto out = arcs_from(cur);
    if (out.size() != 1) break;
    ViewArc& arc = view.arcs[out.front()];
    if (arc.to == cur || walked.count(arc.to) != 0) break;
    arc.phase = Phase::Warmup;
    cur = arc.to;
    walked.insert(cur);
  }
  view.warmup_end = cur;

  std::vector<int> terminals;
  for (const auto& n : view.nodes) {
    if (n.is_terminal) terminals.push_back(n.state_id);
  }
  if (terminals.size() != 1) {
    view.termination_start = -1;
    return;
  }
  cur = terminals.front();
  std::set<int> back_walked{cur};
  while (cur != termination_stop && cur != view.warmup_end) {
    const auto in = arcs_into(cur);
    if (in.size() != 1) break;
    ViewArc& arc = view.arcs[in.front()];
    if (arc.phase != Phase::Core || arcs_from(arc.from).size() != 1) break;
    if (arc.from == cur || back_walked.count(arc.from) != 0) break;
    arc.phase = Phase::Termination;
    cur = arc.from;
    back_walked.insert(cur);
  }
  view.termination_start = cur;
}

void check_expansion(const ReducedView& view, const VisitData& visits) {
  std::set<Arc> covered;
  for (const ViewArc& arc : view.arcs) {
    if (arc.covered.empty()) throw ReplayMismatch("view arc covers no transitions");
    if (arc.kind == ArcKind::Abstract) {
      for (const auto& [s, o, t] : arc.covered) {
        if (s != arc.from || t != arc.to) {
          throw ReplayMismatch("abstract arc covers a transition outside its endpoints");
        }
        auto it = view.machine.transitions.find({s, o});
        if (it == view.machine.transitions.end() || it->second.target != t) {
          throw ReplayMismatch("abstract arc does not replay through the machine");
        }
        covered.insert({s, o, t});
      }
      continue;
    }
    int cur = arc.from;
    for (const auto& [s, o, t] : arc.covered) {
      if (s != cur) throw ReplayMismatch("arc covers a disconnected transition");
      auto it = view.machine.transitions.find({s, o});
      if (it == view.machine.transitions.end() || it->second.target != t) {
        throw ReplayMismatch("arc does not replay through the machine");
      }
      covered.insert({s, o, t});
      cur = t;
    }
    if (cur != arc.to) throw ReplayMismatch("arc replay ends away from its target");
  }

  std::set<Arc> visited;
  for (const auto& [key, n] : visits.arc_visits) {
    if (n <= 0) continue;
    visited.insert({key.first, key.second, view.machine.transitions.at(key).target});
  }
  if (covered != visited) {
    throw ReplayMismatch("view coverage does not match the visited transitions");
  }
}

ReducedView reduce_all(const MooreMachine& mm, const VisitData& visits,
                       const ReduceOptions& opts) {
  VisitData v = visits;
  MooreMachine unrolled = unroll_once_loops(mm, v);
  std::set<int> extra;
  if (opts.warmup_end >= 0) extra.insert(opts.warmup_end);
  if (opts.termination_start >= 0) extra.insert(opts.termination_start);
  ReducedView view = build_view(unrolled, v, extra);
  merge_parallel(view);
  mark_boundaries(view, opts.warmup_end, opts.termination_start);
  check_expansion(view, v);
  return view;
}

namespace {

std::string phase_prefix(Phase p) {
  if (p == Phase::Warmup) return "||w ";
  if (p == Phase::Termination) return "||t ";
  return "";
}

}  // namespace

std::string machine_to_dot(const MooreMachine& mm) {
  std::ostringstream out;
  out << "digraph machine {\n  rankdir=LR;\n  node [shape=circle];\n";
  for (const auto& s : mm.states) {
    out << "  s" << s.id << " [label=\"" << s.id << ":" << s.action << "\"";
    if (mm.outgoing(s.id).empty()) out << ", shape=doublecircle";
    if (s.id == mm.start_state) out << ", penwidth=2";
    out << "];\n";
  }
  for (const auto& [key, tr] : mm.transitions) {
    out << "  s" << key.first << " -> s" << tr.target << " [label=\"o" << key.second << " x"
        << tr.count << "\"];\n";
  }
  out << "}\n";
  return out.str();
}

std::string view_to_dot(const ReducedView& view) {
  std::ostringstream out;
  out << "digraph view {\n  rankdir=LR;\n  node [shape=circle];\n";
  for (const auto& n : view.nodes) {
    out << "  s" << n.state_id << " [label=\"" << n.state_id << ":" << n.action << "\"";
    if (n.is_terminal) out << ", shape=doublecircle";
    if (n.is_start) out << ", penwidth=2";
    if (n.is_decision_point) out << ", style=filled, fillcolor=lightgray";
    out << "];\n";
  }
  for (const ViewArc& a : view.arcs) {
    out << "  s" << a.from << " -> s" << a.to << " [label=\"" << phase_prefix(a.phase);
    if (a.kind == ArcKind::Macro) {
      out << a.length() << " steps\", style=dotted";
    } else if (a.kind == ArcKind::Abstract) {
      out << a.obs.size() << " obs\"";
    } else {
      out << "o" << a.obs.front() << "\"";
    }
    out << "];\n";
  }
  out << "}\n";
  return out.str();
}

namespace {

const char* arc_kind_name(ArcKind k) {
  switch (k) {
    case ArcKind::Plain: return "plain";
    case ArcKind::Macro: return "macro";
    case ArcKind::Abstract: return "abstract";
  }
  return "plain";
}

const char* phase_name(Phase p) {
  switch (p) {
    case Phase::Core: return "core";
    case Phase::Warmup: return "warmup";
    case Phase::Termination: return "termination";
  }
  return "core";
}

}  // namespace

std::string view_to_json(const ReducedView& view) {
  nlohmann::json j;
  j["warmup_end"] = view.warmup_end;
  j["termination_start"] = view.termination_start;
  j["nodes"] = nlohmann::json::array();
  for (const ViewNode& n : view.nodes) {
    j["nodes"].push_back({{"state", n.state_id},
                          {"action", n.action},
                          {"start", n.is_start},
                          {"terminal", n.is_terminal},
                          {"decision_point", n.is_decision_point}});
  }
  j["arcs"] = nlohmann::json::array();
  for (const ViewArc& a : view.arcs) {
    nlohmann::json arc = {{"kind", arc_kind_name(a.kind)}, {"from", a.from},
                          {"to", a.to},                    {"obs", a.obs},
                          {"hidden", a.hidden},            {"phase", phase_name(a.phase)},
                          {"length", a.length()}};
    arc["covered"] = nlohmann::json::array();
    for (const auto& [s, o, t] : a.covered) {
      arc["covered"].push_back({{"state", s}, {"obs", o}, {"target", t}});
    }
    j["arcs"].push_back(std::move(arc));
  }
  return j.dump(2) + "\n";
}

}  // namespace mmforge
