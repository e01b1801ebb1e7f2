#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmforge/reducer.hpp"
#include "mmforge/rng.hpp"

using namespace mmforge;

namespace {

TernaryCode width_code(int value, std::size_t width = 3) {
  TernaryCode code(width);
  int v = value;
  for (std::size_t i = 0; i < width; ++i) {
    code[i] = static_cast<std::int8_t>(v % 3 - 1);
    v /= 3;
  }
  return code;
}

MooreMachine make_machine(int start, const std::vector<std::pair<int, int>>& states,
                          const std::vector<std::tuple<int, int, int, long long>>& arcs,
                          int obs_count) {
  MooreMachine mm;
  for (const auto& [id, action] : states) mm.states.push_back({id, action, width_code(id)});
  mm.start_state = start;
  for (int o = 0; o < obs_count; ++o) mm.obs_alphabet[o] = width_code(o);
  for (const auto& [from, obs, to, count] : arcs) mm.transitions[{from, obs}] = {to, count};
  return mm;
}

// Warmup line 0-1, a loop 2-3-4-2 walked once per entry, then a choice of two
// parallel exits into a decision between two terminals.
MooreMachine loop_fixture(VisitData& visits) {
  const MooreMachine mm = make_machine(
      0, {{0, 0}, {1, 1}, {2, 0}, {3, 1}, {4, 0}, {5, 1}, {6, 0}, {7, 1}},
      {{0, 0, 1, 2},
       {1, 1, 2, 2},
       {2, 2, 3, 2},
       {3, 3, 4, 2},
       {4, 4, 2, 2},
       {2, 5, 5, 1},
       {2, 6, 5, 1},
       {5, 7, 6, 1},
       {5, 8, 7, 1}},
      9);
  visits = VisitData{};
  for (const auto& [key, tr] : mm.transitions) visits.arc_visits[key] = tr.count;
  visits.terminal_occupancy = {{6, 1}, {7, 1}};
  return mm;
}

const ViewArc* find_arc(const ReducedView& view, int from, int to, ArcKind kind) {
  for (const auto& a : view.arcs) {
    if (a.from == from && a.to == to && a.kind == kind) return &a;
  }
  return nullptr;
}

// Drives the machine along random existing arcs, recording both the visit
// data and the (obs, action) sequences so a view can be replayed against them.
struct Walk {
  VisitData visits;
  std::vector<std::vector<std::pair<int, int>>> episodes;
};

Walk random_walk(const MooreMachine& mm, Rng& rng, int episodes, int cap = 12) {
  Walk w;
  for (int e = 0; e < episodes; ++e) {
    int cur = mm.start_state;
    std::vector<std::pair<int, int>> seq;
    for (int step = 0; step < cap; ++step) {
      const auto out = mm.outgoing(cur);
      if (out.empty()) break;
      const auto& [obs, tr] = out[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(out.size()) - 1))];
      seq.emplace_back(obs, mm.state(tr.target).action);
      w.visits.arc_visits[{cur, obs}] += 1;
      cur = tr.target;
    }
    w.visits.terminal_occupancy[cur] += 1;
    w.episodes.push_back(std::move(seq));
  }
  return w;
}

MooreMachine random_machine(Rng& rng) {
  const int n = rng.uniform_int(2, 10);
  const int k = rng.uniform_int(1, 4);
  std::vector<std::pair<int, int>> states;
  for (int i = 0; i < n; ++i) states.emplace_back(i, rng.uniform_int(0, 2));
  std::vector<std::tuple<int, int, int, long long>> arcs;
  for (int s = 0; s < n; ++s) {
    if (rng.uniform() < 0.2) continue;
    for (int o = 0; o < k; ++o) {
      if (rng.uniform() < 0.7) {
        arcs.emplace_back(s, o, rng.uniform_int(0, n - 1), 1);
      }
    }
  }
  return make_machine(0, states, arcs, k);
}

}  // namespace

TEST_CASE("run-once loops unroll into straight lines") {
  VisitData visits;
  const MooreMachine mm = loop_fixture(visits);
  const MooreMachine flat = unroll_once_loops(mm, visits);

  REQUIRE(flat.states.size() == 9);
  CHECK(flat.state(8).action == flat.state(2).action);
  CHECK(flat.state(8).code == flat.state(2).code);
  CHECK(flat.transitions.at({4, 4}).target == 8);
  CHECK(flat.transitions.count({2, 5}) == 0);  // exits moved to the copy
  CHECK(flat.transitions.at({8, 5}).target == 5);
  CHECK(flat.transitions.at({8, 6}).target == 5);
  CHECK(visits.arc_visits.at({8, 5}) == 1);
  CHECK(visits.arc_visits.count({2, 5}) == 0);
  CHECK(visits.arc_visits.at({4, 4}) == 2);

  // A second pass finds nothing left to unroll.
  VisitData again = visits;
  CHECK(serialize(unroll_once_loops(flat, again)) == serialize(flat));
}

TEST_CASE("loops that repeat per entry are left alone") {
  const MooreMachine mm = make_machine(
      0, {{0, 0}, {1, 1}, {2, 0}}, {{0, 0, 1, 2}, {1, 1, 1, 4}, {1, 2, 2, 2}}, 3);
  VisitData visits;
  for (const auto& [key, tr] : mm.transitions) visits.arc_visits[key] = tr.count;
  visits.terminal_occupancy = {{2, 2}};

  VisitData rewritten = visits;
  CHECK(serialize(unroll_once_loops(mm, rewritten)) == serialize(mm));

  const ReducedView view = reduce_all(mm, visits);
  const ViewArc* self = find_arc(view, 1, 1, ArcKind::Plain);
  REQUIRE(self != nullptr);
  CHECK(self->obs == std::vector<int>{1});
  CHECK(view.find_node(1)->is_decision_point);
  CHECK(view.warmup_end == 1);
  CHECK(view.termination_start == 2);
}

TEST_CASE("reduction keeps only the branching structure") {
  VisitData visits;
  const MooreMachine mm = loop_fixture(visits);
  const ReducedView view = reduce_all(mm, visits);

  CHECK(view.machine.states.size() == 9);
  REQUIRE(view.nodes.size() == 5);
  std::set<int> kept;
  for (const auto& n : view.nodes) kept.insert(n.state_id);
  CHECK(kept == std::set<int>{0, 5, 6, 7, 8});

  REQUIRE(view.arcs.size() == 4);
  const ViewArc* macro = find_arc(view, 0, 8, ArcKind::Macro);
  REQUIRE(macro != nullptr);
  CHECK(macro->hidden == std::vector<int>{1, 2, 3, 4});
  CHECK(macro->obs == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(macro->length() == 5);
  CHECK(macro->phase == Phase::Warmup);

  const ViewArc* joined = find_arc(view, 8, 5, ArcKind::Abstract);
  REQUIRE(joined != nullptr);
  CHECK(joined->obs == std::vector<int>{5, 6});
  CHECK(joined->phase == Phase::Warmup);

  const ViewArc* left = find_arc(view, 5, 6, ArcKind::Plain);
  const ViewArc* right = find_arc(view, 5, 7, ArcKind::Plain);
  REQUIRE(left != nullptr);
  REQUIRE(right != nullptr);
  CHECK(left->phase == Phase::Core);
  CHECK(right->phase == Phase::Core);

  CHECK(view.warmup_end == 5);
  CHECK(view.termination_start == -1);  // two terminals, no unique closing walk
  CHECK(view.decision_point_count() == 1);
  CHECK(view.find_node(5)->is_decision_point);
  CHECK_FALSE(view.find_node(8)->is_decision_point);  // both exits share a target
  CHECK(view.find_node(0)->is_start);
  CHECK(view.find_node(6)->is_terminal);
  CHECK(view.find_node(7)->is_terminal);
}

TEST_CASE("boundary pins split macros and stop the walks") {
  VisitData visits;
  const MooreMachine mm = loop_fixture(visits);
  ReduceOptions opts;
  opts.warmup_end = 3;
  const ReducedView view = reduce_all(mm, visits, opts);

  CHECK(view.warmup_end == 3);
  const ViewArc* head = find_arc(view, 0, 3, ArcKind::Macro);
  REQUIRE(head != nullptr);
  CHECK(head->hidden == std::vector<int>{1, 2});
  CHECK(head->phase == Phase::Warmup);
  const ViewArc* tail = find_arc(view, 3, 8, ArcKind::Macro);
  REQUIRE(tail != nullptr);
  CHECK(tail->hidden == std::vector<int>{4});
  CHECK(tail->phase == Phase::Core);
}

TEST_CASE("termination is marked backward from a single terminal") {
  const MooreMachine mm = make_machine(
      0, {{0, 0}, {1, 1}, {2, 0}, {3, 1}, {4, 0}, {5, 1}},
      {{0, 0, 1, 3},
       {1, 1, 2, 2},
       {1, 2, 3, 1},
       {2, 3, 4, 2},
       {3, 4, 4, 1},
       {4, 5, 5, 2},
       {4, 6, 5, 1}},
      7);
  VisitData visits;
  for (const auto& [key, tr] : mm.transitions) visits.arc_visits[key] = tr.count;
  visits.terminal_occupancy = {{5, 3}};

  const ReducedView view = reduce_all(mm, visits);
  CHECK(view.warmup_end == 1);
  CHECK(view.termination_start == 4);
  const ViewArc* closing = find_arc(view, 4, 5, ArcKind::Abstract);
  REQUIRE(closing != nullptr);
  CHECK(closing->phase == Phase::Termination);
  CHECK(closing->obs == std::vector<int>{5, 6});
  REQUIRE(find_arc(view, 1, 4, ArcKind::Macro) != nullptr);
  CHECK(view.decision_point_count() == 1);
}

TEST_CASE("views replay exactly over random machines") {
  Rng rng(71);
  int nonempty = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const MooreMachine mm = random_machine(rng);
    Walk walk = random_walk(mm, rng, 8);
    const ReducedView view = reduce_all(mm, walk.visits);  // self-checks coverage

    // Collapse unroll copies back onto the states they duplicate (they share
    // a code), then the covered triples must reproduce exactly the visited
    // part of the source machine.
    std::map<TernaryCode, int> by_code;
    for (const auto& s : mm.states) by_code[s.code] = s.id;
    auto orig = [&](int id) { return by_code.at(view.machine.state(id).code); };

    std::map<std::pair<int, int>, int> expanded;
    for (const auto& arc : view.arcs) {
      for (const auto& [s, o, t] : arc.covered) {
        auto [it, fresh] = expanded.insert({{orig(s), o}, orig(t)});
        CHECK(it->second == orig(t));
      }
    }
    CHECK(expanded.size() == walk.visits.arc_visits.size());
    for (const auto& [key, n] : walk.visits.arc_visits) {
      (void)n;
      auto it = expanded.find(key);
      REQUIRE(it != expanded.end());
      CHECK(it->second == mm.transitions.at(key).target);
    }

    for (const auto& episode : walk.episodes) {
      int cur = mm.start_state;
      for (const auto& [obs, action] : episode) {
        auto it = expanded.find({cur, obs});
        REQUIRE(it != expanded.end());
        cur = it->second;
        CHECK(mm.state(cur).action == action);
      }
      if (!episode.empty()) ++nonempty;
    }
    CHECK(view.machine.states.size() >= mm.states.size());
  }
  CHECK(nonempty > 100);  // the property must have had real material
}

TEST_CASE("views reject visit data from another machine") {
  const MooreMachine mm =
      make_machine(0, {{0, 0}, {1, 1}}, {{0, 0, 1, 1}}, 1);
  VisitData foreign;
  foreign.arc_visits[{0, 0}] = 1;
  foreign.arc_visits[{1, 3}] = 1;
  CHECK_THROWS_AS(build_view(mm, foreign), ReplayMismatch);
  CHECK_THROWS_AS(build_view(mm, VisitData{}, {9}), IndexOutOfRange);

  VisitData visits;
  visits.arc_visits[{0, 0}] = 1;
  visits.terminal_occupancy[1] = 1;
  ReducedView view = build_view(mm, visits);
  view.arcs.front().covered.emplace_back(1, 0, 0);  // claim an unvisited arc
  CHECK_THROWS_AS(check_expansion(view, visits), ReplayMismatch);
}

TEST_CASE("renderings carry the view's structure") {
  VisitData visits;
  const MooreMachine mm = loop_fixture(visits);
  const ReducedView view = reduce_all(mm, visits);

  const std::string mdot = machine_to_dot(mm);
  CHECK(mdot.find("digraph machine") != std::string::npos);
  CHECK(mdot.find("s0 -> s1") != std::string::npos);
  CHECK(mdot.find("doublecircle") != std::string::npos);

  const std::string vdot = view_to_dot(view);
  CHECK(vdot.find("digraph view") != std::string::npos);
  CHECK(vdot.find("||w") != std::string::npos);
  CHECK(vdot.find("style=dotted") != std::string::npos);

  const auto j = nlohmann::json::parse(view_to_json(view));
  CHECK(j["warmup_end"] == 5);
  CHECK(j["termination_start"] == -1);
  CHECK(j["nodes"].size() == view.nodes.size());
  CHECK(j["arcs"].size() == view.arcs.size());
  int macros = 0;
  for (const auto& arc : j["arcs"]) macros += arc["kind"] == "macro" ? 1 : 0;
  CHECK(macros == 1);
}
