#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmforge/envs.hpp"
#include "mmforge/pruner.hpp"

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
                          int obs_count, std::size_t code_width = 3) {
  MooreMachine mm;
  for (const auto& [id, action] : states) {
    mm.states.push_back({id, action, width_code(id, code_width)});
  }
  mm.start_state = start;
  for (int o = 0; o < obs_count; ++o) mm.obs_alphabet[o] = width_code(o, code_width);
  for (const auto& [from, obs, to, count] : arcs) mm.transitions[{from, obs}] = {to, count};
  return mm;
}

// Three interchangeable opening branches (all targets act alike), then a
// common terminal: every decision is redundant by construction.
MooreMachine redundant_fixture() {
  return make_machine(0, {{0, 0}, {1, 1}, {2, 1}, {3, 1}, {4, 0}},
                      {{0, 0, 1, 5},
                       {0, 1, 2, 3},
                       {0, 2, 3, 2},
                       {1, 3, 4, 1},
                       {2, 4, 4, 1},
                       {3, 5, 4, 1}},
                      6);
}

// One bit of memory: the first observation's sign must be reproduced on the
// last step, so the opening decision is load-bearing.
MooreMachine parity_machine() {
  MooreMachine mm;
  mm.states.push_back({0, 0, {0}});
  mm.states.push_back({1, 1, {1}});
  mm.states.push_back({2, 0, {-1}});
  mm.start_state = 0;
  mm.obs_alphabet[0] = {1};
  mm.obs_alphabet[1] = {-1};
  mm.obs_alphabet[2] = {0};
  mm.transitions[{0, 0}] = {1, 10};
  mm.transitions[{0, 1}] = {2, 8};
  mm.transitions[{1, 2}] = {1, 20};
  mm.transitions[{2, 2}] = {2, 16};
  return mm;
}

// Twenty parity seeds, ten per bit value, found by probing the environment.
std::vector<std::uint64_t> balanced_parity_seeds(Environment& env) {
  std::vector<std::uint64_t> plus, minus;
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto obs = env.reset(seed);
    (obs.front() > 0 ? plus : minus).push_back(seed);
    if (plus.size() >= 10 && minus.size() >= 10) break;
  }
  REQUIRE(plus.size() >= 10);
  REQUIRE(minus.size() >= 10);
  std::vector<std::uint64_t> seeds(plus.begin(), plus.begin() + 10);
  seeds.insert(seeds.end(), minus.begin(), minus.begin() + 10);
  return seeds;
}

}  // namespace

TEST_CASE("tolerance combines a fraction with an absolute floor") {
  PruneConfig cfg;
  cfg.tolerance_fraction = 0.01;
  cfg.tolerance_min_abs = 0.5;
  CHECK(cfg.tolerance(400.0) == doctest::Approx(4.0));
  CHECK(cfg.tolerance(-400.0) == doctest::Approx(4.0));
  CHECK(cfg.tolerance(10.0) == doctest::Approx(0.5));
  cfg.tolerance_min_abs = 0.0;
  CHECK(cfg.tolerance(10.0) == doctest::Approx(0.1));
}

TEST_CASE("evaluation seeds come from the base unless listed explicitly") {
  PruneConfig cfg;
  cfg.eval_episodes = 3;
  cfg.seed_base = 9000;
  CHECK(cfg.seeds() == std::vector<std::uint64_t>{9000, 9001, 9002});
  cfg.seed_list = {5, 1, 5};
  CHECK(cfg.seeds() == std::vector<std::uint64_t>{5, 1, 5});
}

TEST_CASE("branches rank least frequent first across decision points") {
  const MooreMachine mm = make_machine(
      0, {{0, 0}, {1, 1}, {2, 0}, {3, 1}},
      {{0, 1, 1, 7}, {0, 2, 2, 2}, {0, 3, 3, 2}, {1, 0, 2, 1}}, 4);
  const auto order = branch_order(mm);
  const std::vector<std::pair<int, int>> expected{{0, 2}, {0, 3}, {0, 1}};
  CHECK(order == expected);

  // A second decision point's branches interleave by count.
  const MooreMachine two = make_machine(
      0, {{0, 0}, {1, 1}, {2, 0}, {3, 1}},
      {{0, 0, 1, 9}, {0, 1, 2, 4}, {1, 2, 3, 1}, {1, 3, 0, 6}}, 4);
  const auto interleaved = branch_order(two);
  const std::vector<std::pair<int, int>> want{{1, 2}, {0, 1}, {1, 3}, {0, 0}};
  CHECK(interleaved == want);
}

TEST_CASE("redundant decisions prune away without losing return") {
  const MooreMachine mm = redundant_fixture();
  const auto env = make_synthetic_env(mm, {0});  // validates interchangeability

  PruneConfig cfg;
  cfg.eval_episodes = 20;
  cfg.tolerance_fraction = 0.01;
  cfg.tolerance_min_abs = 0.0;
  cfg.seed_base = 300;

  const PruneResult res = prune(mm, *env, nearest_ternary, cfg);
  CHECK(res.log.baseline_return == doctest::Approx(2.0));
  CHECK(res.log.final_return == doctest::Approx(2.0));
  CHECK(res.log.original_dp == 1);
  CHECK(res.machine.decision_points().empty());

  REQUIRE(res.log.attempts.size() == 2);
  CHECK(res.log.attempts[0].decision_point == 0);
  CHECK(res.log.attempts[0].branch_obs == 2);  // least frequent first
  CHECK(res.log.attempts[0].branch_target == 3);
  CHECK(res.log.attempts[0].count == 2);
  CHECK(res.log.attempts[0].accepted);
  CHECK(res.log.attempts[1].branch_obs == 1);
  CHECK(res.log.attempts[1].accepted);

  // The surviving branch was never attempted and unreachable states are gone.
  CHECK(res.machine.transitions.count({0, 0}) == 1);
  CHECK(res.machine.find_state(2) == nullptr);
  CHECK(res.machine.find_state(3) == nullptr);
  CHECK(classify(res.machine, res.log) == ControlClass::PrunedOpenLoop);
}

TEST_CASE("a load-bearing decision survives pruning") {
  const MooreMachine mm = parity_machine();
  const auto env = make_parity_env(3);

  PruneConfig cfg;
  cfg.tolerance_fraction = 0.3;
  cfg.tolerance_min_abs = 0.0;
  cfg.seed_list = balanced_parity_seeds(*env);

  const PruneResult res = prune(mm, *env, nearest_ternary, cfg);
  CHECK(res.log.baseline_return == doctest::Approx(1.0));
  REQUIRE(res.log.attempts.size() == 1);
  CHECK(res.log.attempts[0].branch_obs == 1);  // the rarer branch was tried
  CHECK_FALSE(res.log.attempts[0].accepted);
  CHECK(res.log.attempts[0].measured_return == doctest::Approx(0.5));

  // The rejected branch was restored exactly; the frequent one never tried.
  CHECK(serialize(res.machine) == serialize(mm));
  CHECK(res.log.final_return == doctest::Approx(1.0));
  CHECK(classify(res.machine, res.log) == ControlClass::Reactive);
}

TEST_CASE("pruning is deterministic") {
  const MooreMachine mm = redundant_fixture();
  const auto env = make_synthetic_env(mm, {0});
  PruneConfig cfg;
  cfg.tolerance_min_abs = 0.0;
  cfg.seed_base = 123;
  const PruneResult a = prune(mm, *env, nearest_ternary, cfg);
  const PruneResult b = prune(mm, *env, nearest_ternary, cfg);
  CHECK(serialize(a.machine) == serialize(b.machine));
  CHECK(prune_log_to_json(a.log) == prune_log_to_json(b.log));
}

TEST_CASE("a failing evaluation surfaces with the partial log") {
  const MooreMachine mm = parity_machine();
  const auto env = make_parity_env(3);
  PruneConfig cfg;
  const ObsEncoder broken = [](const std::vector<double>&) -> TernaryCode {
    throw std::runtime_error("encoder offline");
  };
  try {
    prune(mm, *env, broken, cfg);
    FAIL_CHECK("expected an evaluation failure");
  } catch (const EvaluationFailure& e) {
    CHECK(std::string(e.what()).find("encoder offline") != std::string::npos);
    CHECK(e.partial.original_dp == 1);
    CHECK(e.partial.attempts.empty());
  }
}

TEST_CASE("unreachable states are dropped with ids intact") {
  const MooreMachine mm = make_machine(
      0, {{0, 0}, {1, 1}, {2, 0}, {3, 1}},
      {{0, 0, 2, 1}, {1, 1, 2, 1}, {2, 2, 3, 1}}, 3);
  const MooreMachine kept = drop_unreachable(mm);
  CHECK(kept.states.size() == 3);
  CHECK(kept.find_state(1) == nullptr);
  CHECK(kept.find_state(2) != nullptr);
  CHECK(kept.transitions.count({1, 1}) == 0);
  CHECK(kept.transitions.at({2, 2}).target == 3);
  CHECK(kept.obs_alphabet.size() == 3);
}

TEST_CASE("control classes reflect where the decisions went") {
  const MooreMachine line =
      make_machine(0, {{0, 0}, {1, 1}}, {{0, 0, 1, 1}}, 1);
  PruneLog untouched;
  untouched.original_dp = 0;
  CHECK(classify(line, untouched) == ControlClass::OpenLoop);
  CHECK(std::string(control_class_name(ControlClass::OpenLoop)) == "open-loop");
  CHECK(std::string(control_class_name(ControlClass::PrunedOpenLoop)) == "pruned-open-loop");
  CHECK(std::string(control_class_name(ControlClass::Reactive)) == "reactive");
}

TEST_CASE("prune logs serialize as JSON") {
  PruneLog log;
  log.baseline_return = 2.0;
  log.tolerance = 0.25;
  log.original_dp = 3;
  log.final_return = 1.75;
  log.attempts.push_back({0, 1, 4, 2, 7, 11, 1.9, true});
  const auto j = nlohmann::json::parse(prune_log_to_json(log));
  CHECK(j["baseline_return"] == 2.0);
  CHECK(j["original_dp"] == 3);
  REQUIRE(j["attempts"].size() == 1);
  CHECK(j["attempts"][0]["decision_point"] == 4);
  CHECK(j["attempts"][0]["accepted"] == true);
  CHECK(j["attempts"][0]["count"] == 11);
}
