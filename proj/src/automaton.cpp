#include "mmforge/automaton.hpp"

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace mmforge {

namespace {

EvalReport make_report(std::vector<double> returns, std::vector<std::uint64_t> seeds) {
  EvalReport rep;
  rep.episode_returns = std::move(returns);
  rep.seeds = std::move(seeds);
  const auto n = static_cast<double>(rep.episode_returns.size());
  if (n > 0) {
    double sum = 0.0;
    for (double r : rep.episode_returns) sum += r;
    rep.mean_return = sum / n;
    double ss = 0.0;
    for (double r : rep.episode_returns) {
      const double d = r - rep.mean_return;
      ss += d * d;
    }
    rep.std_return = std::sqrt(ss / n);
  }
  return rep;
}

}  // namespace

const StateRecord* MooreMachine::find_state(int id) const {
  auto it = std::lower_bound(states.begin(), states.end(), id,
                             [](const StateRecord& s, int v) { return s.id < v; });
  if (it == states.end() || it->id != id) return nullptr;
  return &*it;
}

const StateRecord& MooreMachine::state(int id) const {
  const StateRecord* s = find_state(id);
  if (s == nullptr) throw std::out_of_range("unknown state id " + std::to_string(id));
  return *s;
}

std::vector<std::pair<int, Transition>> MooreMachine::outgoing(int state_id) const {
  std::vector<std::pair<int, Transition>> out;
  for (auto it = transitions.lower_bound({state_id, INT_MIN});
       it != transitions.end() && it->first.first == state_id; ++it) {
    out.emplace_back(it->first.second, it->second);
  }
  return out;
}

int MooreMachine::most_frequent_branch(int state_id) const {
  int best_obs = -1;
  long long best_count = -1;
  for (const auto& [obs, tr] : outgoing(state_id)) {
    if (tr.count > best_count) {
      best_count = tr.count;
      best_obs = obs;
    }
  }
  return best_obs;
}

bool MooreMachine::is_decision_point(int state_id) const {
  std::set<int> targets;
  for (const auto& [obs, tr] : outgoing(state_id)) targets.insert(tr.target);
  return targets.size() >= 2;
}

std::vector<int> MooreMachine::decision_points() const {
  std::vector<int> dps;
  for (const auto& s : states) {
    if (is_decision_point(s.id)) dps.push_back(s.id);
  }
  return dps;
}

MachineStats MooreMachine::stats() const {
  MachineStats st;
  st.state_count = static_cast<int>(states.size());
  st.obs_count = static_cast<int>(obs_alphabet.size());
  st.decision_points = static_cast<int>(decision_points().size());
  st.transition_count = static_cast<long long>(transitions.size());
  return st;
}

StepOutcome MooreMachine::step(int state_id, int obs_id, Fallback fb) const {
  state(state_id);
  if (obs_alphabet.find(obs_id) == obs_alphabet.end()) {
    throw UnknownObservation("obs id " + std::to_string(obs_id) +
                             " is not in the machine's alphabet");
  }
  auto it = transitions.find({state_id, obs_id});
  if (it != transitions.end()) {
    return {it->second.target, state(it->second.target).action, obs_id, false};
  }
  if (fb == Fallback::Fail) {
    throw DeadEnd("no transition from state " + std::to_string(state_id) +
                  " on obs " + std::to_string(obs_id));
  }
  const int mfb = most_frequent_branch(state_id);
  if (mfb < 0) {
    return {state_id, state(state_id).action, obs_id, true};
  }
  const Transition& tr = transitions.at({state_id, mfb});
  return {tr.target, state(tr.target).action, mfb, true};
}

MooreMachine build_from_traces(const std::vector<Trace>& traces) {
  std::size_t total_steps = 0;
  for (const auto& t : traces) total_steps += t.steps.size();
  if (total_steps == 0) throw EmptyInput("no transition tuples to build from");

  std::map<TernaryCode, int> state_ids;
  std::map<TernaryCode, int> obs_ids;
  MooreMachine mm;
  std::vector<int> labels;         // -1 until observed
  std::vector<int> first_leaving;  // action of the first tuple leaving a state

  std::size_t hidden_dim = 0;
  std::size_t obs_dim = 0;
  bool dims_set = false;

  auto intern_state = [&](const TernaryCode& code) {
    auto it = state_ids.find(code);
    if (it != state_ids.end()) return it->second;
    const int id = static_cast<int>(mm.states.size());
    state_ids.emplace(code, id);
    mm.states.push_back({id, -1, code});
    labels.push_back(-1);
    first_leaving.push_back(-1);
    return id;
  };
  auto intern_obs = [&](const TernaryCode& code) {
    auto it = obs_ids.find(code);
    if (it != obs_ids.end()) return it->second;
    const int id = static_cast<int>(obs_ids.size());
    obs_ids.emplace(code, id);
    mm.obs_alphabet.emplace(id, code);
    return id;
  };

  for (const auto& trace : traces) {
    if (trace.steps.empty()) continue;
    for (const auto& st : trace.steps) {
      if (!dims_set) {
        hidden_dim = st.h.size();
        obs_dim = st.f.size();
        dims_set = true;
      }
      if (st.h.size() != hidden_dim || st.hn.size() != hidden_dim || st.f.size() != obs_dim) {
        throw std::invalid_argument("trace codes have inconsistent sizes");
      }
      const int sh = intern_state(st.h);
      const int so = intern_obs(st.f);
      const int sn = intern_state(st.hn);
      if (labels[sn] >= 0 && labels[sn] != st.a) {
        throw ConflictingTransition("state " + std::to_string(sn) +
                                    " reached with conflicting actions " +
                                    std::to_string(labels[sn]) + " and " +
                                    std::to_string(st.a));
      }
      labels[sn] = st.a;
      if (first_leaving[sh] < 0) first_leaving[sh] = st.a;

      auto [it, inserted] = mm.transitions.try_emplace({sh, so}, Transition{sn, 1});
      if (!inserted) {
        if (it->second.target != sn) {
          throw ConflictingTransition(
              "state " + std::to_string(sh) + " on obs " + std::to_string(so) +
              " leads to both " + std::to_string(it->second.target) + " and " +
              std::to_string(sn));
        }
        ++it->second.count;
      }
    }
    const int ep_start = state_ids.at(trace.steps.front().h);
    if (mm.start_state < 0) {
      mm.start_state = ep_start;
    } else if (mm.start_state != ep_start) {
      throw ConflictingTransition("episodes begin in different states " +
                                  std::to_string(mm.start_state) + " and " +
                                  std::to_string(ep_start));
    }
  }

  for (auto& s : mm.states) {
    s.action = labels[s.id] >= 0 ? labels[s.id] : first_leaving[s.id];
  }
  return mm;
}

MooreMachine completed(const MooreMachine& mm) {
  MooreMachine out = mm;
  for (const auto& s : mm.states) {
    const int mfb = mm.most_frequent_branch(s.id);
    const int target = mfb < 0 ? s.id : mm.transitions.at({s.id, mfb}).target;
    for (const auto& [obs, code] : mm.obs_alphabet) {
      out.transitions.try_emplace({s.id, obs}, Transition{target, 1});
    }
  }
  return out;
}

MooreMachine minimize(const MooreMachine& mm) {
  if (mm.states.empty()) throw EmptyInput("cannot minimize an empty machine");
  const MooreMachine total = completed(mm);

  std::set<int> reachable;
  std::vector<int> frontier{total.start_state};
  reachable.insert(total.start_state);
  while (!frontier.empty()) {
    const int s = frontier.back();
    frontier.pop_back();
    for (const auto& [obs, tr] : total.outgoing(s)) {
      if (reachable.insert(tr.target).second) frontier.push_back(tr.target);
    }
  }

  // Initial partition by emitted action, then split by successor blocks
  // until stable. Every reachable state is total, so signatures line up.
  std::map<int, int> block;
  {
    std::map<int, int> action_block;
    for (int s : reachable) {
      const int a = total.state(s).action;
      auto [it, inserted] = action_block.try_emplace(a, static_cast<int>(action_block.size()));
      block[s] = it->second;
    }
  }
  for (;;) {
    std::map<std::vector<int>, int> sig_block;
    std::map<int, int> next;
    for (int s : reachable) {
      std::vector<int> sig{block.at(s)};
      for (const auto& [obs, code] : total.obs_alphabet) {
        sig.push_back(block.at(total.transitions.at({s, obs}).target));
      }
      auto [it, inserted] = sig_block.try_emplace(sig, static_cast<int>(sig_block.size()));
      next[s] = it->second;
    }
    const bool stable = sig_block.size() ==
                        static_cast<std::size_t>(1 + std::max_element(
                            block.begin(), block.end(),
                            [](const auto& a, const auto& b) { return a.second < b.second; })
                            ->second);
    block = std::move(next);
    if (stable) break;
  }

  // Quotient: each block keeps its lowest member id, code, and action; arc
  // counts are summed over member arcs observed in the input machine so the
  // most frequent branch reflects the real visit mass, with 1 standing in
  // for arcs that only exist through completion.
  std::map<int, int> rep;  // block -> lowest member id
  std::map<int, std::vector<int>> members;
  for (const auto& [s, b] : block) {
    members[b].push_back(s);
    auto it = rep.find(b);
    if (it == rep.end() || s < it->second) rep[b] = s;
  }

  MooreMachine out;
  out.obs_alphabet = total.obs_alphabet;
  out.start_state = rep.at(block.at(total.start_state));
  std::vector<int> reps;
  for (const auto& [b, r] : rep) reps.push_back(r);
  std::sort(reps.begin(), reps.end());
  for (int r : reps) {
    const StateRecord& s = total.state(r);
    out.states.push_back({r, s.action, s.code});
  }
  for (const auto& [b, r] : rep) {
    for (const auto& [obs, code] : total.obs_alphabet) {
      const int target = total.transitions.at({r, obs}).target;
      long long observed = 0;
      for (int m : members.at(b)) {
        auto it = mm.transitions.find({m, obs});
        if (it != mm.transitions.end()) observed += it->second.count;
      }
      out.transitions[{r, obs}] = {rep.at(block.at(target)), observed > 0 ? observed : 1};
    }
  }
  return out;
}

bool equivalent(const MooreMachine& a, const MooreMachine& b, int depth) {
  if (a.states.empty() || b.states.empty()) {
    throw EmptyInput("cannot compare an empty machine");
  }
  std::set<int> obs_a, obs_b;
  for (const auto& [o, c] : a.obs_alphabet) obs_a.insert(o);
  for (const auto& [o, c] : b.obs_alphabet) obs_b.insert(o);
  if (obs_a != obs_b) {
    throw AlphabetMismatch("machines have different observation alphabets");
  }

  std::map<std::pair<int, int>, int> deepest;
  std::vector<std::tuple<int, int, int>> stack{{a.start_state, b.start_state, depth}};
  while (!stack.empty()) {
    auto [sa, sb, rem] = stack.back();
    stack.pop_back();
    if (rem <= 0) continue;
    auto [it, inserted] = deepest.try_emplace({sa, sb}, rem);
    if (!inserted) {
      if (it->second >= rem) continue;
      it->second = rem;
    }
    for (int o : obs_a) {
      const StepOutcome oa = a.step(sa, o, Fallback::MostFrequentBranch);
      const StepOutcome ob = b.step(sb, o, Fallback::MostFrequentBranch);
      if (oa.action != ob.action) return false;
      stack.emplace_back(oa.next_state, ob.next_state, rem - 1);
    }
  }
  return true;
}

std::string serialize(const MooreMachine& mm) {
  if (mm.states.empty()) throw EmptyInput("cannot serialize an empty machine");
  const std::size_t nh = mm.states.front().code.size();
  const std::size_t no = mm.obs_alphabet.empty() ? 0 : mm.obs_alphabet.begin()->second.size();
  std::ostringstream out;
  out << "mm v1 Nh=" << nh << " No=" << no << "\n";
  out << "start " << mm.start_state << "\n";
  for (const auto& s : mm.states) {
    out << "state " << s.id << " action " << s.action << " code " << code_to_string(s.code)
        << "\n";
  }
  for (const auto& [id, code] : mm.obs_alphabet) {
    out << "obs " << id << " code " << code_to_string(code) << "\n";
  }
  for (const auto& [key, tr] : mm.transitions) {
    out << "trans " << key.first << " " << key.second << " " << tr.target << " count "
        << tr.count << "\n";
  }
  return out.str();
}

namespace {

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

int parse_int(const std::string& tok, std::size_t line_no, const char* what) {
  try {
    std::size_t pos = 0;
    const int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    parse_fail(line_no, std::string("expected ") + what + ", got '" + tok + "'");
  }
}

long long parse_count(const std::string& tok, std::size_t line_no) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(tok, &pos);
    if (pos != tok.size() || v < 1) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    parse_fail(line_no, "expected a positive count, got '" + tok + "'");
  }
}

}  // namespace

MooreMachine deserialize(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  bool header_seen = false;
  bool start_seen = false;
  std::size_t nh = 0, no = 0;
  MooreMachine mm;
  std::set<int> state_ids, obs_ids;
  std::size_t start_line = 0;
  std::map<std::pair<int, int>, std::size_t> trans_lines;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::vector<std::string> tok;
    for (std::string t; ls >> t;) tok.push_back(t);
    if (tok.empty()) continue;

    if (!header_seen) {
      if (tok.size() != 4 || tok[0] != "mm" || tok[1] != "v1" ||
          tok[2].rfind("Nh=", 0) != 0 || tok[3].rfind("No=", 0) != 0) {
        parse_fail(line_no, "expected header 'mm v1 Nh=<n> No=<n>'");
      }
      nh = static_cast<std::size_t>(parse_int(tok[2].substr(3), line_no, "Nh"));
      no = static_cast<std::size_t>(parse_int(tok[3].substr(3), line_no, "No"));
      header_seen = true;
      continue;
    }

    if (tok[0] == "start") {
      if (tok.size() != 2) parse_fail(line_no, "expected 'start <id>'");
      if (start_seen) parse_fail(line_no, "duplicate start line");
      mm.start_state = parse_int(tok[1], line_no, "a state id");
      start_seen = true;
      start_line = line_no;
    } else if (tok[0] == "state") {
      if (tok.size() != 6 || tok[2] != "action" || tok[4] != "code") {
        parse_fail(line_no, "expected 'state <id> action <a> code <code>'");
      }
      StateRecord s;
      s.id = parse_int(tok[1], line_no, "a state id");
      s.action = parse_int(tok[3], line_no, "an action");
      try {
        s.code = code_from_string(tok[5]);
      } catch (const std::invalid_argument& e) {
        parse_fail(line_no, e.what());
      }
      if (s.code.size() != nh) parse_fail(line_no, "state code length does not match Nh");
      if (!state_ids.insert(s.id).second) {
        parse_fail(line_no, "duplicate state id " + std::to_string(s.id));
      }
      mm.states.push_back(std::move(s));
    } else if (tok[0] == "obs") {
      if (tok.size() != 4 || tok[2] != "code") {
        parse_fail(line_no, "expected 'obs <id> code <code>'");
      }
      const int id = parse_int(tok[1], line_no, "an obs id");
      TernaryCode code;
      try {
        code = code_from_string(tok[3]);
      } catch (const std::invalid_argument& e) {
        parse_fail(line_no, e.what());
      }
      if (code.size() != no) parse_fail(line_no, "obs code length does not match No");
      if (!obs_ids.insert(id).second) {
        parse_fail(line_no, "duplicate obs id " + std::to_string(id));
      }
      mm.obs_alphabet.emplace(id, std::move(code));
    } else if (tok[0] == "trans") {
      if (tok.size() != 6 || tok[4] != "count") {
        parse_fail(line_no, "expected 'trans <state> <obs> <target> count <n>'");
      }
      const int s = parse_int(tok[1], line_no, "a state id");
      const int o = parse_int(tok[2], line_no, "an obs id");
      const int t = parse_int(tok[3], line_no, "a state id");
      const long long count = parse_count(tok[5], line_no);
      if (!mm.transitions.try_emplace({s, o}, Transition{t, count}).second) {
        parse_fail(line_no, "duplicate transition (" + std::to_string(s) + ", " +
                                std::to_string(o) + ")");
      }
      trans_lines[{s, o}] = line_no;
    } else {
      parse_fail(line_no, "unknown directive '" + tok[0] + "'");
    }
  }

  if (!header_seen) parse_fail(line_no, "missing header line");
  if (mm.states.empty()) parse_fail(line_no, "machine has no states");
  if (!start_seen) parse_fail(line_no, "missing start line");
  std::sort(mm.states.begin(), mm.states.end(),
            [](const StateRecord& a, const StateRecord& b) { return a.id < b.id; });
  if (state_ids.find(mm.start_state) == state_ids.end()) {
    parse_fail(start_line, "start state " + std::to_string(mm.start_state) + " is not defined");
  }
  for (const auto& [key, tr] : mm.transitions) {
    const std::size_t at = trans_lines.at(key);
    if (state_ids.find(key.first) == state_ids.end()) {
      parse_fail(at, "transition from undefined state " + std::to_string(key.first));
    }
    if (state_ids.find(tr.target) == state_ids.end()) {
      parse_fail(at, "transition to undefined state " + std::to_string(tr.target));
    }
    if (obs_ids.find(key.second) == obs_ids.end()) {
      parse_fail(at, "transition on undefined obs " + std::to_string(key.second));
    }
  }
  return mm;
}

void save_machine(const MooreMachine& mm, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << serialize(mm);
  if (!out) throw std::runtime_error("failed writing " + path);
}

MooreMachine load_machine(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

int bind_observation(const MooreMachine& mm, const TernaryCode& code) {
  if (mm.obs_alphabet.empty()) {
    throw UnknownObservation("machine has an empty observation alphabet");
  }
  int best_id = -1;
  std::size_t best_dist = SIZE_MAX;
  for (const auto& [id, alpha_code] : mm.obs_alphabet) {
    const std::size_t d = hamming(code, alpha_code);
    if (d < best_dist) {
      best_dist = d;
      best_id = id;
    }
  }
  return best_id;
}

MachinePolicy::MachinePolicy(const MooreMachine& mm, ObsEncoder encoder, Fallback fb)
    : mm_(&mm), enc_(std::move(encoder)), fb_(fb), state_(mm.start_state) {}

void MachinePolicy::begin_episode() { state_ = mm_->start_state; }

int MachinePolicy::act(const std::vector<double>& obs) {
  const int o = bind_observation(*mm_, enc_(obs));
  const StepOutcome out = mm_->step(state_, o, fb_);
  state_ = out.next_state;
  return out.action;
}

RunReport run_machine(const MooreMachine& mm, Environment& env, ObsEncoder enc,
                      int episodes, std::uint64_t seed_base, Fallback fb) {
  RunReport rep;
  std::vector<double> returns;
  std::vector<std::uint64_t> seeds;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(e);
    std::vector<double> obs = env.reset(seed);
    int s = mm.start_state;
    double ret = 0.0;
    for (;;) {
      const int o = bind_observation(mm, enc(obs));
      const StepOutcome out = mm.step(s, o, fb);
      if (mm.transitions.count({s, out.used_obs}) != 0) {
        ++rep.visits.arc_visits[{s, out.used_obs}];
      }
      s = out.next_state;
      const Environment::StepResult sr = env.step(out.action);
      ret += sr.reward;
      if (sr.done) {
        ++rep.visits.terminal_occupancy[s];
        break;
      }
      obs = sr.obs;
    }
    returns.push_back(ret);
    seeds.push_back(seed);
  }
  rep.eval = make_report(std::move(returns), std::move(seeds));
  return rep;
}

VisitData visits_from_counts(const MooreMachine& mm) {
  VisitData v;
  std::map<int, long long> inflow, outflow;
  for (const auto& [key, tr] : mm.transitions) {
    v.arc_visits[key] = tr.count;
    outflow[key.first] += tr.count;
    inflow[tr.target] += tr.count;
  }
  for (const auto& s : mm.states) {
    const long long occ = inflow[s.id] - outflow[s.id];
    if (occ > 0) v.terminal_occupancy[s.id] = occ;
  }
  return v;
}

std::vector<Trace> machine_traces(const MooreMachine& mm, Environment& env, ObsEncoder enc,
                                  int episodes, std::uint64_t seed_base, Fallback fb) {
  std::vector<Trace> traces;
  for (int e = 0; e < episodes; ++e) {
    const std::uint64_t seed = seed_base + static_cast<std::uint64_t>(e);
    std::vector<double> obs = env.reset(seed);
    int s = mm.start_state;
    Trace trace;
    for (;;) {
      const int o = bind_observation(mm, enc(obs));
      const StepOutcome out = mm.step(s, o, fb);
      TraceStep step;
      step.h = mm.state(s).code;
      step.a = out.action;
      step.f = mm.obs_alphabet.at(out.used_obs);
      step.hn = mm.state(out.next_state).code;
      trace.steps.push_back(std::move(step));
      s = out.next_state;
      const Environment::StepResult sr = env.step(out.action);
      trace.episode_return += sr.reward;
      if (sr.done) break;
      obs = sr.obs;
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

}  // namespace mmforge
