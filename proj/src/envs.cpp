#include "mmforge/envs.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "mmforge/automaton.hpp"
#include "mmforge/rng.hpp"

namespace mmforge {

namespace {

EvalReport summarize(std::vector<double> returns, std::vector<std::uint64_t> seeds) {
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

class CartPoleEnv : public Environment {
 public:
  std::vector<double> reset(std::uint64_t seed) override {
    Rng rng = Rng(seed).child("cartpole-init");
    x_ = rng.uniform(-0.05, 0.05);
    xdot_ = rng.uniform(-0.05, 0.05);
    theta_ = rng.uniform(-0.05, 0.05);
    thetadot_ = rng.uniform(-0.05, 0.05);
    steps_ = 0;
    done_ = false;
    return obs();
  }

  StepResult step(int action) override {
    if (done_) throw StepAfterDone("cartpole episode is over");
    const double force = action == 1 ? kForce : -kForce;
    const double costh = std::cos(theta_);
    const double sinth = std::sin(theta_);
    const double temp =
        (force + kPoleMassLength * thetadot_ * thetadot_ * sinth) / kTotalMass;
    const double thetaacc =
        (kGravity * sinth - costh * temp) /
        (kHalfLength * (4.0 / 3.0 - kMassPole * costh * costh / kTotalMass));
    const double xacc = temp - kPoleMassLength * thetaacc * costh / kTotalMass;
    x_ += kTau * xdot_;
    xdot_ += kTau * xacc;
    theta_ += kTau * thetadot_;
    thetadot_ += kTau * thetaacc;
    ++steps_;
    const bool fell = std::abs(x_) > kXLimit || std::abs(theta_) > kThetaLimit;
    done_ = fell || steps_ >= kMaxSteps;
    return {obs(), 1.0, done_};
  }

  int action_count() const override { return 2; }
  int obs_dim() const override { return 4; }

 private:
  static constexpr double kGravity = 9.8;
  static constexpr double kMassCart = 1.0;
  static constexpr double kMassPole = 0.1;
  static constexpr double kTotalMass = kMassCart + kMassPole;
  static constexpr double kHalfLength = 0.5;
  static constexpr double kPoleMassLength = kMassPole * kHalfLength;
  static constexpr double kForce = 10.0;
  static constexpr double kTau = 0.02;
  static constexpr double kThetaLimit = 12.0 * 2.0 * 3.141592653589793 / 360.0;
  static constexpr double kXLimit = 2.4;
  static constexpr int kMaxSteps = 500;

  std::vector<double> obs() const { return {x_, xdot_, theta_, thetadot_}; }

  double x_ = 0, xdot_ = 0, theta_ = 0, thetadot_ = 0;
  int steps_ = 0;
  bool done_ = true;
};

// Each step the environment commits to one outgoing arc of its current state
// (seeded uniform over the arcs), shows that arc's obs code, and rewards the
// action matching the label of the arc's target.
class SyntheticMachineEnv : public Environment {
 public:
  SyntheticMachineEnv(MooreMachine machine, int max_steps)
      : mm_(std::move(machine)), max_steps_(max_steps), rng_(0) {
    int max_action = 0;
    for (const auto& s : mm_.states) {
      if (s.action < 0) {
        throw InvalidSpec("state " + std::to_string(s.id) + " has no action label");
      }
      max_action = std::max(max_action, s.action);
    }
    if (mm_.obs_alphabet.empty()) {
      throw InvalidSpec("machine has no observation alphabet");
    }
    if (mm_.outgoing(mm_.start_state).empty()) {
      throw InvalidSpec("start state has no outgoing transitions");
    }
    action_count_ = max_action + 1;
    obs_dim_ = static_cast<int>(mm_.obs_alphabet.begin()->second.size());
  }

  std::vector<double> reset(std::uint64_t seed) override {
    rng_ = Rng(seed).child("synthetic-env");
    state_ = mm_.start_state;
    steps_ = 0;
    done_ = false;
    return emit();
  }

  StepResult step(int action) override {
    if (done_) throw StepAfterDone("synthetic episode is over");
    const double reward = action == mm_.state(pending_target_).action ? 1.0 : 0.0;
    state_ = pending_target_;
    ++steps_;
    done_ = steps_ >= max_steps_ || mm_.outgoing(state_).empty();
    if (done_) {
      return {std::vector<double>(obs_dim_, 0.0), reward, true};
    }
    return {emit(), reward, false};
  }

  int action_count() const override { return action_count_; }
  int obs_dim() const override { return obs_dim_; }

  const MooreMachine& machine() const { return mm_; }

 private:
  std::vector<double> emit() {
    const auto outs = mm_.outgoing(state_);
    const auto pick = static_cast<std::size_t>(
        rng_.uniform_int(0, static_cast<int>(outs.size()) - 1));
    pending_target_ = outs[pick].second.target;
    return code_to_doubles(mm_.obs_alphabet.at(outs[pick].first));
  }

  MooreMachine mm_;
  int max_steps_;
  Rng rng_;
  int state_ = -1;
  int pending_target_ = -1;
  int steps_ = 0;
  bool done_ = true;
  int action_count_ = 0;
  int obs_dim_ = 0;
};

// A redundant decision point must stay optimal when any one of its branches
// is removed. Checked exactly: walk every reachable (environment state,
// follower state) pair of the branch-dropped machine and demand the correct
// action on every environment choice.
void check_redundant(const MooreMachine& mm, int state_id) {
  if (mm.find_state(state_id) == nullptr) {
    throw InvalidSpec("redundant state " + std::to_string(state_id) + " is not defined");
  }
  if (!mm.is_decision_point(state_id)) {
    throw InvalidSpec("redundant state " + std::to_string(state_id) +
                      " is not a decision point");
  }
  for (const auto& [obs, tr] : mm.outgoing(state_id)) {
    MooreMachine dropped = mm;
    dropped.transitions.erase({state_id, obs});

    std::set<std::pair<int, int>> seen;
    std::vector<std::pair<int, int>> frontier{{mm.start_state, mm.start_state}};
    seen.insert(frontier.front());
    while (!frontier.empty()) {
      const auto [env_s, fol_s] = frontier.back();
      frontier.pop_back();
      for (const auto& [env_obs, env_tr] : mm.outgoing(env_s)) {
        const StepOutcome out = dropped.step(fol_s, env_obs, Fallback::MostFrequentBranch);
        if (out.action != mm.state(env_tr.target).action) {
          throw InvalidSpec("state " + std::to_string(state_id) +
                            " is not redundant: dropping its branch on obs " +
                            std::to_string(obs) + " breaks behavior");
        }
        if (seen.insert({env_tr.target, out.next_state}).second) {
          frontier.push_back({env_tr.target, out.next_state});
        }
      }
    }
  }
}

// One bit shown at reset, blank observations afterwards; only the action on
// the final step is graded, so the bit must be carried in memory.
class ParityMemoryEnv : public Environment {
 public:
  explicit ParityMemoryEnv(int episode_len) : len_(episode_len) {
    if (episode_len < 2) throw InvalidSpec("parity episodes need at least 2 steps");
  }

  std::vector<double> reset(std::uint64_t seed) override {
    Rng rng = Rng(seed).child("parity-env");
    bit_ = rng.uniform_int(0, 1);
    t_ = 0;
    done_ = false;
    return {bit_ == 1 ? 1.0 : -1.0};
  }

  StepResult step(int action) override {
    if (done_) throw StepAfterDone("parity episode is over");
    ++t_;
    if (t_ == len_) {
      done_ = true;
      return {{0.0}, action == bit_ ? 1.0 : 0.0, true};
    }
    return {{0.0}, 0.0, false};
  }

  int action_count() const override { return 2; }
  int obs_dim() const override { return 1; }

 private:
  int len_;
  int bit_ = 0;
  int t_ = 0;
  bool done_ = true;
};

}  // namespace

EvalReport evaluate_seeds(Policy& policy, Environment& env,
                          const std::vector<std::uint64_t>& seeds) {
  std::vector<double> returns;
  for (const std::uint64_t seed : seeds) {
    policy.begin_episode();
    std::vector<double> obs = env.reset(seed);
    double ret = 0.0;
    for (;;) {
      const int action = policy.act(obs);
      const Environment::StepResult sr = env.step(action);
      ret += sr.reward;
      if (sr.done) break;
      obs = sr.obs;
    }
    returns.push_back(ret);
  }
  return summarize(std::move(returns), seeds);
}

EvalReport evaluate(Policy& policy, Environment& env, int episodes, std::uint64_t seed_base) {
  std::vector<std::uint64_t> seeds;
  for (int e = 0; e < episodes; ++e) seeds.push_back(seed_base + static_cast<std::uint64_t>(e));
  return evaluate_seeds(policy, env, seeds);
}

std::unique_ptr<Environment> make_cartpole() { return std::make_unique<CartPoleEnv>(); }

int cartpole_expert(const std::vector<double>& obs) {
  return 3.0 * obs[2] + obs[3] > 0.0 ? 1 : 0;
}

std::unique_ptr<Environment> make_synthetic_env(const MooreMachine& machine,
                                                const std::vector<int>& redundant_states,
                                                int max_steps) {
  if (max_steps < 1) throw InvalidSpec("max_steps must be positive");
  auto env = std::make_unique<SyntheticMachineEnv>(machine, max_steps);
  for (int s : redundant_states) check_redundant(env->machine(), s);
  return env;
}

std::unique_ptr<Environment> load_synthetic_env(const std::string& path, int max_steps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream machine_text;
  std::vector<int> redundant;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "redundant") {
      int id = -1;
      if (!(ls >> id) || (ls >> std::ws, !ls.eof())) {
        throw ParseError("line " + std::to_string(line_no) + ": expected 'redundant <state>'");
      }
      redundant.push_back(id);
      machine_text << "\n";  // keep line numbers aligned for machine errors
    } else {
      machine_text << line << "\n";
    }
  }
  const MooreMachine mm = deserialize(machine_text.str());
  return make_synthetic_env(mm, redundant, max_steps);
}

std::unique_ptr<Environment> make_parity_env(int episode_len) {
  return std::make_unique<ParityMemoryEnv>(episode_len);
}

std::unique_ptr<Environment> make_env(const std::string& spec) {
  if (spec == "cartpole") return make_cartpole();
  if (spec == "parity") return make_parity_env();
  const std::string prefix = "synthetic=";
  if (spec.rfind(prefix, 0) == 0) return load_synthetic_env(spec.substr(prefix.size()));
  throw InvalidSpec("unknown environment '" + spec + "'");
}

}  // namespace mmforge
