#pragma once

// Evaluation environments. CartPole carries the usual physics; the synthetic
// machine environment is scripted by a ground-truth Moore machine so that
// extraction and pruning can be tested against known structure; the parity
// environment requires one bit of memory and serves as the negative control
// for pruning (its single decision must survive).

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/code.hpp"

namespace mmforge {

struct MooreMachine;

struct StepAfterDone : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidSpec : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Environment {
 public:
  struct StepResult {
    std::vector<double> obs;
    double reward = 0.0;
    bool done = false;
  };

  virtual ~Environment() = default;
  virtual std::vector<double> reset(std::uint64_t seed) = 0;
  virtual StepResult step(int action) = 0;
  virtual int action_count() const = 0;
  virtual int obs_dim() const = 0;
};

class Policy {
 public:
  virtual ~Policy() = default;
  virtual void begin_episode() = 0;
  virtual int act(const std::vector<double>& obs) = 0;
};

class FunctionPolicy : public Policy {
 public:
  explicit FunctionPolicy(std::function<int(const std::vector<double>&)> fn)
      : fn_(std::move(fn)) {}
  void begin_episode() override {}
  int act(const std::vector<double>& obs) override { return fn_(obs); }

 private:
  std::function<int(const std::vector<double>&)> fn_;
};

struct EvalReport {
  double mean_return = 0.0;
  double std_return = 0.0;
  std::vector<double> episode_returns;
  std::vector<std::uint64_t> seeds;
};

EvalReport evaluate(Policy& policy, Environment& env, int episodes, std::uint64_t seed_base);
EvalReport evaluate_seeds(Policy& policy, Environment& env,
                          const std::vector<std::uint64_t>& seeds);

// CartPole, Euler-integrated at tau = 0.02, capped at 500 steps.
std::unique_ptr<Environment> make_cartpole();
// Scripted balancing expert: push right iff 3*theta + theta_dot > 0.
int cartpole_expert(const std::vector<double>& obs);

// Environment scripted by a ground-truth machine. Each step the environment
// picks one outgoing transition of its current state (seeded uniform over
// obs ids), emits that transition's obs code as the observation vector, and
// rewards an action with +1 exactly when it matches the label of the state
// being entered. The generating machine is therefore optimal by construction.
// States listed in redundant_states must be decision points whose branches
// are interchangeable: dropping any single branch must leave the return of
// every episode unchanged. This is checked exhaustively at construction over
// all branch-choice profiles; violations raise InvalidSpec.
std::unique_ptr<Environment> make_synthetic_env(const MooreMachine& machine,
                                                const std::vector<int>& redundant_states,
                                                int max_steps = 200);
// Loads the machine file format plus optional `redundant <state>` lines.
std::unique_ptr<Environment> load_synthetic_env(const std::string& path, int max_steps = 200);

// One observation of a random bit (+1 or -1, seeded), then zeros; the action
// on the final step scores +1 when it reproduces the bit. episode_len >= 2.
std::unique_ptr<Environment> make_parity_env(int episode_len = 3);

// "cartpole", "parity", or "synthetic=<machine file>"; used by the CLI.
std::unique_ptr<Environment> make_env(const std::string& spec);

}  // namespace mmforge
