#pragma once

// Recurrent policy networks and their discretized form. The continuous
// policy maps an observation through a small feature stack into a GRU and
// reads the action off a linear head. The discretized policy threads the
// same computation through two quantized bottlenecks: features are encoded
// to a ternary code and decoded back before the GRU, and the new hidden
// state is encoded to a ternary code and decoded back before the heads.
// Those two codes are exactly the observation and state alphabet of the
// extracted machine.

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "mmforge/automaton.hpp"
#include "mmforge/envs.hpp"
#include "mmforge/neural.hpp"
#include "mmforge/qbn.hpp"
#include "mmforge/trace.hpp"

namespace mmforge {

struct RpnParams {
  FeedForward features;     // obs -> widened ELU layer -> ReLU6 feature vector
  GruParams gru;
  LayerParams policy_head;  // hidden -> action logits
  LayerParams value_head;   // hidden -> 1, kept for checkpoint compatibility

  std::size_t obs_dim() const { return features.front().in_dim(); }
  std::size_t feature_dim() const { return features.back().out_dim(); }
  std::size_t hidden_dim() const { return gru.hidden_dim(); }
  std::size_t action_count() const { return policy_head.out_dim(); }
};

RpnParams make_rpn(std::size_t obs_dim, std::size_t action_count, std::uint64_t seed,
                   std::size_t feature_dim = 8, std::size_t hidden_dim = 8);

struct RpnStepResult {
  std::vector<double> features;
  std::vector<double> hidden;
  std::vector<double> logits;
  int action = 0;
};

RpnStepResult rpn_step(const RpnParams& rpn, const std::vector<double>& obs,
                       const std::vector<double>& h_prev);

class RpnPolicy : public Policy {
 public:
  explicit RpnPolicy(const RpnParams& rpn) : rpn_(&rpn), h_(rpn.hidden_dim(), 0.0) {}
  void begin_episode() override { h_.assign(rpn_->hidden_dim(), 0.0); }
  int act(const std::vector<double>& obs) override;
  const std::vector<double>& hidden() const { return h_; }

 private:
  const RpnParams* rpn_;
  std::vector<double> h_;
};

// Behavior cloning against a scripted expert, with later rounds collected
// from the student's own rollouts and relabeled by the expert so the data
// covers the states the student actually visits.
struct CloneConfig {
  int rounds = 6;
  int episodes_per_round = 5;
  int epochs = 30;  // passes over the dataset per round
  double lr = 3e-3;
  double max_norm = 5.0;
  int eval_episodes = 20;
  double target_return = std::numeric_limits<double>::infinity();  // early stop
  std::uint64_t seed = 1;
};

struct CloneReport {
  std::vector<double> round_returns;
  double final_return = 0.0;
};

CloneReport clone_train(RpnParams& rpn, Environment& env,
                        const std::function<int(const std::vector<double>&)>& expert,
                        const CloneConfig& cfg);

struct DiscretizedRpn {
  RpnParams rpn;
  QbnParams obs_qbn;     // bottleneck over the feature vector
  QbnParams hidden_qbn;  // bottleneck over the hidden state
};

// Validates that the bottlenecks fit the policy's feature and hidden sizes.
DiscretizedRpn insert_qbns(const RpnParams& rpn, QbnParams obs_qbn, QbnParams hidden_qbn);

struct DrpnStepResult {
  TernaryCode obs_code;
  TernaryCode hidden_code;
  std::vector<double> f_hat;   // decoded feature vector fed to the GRU
  std::vector<double> h_cont;  // GRU output before quantization
  std::vector<double> h_hat;   // decoded hidden state fed to the heads
  std::vector<double> logits;
  int action = 0;
};

DrpnStepResult drpn_step(const DiscretizedRpn& d, const std::vector<double>& obs,
                         const std::vector<double>& h_hat_prev);

// The discrete start state: the hidden code of the zero hidden vector.
TernaryCode drpn_initial_code(const DiscretizedRpn& d);

class DrpnPolicy : public Policy {
 public:
  explicit DrpnPolicy(const DiscretizedRpn& d);
  void begin_episode() override;
  int act(const std::vector<double>& obs) override;

 private:
  const DiscretizedRpn* d_;
  std::vector<double> h_hat_;
};

// Retrains the whole discretized stack, straight-through gradients end to
// end, to match the frozen continuous policy's actions on the student's own
// rollouts.
struct FineTuneConfig {
  int rounds = 4;
  int episodes_per_round = 5;
  int epochs = 20;
  double lr = 3e-4;
  double max_norm = 5.0;
  int eval_episodes = 20;
  double target_return = std::numeric_limits<double>::infinity();  // early stop
  std::uint64_t seed = 2;
};

struct FineTuneReport {
  std::vector<double> round_returns;
  double final_return = 0.0;
  double final_agreement = 0.0;  // share of steps matching the teacher
};

FineTuneReport fine_tune(DiscretizedRpn& d, Environment& env, const FineTuneConfig& cfg);

// Rolls the discretized policy and records one transition tuple per step:
// hidden code before, action, observation code, hidden code after.
std::vector<Trace> collect_transitions(const DiscretizedRpn& d, Environment& env, int episodes,
                                       std::uint64_t seed_base);

// Encoder binding raw observations to the machine's obs alphabet: feature
// stack followed by the observation bottleneck's code.
ObsEncoder drpn_obs_encoder(const DiscretizedRpn& d);

// Feature and hidden vectors visited by the continuous policy, the training
// sets for the two bottlenecks. The zero initial hidden state is included
// once per episode.
struct RolloutData {
  std::vector<std::vector<double>> features;
  std::vector<std::vector<double>> hiddens;
  std::vector<double> returns;
};

RolloutData collect_rollout_data(const RpnParams& rpn, Environment& env, int episodes,
                                 std::uint64_t seed_base);

void save_rpn(const std::string& path, const RpnParams& rpn);
RpnParams load_rpn(const std::string& path);
void save_drpn(const std::string& path, const DiscretizedRpn& d);
DiscretizedRpn load_drpn(const std::string& path);

}  // namespace mmforge
