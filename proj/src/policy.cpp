#include "mmforge/policy.hpp"

#include <algorithm>
#include <numeric>
#include <utility>

#include "mmforge/checkpoint.hpp"

namespace mmforge {

namespace {

void zero_all(const std::vector<Tensor*>& grads) {
  for (Tensor* g : grads) g->fill(0.0);
}

std::vector<double> add(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

void fisher_yates(std::vector<std::size_t>& order, Rng& rng) {
  for (std::size_t i = order.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
    std::swap(order[i - 1], order[j]);
  }
}

}  // namespace

RpnParams make_rpn(std::size_t obs_dim, std::size_t action_count, std::uint64_t seed,
                   std::size_t feature_dim, std::size_t hidden_dim) {
  Rng rng = Rng(seed).child("rpn-init");
  RpnParams rpn;
  rpn.features = make_ff(obs_dim, {2 * feature_dim, feature_dim},
                         {Activation::Elu, Activation::Relu6}, rng);
  rpn.gru = make_gru(feature_dim, hidden_dim, rng);
  rpn.policy_head = make_layer(hidden_dim, action_count, Activation::Identity, rng);
  rpn.value_head = make_layer(hidden_dim, 1, Activation::Identity, rng);
  return rpn;
}

RpnStepResult rpn_step(const RpnParams& rpn, const std::vector<double>& obs,
                       const std::vector<double>& h_prev) {
  RpnStepResult out;
  out.features = ff_forward(rpn.features, obs);
  out.hidden = gru_forward(rpn.gru, out.features, h_prev);
  out.logits = dense_forward(rpn.policy_head, out.hidden);
  out.action = argmax(out.logits);
  return out;
}

int RpnPolicy::act(const std::vector<double>& obs) {
  RpnStepResult step = rpn_step(*rpn_, obs, h_);
  h_ = std::move(step.hidden);
  return step.action;
}

namespace {

using LabeledEpisode = std::vector<std::pair<std::vector<double>, int>>;

struct RpnGrads {
  std::vector<LayerGrads> features;
  GruGrads gru;
  LayerGrads policy;
};

// One full-episode pass: mean cross entropy against the labels, gradients
// accumulated by backpropagation through time.
double rpn_episode_bptt(const RpnParams& rpn, const LabeledEpisode& episode, RpnGrads& grads) {
  const std::size_t T = episode.size();
  std::vector<FeedForwardCache> fcache(T);
  std::vector<GruCache> gcache(T);
  std::vector<DenseCache> pcache(T);
  std::vector<std::vector<double>> glogits(T);

  std::vector<double> h(rpn.hidden_dim(), 0.0);
  double loss = 0.0;
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::vector<double> f = ff_forward(rpn.features, episode[t].first, &fcache[t]);
    h = gru_forward(rpn.gru, f, h, &gcache[t]);
    std::vector<double> logits = dense_forward(rpn.policy_head, h, &pcache[t]);
    SoftmaxCrossEntropy ce = softmax_cross_entropy(logits, episode[t].second);
    loss += ce.loss * inv_t;
    glogits[t] = std::move(ce.grad);
    for (double& g : glogits[t]) g *= inv_t;
  }

  std::vector<double> gh_carry(rpn.hidden_dim(), 0.0);
  for (std::size_t t = T; t-- > 0;) {
    std::vector<double> gh =
        add(dense_backward(rpn.policy_head, pcache[t], glogits[t], grads.policy), gh_carry);
    std::vector<double> gf(rpn.feature_dim(), 0.0);
    std::vector<double> gh_prev(rpn.hidden_dim(), 0.0);
    gru_backward(rpn.gru, gcache[t], gh, gf, gh_prev, grads.gru);
    ff_backward(rpn.features, fcache[t], gf, grads.features);
    gh_carry = std::move(gh_prev);
  }
  return loss;
}

}  // namespace

CloneReport clone_train(RpnParams& rpn, Environment& env,
                        const std::function<int(const std::vector<double>&)>& expert,
                        const CloneConfig& cfg) {
  Rng root(cfg.seed);
  Rng env_seeds = root.child("clone-env-seeds");
  Rng shuffle = root.child("clone-shuffle");
  const std::uint64_t eval_base = root.child("clone-eval").next_u64();

  std::vector<Tensor*> params = param_list(rpn.features);
  for (Tensor* p : param_list(rpn.gru)) params.push_back(p);
  params.push_back(&rpn.policy_head.w);
  params.push_back(&rpn.policy_head.b);

  RpnGrads grads{zero_grads(rpn.features), zero_grads(rpn.gru), zero_grads(rpn.policy_head)};
  std::vector<Tensor*> grad_ptrs = grad_list(grads.features);
  for (Tensor* g : grad_list(grads.gru)) grad_ptrs.push_back(g);
  grad_ptrs.push_back(&grads.policy.gw);
  grad_ptrs.push_back(&grads.policy.gb);

  AdamState adam = make_adam_state(params);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  CloneReport report;
  std::vector<LabeledEpisode> dataset;
  for (int round = 0; round < cfg.rounds; ++round) {
    // Round 0 follows the expert; later rounds follow the student so the
    // dataset covers its own state distribution, still labeled by the expert.
    for (int k = 0; k < cfg.episodes_per_round; ++k) {
      LabeledEpisode episode;
      std::vector<double> obs = env.reset(env_seeds.next_u64());
      std::vector<double> h(rpn.hidden_dim(), 0.0);
      for (;;) {
        const int label = expert(obs);
        int action = label;
        if (round > 0) {
          RpnStepResult step = rpn_step(rpn, obs, h);
          h = std::move(step.hidden);
          action = step.action;
        }
        episode.emplace_back(obs, label);
        const Environment::StepResult sr = env.step(action);
        if (sr.done) break;
        obs = sr.obs;
      }
      dataset.push_back(std::move(episode));
    }

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      fisher_yates(order, shuffle);
      for (std::size_t idx : order) {
        zero_all(grad_ptrs);
        rpn_episode_bptt(rpn, dataset[idx], grads);
        clip_grad_norm(grad_ptrs, cfg.max_norm);
        adam_step(params, grad_ptrs, adam, adam_cfg);
      }
    }

    RpnPolicy policy(rpn);
    const EvalReport eval = evaluate(policy, env, cfg.eval_episodes, eval_base);
    report.round_returns.push_back(eval.mean_return);
    if (eval.mean_return >= cfg.target_return) break;
  }
  report.final_return = report.round_returns.back();
  return report;
}

DiscretizedRpn insert_qbns(const RpnParams& rpn, QbnParams obs_qbn, QbnParams hidden_qbn) {
  if (obs_qbn.kind != QbnKind::Observation || hidden_qbn.kind != QbnKind::Hidden) {
    throw std::invalid_argument("insert_qbns: bottleneck kinds are swapped");
  }
  if (obs_qbn.input_dim != rpn.feature_dim()) {
    throw ShapeMismatch("observation bottleneck input " + std::to_string(obs_qbn.input_dim) +
                        " does not match feature size " + std::to_string(rpn.feature_dim()));
  }
  if (hidden_qbn.input_dim != rpn.hidden_dim()) {
    throw ShapeMismatch("hidden bottleneck input " + std::to_string(hidden_qbn.input_dim) +
                        " does not match hidden size " + std::to_string(rpn.hidden_dim()));
  }
  return {rpn, std::move(obs_qbn), std::move(hidden_qbn)};
}

DrpnStepResult drpn_step(const DiscretizedRpn& d, const std::vector<double>& obs,
                         const std::vector<double>& h_hat_prev) {
  DrpnStepResult out;
  const std::vector<double> f = ff_forward(d.rpn.features, obs);
  out.obs_code = encode(d.obs_qbn, f).code;
  out.f_hat = decode(d.obs_qbn, out.obs_code);
  out.h_cont = gru_forward(d.rpn.gru, out.f_hat, h_hat_prev);
  out.hidden_code = encode(d.hidden_qbn, out.h_cont).code;
  out.h_hat = decode(d.hidden_qbn, out.hidden_code);
  out.logits = dense_forward(d.rpn.policy_head, out.h_hat);
  out.action = argmax(out.logits);
  return out;
}

TernaryCode drpn_initial_code(const DiscretizedRpn& d) {
  return encode(d.hidden_qbn, std::vector<double>(d.rpn.hidden_dim(), 0.0)).code;
}

DrpnPolicy::DrpnPolicy(const DiscretizedRpn& d) : d_(&d) { begin_episode(); }

void DrpnPolicy::begin_episode() { h_hat_ = decode(d_->hidden_qbn, drpn_initial_code(*d_)); }

int DrpnPolicy::act(const std::vector<double>& obs) {
  DrpnStepResult step = drpn_step(*d_, obs, h_hat_);
  h_hat_ = std::move(step.h_hat);
  return step.action;
}

namespace {

struct DrpnGrads {
  std::vector<LayerGrads> features, obs_enc, obs_dec, hid_enc, hid_dec;
  GruGrads gru;
  LayerGrads policy;
};

// Full-episode pass of the discretized stack against teacher labels. The
// quantizers run in their discrete forward mode; their backward pass is the
// straight-through inner-map gradient, so the whole chain trains end to end.
double drpn_episode_bptt(DiscretizedRpn& d, const LabeledEpisode& episode, DrpnGrads& grads) {
  const std::size_t T = episode.size();
  std::vector<FeedForwardCache> fcache(T), oec(T), odc(T), hec(T), hdc(T);
  std::vector<GruCache> gcache(T);
  std::vector<DenseCache> pcache(T);
  std::vector<std::vector<double>> glogits(T);

  FeedForwardCache init_enc, init_dec;
  const std::vector<double> zeros_h(d.rpn.hidden_dim(), 0.0);
  std::vector<double> h_hat = ff_forward(
      d.hidden_qbn.decoder, ff_forward(d.hidden_qbn.encoder, zeros_h, &init_enc), &init_dec);

  double loss = 0.0;
  const double inv_t = 1.0 / static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t) {
    const std::vector<double> f = ff_forward(d.rpn.features, episode[t].first, &fcache[t]);
    const std::vector<double> code_o = ff_forward(d.obs_qbn.encoder, f, &oec[t]);
    const std::vector<double> f_hat = ff_forward(d.obs_qbn.decoder, code_o, &odc[t]);
    const std::vector<double> h_cont = gru_forward(d.rpn.gru, f_hat, h_hat, &gcache[t]);
    const std::vector<double> code_h = ff_forward(d.hidden_qbn.encoder, h_cont, &hec[t]);
    h_hat = ff_forward(d.hidden_qbn.decoder, code_h, &hdc[t]);
    std::vector<double> logits = dense_forward(d.rpn.policy_head, h_hat, &pcache[t]);
    SoftmaxCrossEntropy ce = softmax_cross_entropy(logits, episode[t].second);
    loss += ce.loss * inv_t;
    glogits[t] = std::move(ce.grad);
    for (double& g : glogits[t]) g *= inv_t;
  }

  std::vector<double> gh_hat_carry(d.rpn.hidden_dim(), 0.0);
  for (std::size_t t = T; t-- > 0;) {
    const std::vector<double> gh_hat =
        add(dense_backward(d.rpn.policy_head, pcache[t], glogits[t], grads.policy),
            gh_hat_carry);
    const std::vector<double> gcode_h =
        ff_backward(d.hidden_qbn.decoder, hdc[t], gh_hat, grads.hid_dec);
    const std::vector<double> gh_cont =
        ff_backward(d.hidden_qbn.encoder, hec[t], gcode_h, grads.hid_enc);
    std::vector<double> gf_hat(d.rpn.feature_dim(), 0.0);
    std::vector<double> gh_prev(d.rpn.hidden_dim(), 0.0);
    gru_backward(d.rpn.gru, gcache[t], gh_cont, gf_hat, gh_prev, grads.gru);
    const std::vector<double> gcode_o =
        ff_backward(d.obs_qbn.decoder, odc[t], gf_hat, grads.obs_dec);
    const std::vector<double> gf = ff_backward(d.obs_qbn.encoder, oec[t], gcode_o, grads.obs_enc);
    ff_backward(d.rpn.features, fcache[t], gf, grads.features);
    gh_hat_carry = std::move(gh_prev);
  }
  // The initial decoded hidden state is part of the graph too.
  const std::vector<double> gcode0 =
      ff_backward(d.hidden_qbn.decoder, init_dec, gh_hat_carry, grads.hid_dec);
  ff_backward(d.hidden_qbn.encoder, init_enc, gcode0, grads.hid_enc);
  return loss;
}

}  // namespace

FineTuneReport fine_tune(DiscretizedRpn& d, Environment& env, const FineTuneConfig& cfg) {
  Rng root(cfg.seed);
  Rng env_seeds = root.child("finetune-env-seeds");
  Rng shuffle = root.child("finetune-shuffle");
  const std::uint64_t eval_base = root.child("finetune-eval").next_u64();

  const RpnParams teacher = d.rpn;

  std::vector<Tensor*> params = param_list(d.rpn.features);
  for (Tensor* p : param_list(d.rpn.gru)) params.push_back(p);
  params.push_back(&d.rpn.policy_head.w);
  params.push_back(&d.rpn.policy_head.b);
  for (Tensor* p : param_list(d.obs_qbn.encoder)) params.push_back(p);
  for (Tensor* p : param_list(d.obs_qbn.decoder)) params.push_back(p);
  for (Tensor* p : param_list(d.hidden_qbn.encoder)) params.push_back(p);
  for (Tensor* p : param_list(d.hidden_qbn.decoder)) params.push_back(p);

  DrpnGrads grads{zero_grads(d.rpn.features),     zero_grads(d.obs_qbn.encoder),
                  zero_grads(d.obs_qbn.decoder),  zero_grads(d.hidden_qbn.encoder),
                  zero_grads(d.hidden_qbn.decoder), zero_grads(d.rpn.gru),
                  zero_grads(d.rpn.policy_head)};
  std::vector<Tensor*> grad_ptrs = grad_list(grads.features);
  for (Tensor* g : grad_list(grads.obs_enc)) grad_ptrs.push_back(g);
  for (Tensor* g : grad_list(grads.obs_dec)) grad_ptrs.push_back(g);
  for (Tensor* g : grad_list(grads.hid_enc)) grad_ptrs.push_back(g);
  for (Tensor* g : grad_list(grads.hid_dec)) grad_ptrs.push_back(g);
  for (Tensor* g : grad_list(grads.gru)) grad_ptrs.push_back(g);
  grad_ptrs.push_back(&grads.policy.gw);
  grad_ptrs.push_back(&grads.policy.gb);

  AdamState adam = make_adam_state(params);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  auto teacher_labels = [&teacher](const std::vector<std::vector<double>>& obs_seq) {
    std::vector<int> labels;
    std::vector<double> h(teacher.hidden_dim(), 0.0);
    for (const auto& obs : obs_seq) {
      RpnStepResult step = rpn_step(teacher, obs, h);
      h = std::move(step.hidden);
      labels.push_back(step.action);
    }
    return labels;
  };

  auto collect_round = [&](std::vector<LabeledEpisode>& dataset, double* agreement) {
    long long agree = 0, total = 0;
    for (int k = 0; k < cfg.episodes_per_round; ++k) {
      std::vector<std::vector<double>> obs_seq;
      std::vector<int> student_actions;
      std::vector<double> obs = env.reset(env_seeds.next_u64());
      std::vector<double> h_hat = decode(d.hidden_qbn, drpn_initial_code(d));
      for (;;) {
        DrpnStepResult step = drpn_step(d, obs, h_hat);
        obs_seq.push_back(obs);
        student_actions.push_back(step.action);
        h_hat = std::move(step.h_hat);
        const Environment::StepResult sr = env.step(step.action);
        if (sr.done) break;
        obs = sr.obs;
      }
      const std::vector<int> labels = teacher_labels(obs_seq);
      LabeledEpisode episode;
      for (std::size_t t = 0; t < obs_seq.size(); ++t) {
        episode.emplace_back(std::move(obs_seq[t]), labels[t]);
        agree += student_actions[t] == labels[t] ? 1 : 0;
        ++total;
      }
      dataset.push_back(std::move(episode));
    }
    if (agreement && total > 0) {
      *agreement = static_cast<double>(agree) / static_cast<double>(total);
    }
  };

  FineTuneReport report;
  std::vector<LabeledEpisode> dataset;
  for (int round = 0; round < cfg.rounds; ++round) {
    collect_round(dataset, &report.final_agreement);

    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      fisher_yates(order, shuffle);
      for (std::size_t idx : order) {
        zero_all(grad_ptrs);
        drpn_episode_bptt(d, dataset[idx], grads);
        clip_grad_norm(grad_ptrs, cfg.max_norm);
        adam_step(params, grad_ptrs, adam, adam_cfg);
      }
    }

    DrpnPolicy policy(d);
    const EvalReport eval = evaluate(policy, env, cfg.eval_episodes, eval_base);
    report.round_returns.push_back(eval.mean_return);
    if (eval.mean_return >= cfg.target_return) break;
  }
  report.final_return = report.round_returns.back();

  std::vector<LabeledEpisode> probe;
  collect_round(probe, &report.final_agreement);
  return report;
}

std::vector<Trace> collect_transitions(const DiscretizedRpn& d, Environment& env, int episodes,
                                       std::uint64_t seed_base) {
  std::vector<Trace> traces;
  for (int e = 0; e < episodes; ++e) {
    Trace trace;
    std::vector<double> obs = env.reset(seed_base + static_cast<std::uint64_t>(e));
    TernaryCode code_prev = drpn_initial_code(d);
    std::vector<double> h_hat = decode(d.hidden_qbn, code_prev);
    for (;;) {
      DrpnStepResult step = drpn_step(d, obs, h_hat);
      TraceStep ts;
      ts.h = code_prev;
      ts.a = step.action;
      ts.f = step.obs_code;
      ts.hn = step.hidden_code;
      trace.steps.push_back(std::move(ts));
      code_prev = step.hidden_code;
      h_hat = std::move(step.h_hat);
      const Environment::StepResult sr = env.step(step.action);
      trace.episode_return += sr.reward;
      if (sr.done) break;
      obs = sr.obs;
    }
    traces.push_back(std::move(trace));
  }
  return traces;
}

ObsEncoder drpn_obs_encoder(const DiscretizedRpn& d) {
  const FeedForward features = d.rpn.features;
  const QbnParams obs_qbn = d.obs_qbn;
  return [features, obs_qbn](const std::vector<double>& obs) {
    return encode(obs_qbn, ff_forward(features, obs)).code;
  };
}

RolloutData collect_rollout_data(const RpnParams& rpn, Environment& env, int episodes,
                                 std::uint64_t seed_base) {
  RolloutData data;
  for (int e = 0; e < episodes; ++e) {
    std::vector<double> obs = env.reset(seed_base + static_cast<std::uint64_t>(e));
    std::vector<double> h(rpn.hidden_dim(), 0.0);
    data.hiddens.push_back(h);
    double ret = 0.0;
    for (;;) {
      RpnStepResult step = rpn_step(rpn, obs, h);
      h = step.hidden;
      data.features.push_back(std::move(step.features));
      data.hiddens.push_back(h);
      const Environment::StepResult sr = env.step(step.action);
      ret += sr.reward;
      if (sr.done) break;
      obs = sr.obs;
    }
    data.returns.push_back(ret);
  }
  return data;
}

namespace {

void pack_ff(Checkpoint& ck, const std::string& prefix, const FeedForward& net) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    ck.tensors.emplace_back(prefix + "." + std::to_string(i) + ".w", net[i].w);
    ck.tensors.emplace_back(prefix + "." + std::to_string(i) + ".b", net[i].b);
  }
}

void pack_gru(Checkpoint& ck, const std::string& prefix, const GruParams& gru) {
  ck.tensors.emplace_back(prefix + ".wz", gru.wz);
  ck.tensors.emplace_back(prefix + ".uz", gru.uz);
  ck.tensors.emplace_back(prefix + ".bz", gru.bz);
  ck.tensors.emplace_back(prefix + ".wr", gru.wr);
  ck.tensors.emplace_back(prefix + ".ur", gru.ur);
  ck.tensors.emplace_back(prefix + ".br", gru.br);
  ck.tensors.emplace_back(prefix + ".wc", gru.wc);
  ck.tensors.emplace_back(prefix + ".uc", gru.uc);
  ck.tensors.emplace_back(prefix + ".bc", gru.bc);
}

FeedForward unpack_ff(const Checkpoint& ck, const std::string& prefix,
                      const std::vector<Activation>& acts) {
  FeedForward net;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    LayerParams layer;
    layer.w = ck.get(prefix + "." + std::to_string(i) + ".w");
    layer.b = ck.get(prefix + "." + std::to_string(i) + ".b");
    layer.act = acts[i];
    net.push_back(std::move(layer));
  }
  return net;
}

GruParams unpack_gru(const Checkpoint& ck, const std::string& prefix) {
  GruParams gru;
  gru.wz = ck.get(prefix + ".wz");
  gru.uz = ck.get(prefix + ".uz");
  gru.bz = ck.get(prefix + ".bz");
  gru.wr = ck.get(prefix + ".wr");
  gru.ur = ck.get(prefix + ".ur");
  gru.br = ck.get(prefix + ".br");
  gru.wc = ck.get(prefix + ".wc");
  gru.uc = ck.get(prefix + ".uc");
  gru.bc = ck.get(prefix + ".bc");
  return gru;
}

LayerParams unpack_head(const Checkpoint& ck, const std::string& prefix) {
  LayerParams head;
  head.w = ck.get(prefix + ".w");
  head.b = ck.get(prefix + ".b");
  head.act = Activation::Identity;
  return head;
}

std::vector<Activation> acts_from_meta(const nlohmann::json& names) {
  std::vector<Activation> acts;
  for (const auto& n : names) acts.push_back(activation_from_name(n.get<std::string>()));
  return acts;
}

nlohmann::json acts_to_meta(const FeedForward& net) {
  nlohmann::json names = nlohmann::json::array();
  for (const auto& l : net) names.push_back(activation_name(l.act));
  return names;
}

void pack_rpn(Checkpoint& ck, const std::string& prefix, const RpnParams& rpn,
              nlohmann::json& meta) {
  meta["feature_acts"] = acts_to_meta(rpn.features);
  pack_ff(ck, prefix + "features", rpn.features);
  pack_gru(ck, prefix + "gru", rpn.gru);
  ck.tensors.emplace_back(prefix + "policy.w", rpn.policy_head.w);
  ck.tensors.emplace_back(prefix + "policy.b", rpn.policy_head.b);
  ck.tensors.emplace_back(prefix + "value.w", rpn.value_head.w);
  ck.tensors.emplace_back(prefix + "value.b", rpn.value_head.b);
}

RpnParams unpack_rpn(const Checkpoint& ck, const std::string& prefix,
                     const nlohmann::json& meta) {
  RpnParams rpn;
  rpn.features = unpack_ff(ck, prefix + "features", acts_from_meta(meta.at("feature_acts")));
  rpn.gru = unpack_gru(ck, prefix + "gru");
  rpn.policy_head = unpack_head(ck, prefix + "policy");
  rpn.value_head = unpack_head(ck, prefix + "value");
  return rpn;
}

void pack_qbn(Checkpoint& ck, const std::string& prefix, const QbnParams& q,
              nlohmann::json& meta) {
  meta[prefix + "kind"] = q.kind == QbnKind::Observation ? "observation" : "hidden";
  meta[prefix + "input_dim"] = q.input_dim;
  meta[prefix + "bottleneck"] = q.bottleneck;
  pack_ff(ck, prefix + "encoder", q.encoder);
  pack_ff(ck, prefix + "decoder", q.decoder);
}

QbnParams unpack_qbn(const Checkpoint& ck, const std::string& prefix,
                     const nlohmann::json& meta) {
  const std::string kind = meta.at(prefix + "kind").get<std::string>();
  QbnParams q;
  q.kind = kind == "observation" ? QbnKind::Observation : QbnKind::Hidden;
  q.input_dim = meta.at(prefix + "input_dim").get<std::size_t>();
  q.bottleneck = meta.at(prefix + "bottleneck").get<std::size_t>();
  q.encoder = unpack_ff(ck, prefix + "encoder",
                        {Activation::Tanh, Activation::Tanh, Activation::TernaryTanh});
  const Activation out_act =
      q.kind == QbnKind::Observation ? Activation::Relu6 : Activation::Tanh;
  q.decoder = unpack_ff(ck, prefix + "decoder", {Activation::Tanh, Activation::Tanh, out_act});
  return q;
}

}  // namespace

void save_rpn(const std::string& path, const RpnParams& rpn) {
  Checkpoint ck;
  ck.meta["type"] = "rpn";
  pack_rpn(ck, "", rpn, ck.meta);
  save_checkpoint(path, ck);
}

RpnParams load_rpn(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("type", "") != "rpn") {
    throw CheckpointError(path + " is not a policy checkpoint");
  }
  return unpack_rpn(ck, "", ck.meta);
}

void save_drpn(const std::string& path, const DiscretizedRpn& d) {
  Checkpoint ck;
  ck.meta["type"] = "drpn";
  pack_rpn(ck, "rpn.", d.rpn, ck.meta);
  pack_qbn(ck, "obsq.", d.obs_qbn, ck.meta);
  pack_qbn(ck, "hidq.", d.hidden_qbn, ck.meta);
  save_checkpoint(path, ck);
}

DiscretizedRpn load_drpn(const std::string& path) {
  const Checkpoint ck = load_checkpoint(path);
  if (ck.meta.value("type", "") != "drpn") {
    throw CheckpointError(path + " is not a discretized policy checkpoint");
  }
  DiscretizedRpn d;
  d.rpn = unpack_rpn(ck, "rpn.", ck.meta);
  d.obs_qbn = unpack_qbn(ck, "obsq.", ck.meta);
  d.hidden_qbn = unpack_qbn(ck, "hidq.", ck.meta);
  return d;
}

}  // namespace mmforge
