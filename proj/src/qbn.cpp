#include "mmforge/qbn.hpp"

#include <cmath>
#include <numeric>
#include <set>

#include "mmforge/checkpoint.hpp"

namespace mmforge {

QbnParams build_qbn(QbnKind kind, std::size_t input_dim, std::size_t bottleneck, Rng& rng) {
  QbnParams q;
  q.kind = kind;
  q.input_dim = input_dim;
  q.bottleneck = bottleneck;
  std::size_t b8 = 8 * bottleneck, b4 = 4 * bottleneck;
  q.encoder = make_ff(input_dim, {b8, b4, bottleneck},
                      {Activation::Tanh, Activation::Tanh, Activation::TernaryTanh}, rng);
  Activation out_act = kind == QbnKind::Observation ? Activation::Relu6 : Activation::Tanh;
  q.decoder =
      make_ff(bottleneck, {b4, b8, input_dim}, {Activation::Tanh, Activation::Tanh, out_act}, rng);
  return q;
}

EncodeResult encode(const QbnParams& q, const std::vector<double>& x) {
  FeedForwardCache cache;
  std::vector<double> y = ff_forward(q.encoder, x, &cache);
  EncodeResult out;
  out.continuous = cache.layers.back().z;
  out.code.resize(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out.code[i] = static_cast<std::int8_t>(y[i]);
  return out;
}

std::vector<double> decode(const QbnParams& q, const TernaryCode& code) {
  std::vector<double> x(code.begin(), code.end());
  return ff_forward(q.decoder, x);
}

std::vector<double> autoencode(const QbnParams& q, const std::vector<double>& x) {
  return ff_forward(q.decoder, ff_forward(q.encoder, x));
}

namespace {

double sample_loss(const QbnParams& q, const std::vector<double>& x) {
  std::vector<double> xhat = autoencode(q, x);
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = xhat[i] - x[i];
    acc += d * d;
  }
  return acc / static_cast<double>(x.size());
}

}  // namespace

double reconstruction_loss(const QbnParams& q, const std::vector<std::vector<double>>& data) {
  if (data.empty()) throw EmptyDataset("reconstruction_loss: no samples");
  double acc = 0.0;
  for (const auto& x : data) acc += sample_loss(q, x);
  return acc / static_cast<double>(data.size());
}

QbnTrainReport train_qbn(QbnParams& q, const std::vector<std::vector<double>>& data,
                         const QbnTrainConfig& cfg) {
  if (data.empty()) throw EmptyDataset("train_qbn: no samples");
  for (const auto& x : data) {
    if (x.size() != q.input_dim) {
      throw ShapeMismatch("train_qbn: sample dimension " + std::to_string(x.size()) +
                          ", expected " + std::to_string(q.input_dim));
    }
  }

  QbnTrainReport report;
  report.initial_loss = reconstruction_loss(q, data);

  std::vector<Tensor*> params = param_list(q.encoder);
  for (Tensor* p : param_list(q.decoder)) params.push_back(p);
  AdamState adam = make_adam_state(params);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  Rng rng = Rng(cfg.seed).child("qbn-train");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);

  double inv_dim = 1.0 / static_cast<double>(q.input_dim);
  double best = report.initial_loss;
  int stall = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Seeded Fisher-Yates; std::shuffle is implementation-defined.
    for (std::size_t i = order.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i) - 1));
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::size_t pos = 0;
    while (pos < order.size()) {
      std::size_t take = std::min<std::size_t>(cfg.batch, order.size() - pos);
      std::vector<LayerGrads> genc = zero_grads(q.encoder);
      std::vector<LayerGrads> gdec = zero_grads(q.decoder);
      double inv_batch = 1.0 / static_cast<double>(take);

      for (std::size_t k = 0; k < take; ++k) {
        const std::vector<double>& x = data[order[pos + k]];
        FeedForwardCache ec, dc;
        std::vector<double> code = ff_forward(q.encoder, x, &ec);
        std::vector<double> xhat = ff_forward(q.decoder, code, &dc);

        std::vector<double> gy(xhat.size());
        double loss = 0.0;
        for (std::size_t i = 0; i < xhat.size(); ++i) {
          double d = xhat[i] - x[i];
          loss += d * d;
          gy[i] = 2.0 * d * inv_dim * inv_batch;
        }
        epoch_loss += loss * inv_dim;

        std::vector<double> gcode = ff_backward(q.decoder, dc, gy, gdec);
        ff_backward(q.encoder, ec, gcode, genc);
      }

      std::vector<Tensor*> grads = grad_list(genc);
      for (Tensor* g : grad_list(gdec)) grads.push_back(g);
      clip_grad_norm(grads, cfg.max_norm);
      adam_step(params, grads, adam, adam_cfg);
      pos += take;
    }

    epoch_loss /= static_cast<double>(data.size());
    report.epoch_loss.push_back(epoch_loss);
    report.epochs_run = epoch + 1;

    if (epoch_loss < best - 1e-12) {
      best = epoch_loss;
      stall = 0;
    } else if (++stall >= cfg.patience) {
      break;
    }
  }

  report.final_loss = reconstruction_loss(q, data);
  return report;
}

int distinct_code_count(const QbnParams& q, const std::vector<std::vector<double>>& data) {
  std::set<TernaryCode> seen;
  for (const auto& x : data) seen.insert(encode(q, x).code);
  return static_cast<int>(seen.size());
}

namespace {

nlohmann::json acts_json(const FeedForward& net) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& l : net) out.push_back(activation_name(l.act));
  return out;
}

void push_ff(Checkpoint& ckpt, const std::string& prefix, const FeedForward& net) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    ckpt.tensors.emplace_back(prefix + "." + std::to_string(i) + ".w", net[i].w);
    ckpt.tensors.emplace_back(prefix + "." + std::to_string(i) + ".b", net[i].b);
  }
}

FeedForward pull_ff(const Checkpoint& ckpt, const std::string& prefix,
                    const nlohmann::json& acts) {
  FeedForward net;
  for (std::size_t i = 0; i < acts.size(); ++i) {
    LayerParams layer;
    layer.w = ckpt.get(prefix + "." + std::to_string(i) + ".w");
    layer.b = ckpt.get(prefix + "." + std::to_string(i) + ".b");
    layer.act = activation_from_name(acts[i].get<std::string>());
    net.push_back(std::move(layer));
  }
  return net;
}

}  // namespace

void save_qbn(const std::string& path, const QbnParams& q) {
  Checkpoint ckpt;
  ckpt.meta["type"] = "qbn";
  ckpt.meta["kind"] = q.kind == QbnKind::Observation ? "observation" : "hidden";
  ckpt.meta["input_dim"] = q.input_dim;
  ckpt.meta["bottleneck"] = q.bottleneck;
  ckpt.meta["encoder_acts"] = acts_json(q.encoder);
  ckpt.meta["decoder_acts"] = acts_json(q.decoder);
  push_ff(ckpt, "encoder", q.encoder);
  push_ff(ckpt, "decoder", q.decoder);
  save_checkpoint(path, ckpt);
}

QbnParams load_qbn(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.value("type", "") != "qbn") {
    throw CheckpointError("'" + path + "' is not a QBN checkpoint");
  }
  QbnParams q;
  q.kind = ckpt.meta.at("kind").get<std::string>() == "observation" ? QbnKind::Observation
                                                                    : QbnKind::Hidden;
  q.input_dim = ckpt.meta.at("input_dim").get<std::size_t>();
  q.bottleneck = ckpt.meta.at("bottleneck").get<std::size_t>();
  q.encoder = pull_ff(ckpt, "encoder", ckpt.meta.at("encoder_acts"));
  q.decoder = pull_ff(ckpt, "decoder", ckpt.meta.at("decoder_acts"));
  return q;
}

}  // namespace mmforge
