#pragma once

// Hand-rolled neural primitives: dense layers, a GRU cell, the ternary
// quantizing activation with its straight-through gradient, Adam, gradient
// clipping, and finite-difference gradient checking. Reverse mode is written
// out explicitly per structure; there is no computation-graph machinery.
// Everything is double precision and single-vector (batching is a loop).

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/rng.hpp"
#include "mmforge/tensor.hpp"

namespace mmforge {

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NonFiniteGradient : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Activation { Identity, Tanh, Relu6, Elu, TernaryTanh };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

// Smooth inner map of the ternary quantizer: 1.5*tanh(x) + 0.5*tanh(-3x).
double ternary_tanh_inner(double x);
// Quantized output: sign of the inner map where |inner| > 0.5, else 0.
double ternary_tanh_forward(double x);
// Straight-through: upstream gradient times d(inner)/dx, the quantization
// step itself treated as identity.
double ternary_tanh_backward(double x, double gy);

int argmax(const std::vector<double>& v);  // ties resolved to the lowest index

struct LayerParams {
  Tensor w;  // [out x in]
  Tensor b;  // [out]
  Activation act = Activation::Identity;

  std::size_t in_dim() const { return w.cols(); }
  std::size_t out_dim() const { return w.rows(); }
};

using FeedForward = std::vector<LayerParams>;

// Uniform +-1/sqrt(fan_in) init, draws consumed in layer order.
LayerParams make_layer(std::size_t in, std::size_t out, Activation act, Rng& rng);
FeedForward make_ff(std::size_t in, const std::vector<std::size_t>& widths,
                    const std::vector<Activation>& acts, Rng& rng);

struct DenseCache {
  std::vector<double> x;  // input
  std::vector<double> z;  // pre-activation
  std::vector<double> y;  // output
};

struct LayerGrads {
  Tensor gw, gb;
};

LayerGrads zero_grads(const LayerParams& layer);
std::vector<LayerGrads> zero_grads(const FeedForward& net);

// smooth_ternary replaces the quantization step by its inner map; gradient
// checking runs the whole comparison on that surrogate so the straight-through
// estimator has a well-defined reference.
std::vector<double> dense_forward(const LayerParams& layer, const std::vector<double>& x,
                                  DenseCache* cache = nullptr, bool smooth_ternary = false);
std::vector<double> dense_backward(const LayerParams& layer, const DenseCache& cache,
                                   const std::vector<double>& gy, LayerGrads& grads);

struct FeedForwardCache {
  std::vector<DenseCache> layers;
};

std::vector<double> ff_forward(const FeedForward& net, const std::vector<double>& x,
                               FeedForwardCache* cache = nullptr, bool smooth_ternary = false);
std::vector<double> ff_backward(const FeedForward& net, const FeedForwardCache& cache,
                                const std::vector<double>& gy, std::vector<LayerGrads>& grads);

// GRU cell, update-gate convention fixed by the zero-weight identity
// h' = (1-z) h + z c with z = sigmoid(.), c = tanh(Wc x + Uc (r h) + bc).
struct GruParams {
  Tensor wz, uz, bz;
  Tensor wr, ur, br;
  Tensor wc, uc, bc;

  std::size_t input_dim() const { return wz.cols(); }
  std::size_t hidden_dim() const { return wz.rows(); }
};

GruParams make_gru(std::size_t input, std::size_t hidden, Rng& rng);

struct GruCache {
  std::vector<double> x, h;
  std::vector<double> z, r, rh, c, hnew;
};

struct GruGrads {
  Tensor gwz, guz, gbz;
  Tensor gwr, gur, gbr;
  Tensor gwc, guc, gbc;
};

GruGrads zero_grads(const GruParams& gru);

std::vector<double> gru_forward(const GruParams& gru, const std::vector<double>& x,
                                const std::vector<double>& h, GruCache* cache = nullptr);
// Accumulates into gx, gh and grads; gh additionally receives the carry for
// backpropagation through time.
void gru_backward(const GruParams& gru, const GruCache& cache, const std::vector<double>& ghnew,
                  std::vector<double>& gx, std::vector<double>& gh, GruGrads& grads);

struct SoftmaxCrossEntropy {
  double loss;
  std::vector<double> grad;  // d loss / d logits
};
SoftmaxCrossEntropy softmax_cross_entropy(const std::vector<double>& logits, int label);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  long long t = 0;
};

// Parameter registries pair each tensor with its gradient by position.
std::vector<Tensor*> param_list(FeedForward& net);
std::vector<Tensor*> param_list(GruParams& gru);
std::vector<Tensor*> grad_list(std::vector<LayerGrads>& grads);
std::vector<Tensor*> grad_list(GruGrads& grads);

AdamState make_adam_state(const std::vector<Tensor*>& params);
void adam_step(const std::vector<Tensor*>& params, const std::vector<Tensor*>& grads,
               AdamState& state, const AdamConfig& cfg);

// Scales gradients in place so the global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<Tensor*>& grads, double max_norm);

// Central-difference check of the analytic parameter gradients of the scalar
// loss sum(net(x)). Returns the maximum error over all parameters, each
// tensor's errors measured relative to its largest gradient magnitude.
// Networks containing TernaryTanh are checked on the smooth surrogate.
// mutate, when set, post-processes the analytic gradients; tests use it to
// inject faults and confirm the checker catches them.
using GradMutator = std::function<void(std::vector<LayerGrads>&)>;
double grad_check(const FeedForward& net, const std::vector<double>& x, double eps,
                  const GradMutator& mutate = nullptr);

// Same check for the GRU cell: scalar loss sum(gru(x, h)), gradients taken
// in all nine parameter tensors.
double grad_check_gru(const GruParams& gru, const std::vector<double>& x,
                      const std::vector<double>& h, double eps);

}  // namespace mmforge
