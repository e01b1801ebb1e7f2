#pragma once

// Quantized bottleneck network: a ternary-bottleneck autoencoder trained to
// reproduce its input. The encoder's final layer quantizes to {-1, 0, +1}
// via TernaryTanh with a straight-through gradient, so a trained QBN turns a
// continuous vector into a discrete code and back into a nearby continuous
// vector. Observation QBNs decode through ReLU6, hidden-state QBNs through
// Tanh, matching the value ranges they reconstruct.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/neural.hpp"
#include "mmforge/rng.hpp"

namespace mmforge {

struct EmptyDataset : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class QbnKind { Observation, Hidden };

using TernaryCode = std::vector<std::int8_t>;

struct QbnParams {
  QbnKind kind = QbnKind::Observation;
  std::size_t input_dim = 0;
  std::size_t bottleneck = 0;
  FeedForward encoder;  // widths [8B, 4B, B], final activation TernaryTanh
  FeedForward decoder;  // widths [4B, 8B, input_dim]
};

QbnParams build_qbn(QbnKind kind, std::size_t input_dim, std::size_t bottleneck, Rng& rng);

struct EncodeResult {
  TernaryCode code;
  std::vector<double> continuous;  // final encoder layer pre-activation
};

EncodeResult encode(const QbnParams& q, const std::vector<double>& x);
std::vector<double> decode(const QbnParams& q, const TernaryCode& code);
// decode(encode(x)), the full bottleneck round trip.
std::vector<double> autoencode(const QbnParams& q, const std::vector<double>& x);

struct QbnTrainConfig {
  double lr = 1e-4;
  double max_norm = 5.0;
  int epochs = 200;
  int batch = 32;
  int patience = 20;  // epochs without improvement before early stop
  std::uint64_t seed = 0;
};

struct QbnTrainReport {
  double initial_loss = 0.0;  // mean reconstruction MSE before training
  double final_loss = 0.0;    // and after
  std::vector<double> epoch_loss;
  int epochs_run = 0;
};

QbnTrainReport train_qbn(QbnParams& q, const std::vector<std::vector<double>>& data,
                         const QbnTrainConfig& cfg);

double reconstruction_loss(const QbnParams& q, const std::vector<std::vector<double>>& data);
int distinct_code_count(const QbnParams& q, const std::vector<std::vector<double>>& data);

void save_qbn(const std::string& path, const QbnParams& q);
QbnParams load_qbn(const std::string& path);

}  // namespace mmforge
