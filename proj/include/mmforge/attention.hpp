#pragma once

// Differential attention: which raw observation features drive the machine
// to treat two observations differently. The response being attributed is
// the pre-activation of the encoder's quantizing layer (a smooth function of
// the observation, optionally through the policy's feature stack), and the
// attribution is Integrated Gradients with the second observation as the
// baseline, so each response component's attributions sum to exactly its
// difference between the two observations.

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/code.hpp"
#include "mmforge/neural.hpp"
#include "mmforge/tensor.hpp"

namespace mmforge {

struct IdenticalCodes : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Scalar function with gradient: returns f(x) and fills *grad with df/dx
// when grad is non-null.
using ScalarWithGrad =
    std::function<double(const std::vector<double>&, std::vector<double>*)>;

struct IgResult {
  std::vector<double> attributions;
  double value = 0.0;           // f(input)
  double baseline_value = 0.0;  // f(baseline)
};

// Midpoint-rule Integrated Gradients with `steps` gradient evaluations along
// the straight path from baseline to input.
IgResult integrated_gradients(const ScalarWithGrad& f, const std::vector<double>& input,
                              const std::vector<double>& baseline, int steps = 64);

// The smooth response whose components are attributed: pre-activation of the
// encoder's final (quantizing) layer, composed with an optional upstream
// feature stack.
class ObsResponse {
 public:
  // Both networks are captured by value; phi may be null for raw inputs.
  ObsResponse(const FeedForward* phi, FeedForward encoder);

  std::size_t in_dim() const;
  std::size_t out_dim() const { return encoder_.back().out_dim(); }

  // Component j of the response at x; fills *grad with its input gradient.
  double component(const std::vector<double>& x, std::size_t j,
                   std::vector<double>* grad) const;
  // The ternary code the encoder assigns to x (through phi when present).
  TernaryCode code(const std::vector<double>& x) const;

 private:
  FeedForward phi_;  // empty when absent
  FeedForward encoder_;
};

struct AttentionMap {
  std::vector<std::size_t> components;  // response components where codes differ
  Tensor attributions;                  // [components x input features]
  std::vector<double> deltas;           // response difference per component
  std::vector<double> completeness_gap;  // |sum(row) - delta| per component
};

// Attributions for every response component whose quantized value differs
// between the two observations. Throws IdenticalCodes when the codes match.
AttentionMap differential_map(const ObsResponse& response, const std::vector<double>& obs,
                              const std::vector<double>& baseline_obs, int steps = 64);

// Input features ordered by total |attribution| across components, largest
// first, ties to the lower index.
std::vector<std::size_t> rank_features(const AttentionMap& map);

std::string attention_map_to_json(const AttentionMap& map);

// One line per input feature, most attributed first: rank, feature index,
// total |attribution|.
std::string ranked_features_csv(const AttentionMap& map);

}  // namespace mmforge
