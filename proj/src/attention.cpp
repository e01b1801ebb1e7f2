#include "mmforge/attention.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace mmforge {

IgResult integrated_gradients(const ScalarWithGrad& f, const std::vector<double>& input,
                              const std::vector<double>& baseline, int steps) {
  if (input.size() != baseline.size()) {
    throw ShapeMismatch("integrated_gradients: input and baseline sizes differ");
  }
  if (steps < 1) throw std::invalid_argument("integrated_gradients: steps must be positive");

  const std::size_t n = input.size();
  std::vector<double> acc(n, 0.0), grad(n, 0.0), point(n);
  for (int k = 1; k <= steps; ++k) {
    const double alpha = (static_cast<double>(k) - 0.5) / static_cast<double>(steps);
    for (std::size_t i = 0; i < n; ++i) {
      point[i] = baseline[i] + alpha * (input[i] - baseline[i]);
    }
    f(point, &grad);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(grad[i])) {
        throw NonFiniteGradient("integrated_gradients: gradient is not finite");
      }
      acc[i] += grad[i];
    }
  }

  IgResult out;
  out.attributions.resize(n);
  const double inv_steps = 1.0 / static_cast<double>(steps);
  for (std::size_t i = 0; i < n; ++i) {
    out.attributions[i] = (input[i] - baseline[i]) * acc[i] * inv_steps;
  }
  out.value = f(input, nullptr);
  out.baseline_value = f(baseline, nullptr);
  return out;
}

ObsResponse::ObsResponse(const FeedForward* phi, FeedForward encoder)
    : encoder_(std::move(encoder)) {
  if (phi != nullptr) phi_ = *phi;
  if (encoder_.empty()) throw ShapeMismatch("ObsResponse: encoder has no layers");
}

std::size_t ObsResponse::in_dim() const {
  return phi_.empty() ? encoder_.front().in_dim() : phi_.front().in_dim();
}

double ObsResponse::component(const std::vector<double>& x, std::size_t j,
                              std::vector<double>* grad) const {
  if (j >= out_dim()) throw std::out_of_range("ObsResponse: component out of range");

  FeedForwardCache phi_cache, enc_cache;
  std::vector<double> cur = x;
  if (!phi_.empty()) cur = ff_forward(phi_, cur, grad ? &phi_cache : nullptr);
  // Run all encoder layers for their caches; the response is the last
  // layer's pre-activation, read from the cache (or recomputed when no
  // gradient is needed).
  DenseCache last;
  for (std::size_t i = 0; i + 1 < encoder_.size(); ++i) {
    cur = dense_forward(encoder_[i], cur, grad ? &enc_cache.layers.emplace_back() : nullptr);
    if (grad) cur = enc_cache.layers.back().y;
  }
  dense_forward(encoder_.back(), cur, &last);
  const double value = last.z[j];
  if (grad == nullptr) return value;

  // d z_j / d input: row j of the last weight matrix pushed back through the
  // earlier layers.
  const LayerParams& top = encoder_.back();
  std::vector<double> g(top.in_dim());
  for (std::size_t i = 0; i < top.in_dim(); ++i) g[i] = top.w(j, i);
  std::vector<LayerGrads> scratch;
  for (std::size_t i = encoder_.size() - 1; i-- > 0;) {
    scratch.assign(1, zero_grads(encoder_[i]));
    g = dense_backward(encoder_[i], enc_cache.layers[i], g, scratch[0]);
  }
  if (!phi_.empty()) {
    std::vector<LayerGrads> phi_scratch = zero_grads(phi_);
    g = ff_backward(phi_, phi_cache, g, phi_scratch);
  }
  *grad = std::move(g);
  return value;
}

TernaryCode ObsResponse::code(const std::vector<double>& x) const {
  std::vector<double> cur = x;
  if (!phi_.empty()) cur = ff_forward(phi_, cur);
  const std::vector<double> y = ff_forward(encoder_, cur);
  return nearest_ternary(y);
}

AttentionMap differential_map(const ObsResponse& response, const std::vector<double>& obs,
                              const std::vector<double>& baseline_obs, int steps) {
  const TernaryCode code_a = response.code(obs);
  const TernaryCode code_b = response.code(baseline_obs);
  AttentionMap map;
  for (std::size_t j = 0; j < code_a.size(); ++j) {
    if (code_a[j] != code_b[j]) map.components.push_back(j);
  }
  if (map.components.empty()) {
    throw IdenticalCodes("the two observations quantize to the same code");
  }

  map.attributions = Tensor::matrix(map.components.size(), obs.size());
  for (std::size_t row = 0; row < map.components.size(); ++row) {
    const std::size_t j = map.components[row];
    const ScalarWithGrad f = [&response, j](const std::vector<double>& x,
                                            std::vector<double>* grad) {
      return response.component(x, j, grad);
    };
    const IgResult ig = integrated_gradients(f, obs, baseline_obs, steps);
    double sum = 0.0;
    for (std::size_t i = 0; i < ig.attributions.size(); ++i) {
      map.attributions(row, i) = ig.attributions[i];
      sum += ig.attributions[i];
    }
    const double delta = ig.value - ig.baseline_value;
    map.deltas.push_back(delta);
    map.completeness_gap.push_back(std::abs(sum - delta));
  }
  return map;
}

std::vector<std::size_t> rank_features(const AttentionMap& map) {
  const std::size_t n = map.attributions.cols();
  std::vector<double> total(n, 0.0);
  for (std::size_t r = 0; r < map.attributions.rows(); ++r) {
    for (std::size_t i = 0; i < n; ++i) total[i] += std::abs(map.attributions(r, i));
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return total[a] > total[b]; });
  return order;
}

std::string attention_map_to_json(const AttentionMap& map) {
  nlohmann::json j;
  j["components"] = map.components;
  j["deltas"] = map.deltas;
  j["completeness_gap"] = map.completeness_gap;
  j["attributions"] = nlohmann::json::array();
  for (std::size_t r = 0; r < map.attributions.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t c = 0; c < map.attributions.cols(); ++c) {
      row.push_back(map.attributions(r, c));
    }
    j["attributions"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

std::string ranked_features_csv(const AttentionMap& map) {
  const std::size_t n = map.attributions.cols();
  std::vector<double> total(n, 0.0);
  for (std::size_t r = 0; r < map.attributions.rows(); ++r) {
    for (std::size_t i = 0; i < n; ++i) total[i] += std::abs(map.attributions(r, i));
  }
  const std::vector<std::size_t> order = rank_features(map);
  std::ostringstream out;
  out << "rank,feature,total_attribution\n";
  for (std::size_t r = 0; r < order.size(); ++r) {
    out << r << "," << order[r] << "," << total[order[r]] << "\n";
  }
  return out.str();
}

}  // namespace mmforge
