#pragma once

// Parameter checkpoint file: a single JSON header line describing tensor
// names and shapes (plus free-form meta), followed by the tensor payloads as
// flat little-endian 64-bit reals in header order.

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mmforge/tensor.hpp"

namespace mmforge {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& get(const std::string& name) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mmforge
