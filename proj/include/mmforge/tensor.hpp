#pragma once

// Minimal dense tensor of doubles. Networks in this project are small enough
// that a flat vector with a shape annotation covers every need; anything
// heavier would be ballast.

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <vector>

namespace mmforge {

struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape_in) {
    Tensor t;
    t.shape = std::move(shape_in);
    std::size_t n = 1;
    for (auto d : t.shape) n *= d;
    t.data.assign(n, 0.0);
    return t;
  }

  static Tensor matrix(std::size_t rows, std::size_t cols) { return zeros({rows, cols}); }
  static Tensor vector(std::size_t n) { return zeros({n}); }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { assert(shape.size() == 2); return shape[0]; }
  std::size_t cols() const { assert(shape.size() == 2); return shape[1]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  double* ptr() { return data.data(); }
  const double* ptr() const { return data.data(); }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

}  // namespace mmforge
