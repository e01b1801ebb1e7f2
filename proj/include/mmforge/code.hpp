#pragma once

// Ternary codes: the discrete alphabet produced by quantized bottlenecks.
// Serialized as strings over '+', '0', '-'.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mmforge {

using TernaryCode = std::vector<std::int8_t>;

inline std::string code_to_string(const TernaryCode& code) {
  std::string s;
  s.reserve(code.size());
  for (auto v : code) s.push_back(v > 0 ? '+' : (v < 0 ? '-' : '0'));
  return s;
}

inline TernaryCode code_from_string(const std::string& s) {
  TernaryCode code;
  code.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '+': code.push_back(1); break;
      case '0': code.push_back(0); break;
      case '-': code.push_back(-1); break;
      default: throw std::invalid_argument(std::string("bad ternary digit '") + c + "'");
    }
  }
  return code;
}

inline int hamming(const TernaryCode& a, const TernaryCode& b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("ternary codes differ in length");
  }
  int d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

inline std::vector<double> code_to_doubles(const TernaryCode& code) {
  std::vector<double> x;
  x.reserve(code.size());
  for (auto v : code) x.push_back(static_cast<double>(v));
  return x;
}

// Rounds each component to the nearest of {-1, 0, +1}.
inline TernaryCode nearest_ternary(const std::vector<double>& x) {
  TernaryCode code;
  code.reserve(x.size());
  for (double v : x) code.push_back(v > 0.5 ? 1 : (v < -0.5 ? -1 : 0));
  return code;
}

}  // namespace mmforge
