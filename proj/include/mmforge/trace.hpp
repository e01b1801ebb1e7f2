#pragma once

// Episode traces of a discretized recurrent policy: per step the discrete
// hidden state before the transition, the action taken, the discrete
// observation code, and the hidden state after. Stored as JSON lines, one
// episode per line:
//   {"return": <num>, "steps": [{"h": [...], "a": <int>, "f": [...], "hn": [...]}, ...]}

#include <stdexcept>
#include <string>
#include <vector>

#include "mmforge/code.hpp"

namespace mmforge {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TraceStep {
  TernaryCode h;   // hidden code before the step
  int a = 0;       // action emitted during the step
  TernaryCode f;   // observation code consumed
  TernaryCode hn;  // hidden code after the step
};

struct Trace {
  double episode_return = 0.0;
  std::vector<TraceStep> steps;
};

std::string traces_to_jsonl(const std::vector<Trace>& traces);
std::vector<Trace> traces_from_jsonl(const std::string& text);

void save_traces(const std::string& path, const std::vector<Trace>& traces);
std::vector<Trace> load_traces(const std::string& path);

}  // namespace mmforge
