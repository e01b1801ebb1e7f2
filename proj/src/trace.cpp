#include "mmforge/trace.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace mmforge {

namespace {

nlohmann::json code_json(const TernaryCode& code) {
  nlohmann::json arr = nlohmann::json::array();
  for (auto v : code) arr.push_back(static_cast<int>(v));
  return arr;
}

TernaryCode code_from_json(const nlohmann::json& arr) {
  TernaryCode code;
  code.reserve(arr.size());
  for (const auto& v : arr) {
    int x = v.get<int>();
    if (x < -1 || x > 1) throw std::invalid_argument("ternary entry out of range");
    code.push_back(static_cast<std::int8_t>(x));
  }
  return code;
}

}  // namespace

std::string traces_to_jsonl(const std::vector<Trace>& traces) {
  std::ostringstream out;
  for (const auto& tr : traces) {
    nlohmann::json steps = nlohmann::json::array();
    for (const auto& s : tr.steps) {
      steps.push_back({{"h", code_json(s.h)},
                       {"a", s.a},
                       {"f", code_json(s.f)},
                       {"hn", code_json(s.hn)}});
    }
    nlohmann::json line = {{"return", tr.episode_return}, {"steps", steps}};
    out << line.dump() << '\n';
  }
  return out.str();
}

std::vector<Trace> traces_from_jsonl(const std::string& text) {
  std::vector<Trace> traces;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      Trace tr;
      tr.episode_return = j.at("return").get<double>();
      for (const auto& s : j.at("steps")) {
        TraceStep step;
        step.h = code_from_json(s.at("h"));
        step.a = s.at("a").get<int>();
        step.f = code_from_json(s.at("f"));
        step.hn = code_from_json(s.at("hn"));
        tr.steps.push_back(std::move(step));
      }
      traces.push_back(std::move(tr));
    } catch (const std::exception& e) {
      throw ParseError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return traces;
}

void save_traces(const std::string& path, const std::vector<Trace>& traces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << traces_to_jsonl(traces);
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<Trace> load_traces(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return traces_from_jsonl(buf.str());
}

}  // namespace mmforge
