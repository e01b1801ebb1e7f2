#include "mmforge/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace mmforge {

namespace {

constexpr const char* kFormatTag = "mmforge-ckpt-v1";

static_assert(sizeof(double) == 8, "checkpoint format assumes 8-byte doubles");

bool host_little_endian() {
  const std::uint16_t probe = 1;
  unsigned char byte;
  std::memcpy(&byte, &probe, 1);
  return byte == 1;
}

void byteswap_doubles(std::vector<double>& values) {
  for (double& v : values) {
    unsigned char bytes[8];
    std::memcpy(bytes, &v, 8);
    std::swap(bytes[0], bytes[7]);
    std::swap(bytes[1], bytes[6]);
    std::swap(bytes[2], bytes[5]);
    std::swap(bytes[3], bytes[4]);
    std::memcpy(&v, bytes, 8);
  }
}

}  // namespace

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor named '" + name + "'");
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["format"] = kFormatTag;
  header["meta"] = ckpt.meta.is_null() ? nlohmann::json::object() : ckpt.meta;
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    tensors.push_back({{"name", name}, {"shape", t.shape}});
  }
  header["tensors"] = tensors;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out << header.dump() << '\n';
  for (const auto& [name, t] : ckpt.tensors) {
    (void)name;
    if (host_little_endian()) {
      out.write(reinterpret_cast<const char*>(t.data.data()),
                static_cast<std::streamsize>(t.data.size() * 8));
    } else {
      std::vector<double> swapped = t.data;
      byteswap_doubles(swapped);
      out.write(reinterpret_cast<const char*>(swapped.data()),
                static_cast<std::streamsize>(swapped.size() * 8));
    }
  }
  if (!out) throw CheckpointError("write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  std::string header_line;
  if (!std::getline(in, header_line)) throw CheckpointError("missing header in '" + path + "'");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("bad header in '" + path + "': " + e.what());
  }
  if (header.value("format", "") != kFormatTag) {
    throw CheckpointError("'" + path + "' is not a recognized checkpoint");
  }

  Checkpoint ckpt;
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("tensors")) {
    Tensor t = Tensor::zeros(entry.at("shape").get<std::vector<std::size_t>>());
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(t.size() * 8));
    if (static_cast<std::size_t>(in.gcount()) != t.size() * 8) {
      throw CheckpointError("truncated payload in '" + path + "'");
    }
    if (!host_little_endian()) byteswap_doubles(t.data);
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace mmforge
