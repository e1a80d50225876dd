#pragma once

#include <filesystem>
#include <nlohmann/json.hpp>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdn::nn {

// File layout:
//   8 bytes   magic "RDNCKPT1"
//   8 bytes   manifest length, little-endian u64
//   manifest  JSON {"tensors": [{name, shape, offset, count}], "payload_bytes", "checksum", "metadata"}
//   payload   tensors as little-endian float32, at their manifest offsets
inline constexpr char kCheckpointMagic[9] = "RDNCKPT1";

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  std::vector<int> shape;
  std::vector<float> data;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const NamedTensor& find(const std::string& name) const;
  bool contains(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rdn::nn
