#include "recurrdrive/nn/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace rdn::nn {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

std::uint64_t fnv1a(const char* data, std::size_t n) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << v;
  return os.str();
}

}  // namespace

const NamedTensor& Checkpoint::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::string payload;
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& t : checkpoint.tensors) {
    std::size_t count = 1;
    for (int d : t.shape) count *= static_cast<std::size_t>(d);
    if (count != t.data.size()) throw CheckpointError("tensor '" + t.name + "' does not match its shape");
    entries.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", payload.size()}, {"count", count}});
    payload.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
  }
  nlohmann::json manifest = {{"format_version", 1},
                             {"tensors", entries},
                             {"payload_bytes", payload.size()},
                             {"checksum", hex(fnv1a(payload.data(), payload.size()))},
                             {"metadata", checkpoint.metadata}};
  const std::string text = manifest.dump();
  const std::uint64_t len = text.size();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, 8);
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw CheckpointError("short write to " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw CheckpointError("not a checkpoint (bad magic): " + path.string());
  }
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (len > bytes.size() - 16) throw CheckpointError("truncated manifest in " + path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt manifest: ") + e.what());
  }
  const std::size_t payload_start = 16 + static_cast<std::size_t>(len);
  const std::size_t payload_size = bytes.size() - payload_start;
  try {
    if (manifest.at("format_version").get<int>() != 1) throw CheckpointError("unsupported checkpoint version");
    if (manifest.at("payload_bytes").get<std::size_t>() != payload_size) {
      throw CheckpointError("payload size does not match manifest");
    }
    if (manifest.at("checksum").get<std::string>() != hex(fnv1a(bytes.data() + payload_start, payload_size))) {
      throw CheckpointError("payload checksum mismatch");
    }
    Checkpoint ckpt;
    ckpt.metadata = manifest.at("metadata");
    for (const auto& e : manifest.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<std::vector<int>>();
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      std::size_t expected = 1;
      for (int d : t.shape) expected *= static_cast<std::size_t>(d);
      if (expected != count || offset + count * sizeof(float) > payload_size) {
        throw CheckpointError("tensor '" + t.name + "' is out of bounds");
      }
      t.data.resize(count);
      std::memcpy(t.data.data(), bytes.data() + payload_start + offset, count * sizeof(float));
      ckpt.tensors.push_back(std::move(t));
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt manifest: ") + e.what());
  }
}

}  // namespace rdn::nn
