#include "ocgan/nn/serialize.hpp"

#include <cstdint>
#include <fstream>
#include <stdexcept>

namespace ocgan::nn {

namespace {

constexpr char kMagic[8] = {'O', 'C', 'G', 'A', 'N', 'C', 'K', 'P'};
constexpr uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ofstream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ofstream& os, const std::string& s) {
  write_pod<uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& is) {
  const auto len = read_pod<uint64_t>(is);
  std::string s(len, '\0');
  is.read(s.data(), static_cast<std::streamsize>(len));
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::string& config_json,
                     const std::vector<std::pair<std::string, Tensor*>>& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  os.write(kMagic, sizeof(kMagic));
  write_pod(os, kVersion);
  write_string(os, kind);
  write_string(os, config_json);
  write_pod<uint64_t>(os, tensors.size());
  for (const auto& [name, t] : tensors) {
    write_string(os, name);
    write_pod<uint32_t>(os, static_cast<uint32_t>(t->ndim()));
    for (int d : t->shape()) write_pod<int64_t>(os, d);
    os.write(reinterpret_cast<const char*>(t->data()),
             static_cast<std::streamsize>(t->size() * sizeof(Scalar)));
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::string(magic, 8) != std::string(kMagic, 8))
    throw std::runtime_error("not an ocgan checkpoint: " + path);
  const auto version = read_pod<uint32_t>(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  ckpt.kind = read_string(is);
  ckpt.config_json = read_string(is);
  const auto count = read_pod<uint64_t>(is);
  for (uint64_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    const auto ndim = read_pod<uint32_t>(is);
    std::vector<int> shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_pod<int64_t>(is));
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(Scalar)));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
    ckpt.tensors.emplace(std::move(name), std::move(t));
  }
  return ckpt;
}

void restore_state(const Checkpoint& ckpt,
                   const std::vector<std::pair<std::string, Tensor*>>& state) {
  for (const auto& [name, dst] : state) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end())
      throw std::runtime_error("checkpoint missing tensor: " + name);
    if (!(it->second.shape() == dst->shape()))
      throw std::runtime_error("checkpoint shape mismatch for " + name + ": " +
                               it->second.shape_str() + " vs " + dst->shape_str());
    std::copy(it->second.data(), it->second.data() + it->second.size(), dst->data());
  }
}

}  // namespace ocgan::nn
