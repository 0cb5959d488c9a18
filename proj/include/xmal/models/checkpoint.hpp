#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "xmal/models/params.hpp"
#include "xmal/util/error.hpp"
#include "xmal/util/sha1.hpp"

namespace xmal {

// Checkpoint container: little-endian binary, magic "XMAL", format version,
// length-prefixed canonical config text, then per-parameter records
// (name, rank, dims, fp64 payload). Round trips are bit-exact.

namespace ckpt_detail {
constexpr char kMagic[4] = {'X', 'M', 'A', 'L'};
constexpr uint32_t kVersion = 1;

template <class T>
void write_pod(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  check(in.good(), cat("checkpoint: truncated file ", path));
  return v;
}
}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, const std::string& config_text,
                            const std::vector<Param>& params) {
  using namespace ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  check(out.good(), cat("checkpoint: cannot open for writing: ", path));
  out.write(kMagic, 4);
  write_pod<uint32_t>(out, kVersion);
  write_pod<uint64_t>(out, config_text.size());
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
  write_pod<uint32_t>(out, static_cast<uint32_t>(params.size()));
  for (const auto& p : params) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    write_pod<uint32_t>(out, static_cast<uint32_t>(p.value.rank()));
    for (int64_t d : p.value.shape()) write_pod<uint64_t>(out, static_cast<uint64_t>(d));
    out.write(reinterpret_cast<const char*>(p.value.data().data()),
              static_cast<std::streamsize>(p.value.numel() * 8));
  }
  check(out.good(), cat("checkpoint: write failed: ", path));
}

struct LoadedCheckpoint {
  std::string config_text;
  std::vector<Param> params;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  using namespace ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  check(in.good(), cat("checkpoint: cannot open: ", path));
  char magic[4];
  in.read(magic, 4);
  check(in.good() && std::memcmp(magic, kMagic, 4) == 0, cat("checkpoint: bad magic in ", path));
  const uint32_t version = read_pod<uint32_t>(in, path);
  check(version == kVersion, cat("checkpoint: unsupported format version ", version, " in ", path));
  LoadedCheckpoint out;
  const uint64_t cfg_len = read_pod<uint64_t>(in, path);
  out.config_text.resize(cfg_len);
  in.read(out.config_text.data(), static_cast<std::streamsize>(cfg_len));
  check(in.good(), cat("checkpoint: truncated config block in ", path));
  const uint32_t n_params = read_pod<uint32_t>(in, path);
  out.params.reserve(n_params);
  for (uint32_t i = 0; i < n_params; ++i) {
    const uint32_t name_len = read_pod<uint32_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    check(in.good(), cat("checkpoint: truncated name in ", path));
    const uint32_t rank = read_pod<uint32_t>(in, path);
    Shape shape(rank);
    for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(read_pod<uint64_t>(in, path));
    Tensor t = Tensor::zeros(shape);
    in.read(reinterpret_cast<char*>(t.data().data()), static_cast<std::streamsize>(t.numel() * 8));
    check(in.good(), cat("checkpoint: truncated payload for '", name, "' in ", path));
    out.params.push_back({std::move(name), t});
  }
  return out;
}

inline std::string file_content_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  check(in.good(), cat("content hash: cannot open: ", path));
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_hash(bytes);
}

}  // namespace xmal
