#pragma once

// Run manifests: every CLI run writes a frozen snapshot of its resolved
// configuration and input digests before producing artifacts, and refuses
// to overwrite an existing manifest unless forced. A lock file keeps
// concurrent runs out of one output directory.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <tuple>

#include <json.hpp>

#include "seqcsg/common.hpp"

namespace seqcsg {

// ---------------------------------------------------------------------------
// SHA-256
// ---------------------------------------------------------------------------

class Sha256 {
 public:
  Sha256() { reset(); }

  void reset() {
    state_ = {0x6a09e667u, 0xbb67ae85u, 0x3c6ef372u, 0xa54ff53au,
              0x510e527fu, 0x9b05688cu, 0x1f83d9abu, 0x5be0cd19u};
    length_ = 0;
    buffer_fill_ = 0;
  }

  void update(const void* data, std::size_t len) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    length_ += len;
    while (len > 0) {
      std::size_t take = std::min(len, std::size_t{64} - buffer_fill_);
      std::memcpy(buffer_.data() + buffer_fill_, p, take);
      buffer_fill_ += take;
      p += take;
      len -= take;
      if (buffer_fill_ == 64) {
        process(buffer_.data());
        buffer_fill_ = 0;
      }
    }
  }

  std::string hex_digest() {
    std::uint64_t bit_len = length_ * 8;
    std::uint8_t pad = 0x80;
    update(&pad, 1);
    std::uint8_t zero = 0;
    while (buffer_fill_ != 56) update(&zero, 1);
    // Length goes in big-endian, outside the length_ accounting.
    std::array<std::uint8_t, 8> len_bytes{};
    for (int i = 0; i < 8; ++i)
      len_bytes[7 - i] = static_cast<std::uint8_t>(bit_len >> (8 * i));
    std::memcpy(buffer_.data() + 56, len_bytes.data(), 8);
    process(buffer_.data());

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(64);
    for (std::uint32_t w : state_)
      for (int i = 3; i >= 0; --i) {
        std::uint8_t b = static_cast<std::uint8_t>(w >> (8 * i));
        out += hex[b >> 4];
        out += hex[b & 0xf];
      }
    return out;
  }

 private:
  static std::uint32_t rotr(std::uint32_t x, int n) {
    return (x >> n) | (x << (32 - n));
  }

  void process(const std::uint8_t* chunk) {
    static const std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b,
        0x59f111f1, 0x923f82a4, 0xab1c5ed5, 0xd807aa98, 0x12835b01,
        0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe, 0x9bdc06a7,
        0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc,
        0x2de92c6f, 0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152,
        0xa831c66d, 0xb00327c8, 0xbf597fc7, 0xc6e00bf3, 0xd5a79147,
        0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85,
        0xa2bfe8a1, 0xa81a664b, 0xc24b8b70, 0xc76c51a3, 0xd192e819,
        0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116, 0x1e376c08,
        0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f,
        0x682e6ff3, 0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208,
        0x90befffa, 0xa4506ceb, 0xbef9a3f7, 0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i)
      w[i] = (std::uint32_t{chunk[4 * i]} << 24) |
             (std::uint32_t{chunk[4 * i + 1]} << 16) |
             (std::uint32_t{chunk[4 * i + 2]} << 8) |
             std::uint32_t{chunk[4 * i + 3]};
    for (int i = 16; i < 64; ++i) {
      std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    auto [a, b, c, d, e, f, g, h] = std::tuple{state_[0], state_[1], state_[2],
                                               state_[3], state_[4], state_[5],
                                               state_[6], state_[7]};
    for (int i = 0; i < 64; ++i) {
      std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      std::uint32_t ch = (e & f) ^ (~e & g);
      std::uint32_t t1 = h + s1 + ch + k[i] + w[i];
      std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      std::uint32_t t2 = s0 + maj;
      h = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    state_[0] += a; state_[1] += b; state_[2] += c; state_[3] += d;
    state_[4] += e; state_[5] += f; state_[6] += g; state_[7] += h;
  }

  std::array<std::uint32_t, 8> state_{};
  std::array<std::uint8_t, 64> buffer_{};
  std::uint64_t length_ = 0;
  std::size_t buffer_fill_ = 0;
};

inline std::string sha256_hex(const std::string& data) {
  Sha256 h;
  h.update(data.data(), data.size());
  return h.hex_digest();
}

inline std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for digest");
  Sha256 h;
  char buf[65536];
  while (in) {
    in.read(buf, sizeof(buf));
    h.update(buf, static_cast<std::size_t>(in.gcount()));
  }
  return h.hex_digest();
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

struct RunManifest {
  std::string command;
  std::string code_version = "dev";
  std::uint64_t seed = 0;
  nlohmann::json config;  // resolved model + train snapshot
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::map<std::string, std::string> outputs;        // name -> relative path

  nlohmann::json to_json() const {
    return {{"manifest_version", 1},
            {"command", command},
            {"code_version", code_version},
            {"seed", seed},
            {"config", config},
            {"input_digests", input_digests},
            {"outputs", outputs}};
  }
};

inline std::string manifest_path(const std::string& out_dir) {
  return out_dir + "/manifest.json";
}

// Writes the manifest before any artifact. An existing manifest means the
// directory already holds a completed run: refuse unless forced.
inline void write_manifest(const RunManifest& m, const std::string& out_dir,
                           bool force) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const std::string path = manifest_path(out_dir);
  if (fs::exists(path) && !force)
    throw IoError(path + " exists; re-run with --force to overwrite");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << m.to_json().dump(2) << '\n';
}

// Exclusive lock on an output directory, released on destruction.
class DirLock {
 public:
  explicit DirLock(const std::string& out_dir)
      : path_(out_dir + "/run.lock") {
    std::filesystem::create_directories(out_dir);
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw IoError("output directory is locked by another run: " + path_);
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  int fd_ = -1;
};

}  // namespace seqcsg
