#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace xmal {

// Minimal SHA-1, used for content addressing of checkpoints, configs and
// probe classifiers. Not a security boundary.
class Sha1 {
 public:
  Sha1() { reset(); }

  void reset() {
    h_ = {0x67452301u, 0xEFCDAB89u, 0x98BADCFEu, 0x10325476u, 0xC3D2E1F0u};
    len_ = 0;
    buf_used_ = 0;
  }

  void update(const void* data, size_t n) {
    const uint8_t* p = static_cast<const uint8_t*>(data);
    len_ += n;
    while (n > 0) {
      size_t take = std::min(n, size_t(64) - buf_used_);
      std::memcpy(buf_.data() + buf_used_, p, take);
      buf_used_ += take;
      p += take;
      n -= take;
      if (buf_used_ == 64) {
        process(buf_.data());
        buf_used_ = 0;
      }
    }
  }

  std::string hex_digest() {
    uint64_t bit_len = len_ * 8;
    uint8_t pad = 0x80;
    update(&pad, 1);
    uint8_t zero = 0x00;
    while (buf_used_ != 56) update(&zero, 1);
    for (int i = 7; i >= 0; --i) {
      uint8_t b = static_cast<uint8_t>(bit_len >> (8 * i));
      // bypass length accounting for the trailer
      buf_[buf_used_++] = b;
      if (buf_used_ == 64) {
        process(buf_.data());
        buf_used_ = 0;
      }
    }
    static const char* hexd = "0123456789abcdef";
    std::string out;
    out.reserve(40);
    for (uint32_t w : h_) {
      for (int i = 7; i >= 0; --i) out.push_back(hexd[(w >> (4 * i)) & 0xF]);
    }
    return out;
  }

 private:
  static uint32_t rol(uint32_t x, int s) { return (x << s) | (x >> (32 - s)); }

  void process(const uint8_t* block) {
    uint32_t w[80];
    for (int i = 0; i < 16; ++i) {
      w[i] = (uint32_t(block[4 * i]) << 24) | (uint32_t(block[4 * i + 1]) << 16) |
             (uint32_t(block[4 * i + 2]) << 8) | uint32_t(block[4 * i + 3]);
    }
    for (int i = 16; i < 80; ++i) w[i] = rol(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
    uint32_t a = h_[0], b = h_[1], c = h_[2], d = h_[3], e = h_[4];
    for (int i = 0; i < 80; ++i) {
      uint32_t f, k;
      if (i < 20) {
        f = (b & c) | ((~b) & d);
        k = 0x5A827999u;
      } else if (i < 40) {
        f = b ^ c ^ d;
        k = 0x6ED9EBA1u;
      } else if (i < 60) {
        f = (b & c) | (b & d) | (c & d);
        k = 0x8F1BBCDCu;
      } else {
        f = b ^ c ^ d;
        k = 0xCA62C1D6u;
      }
      uint32_t t = rol(a, 5) + f + e + k + w[i];
      e = d;
      d = c;
      c = rol(b, 30);
      b = a;
      a = t;
    }
    h_[0] += a;
    h_[1] += b;
    h_[2] += c;
    h_[3] += d;
    h_[4] += e;
  }

  std::array<uint32_t, 5> h_;
  std::array<uint8_t, 64> buf_;
  uint64_t len_ = 0;
  size_t buf_used_ = 0;
};

inline std::string sha1_hex(const void* data, size_t n) {
  Sha1 s;
  s.update(data, n);
  return s.hex_digest();
}

inline std::string sha1_hex(const std::string& s) { return sha1_hex(s.data(), s.size()); }

// git-style blob hash: sha1("blob <len>\0" + content)
inline std::string git_blob_hash(const std::string& content) {
  Sha1 s;
  std::string header = "blob " + std::to_string(content.size());
  s.update(header.data(), header.size() + 1);  // include the NUL
  s.update(content.data(), content.size());
  return s.hex_digest();
}

}  // namespace xmal
