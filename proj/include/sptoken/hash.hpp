#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

struct evp_md_ctx_st;  // OpenSSL's EVP_MD_CTX

namespace sptoken {

using Bytes = std::vector<std::uint8_t>;

/// 256-bit SHA-256 digest. Ordered lexicographically so it can key std::set.
struct Digest {
  std::array<std::uint8_t, 32> bytes{};

  auto operator<=>(const Digest&) const = default;

  std::string hex() const;
  static Digest from_hex(std::string_view hex);
  bool is_zero() const;
};

Digest sha256(std::span<const std::uint8_t> data);

/// SHA-256 of `prefix || suffix` for many suffixes, absorbing the prefix once.
class PrefixHasher {
 public:
  explicit PrefixHasher(std::span<const std::uint8_t> prefix);
  ~PrefixHasher();
  PrefixHasher(const PrefixHasher&) = delete;
  PrefixHasher& operator=(const PrefixHasher&) = delete;

  Digest finish(std::span<const std::uint8_t> suffix) const;

 private:
  evp_md_ctx_st* prefix_;
};

/// Number of leading zero bits of the digest, counted from the high bit of byte 0.
int leading_zero_bits(const Digest& d);

// Big-endian fixed-width writers used by every canonical encoding in the project.
void put_u8(Bytes& out, std::uint8_t v);
void put_u16(Bytes& out, std::uint16_t v);
void put_u32(Bytes& out, std::uint32_t v);
void put_u64(Bytes& out, std::uint64_t v);
void put_i64(Bytes& out, std::int64_t v);
void put_bytes(Bytes& out, std::span<const std::uint8_t> v);  // u32 length prefix
void put_string(Bytes& out, std::string_view v);                // u32 length prefix

/// Bounds-checked big-endian reader; throws std::out_of_range on truncation.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> data) : data_(data) {}

  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64();
  Bytes bytes();
  std::string string();
  Digest digest();

  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n);

  std::span<const std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace sptoken

template <>
struct std::hash<sptoken::Digest> {
  std::size_t operator()(const sptoken::Digest& d) const noexcept {
    std::size_t h = 0;
    for (int i = 0; i < 8; ++i) h = (h << 8) | d.bytes[i];
    return h;
  }
};
