#include "sptoken/hash.hpp"

#include <openssl/evp.h>

#include <bit>
#include <memory>
#include <stdexcept>

namespace sptoken {

std::string Digest::hex() const {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string s;
  s.reserve(64);
  for (auto b : bytes) {
    s.push_back(kDigits[b >> 4]);
    s.push_back(kDigits[b & 0xF]);
  }
  return s;
}

Digest Digest::from_hex(std::string_view hex) {
  if (hex.size() != 64) throw std::invalid_argument("digest hex must be 64 characters");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw std::invalid_argument("bad hex digit");
  };
  Digest d;
  for (std::size_t i = 0; i < 32; ++i)
    d.bytes[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  return d;
}

bool Digest::is_zero() const {
  for (auto b : bytes)
    if (b != 0) return false;
  return true;
}

namespace {

// Fetching the algorithm and allocating a context dominate the cost of hashing a
// short site record, so both are done once (per thread for the context).
const EVP_MD* sha256_md() {
  static const std::unique_ptr<EVP_MD, decltype(&EVP_MD_free)> md(EVP_MD_fetch(nullptr, "SHA256", nullptr),
                                                                   &EVP_MD_free);
  if (!md) throw std::runtime_error("EVP_MD_fetch(SHA256) failed");
  return md.get();
}

EVP_MD_CTX* thread_ctx() {
  thread_local const std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(),
                                                                                 &EVP_MD_CTX_free);
  if (!ctx) throw std::runtime_error("EVP_MD_CTX_new failed");
  return ctx.get();
}

}  // namespace

Digest sha256(std::span<const std::uint8_t> data) {
  Digest d;
  unsigned int len = 0;
  EVP_MD_CTX* ctx = thread_ctx();
  if (EVP_DigestInit_ex(ctx, sha256_md(), nullptr) != 1 || EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, d.bytes.data(), &len) != 1 || len != d.bytes.size())
    throw std::runtime_error("sha256 failed");
  return d;
}

PrefixHasher::PrefixHasher(std::span<const std::uint8_t> prefix) : prefix_(EVP_MD_CTX_new()) {
  if (!prefix_ || EVP_DigestInit_ex(prefix_, sha256_md(), nullptr) != 1 ||
      EVP_DigestUpdate(prefix_, prefix.data(), prefix.size()) != 1) {
    EVP_MD_CTX_free(prefix_);
    throw std::runtime_error("sha256 prefix failed");
  }
}

PrefixHasher::~PrefixHasher() { EVP_MD_CTX_free(prefix_); }

Digest PrefixHasher::finish(std::span<const std::uint8_t> suffix) const {
  Digest d;
  unsigned int len = 0;
  EVP_MD_CTX* ctx = thread_ctx();
  if (EVP_MD_CTX_copy_ex(ctx, prefix_) != 1 || EVP_DigestUpdate(ctx, suffix.data(), suffix.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, d.bytes.data(), &len) != 1 || len != d.bytes.size())
    throw std::runtime_error("sha256 failed");
  return d;
}

int leading_zero_bits(const Digest& d) {
  int bits = 0;
  for (auto b : d.bytes) {
    if (b == 0) {
      bits += 8;
      continue;
    }
    return bits + std::countl_zero(b);
  }
  return bits;
}

void put_u8(Bytes& out, std::uint8_t v) { out.push_back(v); }

void put_u16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void put_u32(Bytes& out, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_u64(Bytes& out, std::uint64_t v) {
  for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

void put_i64(Bytes& out, std::int64_t v) { put_u64(out, static_cast<std::uint64_t>(v)); }

void put_bytes(Bytes& out, std::span<const std::uint8_t> v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  out.insert(out.end(), v.begin(), v.end());
}

void put_string(Bytes& out, std::string_view v) {
  put_u32(out, static_cast<std::uint32_t>(v.size()));
  out.insert(out.end(), v.begin(), v.end());
}

std::span<const std::uint8_t> ByteReader::take(std::size_t n) {
  if (remaining() < n) throw std::out_of_range("truncated byte stream");
  auto s = data_.subspan(pos_, n);
  pos_ += n;
  return s;
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }

std::uint16_t ByteReader::u16() {
  auto s = take(2);
  return static_cast<std::uint16_t>(s[0] << 8 | s[1]);
}

std::uint32_t ByteReader::u32() {
  std::uint32_t v = 0;
  for (auto b : take(4)) v = v << 8 | b;
  return v;
}

std::uint64_t ByteReader::u64() {
  std::uint64_t v = 0;
  for (auto b : take(8)) v = v << 8 | b;
  return v;
}

std::int64_t ByteReader::i64() { return static_cast<std::int64_t>(u64()); }

Bytes ByteReader::bytes() {
  auto n = u32();
  auto s = take(n);
  return Bytes(s.begin(), s.end());
}

std::string ByteReader::string() {
  auto n = u32();
  auto s = take(n);
  return std::string(s.begin(), s.end());
}

Digest ByteReader::digest() {
  Digest d;
  auto s = take(32);
  std::copy(s.begin(), s.end(), d.bytes.begin());
  return d;
}

}  // namespace sptoken
