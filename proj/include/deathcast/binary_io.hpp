#ifndef DEATHCAST_BINARY_IO_HPP_
#define DEATHCAST_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "deathcast/error.hpp"

namespace deathcast {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order, which must be little-endian");

// 64-bit FNV-1a. Used for shard/checkpoint checksums and match-id hashes.
class Fnv1a64 {
 public:
  void Update(std::span<const std::uint8_t> bytes) {
    for (std::uint8_t b : bytes) {
      state_ ^= b;
      state_ *= 0x100000001b3ULL;
    }
  }
  void Update(std::string_view text) {
    Update(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  }
  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t HashString(std::string_view text) {
  Fnv1a64 h;
  h.Update(text);
  return h.digest();
}

class ByteWriter {
 public:
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void Put(const T& value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void PutSpan(std::span<const T> values) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(values.data());
    bytes_.insert(bytes_.end(), p, p + values.size_bytes());
  }

  void PutString(std::string_view s) {
    Put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }

  // Appends the FNV-1a digest of everything written so far.
  void SealWithChecksum() {
    Fnv1a64 h;
    h.Update(bytes_);
    Put<std::uint64_t>(h.digest());
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }
  std::vector<std::uint8_t> release() { return std::move(bytes_); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  // Checks the trailing 64-bit digest and narrows the readable range to the
  // payload in front of it.
  void VerifyChecksum(const std::string& what) {
    if (bytes_.size() < sizeof(std::uint64_t)) {
      throw Error(ErrorCode::kChecksumMismatch, what + ": truncated file");
    }
    const std::size_t payload = bytes_.size() - sizeof(std::uint64_t);
    std::uint64_t stored;
    std::memcpy(&stored, bytes_.data() + payload, sizeof(stored));
    Fnv1a64 h;
    h.Update(bytes_.first(payload));
    if (h.digest() != stored) {
      throw Error(ErrorCode::kChecksumMismatch, what + ": checksum mismatch");
    }
    bytes_ = bytes_.first(payload);
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  T Get() {
    Require(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  template <typename T>
    requires std::is_trivially_copyable_v<T>
  void GetSpan(std::span<T> out) {
    Require(out.size_bytes());
    std::memcpy(out.data(), bytes_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string GetString() {
    const auto n = Get<std::uint32_t>();
    Require(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  void Require(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw Error(ErrorCode::kSchemaMismatch, "binary payload truncated");
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::vector<std::uint8_t> ReadFileBytes(const std::string& path);
void WriteFileBytes(const std::string& path, std::span<const std::uint8_t> bytes);

}  // namespace deathcast

#endif  // DEATHCAST_BINARY_IO_HPP_
