#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace efuf {

/// 64-bit FNV-1a. Stable across platforms, used for provenance and seeding.
class Fnv1a {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  Fnv1a& update(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }
  // Fields are separated so ("ab","c") and ("a","bc") differ.
  Fnv1a& field(std::string_view bytes) {
    update(bytes);
    return update(std::string_view("\x1f", 1));
  }
  Fnv1a& field(std::uint64_t v);

  std::uint64_t digest() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = kOffset;
};

std::uint64_t fnv1a(std::string_view bytes);
std::string to_hex(std::uint64_t v);

/// Hash of a file's bytes; throws IoError when unreadable.
std::string file_hash(const std::filesystem::path& path);

}  // namespace efuf
