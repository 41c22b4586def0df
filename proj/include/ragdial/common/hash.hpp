#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace ragdial {

// 64-bit FNV-1a, used for artifact fingerprints and config hashes.
class Fnv1a {
 public:
  void update(std::span<const std::byte> bytes) {
    for (std::byte b : bytes) {
      state_ ^= static_cast<std::uint64_t>(b);
      state_ *= kPrime;
    }
  }
  void update(std::string_view s) { update(std::as_bytes(std::span(s.data(), s.size()))); }
  template <typename T>
  void update_pod(const T& value) {
    update(std::as_bytes(std::span(&value, 1)));
  }
  std::uint64_t digest() const { return state_; }

 private:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

}  // namespace ragdial
