#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dccl {

inline void check_arg(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

inline void check_runtime(bool ok, const std::string& msg) {
  if (!ok) throw std::runtime_error(msg);
}

// Raised by configuration parsing; the CLI maps it to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t mix64(uint64_t x) {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Independent deterministic seed streams: one per (run seed, purpose, indices).
// Keeps batch shuffling, parameter init and noise draws decoupled so that
// disabling one consumer cannot shift the draws seen by another.
inline uint64_t sub_seed(uint64_t seed, std::string_view purpose, uint64_t a = 0,
                         uint64_t b = 0) {
  uint64_t h = fnv1a64(purpose);
  h = mix64(h ^ mix64(seed));
  h = mix64(h ^ mix64(a + 0x9e37u));
  h = mix64(h ^ mix64(b + 0x79b9u));
  return h;
}

}  // namespace dccl
