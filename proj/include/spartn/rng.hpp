#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace spartn {

// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Named derivation: every consumer of randomness gets a stream keyed by
// (root, component, ids...), so results never depend on execution order.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component,
                                    std::initializer_list<std::uint64_t> ids = {}) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the component name
  for (char c : component) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  std::uint64_t s = mix64(root ^ mix64(h));
  for (std::uint64_t id : ids) s = mix64(s ^ mix64(id + 0x632be59bd9b4e019ULL));
  return s;
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::string_view component,
                                std::initializer_list<std::uint64_t> ids = {}) {
  return std::mt19937_64(derive_seed(root, component, ids));
}

}  // namespace spartn
