#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace embreg {

// 64-bit FNV-1a; used for vocab fingerprints, manifest file hashes and the
// hash-projection sentence embedder.
constexpr std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

// fnv1a64 of a file's bytes, as hex. Throws DataError if unreadable.
std::string file_hash(const std::string& path);

}  // namespace embreg
