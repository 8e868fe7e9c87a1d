#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace labelforge {

// 64-bit FNV-1a over bytes. Stable across platforms and runs, unlike
// std::hash.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

// splitmix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Derives an independent child seed for stream `index` of `seed`.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

// Seeded hash of a string; used for deterministic tie-breaking.
std::uint64_t seeded_hash(std::string_view text, std::uint64_t seed);

std::string hex64(std::uint64_t value);

// Lowercase hex SHA-256 digest.
std::string sha256_hex(std::string_view bytes);

// `nbytes` bytes from the OS CSPRNG, hex encoded.
std::string random_hex(std::size_t nbytes);

}  // namespace labelforge
