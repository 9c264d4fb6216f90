#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace compromise {

/// Lowercase hex SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);
std::string sha256_file(const std::filesystem::path& path);

/// 64-bit FNV-1a; used for seeding and feature hashing, never for integrity.
std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer, used to derive independent RNG streams from one seed.
std::uint64_t mix64(std::uint64_t x);

}  // namespace compromise
