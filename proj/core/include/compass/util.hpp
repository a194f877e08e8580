#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace compass::util {

inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

// FNV-1a, 64-bit. Stable across platforms; used for embeddings and ids.
constexpr std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = kFnvOffsetBasis) {
  std::uint64_t h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

// Zero-padded lowercase hex of the low `digits` nibbles.
std::string to_hex(std::uint64_t value, int digits = 16);

std::string ascii_lower(std::string_view s);

// Collapses every run of whitespace to one space and trims both ends.
std::string collapse_spaces(std::string_view s);

// Number of UTF-8 code points. Invalid lead bytes count as one each.
std::size_t utf8_length(std::string_view s);

// Longest prefix holding at most `count` code points.
std::string_view utf8_prefix(std::string_view s, std::size_t count);

// Levenshtein distance over bytes.
std::size_t edit_distance(std::string_view a, std::string_view b);

// printf("%.*f"), locale independent for the C locale we run under.
std::string format_fixed(double value, int decimals);

std::string read_file(const std::filesystem::path& path);

// Writes to a sibling temp file then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace compass::util
