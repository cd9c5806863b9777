#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gazeseg::io {

// Raw little-endian float32 blobs (values narrowed from double).
void write_f32(const std::filesystem::path& path, std::span<const double> values);
std::vector<double> read_f32(const std::filesystem::path& path);

void write_f64(std::ostream& out, std::span<const double> values);
void read_f64(std::istream& in, std::span<double> values);

void write_u8(const std::filesystem::path& path, std::span<const std::uint8_t> values);
std::vector<std::uint8_t> read_u8(const std::filesystem::path& path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

// FNV-1a 64-bit over bytes; used for content hashes in run records.
std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& text, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace gazeseg::io
