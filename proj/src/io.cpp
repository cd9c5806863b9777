#include "gazeseg/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "gazeseg/error.hpp"

namespace gazeseg::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot open for writing: " + path.string());
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, "cannot open for reading: " + path.string());
    return in;
}

}  // namespace

void write_f32(const std::filesystem::path& path, std::span<const double> values) {
    std::vector<float> narrow(values.begin(), values.end());
    auto out = open_out(path);
    out.write(reinterpret_cast<const char*>(narrow.data()),
              static_cast<std::streamsize>(narrow.size() * sizeof(float)));
}

std::vector<double> read_f32(const std::filesystem::path& path) {
    auto bytes = read_text(path);
    if (bytes.size() % sizeof(float) != 0) fail(ErrorCode::IoError, "truncated float32 file: " + path.string());
    std::vector<float> narrow(bytes.size() / sizeof(float));
    std::memcpy(narrow.data(), bytes.data(), bytes.size());
    return {narrow.begin(), narrow.end()};
}

void write_f64(std::ostream& out, std::span<const double> values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

void read_f64(std::istream& in, std::span<double> values) {
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(double)));
    if (!in) fail(ErrorCode::IoError, "truncated float64 block");
}

void write_u8(const std::filesystem::path& path, std::span<const std::uint8_t> values) {
    auto out = open_out(path);
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
}

std::vector<std::uint8_t> read_u8(const std::filesystem::path& path) {
    auto bytes = read_text(path);
    return {bytes.begin(), bytes.end()};
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    auto out = open_out(path);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

std::string read_text(const std::filesystem::path& path) {
    auto in = open_in(path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::uint64_t fnv1a(std::span<const std::uint8_t> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a(const std::string& text, std::uint64_t seed) {
    return fnv1a(std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()), seed);
}

std::string hex64(std::uint64_t value) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[value & 0xF];
        value >>= 4;
    }
    return s;
}

}  // namespace gazeseg::io
