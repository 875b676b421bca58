#pragma once

// Raw float patch files used by `loss-check`: a 16-byte little-endian
// header (magic "SPF1", width, height, channels as uint32) followed by
// width*height*channels float32 values, row-major, channels interleaved.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "sarpatch/error.hpp"

namespace sarpatch {

inline constexpr std::array<char, 4> kPatchMagic{'S', 'P', 'F', '1'};

struct FloatPatch {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::uint32_t channels = 1;
    std::vector<float> values;

    friend bool operator==(const FloatPatch&, const FloatPatch&) = default;
};

namespace detail {
inline void put_u32(std::ostream& out, std::uint32_t v) {
    const char b[4] = {char(v & 0xFF), char((v >> 8) & 0xFF), char((v >> 16) & 0xFF), char((v >> 24) & 0xFF)};
    out.write(b, 4);
}
inline std::uint32_t get_u32(const unsigned char* p) {
    return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
}  // namespace detail

inline void write_patch_file(const FloatPatch& p, const std::filesystem::path& path) {
    if (p.values.size() != std::size_t(p.width) * p.height * p.channels)
        throw Error(Errc::shape_mismatch, "patch value count disagrees with its header");
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string());
    out.write(kPatchMagic.data(), 4);
    detail::put_u32(out, p.width);
    detail::put_u32(out, p.height);
    detail::put_u32(out, p.channels);
    for (float f : p.values) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32(out, bits);
    }
    if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

inline FloatPatch read_patch_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kPatchMagic.data(), 4) != 0)
        throw Error(Errc::io_error, path.string() + " is not a patch file");
    FloatPatch p;
    p.width = detail::get_u32(bytes.data() + 4);
    p.height = detail::get_u32(bytes.data() + 8);
    p.channels = detail::get_u32(bytes.data() + 12);
    const std::size_t n = std::size_t(p.width) * p.height * p.channels;
    if (p.channels == 0 || bytes.size() != 16 + 4 * n)
        throw Error(Errc::shape_mismatch, path.string() + ": payload size disagrees with header");
    p.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t bits = detail::get_u32(bytes.data() + 16 + 4 * i);
        std::memcpy(&p.values[i], &bits, 4);
    }
    return p;
}

}  // namespace sarpatch
