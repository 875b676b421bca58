#pragma once

// Minimal baseline GeoTIFF codec: single band, axis-aligned, strips or
// tiles, uncompressed or deflate, little- or big-endian classic TIFF.
// Georeferencing comes from ModelPixelScale + ModelTiepoint (or an
// axis-aligned ModelTransformation); nodata from GDAL_NODATA.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <zlib.h>

#include <nlohmann/json.hpp>

#include "sarpatch/error.hpp"
#include "sarpatch/raster.hpp"

namespace sarpatch {

enum class Compression { none, deflate };

struct GeoTiffWriteOptions {
    Compression compression = Compression::none;
    /// 0 writes strips; otherwise square tiles of this edge (multiple of 16).
    std::uint32_t tile_size = 0;
    /// Merged into the ImageDescription JSON (config hash, seed, ...).
    nlohmann::json provenance = nlohmann::json::object();
};

namespace tiff {

enum Tag : std::uint16_t {
    kImageWidth = 256,
    kImageLength = 257,
    kBitsPerSample = 258,
    kCompression = 259,
    kPhotometric = 262,
    kImageDescription = 270,
    kStripOffsets = 273,
    kSamplesPerPixel = 277,
    kRowsPerStrip = 278,
    kStripByteCounts = 279,
    kPlanarConfig = 284,
    kPredictor = 317,
    kTileWidth = 322,
    kTileLength = 323,
    kTileOffsets = 324,
    kTileByteCounts = 325,
    kSampleFormat = 339,
    kModelPixelScale = 33550,
    kModelTiepoint = 33922,
    kModelTransformation = 34264,
    kGeoKeyDirectory = 34735,
    kGdalNodata = 42113,
};

enum Type : std::uint16_t {
    kByte = 1, kAscii = 2, kShort = 3, kLong = 4, kRational = 5, kSByte = 6, kUndefined = 7,
    kSShort = 8, kSLong = 9, kSRational = 10, kFloat = 11, kDouble = 12,
};

inline std::size_t type_size(std::uint16_t type) {
    switch (type) {
    case kByte: case kAscii: case kSByte: case kUndefined: return 1;
    case kShort: case kSShort: return 2;
    case kLong: case kSLong: case kFloat: return 4;
    case kRational: case kSRational: case kDouble: return 8;
    default: return 0;
    }
}

class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> bytes) : b_(std::move(bytes)) {
        if (b_.size() < 8) fail("file too short for a TIFF header");
        if (b_[0] == 'I' && b_[1] == 'I') big_ = false;
        else if (b_[0] == 'M' && b_[1] == 'M') big_ = true;
        else fail("bad byte-order mark");
        const auto magic = u16(2);
        if (magic == 43) throw Error(Errc::unsupported_layout, "BigTIFF is not supported");
        if (magic != 42) fail("bad TIFF magic");
        parse_ifd(u32(4));
    }

    bool has(std::uint16_t tag) const { return entries_.count(tag) != 0; }

    std::vector<double> numbers(std::uint16_t tag) const {
        const Entry& e = entry(tag);
        const std::size_t sz = type_size(e.type);
        std::vector<double> out;
        out.reserve(e.count);
        for (std::uint32_t i = 0; i < e.count; ++i) {
            const std::size_t at = e.offset + i * sz;
            switch (e.type) {
            case kByte: case kUndefined: out.push_back(b_[at]); break;
            case kSByte: out.push_back(static_cast<std::int8_t>(b_[at])); break;
            case kShort: out.push_back(u16(at)); break;
            case kSShort: out.push_back(static_cast<std::int16_t>(u16(at))); break;
            case kLong: out.push_back(u32(at)); break;
            case kSLong: out.push_back(static_cast<std::int32_t>(u32(at))); break;
            case kRational: out.push_back(double(u32(at)) / double(u32(at + 4))); break;
            case kSRational:
                out.push_back(double(static_cast<std::int32_t>(u32(at))) /
                              double(static_cast<std::int32_t>(u32(at + 4))));
                break;
            case kFloat: {
                const std::uint32_t raw = u32(at);
                float f;
                std::memcpy(&f, &raw, 4);
                out.push_back(f);
                break;
            }
            case kDouble: {
                const std::uint64_t raw = u64(at);
                double d;
                std::memcpy(&d, &raw, 8);
                out.push_back(d);
                break;
            }
            default: fail("unsupported field type for tag " + std::to_string(tag));
            }
        }
        return out;
    }

    std::uint64_t scalar(std::uint16_t tag, std::uint64_t fallback) const {
        if (!has(tag)) return fallback;
        const auto v = numbers(tag);
        if (v.empty()) fail("empty tag " + std::to_string(tag));
        return static_cast<std::uint64_t>(v.front());
    }

    std::string ascii(std::uint16_t tag) const {
        const Entry& e = entry(tag);
        std::string s(reinterpret_cast<const char*>(b_.data() + e.offset), e.count);
        while (!s.empty() && s.back() == '\0') s.pop_back();
        return s;
    }

    std::span<const std::uint8_t> slice(std::uint64_t offset, std::uint64_t count) const {
        if (offset + count > b_.size()) fail("data chunk runs past end of file");
        return {b_.data() + offset, static_cast<std::size_t>(count)};
    }

    bool big_endian() const noexcept { return big_; }

    std::uint16_t u16(std::size_t at) const {
        check(at, 2);
        return big_ ? std::uint16_t(b_[at] << 8 | b_[at + 1]) : std::uint16_t(b_[at + 1] << 8 | b_[at]);
    }
    std::uint32_t u32(std::size_t at) const {
        check(at, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t(b_[at + (big_ ? 3 - i : i)]) << (8 * i);
        return v;
    }
    std::uint64_t u64(std::size_t at) const {
        check(at, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t(b_[at + (big_ ? 7 - i : i)]) << (8 * i);
        return v;
    }

private:
    struct Entry {
        std::uint16_t type;
        std::uint32_t count;
        std::size_t offset;  // absolute position of the value bytes
    };

    [[noreturn]] static void fail(const std::string& what) { throw Error(Errc::io_error, "tiff: " + what); }

    void check(std::size_t at, std::size_t n) const {
        if (at + n > b_.size()) fail("read past end of file");
    }

    const Entry& entry(std::uint16_t tag) const {
        auto it = entries_.find(tag);
        if (it == entries_.end()) fail("missing tag " + std::to_string(tag));
        return it->second;
    }

    void parse_ifd(std::uint32_t at) {
        const std::uint16_t n = u16(at);
        for (std::uint16_t i = 0; i < n; ++i) {
            const std::size_t e = at + 2 + 12u * i;
            const std::uint16_t tag = u16(e);
            const std::uint16_t type = u16(e + 2);
            const std::uint32_t count = u32(e + 4);
            const std::size_t sz = type_size(type);
            if (sz == 0) continue;  // unknown field types are skipped per baseline rules
            const std::size_t bytes = sz * count;
            const std::size_t value_at = bytes <= 4 ? e + 8 : u32(e + 8);
            check(value_at, bytes);
            entries_[tag] = Entry{type, count, value_at};
        }
    }

    std::vector<std::uint8_t> b_;
    bool big_ = false;
    std::map<std::uint16_t, Entry> entries_;
};

inline std::vector<std::uint8_t> inflate_chunk(std::span<const std::uint8_t> in, std::size_t expected) {
    std::vector<std::uint8_t> out(expected);
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) throw Error(Errc::io_error, "tiff: inflateInit failed");
    zs.next_in = const_cast<Bytef*>(in.data());
    zs.avail_in = static_cast<uInt>(in.size());
    zs.next_out = out.data();
    zs.avail_out = static_cast<uInt>(out.size());
    const int rc = inflate(&zs, Z_FINISH);
    const std::size_t produced = zs.total_out;
    inflateEnd(&zs);
    if ((rc != Z_STREAM_END && rc != Z_OK && rc != Z_BUF_ERROR) || produced < expected)
        throw Error(Errc::io_error, "tiff: corrupt deflate chunk");
    return out;
}

inline std::vector<std::uint8_t> deflate_chunk(std::span<const std::uint8_t> in) {
    uLongf cap = compressBound(static_cast<uLong>(in.size()));
    std::vector<std::uint8_t> out(cap);
    if (compress2(out.data(), &cap, in.data(), static_cast<uLong>(in.size()), 6) != Z_OK)
        throw Error(Errc::io_error, "tiff: deflate failed");
    out.resize(cap);
    return out;
}

inline std::size_t bytes_per_sample(SampleFormat f) noexcept {
    switch (f) {
    case SampleFormat::u8: return 1;
    case SampleFormat::u16: return 2;
    case SampleFormat::f32: return 4;
    }
    return 0;
}

inline std::string format_nodata(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::optional<std::uint32_t> epsg_code(const std::string& crs) {
    constexpr std::string_view prefix = "EPSG:";
    if (crs.rfind(prefix, 0) != 0) return std::nullopt;
    std::uint32_t code = 0;
    const char* first = crs.data() + prefix.size();
    const char* last = crs.data() + crs.size();
    auto [ptr, ec] = std::from_chars(first, last, code);
    if (ec != std::errc{} || ptr != last) return std::nullopt;
    return code;
}

}  // namespace tiff

inline RasterGrid decode_geotiff(std::vector<std::uint8_t> bytes) {
    using namespace tiff;
    const Reader r(std::move(bytes));

    const auto width = r.scalar(kImageWidth, 0);
    const auto height = r.scalar(kImageLength, 0);
    if (width == 0 || height == 0) throw Error(Errc::unsupported_layout, "zero-sized image");
    if (r.scalar(kSamplesPerPixel, 1) != 1)
        throw Error(Errc::unsupported_layout, "only single-band images are supported");
    if (r.scalar(kPlanarConfig, 1) != 1 && r.scalar(kSamplesPerPixel, 1) != 1)
        throw Error(Errc::unsupported_layout, "planar separate layout");
    if (r.scalar(kPredictor, 1) != 1) throw Error(Errc::unsupported_layout, "predictor not supported");

    const auto bps = r.scalar(kBitsPerSample, 1);
    const auto sfmt = r.scalar(kSampleFormat, 1);
    SampleFormat format;
    if (bps == 8 && sfmt == 1) format = SampleFormat::u8;
    else if (bps == 16 && sfmt == 1) format = SampleFormat::u16;
    else if (bps == 32 && sfmt == 3) format = SampleFormat::f32;
    else
        throw Error(Errc::unsupported_layout, "sample type bits=" + std::to_string(bps) +
                                                  " format=" + std::to_string(sfmt));

    const auto compression = r.scalar(kCompression, 1);
    if (compression != 1 && compression != 8 && compression != 32946)
        throw Error(Errc::unsupported_layout, "compression " + std::to_string(compression));

    // Georeferencing.
    GeoTransform t;
    if (r.has(kModelPixelScale) && r.has(kModelTiepoint)) {
        const auto scale = r.numbers(kModelPixelScale);
        const auto tie = r.numbers(kModelTiepoint);
        if (scale.size() < 2 || tie.size() < 6)
            throw Error(Errc::missing_georeference, "malformed pixel scale or tiepoint");
        t.pixel_width = scale[0];
        t.pixel_height = scale[1];
        t.origin_x = tie[3] - tie[0] * scale[0];
        t.origin_y = tie[4] + tie[1] * scale[1];
    } else if (r.has(kModelTransformation)) {
        const auto m = r.numbers(kModelTransformation);
        if (m.size() < 16) throw Error(Errc::missing_georeference, "malformed model transformation");
        if (m[1] != 0.0 || m[4] != 0.0)
            throw Error(Errc::unsupported_layout, "rotated geotransform");
        t.pixel_width = m[0];
        t.pixel_height = -m[5];
        t.origin_x = m[3];
        t.origin_y = m[7];
    } else {
        throw Error(Errc::missing_georeference, "ModelPixelScale/ModelTiepoint tags absent");
    }
    if (!t.valid()) throw Error(Errc::unsupported_layout, "geotransform is not north-up");

    // Metadata written by this library rides in the ImageDescription.
    std::optional<SampleKind> kind;
    std::string crs;
    if (r.has(kImageDescription)) {
        const auto meta = nlohmann::json::parse(r.ascii(kImageDescription), nullptr, false);
        if (meta.is_object() && meta.contains("sarpatch") && meta["sarpatch"].is_object()) {
            const auto& s = meta["sarpatch"];
            if (s.contains("sample_kind")) kind = sample_kind_from_string(s["sample_kind"].get<std::string>());
            if (s.contains("crs")) crs = s["crs"].get<std::string>();
        }
    }
    if (crs.empty() && r.has(kGeoKeyDirectory)) {
        const auto keys = r.numbers(kGeoKeyDirectory);
        for (std::size_t k = 4; k + 3 < keys.size(); k += 4) {
            const auto id = static_cast<std::uint32_t>(keys[k]);
            if ((id == 3072 || id == 2048) && keys[k + 1] == 0.0 && keys[k + 3] != 32767.0) {
                crs = "EPSG:" + std::to_string(static_cast<std::uint32_t>(keys[k + 3]));
                if (id == 3072) break;
            }
        }
    }
    if (!kind) {
        kind = format == SampleFormat::u8    ? SampleKind::label_class
               : format == SampleFormat::u16 ? SampleKind::sar_dn
                                             : SampleKind::sar_db;
    }
    double nodata = default_nodata(*kind);
    if (r.has(kGdalNodata)) {
        const std::string text = r.ascii(kGdalNodata);
        char* end = nullptr;
        const double v = std::strtod(text.c_str(), &end);
        if (end != text.c_str()) nodata = v;
    }

    RasterGrid g(width, height, *kind, t, crs, nodata);
    g.set_format(format);

    // Pixel data.
    const std::size_t bpsz = bytes_per_sample(format);
    const bool tiled = r.has(kTileWidth);
    const std::uint64_t cw = tiled ? r.scalar(kTileWidth, 0) : width;
    const std::uint64_t ch = tiled ? r.scalar(kTileLength, 0) : std::min<std::uint64_t>(r.scalar(kRowsPerStrip, height), height);
    if (cw == 0 || ch == 0) throw Error(Errc::unsupported_layout, "zero chunk size");
    const auto offsets = r.numbers(tiled ? kTileOffsets : kStripOffsets);
    const auto counts = r.numbers(tiled ? kTileByteCounts : kStripByteCounts);
    const std::uint64_t across = (width + cw - 1) / cw;
    const std::uint64_t down = (height + ch - 1) / ch;
    if (offsets.size() < across * down || counts.size() < across * down)
        throw Error(Errc::io_error, "tiff: chunk table too short");

    auto& out = g.samples();
    for (std::uint64_t cy = 0; cy < down; ++cy) {
        for (std::uint64_t cx = 0; cx < across; ++cx) {
            const std::size_t idx = cy * across + cx;
            // Strips may be short at the bottom; tiles are always full size.
            const std::uint64_t rows = tiled ? ch : std::min(ch, height - cy * ch);
            const std::size_t expected = cw * rows * bpsz;
            auto raw = r.slice(static_cast<std::uint64_t>(offsets[idx]), static_cast<std::uint64_t>(counts[idx]));
            std::vector<std::uint8_t> buf;
            if (compression == 1) {
                if (raw.size() < expected) throw Error(Errc::io_error, "tiff: short chunk");
                buf.assign(raw.begin(), raw.begin() + expected);
            } else {
                buf = inflate_chunk(raw, expected);
            }
            for (std::uint64_t yy = 0; yy < rows; ++yy) {
                const std::uint64_t y = cy * ch + yy;
                if (y >= height) break;
                for (std::uint64_t xx = 0; xx < cw; ++xx) {
                    const std::uint64_t x = cx * cw + xx;
                    if (x >= width) break;
                    const std::uint8_t* p = buf.data() + (yy * cw + xx) * bpsz;
                    double v = 0.0;
                    switch (format) {
                    case SampleFormat::u8: v = p[0]; break;
                    case SampleFormat::u16:
                        v = r.big_endian() ? (p[0] << 8 | p[1]) : (p[1] << 8 | p[0]);
                        break;
                    case SampleFormat::f32: {
                        std::uint32_t bits = 0;
                        for (int i = 0; i < 4; ++i)
                            bits |= std::uint32_t(p[r.big_endian() ? 3 - i : i]) << (8 * i);
                        float f;
                        std::memcpy(&f, &bits, 4);
                        v = f;
                        break;
                    }
                    }
                    out[y * width + x] = v;
                }
            }
        }
    }
    return g;
}

inline RasterGrid read_geotiff(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw Error(Errc::io_error, "read failed for " + path.string());
    return decode_geotiff(std::move(bytes));
}

namespace tiff {

inline void check_representable(const RasterGrid& g) {
    const double lo = 0.0;
    const double hi = g.format() == SampleFormat::u8 ? 255.0 : 65535.0;
    auto ok = [&](double v) {
        if (g.format() == SampleFormat::f32)
            return std::isnan(v) || static_cast<double>(static_cast<float>(v)) == v;
        return v >= lo && v <= hi && v == std::floor(v);
    };
    if (!ok(g.nodata()) && !(std::isnan(g.nodata()) && g.format() == SampleFormat::f32))
        throw Error(Errc::invalid_argument, "nodata not representable in the sample format");
    for (double v : g.samples())
        if (!ok(v)) throw Error(Errc::invalid_argument, "sample not representable in the sample format");
    if (g.kind() == SampleKind::label_class)
        for (double v : g.samples())
            if (!(v >= 0.0 || g.is_nodata(v))) throw Error(Errc::invalid_argument, "negative class id");
}

class Writer {
public:
    void add(std::uint16_t tag, std::uint16_t type, std::uint32_t count, std::vector<std::uint8_t> value) {
        entries_.push_back({tag, type, count, std::move(value)});
    }
    void add_short(std::uint16_t tag, std::vector<std::uint16_t> v) {
        std::vector<std::uint8_t> b;
        for (auto x : v) put(b, x, 2);
        add(tag, kShort, static_cast<std::uint32_t>(v.size()), std::move(b));
    }
    void add_long(std::uint16_t tag, std::vector<std::uint32_t> v) {
        std::vector<std::uint8_t> b;
        for (auto x : v) put(b, x, 4);
        add(tag, kLong, static_cast<std::uint32_t>(v.size()), std::move(b));
    }
    void add_double(std::uint16_t tag, std::vector<double> v) {
        std::vector<std::uint8_t> b;
        for (double x : v) {
            std::uint64_t bits;
            std::memcpy(&bits, &x, 8);
            put(b, bits, 8);
        }
        add(tag, kDouble, static_cast<std::uint32_t>(v.size()), std::move(b));
    }
    void add_ascii(std::uint16_t tag, const std::string& s) {
        std::vector<std::uint8_t> b(s.begin(), s.end());
        b.push_back(0);
        const auto n = static_cast<std::uint32_t>(b.size());
        add(tag, kAscii, n, std::move(b));
    }

    /// Lays out header, IFD, out-of-line values, then chunk data.
    /// `offsets_tag` receives the final chunk offsets.
    std::vector<std::uint8_t> finish(std::uint16_t offsets_tag, const std::vector<std::vector<std::uint8_t>>& chunks) {
        std::vector<std::uint32_t> chunk_offsets(chunks.size(), 0);
        add_long(offsets_tag, chunk_offsets);
        std::sort(entries_.begin(), entries_.end(), [](auto& a, auto& b) { return a.tag < b.tag; });

        const std::size_t ifd_size = 2 + 12 * entries_.size() + 4;
        std::size_t extra = 8 + ifd_size;
        std::vector<std::size_t> value_pos(entries_.size(), 0);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            if (entries_[i].value.size() > 4) {
                value_pos[i] = extra;
                extra += entries_[i].value.size() + (entries_[i].value.size() & 1);
            }
        }
        std::size_t data_at = extra;
        for (std::size_t i = 0; i < chunks.size(); ++i) {
            chunk_offsets[i] = static_cast<std::uint32_t>(data_at);
            data_at += chunks[i].size();
        }
        if (data_at > std::numeric_limits<std::uint32_t>::max())
            throw Error(Errc::unsupported_layout, "image exceeds classic TIFF 4 GiB limit");
        for (auto& e : entries_) {
            if (e.tag == offsets_tag) {
                e.value.clear();
                for (auto o : chunk_offsets) put(e.value, o, 4);
            }
        }

        std::vector<std::uint8_t> out;
        out.reserve(data_at);
        out.push_back('I');
        out.push_back('I');
        put(out, 42, 2);
        put(out, 8, 4);
        put(out, entries_.size(), 2);
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            const auto& e = entries_[i];
            put(out, e.tag, 2);
            put(out, e.type, 2);
            put(out, e.count, 4);
            if (e.value.size() <= 4) {
                std::vector<std::uint8_t> inl = e.value;
                inl.resize(4, 0);
                out.insert(out.end(), inl.begin(), inl.end());
            } else {
                put(out, value_pos[i], 4);
            }
        }
        put(out, 0, 4);
        for (const auto& e : entries_) {
            if (e.value.size() > 4) {
                out.insert(out.end(), e.value.begin(), e.value.end());
                if (e.value.size() & 1) out.push_back(0);
            }
        }
        for (const auto& c : chunks) out.insert(out.end(), c.begin(), c.end());
        return out;
    }

    static void put(std::vector<std::uint8_t>& b, std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) b.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }

private:
    struct Entry {
        std::uint16_t tag;
        std::uint16_t type;
        std::uint32_t count;
        std::vector<std::uint8_t> value;
    };
    std::vector<Entry> entries_;
};

}  // namespace tiff

inline std::vector<std::uint8_t> encode_geotiff(const RasterGrid& g, const GeoTiffWriteOptions& opt = {}) {
    using namespace tiff;
    if (g.empty()) throw Error(Errc::invalid_argument, "cannot write a zero-size raster");
    if (g.size() != g.width() * g.height()) throw Error(Errc::invalid_argument, "sample count mismatch");
    if (opt.tile_size != 0 && opt.tile_size % 16 != 0)
        throw Error(Errc::invalid_argument, "tile size must be a multiple of 16");
    check_representable(g);

    const std::size_t bpsz = bytes_per_sample(g.format());
    const std::size_t W = g.width(), H = g.height();
    const bool tiled = opt.tile_size != 0;
    const std::size_t cw = tiled ? opt.tile_size : W;
    const std::size_t ch = tiled ? opt.tile_size : std::max<std::size_t>(1, std::min<std::size_t>(H, 65536 / std::max<std::size_t>(1, W * bpsz)));
    const std::size_t across = (W + cw - 1) / cw;
    const std::size_t down = (H + ch - 1) / ch;

    std::vector<std::vector<std::uint8_t>> chunks;
    chunks.reserve(across * down);
    for (std::size_t cy = 0; cy < down; ++cy) {
        for (std::size_t cx = 0; cx < across; ++cx) {
            const std::size_t rows = tiled ? ch : std::min(ch, H - cy * ch);
            std::vector<std::uint8_t> buf(cw * rows * bpsz, 0);
            for (std::size_t yy = 0; yy < rows; ++yy) {
                const std::size_t y = cy * ch + yy;
                if (y >= H) break;
                for (std::size_t xx = 0; xx < cw; ++xx) {
                    const std::size_t x = cx * cw + xx;
                    if (x >= W) break;
                    std::uint8_t* p = buf.data() + (yy * cw + xx) * bpsz;
                    const double v = g.at(x, y);
                    switch (g.format()) {
                    case SampleFormat::u8: p[0] = static_cast<std::uint8_t>(v); break;
                    case SampleFormat::u16: {
                        const auto u = static_cast<std::uint16_t>(v);
                        p[0] = static_cast<std::uint8_t>(u);
                        p[1] = static_cast<std::uint8_t>(u >> 8);
                        break;
                    }
                    case SampleFormat::f32: {
                        const float f = static_cast<float>(v);
                        std::uint32_t bits;
                        std::memcpy(&bits, &f, 4);
                        for (int i = 0; i < 4; ++i) p[i] = static_cast<std::uint8_t>(bits >> (8 * i));
                        break;
                    }
                    }
                }
            }
            chunks.push_back(opt.compression == Compression::deflate ? deflate_chunk(buf) : std::move(buf));
        }
    }

    nlohmann::json meta = nlohmann::json::object();
    meta["sarpatch"] = {{"sample_kind", to_string(g.kind())}, {"crs", g.crs_tag()}};
    for (auto& [k, v] : opt.provenance.items()) meta["sarpatch"][k] = v;

    Writer w;
    w.add_long(kImageWidth, {static_cast<std::uint32_t>(W)});
    w.add_long(kImageLength, {static_cast<std::uint32_t>(H)});
    w.add_short(kBitsPerSample, {static_cast<std::uint16_t>(bpsz * 8)});
    w.add_short(kCompression, {static_cast<std::uint16_t>(opt.compression == Compression::deflate ? 8 : 1)});
    w.add_short(kPhotometric, {1});
    w.add_ascii(kImageDescription, meta.dump());
    w.add_short(kSamplesPerPixel, {1});
    w.add_short(kPlanarConfig, {1});
    w.add_short(kSampleFormat, {static_cast<std::uint16_t>(g.format() == SampleFormat::f32 ? 3 : 1)});
    std::vector<std::uint32_t> counts;
    for (const auto& c : chunks) counts.push_back(static_cast<std::uint32_t>(c.size()));
    if (tiled) {
        w.add_long(kTileWidth, {static_cast<std::uint32_t>(cw)});
        w.add_long(kTileLength, {static_cast<std::uint32_t>(ch)});
        w.add_long(kTileByteCounts, counts);
    } else {
        w.add_long(kRowsPerStrip, {static_cast<std::uint32_t>(ch)});
        w.add_long(kStripByteCounts, counts);
    }
    const auto& t = g.transform();
    w.add_double(kModelPixelScale, {t.pixel_width, t.pixel_height, 0.0});
    w.add_double(kModelTiepoint, {0.0, 0.0, 0.0, t.origin_x, t.origin_y, 0.0});
    if (auto code = epsg_code(g.crs_tag()); code && *code <= 0xFFFF) {
        const bool geographic = *code >= 4000 && *code < 5000;
        w.add_short(kGeoKeyDirectory, {1, 1, 0, 3,
                                       1024, 0, 1, static_cast<std::uint16_t>(geographic ? 2 : 1),
                                       1025, 0, 1, 1,
                                       static_cast<std::uint16_t>(geographic ? 2048 : 3072), 0, 1,
                                       static_cast<std::uint16_t>(*code)});
    }
    w.add_ascii(kGdalNodata, format_nodata(g.nodata()));
    return w.finish(tiled ? kTileOffsets : kStripOffsets, chunks);
}

inline void write_geotiff(const RasterGrid& g, const std::filesystem::path& path,
                          const GeoTiffWriteOptions& opt = {}) {
    const auto bytes = encode_geotiff(g, opt);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

}  // namespace sarpatch
