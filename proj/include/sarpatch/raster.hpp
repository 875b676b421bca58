#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "sarpatch/error.hpp"

namespace sarpatch {

/// Axis-aligned, north-up affine transform. Rows grow southwards, so map y
/// decreases by `pixel_height` per row.
struct GeoTransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double pixel_width = 1.0;
    double pixel_height = 1.0;

    bool valid() const noexcept {
        return pixel_width > 0.0 && pixel_height > 0.0 && std::isfinite(origin_x) &&
               std::isfinite(origin_y) && std::isfinite(pixel_width) && std::isfinite(pixel_height);
    }

    friend bool operator==(const GeoTransform&, const GeoTransform&) = default;
};

struct PixelCoord {
    double col = 0.0;
    double row = 0.0;
};

struct MapCoord {
    double x = 0.0;
    double y = 0.0;
};

inline PixelCoord world_to_pixel(const GeoTransform& t, double x, double y) noexcept {
    return {(x - t.origin_x) / t.pixel_width, (t.origin_y - y) / t.pixel_height};
}

inline MapCoord pixel_to_world(const GeoTransform& t, double col, double row) noexcept {
    return {t.origin_x + col * t.pixel_width, t.origin_y - row * t.pixel_height};
}

enum class SampleKind { sar_dn, sar_db, label_class };

/// On-disk sample encoding. Samples are always held as double in memory;
/// every supported encoding round-trips through double exactly.
enum class SampleFormat { u8, u16, f32 };

inline const char* to_string(SampleKind k) noexcept {
    switch (k) {
    case SampleKind::sar_dn: return "sar_dn";
    case SampleKind::sar_db: return "sar_db";
    case SampleKind::label_class: return "label_class";
    }
    return "?";
}

inline SampleKind sample_kind_from_string(const std::string& s) {
    if (s == "sar_dn") return SampleKind::sar_dn;
    if (s == "sar_db") return SampleKind::sar_db;
    if (s == "label_class") return SampleKind::label_class;
    throw Error(Errc::invalid_argument, "unknown sample kind '" + s + "'");
}

inline SampleFormat default_format(SampleKind k) noexcept {
    switch (k) {
    case SampleKind::sar_dn: return SampleFormat::u16;
    case SampleKind::sar_db: return SampleFormat::f32;
    case SampleKind::label_class: return SampleFormat::u8;
    }
    return SampleFormat::f32;
}

inline double default_nodata(SampleKind k) noexcept {
    return k == SampleKind::sar_db ? std::numeric_limits<double>::quiet_NaN() : 0.0;
}

/// Pixel window in grid coordinates; half-open on both axes.
struct Window {
    std::size_t col0 = 0;
    std::size_t row0 = 0;
    std::size_t width = 0;
    std::size_t height = 0;

    friend bool operator==(const Window&, const Window&) = default;
};

/// Single-band georeferenced raster. Row-major, row 0 at the north edge.
class RasterGrid {
public:
    RasterGrid() = default;

    RasterGrid(std::size_t width, std::size_t height, SampleKind kind, GeoTransform transform,
               std::string crs_tag)
        : RasterGrid(width, height, kind, transform, std::move(crs_tag), default_nodata(kind)) {}

    RasterGrid(std::size_t width, std::size_t height, SampleKind kind, GeoTransform transform,
               std::string crs_tag, double nodata)
        : width_(width),
          height_(height),
          kind_(kind),
          format_(default_format(kind)),
          nodata_(nodata),
          transform_(transform),
          crs_tag_(std::move(crs_tag)),
          samples_(width * height, nodata) {
        if (!transform_.valid())
            throw Error(Errc::invalid_argument, "geotransform must have positive finite pixel sizes");
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t size() const noexcept { return samples_.size(); }
    bool empty() const noexcept { return samples_.empty(); }

    SampleKind kind() const noexcept { return kind_; }
    SampleFormat format() const noexcept { return format_; }
    double nodata() const noexcept { return nodata_; }
    const GeoTransform& transform() const noexcept { return transform_; }
    const std::string& crs_tag() const noexcept { return crs_tag_; }

    void set_kind(SampleKind k) noexcept { kind_ = k; }
    void set_format(SampleFormat f) noexcept { format_ = f; }
    void set_nodata(double v) noexcept { nodata_ = v; }

    const std::vector<double>& samples() const noexcept { return samples_; }
    std::vector<double>& samples() noexcept { return samples_; }

    double at(std::size_t col, std::size_t row) const noexcept { return samples_[row * width_ + col]; }
    double& at(std::size_t col, std::size_t row) noexcept { return samples_[row * width_ + col]; }

    bool is_nodata(double v) const noexcept {
        return v == nodata_ || (std::isnan(nodata_) && std::isnan(v));
    }
    bool valid_at(std::size_t col, std::size_t row) const noexcept { return !is_nodata(at(col, row)); }

    std::size_t count_valid() const noexcept {
        std::size_t n = 0;
        for (double v : samples_) n += is_nodata(v) ? 0 : 1;
        return n;
    }

    /// Copy of a sub-window with the transform shifted to the window origin.
    RasterGrid crop(const Window& w) const {
        if (w.col0 + w.width > width_ || w.row0 + w.height > height_ || w.width == 0 || w.height == 0)
            throw Error(Errc::out_of_bounds, "crop window outside raster");
        const MapCoord o = pixel_to_world(transform_, static_cast<double>(w.col0),
                                          static_cast<double>(w.row0));
        GeoTransform t = transform_;
        t.origin_x = o.x;
        t.origin_y = o.y;
        RasterGrid out(w.width, w.height, kind_, t, crs_tag_, nodata_);
        out.format_ = format_;
        for (std::size_t r = 0; r < w.height; ++r)
            for (std::size_t c = 0; c < w.width; ++c) out.at(c, r) = at(w.col0 + c, w.row0 + r);
        return out;
    }

    /// Bitwise sample equality (NaN == NaN), plus all metadata.
    friend bool operator==(const RasterGrid& a, const RasterGrid& b) noexcept {
        if (a.width_ != b.width_ || a.height_ != b.height_ || a.kind_ != b.kind_ ||
            a.format_ != b.format_ || a.transform_ != b.transform_ || a.crs_tag_ != b.crs_tag_)
            return false;
        auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
        if (!same(a.nodata_, b.nodata_)) return false;
        for (std::size_t i = 0; i < a.samples_.size(); ++i)
            if (!same(a.samples_[i], b.samples_[i])) return false;
        return true;
    }

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    SampleKind kind_ = SampleKind::sar_dn;
    SampleFormat format_ = SampleFormat::u16;
    double nodata_ = 0.0;
    GeoTransform transform_{};
    std::string crs_tag_;
    std::vector<double> samples_;
};

inline bool coregistered(const RasterGrid& a, const RasterGrid& b) noexcept {
    return a.width() == b.width() && a.height() == b.height() && a.transform() == b.transform() &&
           a.crs_tag() == b.crs_tag();
}

inline void require_coregistered(const RasterGrid& a, const RasterGrid& b) {
    if (!coregistered(a, b))
        throw Error(Errc::not_coregistered, "rasters differ in size, transform or CRS");
}

struct GeoBounds {
    double min_x = 0.0;
    double min_y = 0.0;
    double max_x = 0.0;
    double max_y = 0.0;

    /// Half-open containment: west and north edges inclusive, east and
    /// south edges exclusive, mirroring [col0, col0+w) x [row0, row0+h).
    bool contains(double x, double y) const noexcept {
        return min_x <= x && x < max_x && min_y < y && y <= max_y;
    }

    friend bool operator==(const GeoBounds&, const GeoBounds&) = default;
};

inline GeoBounds window_bounds(const GeoTransform& t, const Window& w) noexcept {
    const MapCoord ul = pixel_to_world(t, static_cast<double>(w.col0), static_cast<double>(w.row0));
    const MapCoord lr = pixel_to_world(t, static_cast<double>(w.col0 + w.width),
                                       static_cast<double>(w.row0 + w.height));
    return {ul.x, lr.y, lr.x, ul.y};
}

inline GeoBounds raster_bounds(const RasterGrid& g) noexcept {
    return window_bounds(g.transform(), Window{0, 0, g.width(), g.height()});
}

}  // namespace sarpatch
