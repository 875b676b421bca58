#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "sarpatch/error.hpp"
#include "sarpatch/raster.hpp"

namespace sarpatch {

/// Domain in which 2x2 SAR blocks are averaged. `linear_power` is only
/// meaningful for dB input: values go through 10^(x/10) and back.
enum class AverageDomain { stored, linear_power };

/// Half-resolution block mean. Each output pixel averages the valid members
/// of its 2x2 source block; all-nodata blocks stay nodata. A trailing odd
/// row/column is dropped. Output is stored as 32-bit float.
inline RasterGrid downsample_half(const RasterGrid& sar, AverageDomain domain = AverageDomain::stored) {
    if (sar.kind() != SampleKind::sar_dn && sar.kind() != SampleKind::sar_db)
        throw Error(Errc::invalid_argument, "downsample_half expects a SAR raster");
    if (domain == AverageDomain::linear_power && sar.kind() != SampleKind::sar_db)
        throw Error(Errc::invalid_argument, "linear-power averaging requires dB input");
    const std::size_t w = sar.width() / 2;
    const std::size_t h = sar.height() / 2;
    if (w == 0 || h == 0) throw Error(Errc::empty_output, "input smaller than 2x2");

    GeoTransform t = sar.transform();
    t.pixel_width *= 2.0;
    t.pixel_height *= 2.0;
    RasterGrid out(w, h, sar.kind(), t, sar.crs_tag(), sar.nodata());
    out.set_format(SampleFormat::f32);

    for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
            double sum = 0.0;
            int n = 0;
            for (std::size_t dr = 0; dr < 2; ++dr) {
                for (std::size_t dc = 0; dc < 2; ++dc) {
                    const double v = sar.at(2 * c + dc, 2 * r + dr);
                    if (sar.is_nodata(v)) continue;
                    sum += domain == AverageDomain::linear_power ? std::pow(10.0, v / 10.0) : v;
                    ++n;
                }
            }
            if (n == 0) continue;  // already nodata
            double mean = sum / n;
            if (domain == AverageDomain::linear_power) mean = 10.0 * std::log10(mean);
            out.at(c, r) = static_cast<double>(static_cast<float>(mean));
        }
    }
    return out;
}

/// Mosaic label tiles onto the target grid by nearest-neighbour lookup of
/// each target pixel centre. Tiles are consulted in argument order and the
/// first one holding a valid class wins.
inline RasterGrid merge_label_tiles(std::span<const RasterGrid> tiles, const RasterGrid& target) {
    if (tiles.empty()) throw Error(Errc::empty_tile_list, "no label tiles supplied");
    for (const auto& tile : tiles) {
        if (tile.crs_tag() != target.crs_tag())
            throw Error(Errc::crs_mismatch, "tile CRS '" + tile.crs_tag() + "' differs from target '" +
                                                target.crs_tag() + "'");
        if (tile.kind() != SampleKind::label_class)
            throw Error(Errc::invalid_argument, "label tiles must hold class ids");
    }

    RasterGrid out(target.width(), target.height(), SampleKind::label_class, target.transform(),
                   target.crs_tag(), tiles.front().nodata());
    for (std::size_t r = 0; r < out.height(); ++r) {
        for (std::size_t c = 0; c < out.width(); ++c) {
            const MapCoord centre = pixel_to_world(target.transform(), c + 0.5, r + 0.5);
            for (const auto& tile : tiles) {
                const PixelCoord p = world_to_pixel(tile.transform(), centre.x, centre.y);
                const double fc = std::floor(p.col);
                const double fr = std::floor(p.row);
                if (fc < 0.0 || fr < 0.0 || fc >= static_cast<double>(tile.width()) ||
                    fr >= static_cast<double>(tile.height()))
                    continue;
                const double v = tile.at(static_cast<std::size_t>(fc), static_cast<std::size_t>(fr));
                if (tile.is_nodata(v)) continue;
                out.at(c, r) = v;
                break;
            }
        }
    }
    return out;
}

/// Blank out label pixels wherever the co-registered SAR scene has no data.
inline RasterGrid mask_labels_by_sar(const RasterGrid& labels, const RasterGrid& sar) {
    require_coregistered(labels, sar);
    RasterGrid out = labels;
    for (std::size_t i = 0; i < out.size(); ++i)
        if (sar.is_nodata(sar.samples()[i])) out.samples()[i] = out.nodata();
    return out;
}

}  // namespace sarpatch
