#pragma once

// Category-aware location sampling: class statistics, inverse-frequency
// weights, per-image allocation, two-stage (class, then pixel) sampling,
// point-to-patch matching, full-forest filtering and split assignment.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sarpatch/error.hpp"
#include "sarpatch/legend.hpp"
#include "sarpatch/patchify.hpp"
#include "sarpatch/raster.hpp"
#include "sarpatch/rng.hpp"

namespace sarpatch {

struct CategoryStats {
    std::map<ClassId, std::uint64_t> counts;
    std::uint64_t total = 0;

    /// Count valid pixels of an already-remapped label raster.
    void add(const RasterGrid& labels) {
        for (double v : labels.samples()) {
            if (labels.is_nodata(v)) continue;
            ++counts[static_cast<ClassId>(v)];
            ++total;
        }
    }

    void merge(const CategoryStats& other) {
        for (const auto& [c, n] : other.counts) counts[c] += n;
        total += other.total;
    }
};

inline CategoryStats accumulate_stats(std::span<const RasterGrid> labels, const LegendRemap& legend) {
    CategoryStats s;
    for (const auto& g : labels) s.add(apply_legend(g, legend));
    return s;
}

struct CategoryWeights {
    std::map<ClassId, double> p;
    std::map<ClassId, double> w_norm;

    double weight(ClassId c) const {
        auto it = w_norm.find(c);
        return it == w_norm.end() ? 0.0 : it->second;
    }
};

/// p(c) = n_c / N, w(c) = 1 / p(c), w_norm(c) = w(c) / sum w. Classes with
/// zero count or listed in `zero_weight` contribute w = 0.
inline CategoryWeights category_weights(const CategoryStats& stats, const std::set<ClassId>& zero_weight = {}) {
    if (stats.total == 0) throw Error(Errc::empty_stats, "no valid pixels were counted");
    CategoryWeights out;
    const double total = static_cast<double>(stats.total);
    std::map<ClassId, double> w;
    double sum = 0.0;
    for (const auto& [c, n] : stats.counts) {
        const double p = static_cast<double>(n) / total;
        out.p[c] = p;
        const double wc = (n == 0 || zero_weight.count(c)) ? 0.0 : 1.0 / p;
        w[c] = wc;
        sum += wc;
    }
    if (sum == 0.0) throw Error(Errc::empty_stats, "every class has zero sampling weight");
    for (const auto& [c, wc] : w) out.w_norm[c] = wc / sum;
    return out;
}

/// Largest-remainder apportionment of `n_total` proportional to `shares`
/// using exact integer arithmetic. Ties in the remainder go to the earlier key.
template <typename Key>
std::map<Key, std::uint64_t> largest_remainder(std::uint64_t n_total, const std::map<Key, std::uint64_t>& shares) {
    unsigned __int128 denom = 0;
    for (const auto& [k, v] : shares) denom += v;
    if (denom == 0) throw Error(Errc::no_valid_pixels, "no raster has valid pixels");
    std::map<Key, std::uint64_t> out;
    std::vector<std::pair<unsigned __int128, std::size_t>> rem;
    std::vector<Key> keys;
    std::uint64_t assigned = 0;
    for (const auto& [k, v] : shares) {
        const unsigned __int128 num = static_cast<unsigned __int128>(n_total) * v;
        const auto q = static_cast<std::uint64_t>(num / denom);
        out[k] = q;
        assigned += q;
        rem.emplace_back(num % denom, keys.size());
        keys.push_back(k);
    }
    std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::uint64_t i = 0; assigned < n_total; ++i, ++assigned) ++out[keys[rem[i].second]];
    return out;
}

inline std::map<std::string, std::uint64_t> allocate_per_image(
    std::uint64_t n_total, const std::map<std::string, std::uint64_t>& valid_pixels) {
    return largest_remainder(n_total, valid_pixels);
}

struct SamplePoint {
    std::size_t col = 0;
    std::size_t row = 0;
    ClassId cls = 0;

    friend bool operator==(const SamplePoint&, const SamplePoint&) = default;
};

/// Two-stage draw: a class from w_norm renormalised over the classes present
/// in this raster, then a pixel uniformly among that class's pixels.
/// Repeated pixels are redrawn, with at most 100*n attempts in total.
inline std::vector<SamplePoint> sample_locations(const RasterGrid& labels, std::size_t n,
                                                 const CategoryWeights& weights, std::uint64_t seed) {
    std::vector<SamplePoint> out;
    if (n == 0) return out;

    // Bucket pixel indices by eligible class (counting sort).
    std::map<ClassId, std::size_t> slot;
    std::vector<ClassId> classes;
    std::vector<std::uint64_t> counts;
    const auto& s = labels.samples();
    if (s.size() > UINT32_MAX) throw Error(Errc::invalid_argument, "raster too large for 32-bit pixel indices");
    std::vector<std::int32_t> pixel_slot(s.size(), -1);
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (labels.is_nodata(s[i])) continue;
        const auto c = static_cast<ClassId>(s[i]);
        auto it = slot.find(c);
        if (it == slot.end()) {
            if (!(weights.weight(c) > 0.0)) {
                it = slot.emplace(c, SIZE_MAX).first;
            } else {
                it = slot.emplace(c, classes.size()).first;
                classes.push_back(c);
                counts.push_back(0);
            }
        }
        if (it->second == SIZE_MAX) continue;
        pixel_slot[i] = static_cast<std::int32_t>(it->second);
        ++counts[it->second];
    }
    const std::uint64_t eligible = std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
    if (eligible < n)
        throw Error(Errc::insufficient_distinct_pixels,
                    std::to_string(eligible) + " eligible pixels for " + std::to_string(n) + " samples");

    // Classes were discovered in scan order; draw in ascending class order.
    std::vector<std::size_t> order(classes.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return classes[a] < classes[b]; });

    std::vector<std::uint64_t> offsets(classes.size() + 1, 0);
    for (std::size_t k = 0; k < classes.size(); ++k) offsets[k + 1] = offsets[k] + counts[k];
    std::vector<std::uint32_t> pixels(eligible);
    {
        std::vector<std::uint64_t> fill(offsets.begin(), offsets.end() - 1);
        for (std::size_t i = 0; i < s.size(); ++i)
            if (pixel_slot[i] >= 0) pixels[fill[pixel_slot[i]]++] = static_cast<std::uint32_t>(i);
    }
    std::vector<double> cumulative;
    double acc = 0.0;
    for (auto k : order) cumulative.push_back(acc += weights.weight(classes[k]));

    Xoshiro256ss rng(seed);
    std::unordered_set<std::uint32_t> taken;
    taken.reserve(n * 2);
    out.reserve(n);
    const std::uint64_t cap = 100 * static_cast<std::uint64_t>(n);
    for (std::uint64_t attempt = 0; out.size() < n; ++attempt) {
        if (attempt >= cap)
            throw Error(Errc::insufficient_distinct_pixels, "distinct-draw attempt cap reached");
        const double u = rng.uniform() * acc;
        std::size_t pick = static_cast<std::size_t>(
            std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
        if (pick >= order.size()) pick = order.size() - 1;
        const std::size_t k = order[pick];
        const std::uint32_t idx = pixels[offsets[k] + rng.bounded(counts[k])];
        if (!taken.insert(idx).second) continue;
        out.push_back({idx % labels.width(), idx / labels.width(), classes[k]});
    }
    return out;
}

struct PlannedPoint {
    std::string raster_id;
    std::size_t col = 0;
    std::size_t row = 0;
    ClassId cls = 0;
    double x = 0.0;
    double y = 0.0;
};

struct SamplePlan {
    std::uint64_t seed = 0;
    std::uint64_t n_total = 0;
    std::map<std::string, std::uint64_t> per_image;
    std::vector<PlannedPoint> points;
};

/// Map coordinate of a sampled pixel's centre.
inline MapCoord sample_point_location(const GeoTransform& t, std::size_t col, std::size_t row) noexcept {
    return pixel_to_world(t, static_cast<double>(col) + 0.5, static_cast<double>(row) + 0.5);
}

struct MatchResult {
    /// Selected patch ids, deduplicated, in manifest order.
    std::vector<std::string> patch_ids;
    /// Manifest index per input point, or nullopt when no patch contains it.
    std::vector<std::optional<std::size_t>> assignment;
    std::size_t dropped = 0;
};

/// Assign every point to the first manifest patch whose half-open bounds
/// contain it. A uniform grid index keeps this near-linear in points.
inline MatchResult match_points_to_patches(std::span<const MapCoord> points, std::span<const PatchRecord> manifest) {
    MatchResult res;
    res.assignment.assign(points.size(), std::nullopt);
    if (manifest.empty()) {
        res.dropped = points.size();
        return res;
    }
    double cell = 0.0, ox = manifest[0].bounds.min_x, oy = manifest[0].bounds.min_y;
    for (const auto& r : manifest) {
        cell = std::max({cell, r.bounds.max_x - r.bounds.min_x, r.bounds.max_y - r.bounds.min_y});
        ox = std::min(ox, r.bounds.min_x);
        oy = std::min(oy, r.bounds.min_y);
    }
    if (!(cell > 0.0)) cell = 1.0;
    auto key = [&](double x, double y) {
        const auto cx = static_cast<std::int64_t>(std::floor((x - ox) / cell));
        const auto cy = static_cast<std::int64_t>(std::floor((y - oy) / cell));
        return (static_cast<std::uint64_t>(cx) << 32) ^ static_cast<std::uint64_t>(cy & 0xFFFFFFFF);
    };
    std::unordered_map<std::uint64_t, std::vector<std::size_t>> grid;
    for (std::size_t i = 0; i < manifest.size(); ++i) {
        const auto& b = manifest[i].bounds;
        const auto x0 = static_cast<std::int64_t>(std::floor((b.min_x - ox) / cell));
        const auto x1 = static_cast<std::int64_t>(std::floor((b.max_x - ox) / cell));
        const auto y0 = static_cast<std::int64_t>(std::floor((b.min_y - oy) / cell));
        const auto y1 = static_cast<std::int64_t>(std::floor((b.max_y - oy) / cell));
        for (auto cx = x0; cx <= x1; ++cx)
            for (auto cy = y0; cy <= y1; ++cy)
                grid[(static_cast<std::uint64_t>(cx) << 32) ^ static_cast<std::uint64_t>(cy & 0xFFFFFFFF)].push_back(i);
    }

    std::vector<bool> chosen(manifest.size(), false);
    for (std::size_t p = 0; p < points.size(); ++p) {
        const auto& pt = points[p];
        auto it = grid.find(key(pt.x, pt.y));
        std::optional<std::size_t> best;
        if (it != grid.end())
            for (std::size_t i : it->second)
                if (manifest[i].bounds.contains(pt.x, pt.y) && (!best || i < *best)) best = i;
        res.assignment[p] = best;
        if (!best) {
            ++res.dropped;
            continue;
        }
        chosen[*best] = true;
    }
    for (std::size_t i = 0; i < manifest.size(); ++i)
        if (chosen[i]) res.patch_ids.push_back(manifest[i].patch_id);
    return res;
}

/// A patch is fully forest when it has valid pixels and every one of them
/// belongs to a forest class.
inline bool is_full_forest(const std::map<ClassId, std::uint64_t>& histogram, const std::set<ClassId>& forest) {
    bool any = false;
    for (const auto& [c, n] : histogram) {
        if (n == 0) continue;
        if (!forest.count(c)) return false;
        any = true;
    }
    return any;
}

inline std::vector<std::string> filter_full_forest(std::span<const std::string> patch_ids,
                                                   std::span<const PatchRecord> manifest,
                                                   const LegendRemap& legend) {
    std::unordered_map<std::string, const PatchRecord*> by_id;
    for (const auto& r : manifest) by_id.emplace(r.patch_id, &r);
    std::vector<std::string> kept;
    for (const auto& id : patch_ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw Error(Errc::invalid_argument, "patch '" + id + "' missing from manifest");
        if (!is_full_forest(it->second->class_histogram, legend.forest_classes)) kept.push_back(id);
    }
    return kept;
}

using SplitRatios = std::array<double, 3>;  // train, val, test

/// Ratios derived from the reported fine-tuning split sizes.
inline constexpr SplitRatios kDefaultSplitRatios{72238.0 / 111137.0, 20005.0 / 111137.0, 18894.0 / 111137.0};

inline std::array<std::size_t, 3> split_counts(std::size_t n, const SplitRatios& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0)) throw Error(Errc::invalid_ratios, "split ratios must be non-negative");
        sum += r;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::invalid_ratios, "split ratios must sum to 1");
    std::array<std::size_t, 3> counts{};
    std::array<std::pair<double, std::size_t>, 3> frac{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
        const double quota = ratios[s] * static_cast<double>(n);
        counts[s] = static_cast<std::size_t>(std::floor(quota));
        frac[s] = {quota - std::floor(quota), s};
        assigned += counts[s];
    }
    std::stable_sort(frac.begin(), frac.end(), [](auto& a, auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < n; ++i, ++assigned) ++counts[frac[i % 3].second];
    return counts;
}

/// Seeded shuffle of the ids followed by contiguous train/val/test blocks.
inline std::map<std::string, Split> assign_splits(std::span<const std::string> patch_ids,
                                                  const SplitRatios& ratios, std::uint64_t seed) {
    const auto counts = split_counts(patch_ids.size(), ratios);
    std::vector<std::string> ids(patch_ids.begin(), patch_ids.end());
    Xoshiro256ss rng(seed);
    seeded_shuffle(std::span<std::string>(ids), rng);
    std::map<std::string, Split> out;
    std::size_t i = 0;
    const Split order[3] = {Split::train, Split::val, Split::test};
    for (std::size_t s = 0; s < 3; ++s)
        for (std::size_t k = 0; k < counts[s]; ++k, ++i) out[ids[i]] = order[s];
    return out;
}

}  // namespace sarpatch
