#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sarpatch/error.hpp"
#include "sarpatch/legend.hpp"
#include "sarpatch/raster.hpp"

namespace sarpatch {

/// DN to dB conversion for one sensor/polarisation.
///   formula: dB = 20 log10(DN) + cf
///   lookup:  table[DN], linearly interpolated for fractional DN
/// DN = 0 is the sensor's fill value and always maps to nodata.
struct CalibrationTable {
    enum class Mode { formula, lookup };

    Mode mode = Mode::formula;
    double cf = -83.0;
    std::vector<double> table;
    std::string sensor_id = "ALOS2-HH";

    static CalibrationTable formula(double cf, std::string sensor_id = "ALOS2-HH") {
        CalibrationTable c;
        c.cf = cf;
        c.sensor_id = std::move(sensor_id);
        return c;
    }

    static CalibrationTable lookup(std::vector<double> table, std::string sensor_id) {
        if (table.size() < 2) throw Error(Errc::invalid_argument, "lookup table needs at least two entries");
        for (std::size_t i = 1; i < table.size(); ++i)
            if (!(table[i] >= table[i - 1]))
                throw Error(Errc::invalid_argument, "lookup table must be non-decreasing in DN");
        CalibrationTable c;
        c.mode = Mode::lookup;
        c.table = std::move(table);
        c.sensor_id = std::move(sensor_id);
        return c;
    }

    /// dn must be > 0.
    double to_db(double dn) const {
        if (mode == Mode::formula) return 20.0 * std::log10(dn) + cf;
        const double last = static_cast<double>(table.size() - 1);
        if (dn > last) throw Error(Errc::invalid_dn, "DN " + std::to_string(dn) + " beyond lookup table");
        const auto lo = static_cast<std::size_t>(std::floor(dn));
        const double frac = dn - static_cast<double>(lo);
        if (frac == 0.0) return table[lo];
        return table[lo] + frac * (table[lo + 1] - table[lo]);
    }
};

/// Non-overlapping `size`-pixel windows in row-major order; partial
/// windows at the right and bottom margins are dropped.
inline std::vector<Window> enumerate_patch_windows(const RasterGrid& grid, std::size_t size) {
    if (size == 0) throw Error(Errc::invalid_argument, "patch size must be >= 1");
    std::vector<Window> out;
    const std::size_t across = grid.width() / size;
    const std::size_t down = grid.height() / size;
    out.reserve(across * down);
    for (std::size_t j = 0; j < down; ++j)
        for (std::size_t i = 0; i < across; ++i) out.push_back({i * size, j * size, size, size});
    return out;
}

/// True iff the window holds no nodata samples.
inline bool window_is_valid(const RasterGrid& grid, const Window& w) {
    if (w.col0 + w.width > grid.width() || w.row0 + w.height > grid.height())
        throw Error(Errc::out_of_bounds, "window exceeds raster bounds");
    for (std::size_t r = w.row0; r < w.row0 + w.height; ++r)
        for (std::size_t c = w.col0; c < w.col0 + w.width; ++c)
            if (!grid.valid_at(c, r)) return false;
    return true;
}

inline RasterGrid calibrate_db(const RasterGrid& dn, const CalibrationTable& cal) {
    if (dn.kind() != SampleKind::sar_dn) throw Error(Errc::invalid_argument, "calibrate_db expects a DN raster");
    RasterGrid out(dn.width(), dn.height(), SampleKind::sar_db, dn.transform(), dn.crs_tag());
    for (std::size_t i = 0; i < dn.size(); ++i) {
        const double v = dn.samples()[i];
        if (dn.is_nodata(v) || v == 0.0) continue;
        if (v < 0.0) throw Error(Errc::invalid_dn, "negative DN " + std::to_string(v));
        out.samples()[i] = static_cast<double>(static_cast<float>(cal.to_db(v)));
    }
    return out;
}

enum class Split { pretrain, train, val, test, unassigned };

inline const char* to_string(Split s) noexcept {
    switch (s) {
    case Split::pretrain: return "pretrain";
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    case Split::unassigned: return "unassigned";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    for (Split v : {Split::pretrain, Split::train, Split::val, Split::test, Split::unassigned})
        if (s == to_string(v)) return v;
    throw Error(Errc::invalid_argument, "unknown split '" + s + "'");
}

/// Provenance of one extracted patch pair; one manifest row.
struct PatchRecord {
    std::string patch_id;
    std::string scene_id;
    std::size_t col0 = 0;
    std::size_t row0 = 0;
    std::size_t size = 256;
    GeoBounds bounds;
    std::map<ClassId, std::uint64_t> class_histogram;
    Split split = Split::unassigned;

    friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

inline std::string make_patch_id(const std::string& scene_id, std::size_t col0, std::size_t row0) {
    return scene_id + "_" + std::to_string(col0) + "_" + std::to_string(row0);
}

struct PatchPair {
    RasterGrid sar;
    RasterGrid labels;
    PatchRecord record;
};

/// Crop the same window from SAR and labels, remap label classes through the
/// legend and record geo bounds plus the class histogram.
inline PatchPair extract_patch_pair(const RasterGrid& sar, const RasterGrid& labels, const Window& window,
                                    const LegendRemap& legend, const std::string& scene_id,
                                    bool allow_label_gaps = false) {
    require_coregistered(sar, labels);
    if (window.width != window.height || window.width == 0)
        throw Error(Errc::invalid_window, "patch windows are square");
    if (window.col0 % window.width != 0 || window.row0 % window.height != 0)
        throw Error(Errc::invalid_window, "window not aligned to the patch grid");
    if (window.col0 + window.width > sar.width() || window.row0 + window.height > sar.height())
        throw Error(Errc::invalid_window, "window exceeds raster bounds");
    if (!window_is_valid(sar, window)) throw Error(Errc::invalid_window, "SAR window contains nodata");
    if (!allow_label_gaps && !window_is_valid(labels, window))
        throw Error(Errc::invalid_window, "label window contains nodata");

    PatchPair p{sar.crop(window), apply_legend(labels.crop(window), legend), {}};
    auto& rec = p.record;
    rec.scene_id = scene_id;
    rec.col0 = window.col0;
    rec.row0 = window.row0;
    rec.size = window.width;
    rec.patch_id = make_patch_id(scene_id, window.col0, window.row0);
    rec.bounds = window_bounds(sar.transform(), window);
    for (double v : p.labels.samples())
        if (!p.labels.is_nodata(v)) ++rec.class_histogram[static_cast<ClassId>(v)];
    return p;
}

inline nlohmann::ordered_json to_json(const PatchRecord& r) {
    nlohmann::ordered_json hist = nlohmann::ordered_json::object();
    for (const auto& [cls, n] : r.class_histogram) hist[std::to_string(cls)] = n;
    return {{"patch_id", r.patch_id}, {"scene_id", r.scene_id}, {"col0", r.col0},
            {"row0", r.row0},         {"size", r.size},         {"min_x", r.bounds.min_x},
            {"min_y", r.bounds.min_y}, {"max_x", r.bounds.max_x}, {"max_y", r.bounds.max_y},
            {"class_histogram", hist}, {"split", to_string(r.split)}};
}

inline PatchRecord patch_record_from_json(const nlohmann::json& j) {
    PatchRecord r;
    r.patch_id = j.at("patch_id").get<std::string>();
    r.scene_id = j.at("scene_id").get<std::string>();
    r.col0 = j.at("col0").get<std::size_t>();
    r.row0 = j.at("row0").get<std::size_t>();
    r.size = j.at("size").get<std::size_t>();
    r.bounds = {j.at("min_x").get<double>(), j.at("min_y").get<double>(), j.at("max_x").get<double>(),
                j.at("max_y").get<double>()};
    for (const auto& [k, v] : j.at("class_histogram").items()) r.class_histogram[std::stoi(k)] = v.get<std::uint64_t>();
    r.split = split_from_string(j.at("split").get<std::string>());
    return r;
}

inline void write_manifest(const std::vector<PatchRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string());
    for (const auto& r : records) out << to_json(r).dump() << '\n';
    if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

inline std::vector<PatchRecord> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open " + path.string());
    std::vector<PatchRecord> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) throw Error(Errc::io_error, "malformed manifest row in " + path.string());
        out.push_back(patch_record_from_json(j));
    }
    return out;
}

}  // namespace sarpatch
