#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include "sarpatch/error.hpp"
#include "sarpatch/raster.hpp"

namespace sarpatch {

using ClassId = int;

/// Source-to-target class mapping used to merge legend entries (e.g. the
/// forest sub-types into one forest class), plus the target-class sets the
/// sampler treats specially.
struct LegendRemap {
    std::map<ClassId, ClassId> mapping;
    std::set<ClassId> forest_classes;
    std::set<ClassId> zero_weight_classes;
    /// Classes missing from `mapping` pass through unchanged.
    bool passthrough = false;
    /// Unknown classes raise `unknown_class`; otherwise they become nodata.
    bool strict = true;

    static LegendRemap identity() {
        LegendRemap l;
        l.passthrough = true;
        return l;
    }

    std::optional<ClassId> map(ClassId source) const {
        if (auto it = mapping.find(source); it != mapping.end()) return it->second;
        if (passthrough) return source;
        if (strict) throw Error(Errc::unknown_class, "class " + std::to_string(source) + " not in legend");
        return std::nullopt;
    }

    std::set<ClassId> targets() const {
        std::set<ClassId> t;
        for (const auto& [s, d] : mapping) t.insert(d);
        return t;
    }
};

inline RasterGrid apply_legend(const RasterGrid& labels, const LegendRemap& legend) {
    if (labels.kind() != SampleKind::label_class)
        throw Error(Errc::invalid_argument, "apply_legend expects a label raster");
    RasterGrid out = labels;
    // Label rasters are 8-bit, so a lookup table over the raw values is cheap.
    std::map<double, double> cache;
    for (double& v : out.samples()) {
        if (labels.is_nodata(v)) continue;
        auto it = cache.find(v);
        if (it == cache.end()) {
            const auto m = legend.map(static_cast<ClassId>(v));
            it = cache.emplace(v, m ? static_cast<double>(*m) : labels.nodata()).first;
        }
        v = it->second;
    }
    return out;
}

/// Text format, one directive per line, '#' starts a comment:
///   <source> <target>       mapping row
///   forest <id> <id> ...    target ids counted as forest
///   zero_weight <id> ...    target ids excluded from sampling weights
///   strict true|false
///   passthrough true|false
inline LegendRemap parse_legend(std::istream& in) {
    LegendRemap l;
    std::string line;
    int lineno = 0;
    auto fail = [&](const std::string& what) {
        throw Error(Errc::config_error, "legend line " + std::to_string(lineno) + ": " + what);
    };
    auto parse_bool = [&](std::istringstream& ss) {
        std::string v;
        ss >> v;
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        fail("expected true/false");
        return false;
    };
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string head;
        if (!(ss >> head)) continue;
        if (head == "forest" || head == "zero_weight") {
            auto& dst = head == "forest" ? l.forest_classes : l.zero_weight_classes;
            ClassId id;
            while (ss >> id) dst.insert(id);
            if (!ss.eof()) fail("bad class id list");
        } else if (head == "strict") {
            l.strict = parse_bool(ss);
        } else if (head == "passthrough") {
            l.passthrough = parse_bool(ss);
        } else {
            ClassId src = 0, dst = 0;
            std::istringstream row(line);
            if (!(row >> src >> dst)) fail("expected '<source> <target>'");
            std::string rest;
            if (row >> rest) fail("trailing text");
            if (src < 0 || dst < 0) fail("class ids must be non-negative");
            if (!l.mapping.emplace(src, dst).second) fail("duplicate source class");
        }
    }
    if (!l.passthrough) {
        const auto t = l.targets();
        for (ClassId f : l.forest_classes)
            if (!t.count(f)) throw Error(Errc::config_error, "forest class " + std::to_string(f) + " is not a mapping target");
    }
    return l;
}

inline LegendRemap load_legend(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::io_error, "cannot open legend " + path.string());
    return parse_legend(in);
}

}  // namespace sarpatch
