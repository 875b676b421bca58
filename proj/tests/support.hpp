#pragma once

// Test-only helpers: synthetic rasters, temp directories and independent
// brute-force oracles. Nothing here calls into the code paths it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sarpatch/raster.hpp"

namespace sarpatch::oracle {

namespace fs = std::filesystem;

class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = fs::temp_directory_path() / ("sarpatch_" + tag + "_" + std::to_string(rd()));
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& s) const { return path_ / s; }

private:
    fs::path path_;
};

inline RasterGrid make_grid(std::size_t w, std::size_t h, SampleKind kind, GeoTransform t = {0.0, 0.0, 10.0, 10.0},
                            std::string crs = "EPSG:32654") {
    return RasterGrid(w, h, kind, t, std::move(crs));
}

// ---- oracles ---------------------------------------------------------------

/// Literal evaluation of P = n/N, w = 1/P, w_norm = w / sum w.
inline std::map<int, double> weights_oracle(const std::map<int, std::uint64_t>& counts) {
    long double total = 0;
    for (auto& [c, n] : counts) total += n;
    std::map<int, long double> w;
    long double sum = 0;
    for (auto& [c, n] : counts) {
        const long double p = static_cast<long double>(n) / total;
        w[c] = 1.0L / p;
        sum += w[c];
    }
    std::map<int, double> out;
    for (auto& [c, v] : w) out[c] = static_cast<double>(v / sum);
    return out;
}

/// Central differences of an arbitrary scalar function.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = f(x);
        x[i] = x0 - h;
        const double down = f(x);
        x[i] = x0;
        g[i] = (up - down) / (2 * h);
    }
    return g;
}

inline double max_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        m = std::max(m, std::abs(a[i] - b[i]) / std::max({std::abs(a[i]), std::abs(b[i]), 1e-6}));
    return m;
}

struct BoxOracle {
    double min_x, min_y, max_x, max_y;
};

/// O(points x boxes) scan: first box (in order) containing each point.
inline std::vector<std::optional<std::size_t>> containment_oracle(const std::vector<std::pair<double, double>>& pts,
                                                                  const std::vector<BoxOracle>& boxes) {
    std::vector<std::optional<std::size_t>> out(pts.size());
    for (std::size_t p = 0; p < pts.size(); ++p)
        for (std::size_t b = 0; b < boxes.size(); ++b) {
            const auto& [x, y] = pts[p];
            const auto& bx = boxes[b];
            if (x >= bx.min_x && x < bx.max_x && y > bx.min_y && y <= bx.max_y) {
                out[p] = b;
                break;
            }
        }
    return out;
}

/// Brute-force dense confusion matrix over classes 0..K-1; -1 is nodata.
inline std::vector<std::vector<std::uint64_t>> confusion_oracle(const std::vector<int>& pred, const std::vector<int>& gt,
                                                                int K) {
    std::vector<std::vector<std::uint64_t>> m(K, std::vector<std::uint64_t>(K, 0));
    for (std::size_t i = 0; i < gt.size(); ++i)
        if (gt[i] >= 0 && pred[i] >= 0) ++m[gt[i]][pred[i]];
    return m;
}

}  // namespace sarpatch::oracle
