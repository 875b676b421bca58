#pragma once

// Synthetic multi-scene project on disk: raw DN scenes, coarser label tiles
// in the same CRS, the example legend and a run config with relative paths.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "sarpatch/geotiff.hpp"
#include "sarpatch/rng.hpp"

namespace sarpatch::fixture {

namespace fs = std::filesystem;

struct Layout {
    std::size_t scenes = 3;
    std::size_t raw_size = 1024;  // pixels per side at 10 m
    std::size_t patch_size = 64;
    std::uint64_t n_total = 2000;
    double origin_y = 50000.0;
};

inline constexpr int kForestSources[] = {6, 7, 8, 9, 11};

/// Source class at a map coordinate: 1.7 km blocks of hashed classes, with
/// the westmost 4 km all forest.
inline int source_class(double x, double y, double origin_y) {
    const auto bx = static_cast<std::uint64_t>(x / 1700.0);
    const auto by = static_cast<std::uint64_t>((origin_y - y) / 1700.0);
    std::uint64_t s = bx * 131 + by;
    const std::uint64_t h = splitmix64(s);
    if (x < 4000.0) return kForestSources[h % 5];
    return 1 + static_cast<int>(h % 14);
}

inline void write_text(const fs::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

inline std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline std::string config_text(const Layout& l) {
    std::ostringstream c;
    c << "[run]\nseed = 11\n"
      << "[downsample]\ninput_dir = raw\noutput_dir = half\ncompression = deflate\n"
      << "[labels]\nsar_dir = half\ntile_dir = tiles\noutput_dir = aligned\n"
      << "[legend]\nfile = legend.txt\n"
      << "[calibration]\nmode = formula\ncf = -83.0\n"
      << "[patchify]\nsar_dir = half\nlabel_dir = aligned\noutput_dir = patches\nsize = " << l.patch_size << "\n"
      << "[sample]\nlabel_dir = aligned\nmanifest = patches/manifest.jsonl\noutput_dir = sampled\nn_total = "
      << l.n_total << "\nforest_mode = post_filter\n"
      << "[loss_check]\ninstances = 10\n";
    return c.str();
}

/// Writes the project under `root` and returns the config path.
inline fs::path build_project(const fs::path& root, const fs::path& legend_file, const Layout& l = {}) {
    fs::create_directories(root / "raw");
    fs::create_directories(root / "tiles");
    fs::copy_file(legend_file, root / "legend.txt", fs::copy_options::overwrite_existing);
    const double extent = 10.0 * static_cast<double>(l.raw_size);

    for (std::size_t k = 0; k < l.scenes; ++k) {
        RasterGrid g(l.raw_size, l.raw_size, SampleKind::sar_dn,
                     {static_cast<double>(k) * extent, l.origin_y, 10.0, 10.0}, "EPSG:32654");
        Xoshiro256ss rng(1000 + k);
        for (auto& v : g.samples()) v = static_cast<double>(1 + rng.bounded(4000));
        if (k % 3 == 0)  // western margin
            for (std::size_t r = 0; r < l.raw_size; ++r)
                for (std::size_t c = 0; c < 40; ++c) g.at(c, r) = 0;
        if (k % 3 == 1)  // horizontal stripe
            for (std::size_t r = 300; r < 340; ++r)
                for (std::size_t c = 0; c < l.raw_size; ++c) g.at(c, r) = 0;
        GeoTiffWriteOptions opt;
        opt.compression = Compression::deflate;
        write_geotiff(g, root / "raw" / ("scene" + std::to_string(k) + ".tif"), opt);
    }

    // Two overlapping 30 m label tiles spanning all scenes.
    const double total_w = extent * static_cast<double>(l.scenes);
    const double split = total_w / 2.0;
    const std::size_t rows = static_cast<std::size_t>(extent / 30.0) + 2;
    const double x0s[2] = {0.0, split - 990.0};
    const double x1s[2] = {split + 990.0, total_w + 60.0};
    for (int t = 0; t < 2; ++t) {
        const auto cols = static_cast<std::size_t>((x1s[t] - x0s[t]) / 30.0);
        RasterGrid tile(cols, rows, SampleKind::label_class, {x0s[t], l.origin_y, 30.0, 30.0}, "EPSG:32654");
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cols; ++c) {
                const double x = x0s[t] + (static_cast<double>(c) + 0.5) * 30.0;
                const double y = l.origin_y - (static_cast<double>(r) + 0.5) * 30.0;
                tile.at(c, r) = source_class(x, y, l.origin_y);
            }
        if (t == 0) tile.at(200, 100) = 0;  // a small label gap
        write_geotiff(tile, root / "tiles" / ("tile" + std::to_string(t) + ".tif"));
    }
    const fs::path cfg = root / "run.ini";
    write_text(cfg, config_text(l));
    return cfg;
}

/// Runs the CLI, returning its exit status; stdout goes to `out_file`.
inline int run_cli(const std::string& args, const fs::path& out_file = "/dev/null") {
    const std::string cmd = std::string(SARPATCH_CLI) + " " + args + " > '" + out_file.string() + "' 2>/dev/null";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

/// downsample -> labels -> patchify -> sample; returns the first nonzero
/// exit status or 0.
inline int run_pipeline(const fs::path& cfg, std::size_t jobs) {
    for (const char* cmd : {"downsample", "labels", "patchify", "sample"}) {
        const int rc = run_cli(std::string(cmd) + " --config '" + cfg.string() + "' --jobs " + std::to_string(jobs));
        if (rc != 0) return rc;
    }
    return 0;
}

/// Every regular file under `root`, relative path to contents.
inline std::vector<std::pair<std::string, std::string>> snapshot(const fs::path& root) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out.emplace_back(fs::relative(e.path(), root).string(), read_text(e.path()));
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace sarpatch::fixture
