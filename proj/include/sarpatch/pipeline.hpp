#pragma once

// End-to-end pipeline stages behind the command-line tool. Each stage is a
// pure function of (config, seed): outputs are written in input order and
// reports never depend on worker scheduling.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sarpatch/config.hpp"
#include "sarpatch/error.hpp"
#include "sarpatch/geotiff.hpp"
#include "sarpatch/gradcheck.hpp"
#include "sarpatch/legend.hpp"
#include "sarpatch/metrics.hpp"
#include "sarpatch/mim.hpp"
#include "sarpatch/parallel.hpp"
#include "sarpatch/patch_io.hpp"
#include "sarpatch/patchify.hpp"
#include "sarpatch/raster.hpp"
#include "sarpatch/rng.hpp"
#include "sarpatch/sampler.hpp"
#include "sarpatch/scene_prep.hpp"
#include "sarpatch/seg_loss.hpp"

namespace sarpatch::pipeline {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

enum ExitCode : int { kSuccess = 0, kPartialFailure = 1, kConfigError = 2 };

struct RunOptions {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

struct CommandResult {
    int exit_code = kSuccess;
    ojson report;
};

inline ojson provenance(const Config& cfg, const RunOptions& opt, const std::string& command) {
    return {{"command", command}, {"config_hash", cfg.hash()}, {"seed", opt.seed}};
}

inline std::vector<fs::path> list_geotiffs(const fs::path& dir) {
    if (!fs::is_directory(dir)) throw Error(Errc::config_error, "not a directory: " + dir.string());
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".tif" || ext == ".tiff")) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string());
    out << text;
    if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

inline Compression compression_setting(const Config& cfg, const std::string& key) {
    const auto v = cfg.get<std::string>(key, "none");
    if (v == "none") return Compression::none;
    if (v == "deflate") return Compression::deflate;
    throw Error(Errc::config_error, "'" + key + "' must be none or deflate");
}

inline LegendRemap legend_setting(const Config& cfg) {
    return cfg.has("legend.file") ? load_legend(cfg.path("legend.file")) : LegendRemap::identity();
}

inline CalibrationTable calibration_setting(const Config& cfg) {
    const auto mode = cfg.get<std::string>("calibration.mode", "formula");
    const auto sensor = cfg.get<std::string>("calibration.sensor_id", "ALOS2-HH");
    if (mode == "formula") return CalibrationTable::formula(cfg.get<double>("calibration.cf", -83.0), sensor);
    if (mode == "lookup") {
        std::ifstream in(cfg.path("calibration.lut_file"));
        if (!in) throw Error(Errc::config_error, "cannot open calibration lookup table");
        std::vector<double> table;
        for (std::string line; std::getline(in, line);) {
            if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            table.push_back(std::stod(line));
        }
        try {
            return CalibrationTable::lookup(std::move(table), sensor);
        } catch (const Error& e) {
            throw Error(Errc::config_error, e.what());
        }
    }
    throw Error(Errc::config_error, "calibration.mode must be formula or lookup");
}

inline ScheduleConfig schedule_setting(const Config& cfg, const std::string& section, const ScheduleConfig& d) {
    ScheduleConfig s;
    s.base_lr = cfg.get<double>(section + ".base_lr", d.base_lr);
    s.min_lr = cfg.get<double>(section + ".min_lr", d.min_lr);
    s.epochs = cfg.get<std::size_t>(section + ".epochs", d.epochs);
    s.warmup_epochs = cfg.get<std::size_t>(section + ".warmup_epochs", d.warmup_epochs);
    s.steps_per_epoch = cfg.get<std::size_t>(section + ".steps_per_epoch", d.steps_per_epoch);
    return s;
}

inline LossConfig loss_setting(const Config& cfg) {
    LossConfig l;
    l.dice_weight = cfg.get<double>("loss.dice_weight", l.dice_weight);
    l.focal_weight = cfg.get<double>("loss.focal_weight", l.focal_weight);
    l.gamma = cfg.get<double>("loss.gamma", l.gamma);
    l.alpha = cfg.get<double>("loss.alpha", l.alpha);
    l.epsilon = cfg.get<double>("loss.epsilon", l.epsilon);
    const auto mode = cfg.get<std::string>("loss.dice_denominator", "conventional_sums");
    if (mode == "conventional_sums") l.dice_denominator = DiceDenominator::conventional_sums;
    else if (mode == "paper_maxunion") l.dice_denominator = DiceDenominator::paper_maxunion;
    else throw Error(Errc::config_error, "loss.dice_denominator must be conventional_sums or paper_maxunion");
    try {
        l.validate();
    } catch (const Error& e) {
        throw Error(Errc::config_error, e.what());
    }
    return l;
}

inline ojson scene_summary(const RasterGrid& g) {
    const std::size_t valid = g.count_valid();
    return {{"width", g.width()},
            {"height", g.height()},
            {"valid_pixels", valid},
            {"nodata_fraction", 1.0 - static_cast<double>(valid) / static_cast<double>(g.size())}};
}

// ---------------------------------------------------------------- downsample

inline CommandResult downsample(const Config& cfg, const RunOptions& opt) {
    const auto inputs = list_geotiffs(cfg.path("downsample.input_dir"));
    if (inputs.empty()) throw Error(Errc::config_error, "no GeoTIFF scenes in downsample.input_dir");
    const fs::path out_dir = cfg.path("downsample.output_dir");
    fs::create_directories(out_dir);
    const auto domain_name = cfg.get<std::string>("downsample.average_domain", "stored");
    if (domain_name != "stored" && domain_name != "linear_power")
        throw Error(Errc::config_error, "downsample.average_domain must be stored or linear_power");
    const auto domain = domain_name == "stored" ? AverageDomain::stored : AverageDomain::linear_power;
    GeoTiffWriteOptions wopt;
    wopt.compression = compression_setting(cfg, "downsample.compression");
    wopt.provenance = provenance(cfg, opt, "downsample");

    std::vector<ojson> rows(inputs.size());
    parallel_for(inputs.size(), opt.jobs, [&](std::size_t i) {
        ojson row{{"scene", inputs[i].stem().string()}};
        try {
            const auto sar = read_geotiff(inputs[i]);
            const auto half = downsample_half(sar, domain);
            write_geotiff(half, out_dir / inputs[i].filename(), wopt);
            row["input"] = scene_summary(sar);
            row["output"] = scene_summary(half);
            row["status"] = "ok";
        } catch (const Error& e) {
            row["status"] = "failed";
            row["error"] = e.what();
        }
        rows[i] = std::move(row);
    });

    CommandResult res;
    res.report = provenance(cfg, opt, "downsample");
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r["status"] == "failed";
    res.report["scenes"] = rows;
    res.report["failed"] = failed;
    res.exit_code = failed ? kPartialFailure : kSuccess;
    return res;
}

// -------------------------------------------------------------------- labels

inline bool bounds_overlap(const GeoBounds& a, const GeoBounds& b) {
    return a.min_x < b.max_x && b.min_x < a.max_x && a.min_y < b.max_y && b.min_y < a.max_y;
}

inline CommandResult labels(const Config& cfg, const RunOptions& opt) {
    const auto scenes = list_geotiffs(cfg.path("labels.sar_dir"));
    if (scenes.empty()) throw Error(Errc::config_error, "no SAR scenes in labels.sar_dir");
    const auto tile_paths = list_geotiffs(cfg.path("labels.tile_dir"));
    const fs::path out_dir = cfg.path("labels.output_dir");
    fs::create_directories(out_dir);
    GeoTiffWriteOptions wopt;
    wopt.compression = compression_setting(cfg, "labels.compression");
    wopt.provenance = provenance(cfg, opt, "labels");

    std::vector<RasterGrid> tiles(tile_paths.size());
    parallel_for(tiles.size(), opt.jobs, [&](std::size_t i) { tiles[i] = read_geotiff(tile_paths[i]); });

    std::vector<ojson> rows(scenes.size());
    parallel_for(scenes.size(), opt.jobs, [&](std::size_t i) {
        ojson row{{"scene", scenes[i].stem().string()}};
        try {
            const auto sar = read_geotiff(scenes[i]);
            for (std::size_t t = 0; t < tiles.size(); ++t)
                if (tiles[t].crs_tag() != sar.crs_tag())
                    throw Error(Errc::crs_mismatch, tile_paths[t].filename().string() + " has CRS '" +
                                                        tiles[t].crs_tag() + "', scene has '" + sar.crs_tag() + "'");
            std::vector<RasterGrid> covering;
            ojson used = ojson::array();
            const GeoBounds sb = raster_bounds(sar);
            for (std::size_t t = 0; t < tiles.size(); ++t) {
                if (!bounds_overlap(sb, raster_bounds(tiles[t]))) continue;
                covering.push_back(tiles[t]);
                used.push_back(tile_paths[t].filename().string());
            }
            RasterGrid aligned;
            if (covering.empty()) {
                aligned = RasterGrid(sar.width(), sar.height(), SampleKind::label_class, sar.transform(), sar.crs_tag());
                row["warning"] = "no label tile covers this scene; output is all nodata";
            } else {
                aligned = mask_labels_by_sar(merge_label_tiles(covering, sar), sar);
            }
            write_geotiff(aligned, out_dir / scenes[i].filename(), wopt);
            row["tiles"] = used;
            row["output"] = scene_summary(aligned);
            row["status"] = "ok";
        } catch (const Error& e) {
            row["status"] = "failed";
            row["error"] = e.what();
        }
        rows[i] = std::move(row);
    });

    CommandResult res;
    res.report = provenance(cfg, opt, "labels");
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r["status"] == "failed";
    res.report["scenes"] = rows;
    res.report["failed"] = failed;
    res.exit_code = failed ? kPartialFailure : kSuccess;
    return res;
}

// ------------------------------------------------------------------ patchify

inline CommandResult patchify(const Config& cfg, const RunOptions& opt) {
    const auto scenes = list_geotiffs(cfg.path("patchify.sar_dir"));
    if (scenes.empty()) throw Error(Errc::config_error, "no SAR scenes in patchify.sar_dir");
    const fs::path label_dir = cfg.path("patchify.label_dir");
    const fs::path out_dir = cfg.path("patchify.output_dir");
    const auto size = cfg.get<std::size_t>("patchify.size", 256);
    if (size == 0) throw Error(Errc::config_error, "patchify.size must be >= 1");
    const bool allow_gaps = cfg.get_bool("patchify.allow_label_gaps", false);
    const auto cal = calibration_setting(cfg);
    const auto legend = legend_setting(cfg);
    GeoTiffWriteOptions wopt;
    wopt.compression = compression_setting(cfg, "patchify.compression");
    wopt.provenance = provenance(cfg, opt, "patchify");
    fs::create_directories(out_dir / "sar");
    fs::create_directories(out_dir / "labels");

    struct Scene {
        RasterGrid db;
        RasterGrid labels;
        std::vector<Window> windows;
        std::optional<std::string> error;
    };
    std::vector<Scene> loaded(scenes.size());
    parallel_for(scenes.size(), opt.jobs, [&](std::size_t i) {
        try {
            auto sar = read_geotiff(scenes[i]);
            auto db = sar.kind() == SampleKind::sar_db ? std::move(sar) : calibrate_db(sar, cal);
            auto lab = read_geotiff(label_dir / scenes[i].filename());
            require_coregistered(db, lab);
            loaded[i].windows = enumerate_patch_windows(db, size);
            loaded[i].db = std::move(db);
            loaded[i].labels = std::move(lab);
        } catch (const Error& e) {
            loaded[i].error = e.what();
        }
    });

    struct Task {
        std::size_t scene;
        Window window;
    };
    std::vector<Task> tasks;
    for (std::size_t s = 0; s < loaded.size(); ++s)
        for (const auto& w : loaded[s].windows) tasks.push_back({s, w});

    struct Emitted {
        std::optional<PatchRecord> record;
        double db_min = 0, db_max = 0, db_sum = 0;
    };
    std::vector<Emitted> emitted(tasks.size());
    parallel_for(tasks.size(), opt.jobs, [&](std::size_t t) {
        const auto& sc = loaded[tasks[t].scene];
        const auto& w = tasks[t].window;
        if (!window_is_valid(sc.db, w)) return;
        if (!allow_gaps && !window_is_valid(sc.labels, w)) return;
        const auto scene_id = scenes[tasks[t].scene].stem().string();
        auto pair = extract_patch_pair(sc.db, sc.labels, w, legend, scene_id, allow_gaps);
        write_geotiff(pair.sar, out_dir / "sar" / (pair.record.patch_id + ".tif"), wopt);
        write_geotiff(pair.labels, out_dir / "labels" / (pair.record.patch_id + ".tif"), wopt);
        const auto& v = pair.sar.samples();
        auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        double sum = 0.0;
        for (double x : v) sum += x;
        emitted[t] = {std::move(pair.record), *lo, *hi, sum};
    });

    std::vector<PatchRecord> manifest;
    std::vector<ojson> rows(scenes.size());
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        rows[s] = {{"scene", scenes[s].stem().string()}};
        if (loaded[s].error) {
            rows[s]["status"] = "failed";
            rows[s]["error"] = *loaded[s].error;
        } else {
            rows[s]["windows"] = loaded[s].windows.size();
            rows[s]["emitted"] = 0;
            rows[s]["status"] = "ok";
        }
    }
    double db_min = std::numeric_limits<double>::infinity(), db_max = -db_min, db_sum = 0.0;
    std::size_t db_n = 0;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        if (!emitted[t].record) continue;
        manifest.push_back(*emitted[t].record);
        rows[tasks[t].scene]["emitted"] = rows[tasks[t].scene]["emitted"].get<std::size_t>() + 1;
        db_min = std::min(db_min, emitted[t].db_min);
        db_max = std::max(db_max, emitted[t].db_max);
        db_sum += emitted[t].db_sum;
        db_n += size * size;
    }
    write_manifest(manifest, out_dir / "manifest.jsonl");

    CommandResult res;
    res.report = provenance(cfg, opt, "patchify");
    res.report["patch_size"] = size;
    ojson calj{{"sensor_id", cal.sensor_id},
               {"mode", cal.mode == CalibrationTable::Mode::formula ? "formula" : "lookup"}};
    if (cal.mode == CalibrationTable::Mode::formula) calj["cf"] = cal.cf;
    ojson ref = ojson::object();
    for (double dn : {1.0, 10.0, 100.0}) {
        try {
            ref[std::to_string(static_cast<int>(dn))] = cal.to_db(dn);
        } catch (const Error&) {
        }
    }
    calj["reference_db"] = ref;
    res.report["calibration"] = calj;
    if (db_n > 0)
        res.report["db_stats"] = {{"min", db_min}, {"max", db_max}, {"mean", db_sum / static_cast<double>(db_n)}};
    res.report["scenes"] = rows;
    res.report["patches"] = manifest.size();
    std::size_t failed = 0;
    for (const auto& r : rows) failed += r["status"] == "failed";
    res.report["failed"] = failed;
    write_text(out_dir / "patchify_report.json", res.report.dump(2) + "\n");
    res.exit_code = failed ? kPartialFailure : kSuccess;
    return res;
}

// -------------------------------------------------------------------- sample

inline void write_jsonl(const fs::path& path, const ojson& header, const std::vector<ojson>& rows) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io_error, "cannot open " + path.string());
    out << ojson{{"header", header}}.dump() << '\n';
    for (const auto& r : rows) out << r.dump() << '\n';
    if (!out) throw Error(Errc::io_error, "write failed for " + path.string());
}

inline CommandResult sample(const Config& cfg, const RunOptions& opt) {
    const auto label_paths = list_geotiffs(cfg.path("sample.label_dir"));
    if (label_paths.empty()) throw Error(Errc::config_error, "no label rasters in sample.label_dir");
    const auto manifest = read_manifest(cfg.path("sample.manifest"));
    const fs::path out_dir = cfg.path("sample.output_dir");
    fs::create_directories(out_dir);
    const auto n_total = cfg.require<std::uint64_t>("sample.n_total");
    const auto forest_mode = cfg.get<std::string>("sample.forest_mode", "post_filter");
    if (forest_mode != "post_filter" && forest_mode != "zero_weight" && forest_mode != "keep")
        throw Error(Errc::config_error, "sample.forest_mode must be post_filter, zero_weight or keep");
    const auto ratio_list = cfg.get_list("sample.split_ratios",
                                         {kDefaultSplitRatios[0], kDefaultSplitRatios[1], kDefaultSplitRatios[2]});
    if (ratio_list.size() != 3) throw Error(Errc::config_error, "sample.split_ratios needs three values");
    const SplitRatios ratios{ratio_list[0], ratio_list[1], ratio_list[2]};
    try {
        split_counts(0, ratios);
    } catch (const Error& e) {
        throw Error(Errc::config_error, e.what());
    }
    const auto legend = legend_setting(cfg);

    // Pass 1: class statistics, reduced in input order.
    std::vector<CategoryStats> per(label_paths.size());
    std::vector<GeoTransform> transforms(label_paths.size());
    parallel_for(label_paths.size(), opt.jobs, [&](std::size_t i) {
        const auto g = apply_legend(read_geotiff(label_paths[i]), legend);
        per[i].add(g);
        transforms[i] = g.transform();
    });
    CategoryStats stats;
    for (const auto& s : per) stats.merge(s);

    std::set<ClassId> zero = legend.zero_weight_classes;
    if (forest_mode == "zero_weight") zero.insert(legend.forest_classes.begin(), legend.forest_classes.end());
    const auto weights = category_weights(stats, zero);

    std::map<std::string, std::uint64_t> eligible;
    for (std::size_t i = 0; i < label_paths.size(); ++i) {
        std::uint64_t n = 0;
        for (const auto& [c, k] : per[i].counts)
            if (weights.weight(c) > 0.0) n += k;
        eligible[label_paths[i].stem().string()] = n;
    }
    SamplePlan plan;
    plan.seed = opt.seed;
    plan.n_total = n_total;
    plan.per_image = allocate_per_image(n_total, eligible);

    // Pass 2: per-raster sampling with seeds derived from the raster id.
    std::vector<std::vector<SamplePoint>> drawn(label_paths.size());
    parallel_for(label_paths.size(), opt.jobs, [&](std::size_t i) {
        const auto id = label_paths[i].stem().string();
        const auto g = apply_legend(read_geotiff(label_paths[i]), legend);
        drawn[i] = sample_locations(g, plan.per_image.at(id), weights, derive_seed(opt.seed, id));
    });
    std::vector<MapCoord> coords;
    for (std::size_t i = 0; i < label_paths.size(); ++i) {
        const auto id = label_paths[i].stem().string();
        for (const auto& p : drawn[i]) {
            const auto m = sample_point_location(transforms[i], p.col, p.row);
            plan.points.push_back({id, p.col, p.row, p.cls, m.x, m.y});
            coords.push_back(m);
        }
    }

    const auto match = match_points_to_patches(coords, manifest);
    std::vector<std::string> selected = match.patch_ids;
    std::size_t forest_removed = 0;
    if (forest_mode == "post_filter") {
        const auto kept = filter_full_forest(selected, manifest, legend);
        forest_removed = selected.size() - kept.size();
        selected = kept;
    }
    const auto splits = assign_splits(selected, ratios, derive_seed(opt.seed, "splits"));

    // Outputs.
    const ojson header = provenance(cfg, opt, "sample");
    std::vector<ojson> plan_rows;
    plan_rows.push_back({{"n_total", plan.n_total}, {"per_image", plan.per_image}});
    for (const auto& p : plan.points)
        plan_rows.push_back({{"raster_id", p.raster_id}, {"col", p.col}, {"row", p.row}, {"class", p.cls},
                             {"x", p.x}, {"y", p.y}});
    write_jsonl(out_dir / "sample_plan.jsonl", header, plan_rows);

    std::vector<ojson> sel_rows, split_rows;
    for (const auto& id : selected) {
        sel_rows.push_back({{"patch_id", id}});
        split_rows.push_back({{"patch_id", id}, {"split", to_string(splits.at(id))}});
    }
    write_jsonl(out_dir / "selected.jsonl", header, sel_rows);
    write_jsonl(out_dir / "splits.jsonl", header, split_rows);

    std::vector<PatchRecord> chosen;
    for (const auto& r : manifest)
        if (auto it = splits.find(r.patch_id); it != splits.end()) {
            chosen.push_back(r);
            chosen.back().split = it->second;
        }
    write_manifest(chosen, out_dir / "manifest_selected.jsonl");

    CommandResult res;
    res.report = header;
    ojson w = ojson::object();
    for (const auto& [c, p] : weights.p)
        w[std::to_string(c)] = {{"count", stats.counts.at(c)}, {"p", p}, {"w_norm", weights.weight(c)}};
    res.report["category_weights"] = w;
    res.report["total_pixels"] = stats.total;
    res.report["per_image"] = plan.per_image;
    res.report["points"] = plan.points.size();
    res.report["points_outside_patches"] = match.dropped;
    res.report["matched_patches"] = match.patch_ids.size();
    res.report["forest_mode"] = forest_mode;
    res.report["full_forest_removed"] = forest_removed;
    res.report["selected_patches"] = selected.size();
    std::array<std::size_t, 3> counts{};
    for (const auto& [id, s] : splits) ++counts[s == Split::train ? 0 : s == Split::val ? 1 : 2];
    res.report["splits"] = {{"train", counts[0]}, {"val", counts[1]}, {"test", counts[2]}};
    write_text(out_dir / "sample_report.json", res.report.dump(2) + "\n");
    return res;
}

// ---------------------------------------------------------------- loss-check

inline ojson schedule_report(const ScheduleConfig& c) {
    const LrSchedule s(c);
    return {{"base_lr", c.base_lr},
            {"min_lr", c.min_lr},
            {"epochs", c.epochs},
            {"warmup_epochs", c.warmup_epochs},
            {"steps_per_epoch", c.steps_per_epoch},
            {"total_steps", s.total_steps()},
            {"lr_first_step", s(0)},
            {"lr_warmup_end", s(s.warmup_steps())},
            {"lr_final_step", s(s.total_steps() - 1)}};
}

inline Plane<double> to_plane(const FloatPatch& p) {
    if (p.channels != 1) throw Error(Errc::shape_mismatch, "expected a single-channel patch");
    Plane<double> out(p.width, p.height);
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = p.values[i];
    return out;
}

struct MimCheck {
    double loss = 0.0;
    GradCheckResult grad;
};

/// Weighted masked L1 plus a central-difference probe of its gradient,
/// skipping pixels within 10h of the |.| kink.
inline MimCheck check_mim(const Plane<double>& pred, const Plane<double>& target, const TokenMask& mask,
                          const WeightMapConfig& wcfg, double h) {
    const auto w = sar_weight_map(target, wcfg, mask);
    const auto lg = weighted_l1_loss(pred, target, w, mask);
    auto fn = [&](const std::vector<double>& x) {
        Plane<double> p = pred;
        p.data = x;
        return weighted_l1_loss(p, target, w, mask).loss;
    };
    auto skip = [&](std::size_t i) { return std::abs(pred.data[i] - target.data[i]) < 10.0 * h; };
    return {lg.loss, central_difference_check(pred.data, lg.grad.data, fn, h, skip)};
}

struct SegCheck {
    double dice_conventional = 0.0;
    double dice_maxunion = 0.0;
    double focal = 0.0;
    double combined = 0.0;
    double max_rel_error = 0.0;
    double linearity_residual = 0.0;
    std::size_t checked = 0;
};

inline SegCheck check_seg(const ClassProbs<double>& pred, const std::vector<int>& gt, LossConfig cfg, double h) {
    SegCheck out;
    LossConfig probe = cfg;
    probe.check_inputs = false;
    // Kinks: min/max ties at p == g and the probability clamps near 0 and 1.
    auto skip = [&](std::size_t i) {
        const double p = pred.data[i];
        return gt[i / pred.classes] == kIgnoreLabel || p < 10.0 * h + kProbClamp || p > 1.0 - 10.0 * h - kProbClamp;
    };
    auto run = [&](auto loss_fn, std::span<const double> analytic) {
        auto fn = [&](const std::vector<double>& x) {
            ClassProbs<double> p = pred;
            p.data = x;
            return static_cast<double>(loss_fn(p));
        };
        const auto r = central_difference_check(pred.data, analytic, fn, h, skip);
        out.max_rel_error = std::max(out.max_rel_error, r.max_rel_error);
        out.checked += r.checked;
    };
    for (auto mode : {DiceDenominator::conventional_sums, DiceDenominator::paper_maxunion}) {
        probe.dice_denominator = mode;
        LossConfig c = cfg;
        c.dice_denominator = mode;
        const auto d = dice_loss(pred, gt, c);
        (mode == DiceDenominator::conventional_sums ? out.dice_conventional : out.dice_maxunion) = d.loss;
        run([&](const ClassProbs<double>& p) { return dice_loss(p, gt, probe).loss; }, d.grad);
    }
    probe.dice_denominator = cfg.dice_denominator;
    const auto f = focal_loss(pred, gt, cfg);
    out.focal = f.loss;
    run([&](const ClassProbs<double>& p) { return focal_loss(p, gt, probe).loss; }, f.grad);
    const auto comb = combined_loss(pred, gt, cfg);
    out.combined = comb.loss;
    run([&](const ClassProbs<double>& p) { return combined_loss(p, gt, probe).loss; }, comb.grad);
    const auto d = dice_loss(pred, gt, cfg);
    for (std::size_t k = 0; k < comb.grad.size(); ++k)
        out.linearity_residual = std::max(out.linearity_residual,
            std::abs(comb.grad[k] - (cfg.dice_weight * d.grad[k] + cfg.focal_weight * f.grad[k])));
    return out;
}

/// Random softmax probabilities with every entry in [0.02, 0.98] and labels
/// drawn uniformly; tie-free for the dice min/max kinks.
inline std::pair<ClassProbs<double>, std::vector<int>> random_seg_instance(Xoshiro256ss& rng, std::size_t pixels,
                                                                           std::size_t classes) {
    ClassProbs<double> p(pixels, classes);
    std::vector<int> gt(pixels);
    for (std::size_t i = 0; i < pixels; ++i) {
        for (;;) {
            double sum = 0.0;
            for (std::size_t c = 0; c < classes; ++c) sum += (p.at(i, c) = std::exp(2.0 * rng.uniform() - 1.0));
            bool ok = true;
            for (std::size_t c = 0; c < classes; ++c) {
                p.at(i, c) /= sum;
                ok = ok && p.at(i, c) > 0.02 && p.at(i, c) < 0.98;
            }
            if (ok) break;
        }
        gt[i] = static_cast<int>(rng.bounded(classes));
    }
    return {std::move(p), std::move(gt)};
}

inline CommandResult loss_check(const Config& cfg, const RunOptions& opt) {
    const auto loss_cfg = loss_setting(cfg);
    const double h = cfg.get<double>("loss_check.fd_step", 1e-4);
    const auto instances = cfg.get<std::size_t>("loss_check.instances", 100);
    const double tolerance = 1e-5;
    WeightMapConfig wcfg;
    wcfg.lambda = cfg.get<double>("mim.lambda", wcfg.lambda);
    wcfg.mean = cfg.get<double>("mim.mean", wcfg.mean);
    wcfg.std = cfg.get<double>("mim.std", wcfg.std);
    wcfg.normalize = cfg.get_bool("mim.normalize", wcfg.normalize);
    MaskSpec mspec;
    mspec.token_size = cfg.get<std::size_t>("mim.token_size", mspec.token_size);
    mspec.mask_ratio = cfg.get<double>("mim.mask_ratio", mspec.mask_ratio);
    mspec.seed = derive_seed(opt.seed, "mask");

    CommandResult res;
    res.report = provenance(cfg, opt, "loss-check");
    res.report["constants"] = {
        {"dice_weight", loss_cfg.dice_weight}, {"focal_weight", loss_cfg.focal_weight},
        {"gamma", loss_cfg.gamma},             {"alpha", loss_cfg.alpha},
        {"epsilon", loss_cfg.epsilon},
        {"dice_denominator",
         loss_cfg.dice_denominator == DiceDenominator::conventional_sums ? "conventional_sums" : "paper_maxunion"},
        {"mask_ratio", mspec.mask_ratio},      {"token_size", mspec.token_size},
        {"weight_lambda", wcfg.lambda}};
    res.report["schedules"] = {
        {"pretrain", schedule_report(schedule_setting(cfg, "pretrain_schedule", pretrain_schedule_config()))},
        {"finetune", schedule_report(schedule_setting(cfg, "finetune_schedule", finetune_schedule_config()))}};

    bool pass = true;
    if (cfg.has("loss_check.mim_pred") || cfg.has("loss_check.mim_target")) {
        const auto pred = to_plane(read_patch_file(cfg.path("loss_check.mim_pred")));
        const auto target = to_plane(read_patch_file(cfg.path("loss_check.mim_target")));
        if (!pred.same_shape(target) || pred.width != pred.height)
            throw Error(Errc::shape_mismatch, "MIM patches must be square and equal in shape");
        mspec.image_size = pred.width;
        const auto mask = generate_mask(mspec);
        const auto r = check_mim(pred, target, mask, wcfg, h);
        res.report["mim"] = {{"weighted_l1", r.loss}, {"grad_check", {{"max_rel_error", r.grad.max_rel_error},
                                                                      {"checked", r.grad.checked},
                                                                      {"skipped_kinks", r.grad.skipped}}}};
        pass = pass && r.grad.max_rel_error < tolerance;
    }
    if (cfg.has("loss_check.seg_pred") || cfg.has("loss_check.seg_labels")) {
        const auto pp = read_patch_file(cfg.path("loss_check.seg_pred"));
        const auto lp = read_patch_file(cfg.path("loss_check.seg_labels"));
        if (lp.channels != 1 || lp.width != pp.width || lp.height != pp.height)
            throw Error(Errc::shape_mismatch, "label patch must be single-channel and match the prediction");
        ClassProbs<double> pred(std::size_t(pp.width) * pp.height, pp.channels);
        for (std::size_t k = 0; k < pred.data.size(); ++k) pred.data[k] = pp.values[k];
        std::vector<int> gt(lp.values.size());
        for (std::size_t k = 0; k < gt.size(); ++k)
            gt[k] = lp.values[k] < 0.0f || std::isnan(lp.values[k]) ? kIgnoreLabel : static_cast<int>(lp.values[k]);
        const auto r = check_seg(pred, gt, loss_cfg, h);
        res.report["segmentation"] = {{"dice_conventional_sums", r.dice_conventional},
                                      {"dice_paper_maxunion", r.dice_maxunion},
                                      {"focal", r.focal},
                                      {"combined", r.combined},
                                      {"grad_check", {{"max_rel_error", r.max_rel_error}, {"checked", r.checked}}}};
        pass = pass && r.max_rel_error < tolerance;
    }

    // Synthetic tie-free instances so every report carries a gradient check.
    Xoshiro256ss rng(derive_seed(opt.seed, "loss-check"));
    double mim_err = 0.0, seg_err = 0.0, lin = 0.0;
    for (std::size_t n = 0; n < instances; ++n) {
        MaskSpec ms{16, 4, 0.5, rng()};
        const auto mask = generate_mask(ms);
        Plane<double> pred(16, 16), target(16, 16);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            target.data[i] = 4.0 * rng.uniform() - 2.0;
            const double gap = 0.01 + rng.uniform();
            pred.data[i] = target.data[i] + (rng.uniform() < 0.5 ? -gap : gap);
        }
        mim_err = std::max(mim_err, check_mim(pred, target, mask, wcfg, h).grad.max_rel_error);
        auto [probs, gt] = random_seg_instance(rng, 12, 2 + rng.bounded(4));
        const auto r = check_seg(probs, gt, loss_cfg, h);
        seg_err = std::max(seg_err, r.max_rel_error);
        lin = std::max(lin, r.linearity_residual);
    }
    res.report["synthetic"] = {{"instances", instances},
                               {"fd_step", h},
                               {"weighted_l1_max_rel_error", mim_err},
                               {"segmentation_max_rel_error", seg_err},
                               {"combined_linearity_residual", lin},
                               {"tolerance", tolerance}};
    pass = pass && mim_err < tolerance && seg_err < tolerance && lin <= 1e-12;
    res.report["pass"] = pass;
    res.exit_code = pass ? kSuccess : kPartialFailure;
    return res;
}

// ------------------------------------------------------------------- metrics

inline std::vector<ClassId> class_ids(const RasterGrid& g) {
    std::vector<ClassId> out(g.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        out[i] = g.is_nodata(g.samples()[i]) ? -1 : static_cast<ClassId>(g.samples()[i]);
    return out;
}

inline ojson metrics_report(const SegmentationMetrics& m) {
    ojson per = ojson::object();
    for (ClassId c : m.classes) {
        ojson row{{"iou", m.iou.at(c)}};
        if (auto it = m.accuracy.find(c); it != m.accuracy.end()) row["accuracy"] = it->second;
        per[std::to_string(c)] = row;
    }
    return {{"pixels", m.pixels}, {"mAcc", m.mean_accuracy}, {"mIoU", m.mean_iou}, {"per_class", per},
            {"confusion", m.confusion}, {"classes", m.classes}};
}

inline CommandResult metrics(const Config& cfg, const RunOptions& opt, const fs::path& pred_dir,
                             const fs::path& gt_dir, const LegendRemap& legend) {
    const auto gts = list_geotiffs(gt_dir);
    if (gts.empty()) throw Error(Errc::config_error, "no ground-truth rasters in " + gt_dir.string());
    std::vector<std::optional<std::pair<std::vector<ClassId>, std::vector<ClassId>>>> pairs(gts.size());
    std::vector<std::string> errors(gts.size());
    parallel_for(gts.size(), opt.jobs, [&](std::size_t i) {
        try {
            const auto gt = apply_legend(read_geotiff(gts[i]), legend);
            const auto pred = apply_legend(read_geotiff(pred_dir / gts[i].filename()), legend);
            if (gt.width() != pred.width() || gt.height() != pred.height())
                throw Error(Errc::shape_mismatch, "prediction and label sizes differ");
            pairs[i].emplace(class_ids(pred), class_ids(gt));
        } catch (const Error& e) {
            errors[i] = e.what();
        }
    });
    ConfusionAccumulator acc;
    ojson failures = ojson::array();
    for (std::size_t i = 0; i < gts.size(); ++i) {
        if (pairs[i]) acc.add(pairs[i]->first, pairs[i]->second);
        else failures.push_back({{"file", gts[i].filename().string()}, {"error", errors[i]}});
    }
    CommandResult res;
    res.report = provenance(cfg, opt, "metrics");
    res.report["files"] = gts.size();
    res.report["failures"] = failures;
    try {
        res.report["metrics"] = metrics_report(acc.finish());
    } catch (const Error& e) {
        res.report["error"] = e.what();
        res.exit_code = kPartialFailure;
        return res;
    }
    res.exit_code = failures.empty() ? kSuccess : kPartialFailure;
    return res;
}

}  // namespace sarpatch::pipeline
