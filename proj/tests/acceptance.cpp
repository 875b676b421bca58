// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
// criterion fails. Oracles come from support.hpp and are computed here, not
// by the code under test.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "fixture.hpp"
#include "sarpatch.hpp"
#include "support.hpp"

using namespace sarpatch;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
    std::cout << (ok ? "PASS" : "FAIL") << "  " << name << ": " << detail << std::endl;
    if (!ok) ++failures;
}

std::string fmt(double v) {
    char b[64];
    std::snprintf(b, sizeof b, "%.3g", v);
    return b;
}

// 1 ------------------------------------------------------------------------
void category_weights_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 gen(20240501);
    std::uniform_int_distribution<std::uint64_t> count(1, 1000000000ULL);
    double max_err = 0.0, max_scale = 0.0;
    bool monotone = true;
    for (int h = 0; h < 1000; ++h) {
        const int k = 2 + int(gen() % 19);
        CategoryStats s;
        for (int c = 0; c < k; ++c) s.total += s.counts[c] = count(gen);
        const auto w = category_weights(s);
        const auto o = oracle::weights_oracle(s.counts);
        for (auto& [c, v] : o) max_err = std::max(max_err, std::abs(w.w_norm.at(c) - v));
        for (auto& [a, na] : s.counts)
            for (auto& [b, nb] : s.counts)
                if (na < nb && !(w.w_norm.at(a) > w.w_norm.at(b))) monotone = false;
        const std::uint64_t factor = 1 + gen() % 15;
        CategoryStats scaled;
        for (auto& [c, n] : s.counts) scaled.total += scaled.counts[c] = n * factor;
        const auto ws = category_weights(scaled);
        for (auto& [c, v] : w.w_norm) max_scale = std::max(max_scale, std::abs(ws.w_norm.at(c) - v));
    }
    const double t = seconds_since(t0);
    report("category-weight oracle", max_err <= 1e-12 && max_scale <= 1e-12 && monotone && t < 5.0,
           "1000 histograms, max |w - oracle| = " + fmt(max_err) + ", scale drift " + fmt(max_scale) +
               ", monotone " + (monotone ? "yes" : "no") + ", " + fmt(t) + " s (limit 5 s)");
}

// 2 ------------------------------------------------------------------------
void sampling_distribution() {
    const auto t0 = Clock::now();
    const std::size_t n = 4096;
    RasterGrid g(n, n, SampleKind::label_class, {0, 0, 1, 1}, "EPSG:32654");
    // Known areas: top half class 1, next quarter class 2, bottom quarter class 3.
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t c = 0; c < n; ++c) g.at(c, r) = r < n / 2 ? 1 : (r < 3 * n / 4 ? 2 : 3);
    CategoryWeights w;
    w.w_norm = {{1, 0.2}, {2, 0.3}, {3, 0.5}};
    const auto pts = sample_locations(g, 200000, w, 4242);
    std::map<ClassId, double> freq;
    for (auto& p : pts) freq[p.cls] += 1.0 / double(pts.size());
    double dev = 0.0;
    for (auto& [c, target] : w.w_norm) dev = std::max(dev, std::abs(freq[c] - target));
    const double t = seconds_since(t0);
    report("sampling distribution", pts.size() == 200000 && dev <= 0.02 && t < 30.0,
           "4096^2 raster, 200000 points, freq (" + fmt(freq[1]) + ", " + fmt(freq[2]) + ", " + fmt(freq[3]) +
               ") vs (0.2, 0.3, 0.5), max dev " + fmt(dev) + ", " + fmt(t) + " s (limit 30 s)");
}

// 3 ------------------------------------------------------------------------
struct Rect {
    std::size_t c0, r0, c1, r1;  // half-open pixel rectangle
};

void patchify_exactness() {
    oracle::TempDir dir("acc_patchify");
    fs::create_directories(dir / "sar");
    fs::create_directories(dir / "lab");
    const std::size_t n = 1024, size = 256;
    // Scripted nodata: a single pixel, a full-width stripe and a corner block.
    const std::vector<Rect> holes{{300, 10, 301, 11}, {0, 600, 1024, 606}, {1000, 1000, 1024, 1024}};
    RasterGrid sar(n, n, SampleKind::sar_dn, {500000, 4000000, 20, 20}, "EPSG:32654");
    for (std::size_t i = 0; i < sar.size(); ++i) sar.samples()[i] = double(1 + i % 3000);
    for (auto& h : holes)
        for (std::size_t r = h.r0; r < h.r1; ++r)
            for (std::size_t c = h.c0; c < h.c1; ++c) sar.at(c, r) = 0;
    RasterGrid lab(n, n, SampleKind::label_class, sar.transform(), sar.crs_tag());
    for (std::size_t i = 0; i < lab.size(); ++i) lab.samples()[i] = double(1 + (i / 97) % 5);
    write_geotiff(sar, dir / "sar/scene.tif");
    write_geotiff(lab, dir / "lab/scene.tif");
    fixture::write_text(dir / "run.ini", "[patchify]\nsar_dir = sar\nlabel_dir = lab\noutput_dir = out\nsize = 256\n");
    const int rc = fixture::run_cli("patchify --config '" + (dir / "run.ini").string() + "'");

    // Analytic enumeration: a window is valid iff it misses every hole rectangle.
    std::set<std::string> expect;
    for (std::size_t r0 = 0; r0 + size <= n; r0 += size)
        for (std::size_t c0 = 0; c0 + size <= n; c0 += size) {
            bool hit = false;
            for (auto& h : holes) hit = hit || (h.c0 < c0 + size && c0 < h.c1 && h.r0 < r0 + size && r0 < h.r1);
            if (!hit) expect.insert("scene_" + std::to_string(c0) + "_" + std::to_string(r0));
        }
    std::set<std::string> got;
    std::size_t rows = 0;
    if (rc == 0)
        for (auto& rec : read_manifest(dir / "out/manifest.jsonl")) got.insert(rec.patch_id), ++rows;

    RasterGrid dn(3, 1, SampleKind::sar_dn, {0, 0, 1, 1}, "");
    dn.samples() = {1, 10, 100};
    const auto db = calibrate_db(dn, CalibrationTable::formula(-83.0));
    const double cf = -83.0;
    const double err = std::max({std::abs(db.at(0, 0) - cf), std::abs(db.at(1, 0) - (cf + 20)),
                                 std::abs(db.at(2, 0) - (cf + 40))});
    report("patchify exactness", rc == 0 && got == expect && rows == got.size() && err <= 1e-6,
           std::to_string(got.size()) + " manifest windows vs " + std::to_string(expect.size()) +
               " analytic, sets " + (got == expect ? "equal" : "differ") + "; dB(1,10,100) max err " + fmt(err));
}

// 4 ------------------------------------------------------------------------
void point_patch_matching() {
    // Patch grid from real window bounds, with every fifth patch missing.
    const GeoTransform t{300000, 4100000, 10, 10};
    std::vector<PatchRecord> manifest;
    std::vector<oracle::BoxOracle> boxes;
    for (std::size_t j = 0; j < 12; ++j)
        for (std::size_t i = 0; i < 12; ++i) {
            if ((i * 12 + j) % 5 == 3) continue;
            PatchRecord r;
            r.patch_id = make_patch_id("s", i * 256, j * 256);
            r.bounds = window_bounds(t, {i * 256, j * 256, 256, 256});
            manifest.push_back(r);
            boxes.push_back({r.bounds.min_x, r.bounds.min_y, r.bounds.max_x, r.bounds.max_y});
        }
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> ux(t.origin_x - 500, t.origin_x + 12 * 2560 + 500);
    std::uniform_real_distribution<double> uy(t.origin_y - 12 * 2560 - 500, t.origin_y + 500);
    std::vector<MapCoord> pts;
    std::vector<std::pair<double, double>> raw;
    std::size_t edge_points = 0;
    for (int p = 0; p < 10000; ++p) {
        double x = ux(gen), y = uy(gen);
        if (p % 4 == 0) x = t.origin_x + 2560.0 * std::round((x - t.origin_x) / 2560.0);
        if (p % 6 == 0) y = t.origin_y - 2560.0 * std::round((t.origin_y - y) / 2560.0);
        edge_points += (p % 4 == 0 || p % 6 == 0);
        pts.push_back({x, y});
        raw.push_back({x, y});
    }
    const auto res = match_points_to_patches(pts, manifest);
    const auto ora = oracle::containment_oracle(raw, boxes);
    std::set<std::string> a(res.patch_ids.begin(), res.patch_ids.end()), b;
    std::size_t mismatched = 0;
    for (std::size_t p = 0; p < ora.size(); ++p) {
        if (ora[p]) b.insert(manifest[*ora[p]].patch_id);
        mismatched += res.assignment[p] != ora[p];
    }
    report("point-to-patch matching", a == b && mismatched == 0 && a.size() == res.patch_ids.size(),
           "10000 points (" + std::to_string(edge_points) + " on patch edges), " + std::to_string(a.size()) +
               " selected vs " + std::to_string(b.size()) + " oracle, " + std::to_string(mismatched) +
               " per-point mismatches");
}

// 5 ------------------------------------------------------------------------
struct SegInstance {
    ClassProbs<double> pred;
    std::vector<int> gt;
};

SegInstance tie_free_instance(std::mt19937_64& gen) {
    const std::size_t pixels = 6 + gen() % 20, classes = 2 + gen() % 5;
    std::uniform_real_distribution<double> u(-1, 1);
    SegInstance s{ClassProbs<double>(pixels, classes), std::vector<int>(pixels)};
    for (std::size_t i = 0; i < pixels; ++i) {
        for (;;) {
            double sum = 0;
            for (std::size_t c = 0; c < classes; ++c) sum += s.pred.at(i, c) = std::exp(u(gen));
            bool ok = true;
            for (std::size_t c = 0; c < classes; ++c) {
                s.pred.at(i, c) /= sum;
                ok = ok && s.pred.at(i, c) > 0.01 && s.pred.at(i, c) < 0.99;
            }
            if (ok) break;
        }
        s.gt[i] = gen() % 10 == 0 ? kIgnoreLabel : int(gen() % classes);
    }
    return s;
}

template <typename F>
double seg_fd_error(const SegInstance& s, LossConfig cfg, F loss, double h) {
    cfg.check_inputs = false;
    const auto analytic = loss(s.pred, s.gt, cfg).grad;
    auto f = [&](const std::vector<double>& x) {
        ClassProbs<double> p = s.pred;
        p.data = x;
        return double(loss(p, s.gt, cfg).loss);
    };
    return oracle::max_rel_error(oracle::finite_difference(f, s.pred.data, h), analytic);
}

void gradient_suite() {
    const double h = 1e-4;
    std::mt19937_64 gen(777);
    double l1 = 0, dice_c = 0, dice_m = 0, focal = 0, comb = 0, lin = 0;
    for (int n = 0; n < 100; ++n) {
        // Weighted L1 with residuals at least 10h from zero.
        const std::size_t size = 16;
        const auto mask = generate_mask({size, 4, 0.25 + 0.5 * double(n % 3) / 2.0, gen()});
        Plane<double> pred(size, size), target(size, size);
        std::uniform_real_distribution<double> u(-25, 0), gap(10 * h, 3);
        for (std::size_t i = 0; i < pred.size(); ++i) {
            target.data[i] = u(gen);
            pred.data[i] = target.data[i] + (gen() % 2 ? gap(gen) : -gap(gen));
        }
        const auto w = sar_weight_map(target, {0.4, -12, 5, true}, mask);
        const auto g = weighted_l1_loss(pred, target, w, mask).grad.data;
        auto f = [&](const std::vector<double>& x) {
            Plane<double> p = pred;
            p.data = x;
            return weighted_l1_loss(p, target, w, mask).loss;
        };
        l1 = std::max(l1, oracle::max_rel_error(oracle::finite_difference(f, pred.data, h), g));

        const auto s = tie_free_instance(gen);
        LossConfig cfg;
        cfg.dice_denominator = DiceDenominator::conventional_sums;
        dice_c = std::max(dice_c, seg_fd_error(s, cfg, [](auto& p, auto& t, auto& c) { return dice_loss<double>(p, t, c); }, h));
        comb = std::max(comb, seg_fd_error(s, cfg, [](auto& p, auto& t, auto& c) { return combined_loss<double>(p, t, c); }, h));
        focal = std::max(focal, seg_fd_error(s, cfg, [](auto& p, auto& t, auto& c) { return focal_loss<double>(p, t, c); }, h));
        LossConfig m = cfg;
        m.dice_denominator = DiceDenominator::paper_maxunion;
        dice_m = std::max(dice_m, seg_fd_error(s, m, [](auto& p, auto& t, auto& c) { return dice_loss<double>(p, t, c); }, h));
        comb = std::max(comb, seg_fd_error(s, m, [](auto& p, auto& t, auto& c) { return combined_loss<double>(p, t, c); }, h));

        for (const auto& c : {cfg, m}) {
            const auto all = combined_loss(s.pred, s.gt, c);
            const auto d = dice_loss(s.pred, s.gt, c);
            const auto fl = focal_loss(s.pred, s.gt, c);
            for (std::size_t k = 0; k < all.grad.size(); ++k)
                lin = std::max(lin, std::abs(all.grad[k] - (0.32 * d.grad[k] + 0.57 * fl.grad[k])));
        }
    }
    const bool ok = std::max({l1, dice_c, dice_m, focal, comb}) < 1e-5 && lin <= 1e-12;
    report("gradient suite", ok,
           "100 instances, h=1e-4, max rel err: weighted-L1 " + fmt(l1) + ", dice(sums) " + fmt(dice_c) +
               ", dice(max-union) " + fmt(dice_m) + ", focal " + fmt(focal) + ", combined " + fmt(comb) +
               "; linearity residual " + fmt(lin));
}

// 6 ------------------------------------------------------------------------
void published_constants() {
    oracle::TempDir dir("acc_constants");
    bool ok = true;
    std::string detail;
    // Once with the shipped example config, once with no settings at all.
    const std::vector<fs::path> configs{SARPATCH_SOURCE_DIR "/data/example.ini", dir / "empty.ini"};
    fixture::write_text(dir / "empty.ini", "[loss_check]\ninstances = 5\n");
    for (const auto& cfg : configs) {
        const auto out = dir / "report.json";
        const int rc = fixture::run_cli("loss-check --config '" + cfg.string() + "'", out);
        if (rc != 0) {
            ok = false;
            detail += cfg.filename().string() + " exit " + std::to_string(rc) + "; ";
            continue;
        }
        const auto r = nlohmann::json::parse(fixture::read_text(out));
        const auto& c = r["constants"];
        const auto& pre = r["schedules"]["pretrain"];
        const auto& fin = r["schedules"]["finetune"];
        const bool consts = c["dice_weight"] == 0.32 && c["focal_weight"] == 0.57 && c["gamma"] == 1.1 &&
                            c["alpha"] == 0.35;
        const bool pre_ok = pre["base_lr"] == 1e-4 && pre["min_lr"] == 5e-7 && pre["epochs"] == 800 &&
                            pre["warmup_epochs"] == 40 && pre["lr_warmup_end"] == 1e-4 && pre["lr_final_step"] == 5e-7;
        const bool fin_ok = fin["base_lr"] == 1.25e-4 && fin["min_lr"] == 2.5e-7 && fin["epochs"] == 100 &&
                            fin["warmup_epochs"] == 20 && fin["lr_warmup_end"] == 1.25e-4 &&
                            fin["lr_final_step"] == 2.5e-7;
        ok = ok && consts && pre_ok && fin_ok;
        detail += cfg.filename().string() + ": constants " + (consts ? "ok" : "WRONG") + ", pretrain " +
                  (pre_ok ? "ok" : "WRONG") + ", finetune " + (fin_ok ? "ok" : "WRONG") + "; ";
    }
    report("loss and schedule constants", ok,
           detail + "dice 0.32 focal 0.57 gamma 1.1 alpha 0.35; 1e-4->5e-7 (800/40), 1.25e-4->2.5e-7 (100/20)");
}

// 7 ------------------------------------------------------------------------
void metrics_oracle() {
    oracle::TempDir dir("acc_metrics");
    for (const char* d : {"pred", "gt"}) fs::create_directories(dir / d);
    std::mt19937_64 gen(31337);
    const int K = 7;
    std::vector<int> all_pred, all_gt;
    for (int f = 0; f < 4; ++f) {
        RasterGrid p(64, 64, SampleKind::label_class, {0, 0, 1, 1}, "EPSG:32654");
        RasterGrid g = p;
        for (std::size_t i = 0; i < p.size(); ++i) {
            const int gt = int(gen() % K);
            const int pr = gen() % 3 ? gt : int(gen() % K);
            // Class ids 1..K on disk, 0 is nodata.
            g.samples()[i] = gen() % 25 == 0 ? 0 : gt + 1;
            p.samples()[i] = gen() % 40 == 0 ? 0 : pr + 1;
            all_gt.push_back(g.samples()[i] == 0 ? -1 : gt);
            all_pred.push_back(p.samples()[i] == 0 ? -1 : pr);
        }
        write_geotiff(p, dir / "pred" / ("f" + std::to_string(f) + ".tif"));
        write_geotiff(g, dir / "gt" / ("f" + std::to_string(f) + ".tif"));
    }
    fixture::write_text(dir / "run.ini", "[metrics]\npred_dir = pred\ngt_dir = gt\n");
    const auto out = dir / "m.json";
    const int rc = fixture::run_cli("metrics --config '" + (dir / "run.ini").string() + "'", out);

    const auto cm = oracle::confusion_oracle(all_pred, all_gt, K);
    double acc = 0, iou = 0;
    int na = 0, ni = 0;
    for (int c = 0; c < K; ++c) {
        std::uint64_t row = 0, col = 0;
        for (int j = 0; j < K; ++j) row += cm[c][j], col += cm[j][c];
        if (row + col == 0) continue;
        if (row) acc += double(cm[c][c]) / double(row), ++na;
        iou += double(cm[c][c]) / double(row + col - cm[c][c]), ++ni;
    }
    acc /= na;
    iou /= ni;
    bool ok = rc == 0;
    std::string detail;
    if (ok) {
        const auto r = nlohmann::json::parse(fixture::read_text(out))["metrics"];
        std::vector<std::vector<std::uint64_t>> got = r["confusion"];
        const bool cm_eq = got == cm;
        const double dacc = std::abs(r["mAcc"].get<double>() - acc), diou = std::abs(r["mIoU"].get<double>() - iou);
        ok = cm_eq && dacc == 0.0 && diou == 0.0;
        detail = "4 files of 64^2, confusion " + std::string(cm_eq ? "identical" : "differs") + ", |dmAcc| " +
                 fmt(dacc) + ", |dmIoU| " + fmt(diou);
    } else {
        detail = "metrics exit " + std::to_string(rc);
    }
    // Perfect prediction.
    const int rc2 = fixture::run_cli(
        "metrics --config '" + (dir / "run.ini").string() + "' --pred-dir '" + (dir / "gt").string() + "'", out);
    bool perfect = false;
    if (rc2 == 0) {
        const auto r = nlohmann::json::parse(fixture::read_text(out))["metrics"];
        perfect = r["mAcc"] == 1.0 && r["mIoU"] == 1.0;
    }
    report("metrics oracle", ok && perfect, detail + "; perfect prediction mAcc=mIoU=1 " + (perfect ? "yes" : "no"));
}

// 8 ------------------------------------------------------------------------
void determinism() {
    oracle::TempDir a("acc_det_a"), b("acc_det_b"), c("acc_det_c");
    const fs::path legend = SARPATCH_SOURCE_DIR "/data/legend_example.txt";
    const auto t0 = Clock::now();
    const int rc_a = fixture::run_pipeline(fixture::build_project(a.path(), legend), 1);
    const double t = seconds_since(t0);
    const int rc_b = fixture::run_pipeline(fixture::build_project(b.path(), legend), 1);
    const int rc_c = fixture::run_pipeline(fixture::build_project(c.path(), legend), 8);
    std::size_t compared = 0, differing = 0;
    for (const char* f : {"patches/manifest.jsonl", "sampled/manifest_selected.jsonl", "sampled/sample_plan.jsonl",
                          "sampled/selected.jsonl", "sampled/splits.jsonl"}) {
        const auto ta = fixture::read_text(a / f);
        for (const auto* other : {&b, &c}) {
            ++compared;
            differing += ta.empty() || ta != fixture::read_text(*other / f);
        }
    }
    // Whole output trees too, GeoTIFFs included.
    bool trees_equal = true;
    for (const char* sub : {"half", "aligned", "patches", "sampled"})
        trees_equal = trees_equal && fixture::snapshot(a / sub) == fixture::snapshot(b / sub) &&
                      fixture::snapshot(a / sub) == fixture::snapshot(c / sub);
    const bool ok = rc_a == 0 && rc_b == 0 && rc_c == 0 && differing == 0 && trees_equal && t < 60.0;
    report("determinism", ok,
           "3-scene pipeline single-threaded in " + fmt(t) + " s (limit 60 s); " + std::to_string(compared) +
               " manifest comparisons (rerun, --jobs 8), " + std::to_string(differing) + " differ; full trees " +
               (trees_equal ? "identical" : "differ"));
}

}  // namespace

int main() {
    std::cout << "acceptance criteria\n";
    try {
        category_weights_oracle();
        sampling_distribution();
        patchify_exactness();
        point_patch_matching();
        gradient_suite();
        published_constants();
        metrics_oracle();
        determinism();
    } catch (const std::exception& e) {
        std::cout << "FAIL  unexpected exception: " << e.what() << std::endl;
        ++failures;
    }
    std::cout << "NOTE  not reproducible at desk scale: the dataset counts (301,088 sampled / 111,135 fine-tuning "
                 "images), the 72,238 / 20,005 / 18,894 split sizes and the reported mAcc/mIoU (e.g. 0.6073 / "
                 "0.4898) need the licensed ALOS-2 and HR-LULC archives and full-scale pretraining. They are "
                 "replaced by the property suites above; the split-ratio defaults are derived from the split "
                 "sizes.\n";
    std::cout << (failures ? std::to_string(failures) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failures ? 1 : 0;
}
