#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <vector>

#include "sarpatch/error.hpp"
#include "sarpatch/legend.hpp"

namespace sarpatch {

struct SegmentationMetrics {
    std::vector<ClassId> classes;                       // sorted union of observed classes
    std::vector<std::vector<std::uint64_t>> confusion;  // [gt][pred]
    std::map<ClassId, double> accuracy;                 // classes present in ground truth
    std::map<ClassId, double> iou;                      // every observed class
    double mean_accuracy = 0.0;
    double mean_iou = 0.0;
    std::uint64_t pixels = 0;
};

/// Confusion-matrix metrics over pixels where both labels are valid
/// (negative ids mark nodata). mAcc averages recall over ground-truth
/// classes; mIoU averages IoU over every class seen in either raster.
class ConfusionAccumulator {
public:
    void add(std::span<const ClassId> pred, std::span<const ClassId> gt) {
        if (pred.size() != gt.size()) throw Error(Errc::shape_mismatch, "prediction and label sizes differ");
        for (std::size_t i = 0; i < gt.size(); ++i) {
            if (gt[i] < 0 || pred[i] < 0) continue;
            ++counts_[{gt[i], pred[i]}];
        }
    }

    SegmentationMetrics finish() const {
        SegmentationMetrics m;
        std::map<ClassId, std::size_t> index;
        for (const auto& [k, n] : counts_) {
            index.emplace(k.first, 0);
            index.emplace(k.second, 0);
            m.pixels += n;
        }
        if (m.pixels == 0) throw Error(Errc::no_valid_pixels, "no pixel is valid in both rasters");
        for (auto& [c, i] : index) {
            i = m.classes.size();
            m.classes.push_back(c);
        }
        const std::size_t K = m.classes.size();
        m.confusion.assign(K, std::vector<std::uint64_t>(K, 0));
        for (const auto& [k, n] : counts_) m.confusion[index[k.first]][index[k.second]] = n;

        double acc_sum = 0.0, iou_sum = 0.0;
        for (std::size_t c = 0; c < K; ++c) {
            std::uint64_t row = 0, col = 0;
            for (std::size_t j = 0; j < K; ++j) {
                row += m.confusion[c][j];
                col += m.confusion[j][c];
            }
            const std::uint64_t tp = m.confusion[c][c];
            if (row > 0) {
                const double a = static_cast<double>(tp) / static_cast<double>(row);
                m.accuracy[m.classes[c]] = a;
                acc_sum += a;
            }
            const double u = static_cast<double>(row + col - tp);
            const double iou = static_cast<double>(tp) / u;
            m.iou[m.classes[c]] = iou;
            iou_sum += iou;
        }
        m.mean_accuracy = acc_sum / static_cast<double>(m.accuracy.size());
        m.mean_iou = iou_sum / static_cast<double>(K);
        return m;
    }

private:
    std::map<std::pair<ClassId, ClassId>, std::uint64_t> counts_;
};

inline SegmentationMetrics segmentation_metrics(std::span<const ClassId> pred, std::span<const ClassId> gt) {
    ConfusionAccumulator acc;
    acc.add(pred, gt);
    return acc.finish();
}

}  // namespace sarpatch
