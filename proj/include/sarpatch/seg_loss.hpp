#pragma once

// Segmentation losses with analytic gradients with respect to the class
// probabilities: soft dice (min/max union or sum denominator), focal loss
// and their weighted combination.

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <vector>

#include "sarpatch/error.hpp"
#include "sarpatch/mim.hpp"

namespace sarpatch {

enum class DiceDenominator {
    /// sum max(p, g): the literal min/max form; perfect overlap scores -1.
    paper_maxunion,
    /// sum p + sum g: the usual soft dice; perfect overlap scores ~0.
    conventional_sums,
};

struct LossConfig {
    double dice_weight = 0.32;
    double focal_weight = 0.57;
    double gamma = 1.1;
    double alpha = 0.35;
    double epsilon = 1e-6;
    DiceDenominator dice_denominator = DiceDenominator::conventional_sums;
    /// Optional per-class alpha; overrides `alpha` when non-empty.
    std::vector<double> class_alpha;
    /// Validate probabilities before evaluating. Finite-difference probes
    /// perturb single entries and switch this off.
    bool check_inputs = true;

    void validate() const {
        if (!(dice_weight >= 0.0 && focal_weight >= 0.0)) throw Error(Errc::invalid_argument, "loss weights must be >= 0");
        if (!(gamma >= 0.0)) throw Error(Errc::invalid_argument, "gamma must be >= 0");
        if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(Errc::invalid_argument, "alpha must lie in (0, 1]");
        for (double a : class_alpha)
            if (!(a > 0.0 && a <= 1.0)) throw Error(Errc::invalid_argument, "class alpha must lie in (0, 1]");
        if (!(epsilon > 0.0)) throw Error(Errc::invalid_argument, "epsilon must be > 0");
    }
};

inline constexpr int kIgnoreLabel = -1;
inline constexpr double kProbClamp = 1e-7;

/// Per-pixel class probabilities, pixel-major: data[i * classes + c].
template <std::floating_point T>
struct ClassProbs {
    std::size_t pixels = 0;
    std::size_t classes = 0;
    std::vector<T> data;

    ClassProbs() = default;
    ClassProbs(std::size_t n, std::size_t k, T fill = T{0}) : pixels(n), classes(k), data(n * k, fill) {}

    T at(std::size_t i, std::size_t c) const noexcept { return data[i * classes + c]; }
    T& at(std::size_t i, std::size_t c) noexcept { return data[i * classes + c]; }
};

template <std::floating_point T>
struct SegLossGrad {
    T loss{};
    std::vector<T> grad;  // same layout as ClassProbs::data
};

namespace detail {

template <std::floating_point T>
std::size_t check_seg_inputs(const ClassProbs<T>& pred, std::span<const int> gt, const LossConfig& cfg) {
    if (pred.data.size() != pred.pixels * pred.classes || gt.size() != pred.pixels || pred.classes == 0)
        throw Error(Errc::shape_mismatch, "prediction and label shapes disagree");
    if (!cfg.class_alpha.empty() && cfg.class_alpha.size() != pred.classes)
        throw Error(Errc::shape_mismatch, "class_alpha length differs from class count");
    std::size_t valid = 0;
    for (std::size_t i = 0; i < pred.pixels; ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        if (gt[i] < 0 || static_cast<std::size_t>(gt[i]) >= pred.classes)
            throw Error(Errc::shape_mismatch, "label index outside class range");
        ++valid;
        if (!cfg.check_inputs) continue;
        double row = 0.0;
        for (std::size_t c = 0; c < pred.classes; ++c) {
            const T p = pred.at(i, c);
            if (!(p >= T{0} && p <= T{1})) throw Error(Errc::invalid_probabilities, "probability outside [0, 1]");
            row += p;
        }
        if (std::abs(row - 1.0) > 1e-6) throw Error(Errc::invalid_probabilities, "class probabilities do not sum to 1");
    }
    return valid;
}

}  // namespace detail

/// Mean over classes of 1 - 2 I_c / (D_c + eps), where I_c = sum min(p, g)
/// and D_c is either sum max(p, g) or sum p + sum g. Ignored pixels are left
/// out of every sum. Min/max use the indicator subgradient (ties count toward
/// the prediction for neither min nor max).
template <std::floating_point T>
SegLossGrad<T> dice_loss(const ClassProbs<T>& pred, std::span<const int> gt, const LossConfig& cfg) {
    cfg.validate();
    detail::check_seg_inputs(pred, gt, cfg);
    const std::size_t K = pred.classes;
    std::vector<double> inter(K, 0.0), denom(K, 0.0);
    for (std::size_t i = 0; i < pred.pixels; ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        for (std::size_t c = 0; c < K; ++c) {
            const double p = pred.at(i, c);
            const double g = static_cast<std::size_t>(gt[i]) == c ? 1.0 : 0.0;
            inter[c] += std::min(p, g);
            denom[c] += cfg.dice_denominator == DiceDenominator::paper_maxunion ? std::max(p, g) : p + g;
        }
    }
    SegLossGrad<T> out{T{0}, std::vector<T>(pred.data.size(), T{0})};
    double loss = 0.0;
    for (std::size_t c = 0; c < K; ++c) loss += 1.0 - 2.0 * inter[c] / (denom[c] + cfg.epsilon);
    out.loss = static_cast<T>(loss / static_cast<double>(K));

    for (std::size_t i = 0; i < pred.pixels; ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        for (std::size_t c = 0; c < K; ++c) {
            const double p = pred.at(i, c);
            const double g = static_cast<std::size_t>(gt[i]) == c ? 1.0 : 0.0;
            const double d_inter = p < g ? 1.0 : 0.0;
            const double d_denom = cfg.dice_denominator == DiceDenominator::paper_maxunion ? (p > g ? 1.0 : 0.0) : 1.0;
            const double D = denom[c] + cfg.epsilon;
            const double d = -2.0 * (d_inter * D - inter[c] * d_denom) / (D * D);
            out.grad[i * K + c] = static_cast<T>(d / static_cast<double>(K));
        }
    }
    return out;
}

/// Mean over valid pixels of -alpha (1 - p_t)^gamma log p_t. p_t is clamped
/// to [1e-7, 1 - 1e-7]; an exact p_t = 1 contributes zero loss. Only the
/// true-class entry receives gradient.
template <std::floating_point T>
SegLossGrad<T> focal_loss(const ClassProbs<T>& pred, std::span<const int> gt, const LossConfig& cfg) {
    cfg.validate();
    const std::size_t valid = detail::check_seg_inputs(pred, gt, cfg);
    SegLossGrad<T> out{T{0}, std::vector<T>(pred.data.size(), T{0})};
    if (valid == 0) return out;
    const double n = static_cast<double>(valid);
    const double gamma = cfg.gamma;
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.pixels; ++i) {
        if (gt[i] == kIgnoreLabel) continue;
        const auto t = static_cast<std::size_t>(gt[i]);
        const double alpha = cfg.class_alpha.empty() ? cfg.alpha : cfg.class_alpha[t];
        const double raw = pred.at(i, t);
        if (raw >= 1.0) continue;
        const double p = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
        const double q = 1.0 - p;
        const double lp = std::log(p);
        loss += -alpha * std::pow(q, gamma) * lp;
        if (raw != p) continue;  // clamped: locally constant
        const double dq = gamma == 0.0 ? 0.0 : gamma * std::pow(q, gamma - 1.0);
        const double d = -alpha * (-dq * lp + std::pow(q, gamma) / p);
        out.grad[i * pred.classes + t] = static_cast<T>(d / n);
    }
    out.loss = static_cast<T>(loss / n);
    return out;
}

template <std::floating_point T>
struct CombinedLoss {
    T loss{};
    T dice{};
    T focal{};
    std::vector<T> grad;
};

/// dice_weight * dice + focal_weight * focal, gradients combined the same way.
template <std::floating_point T>
CombinedLoss<T> combined_loss(const ClassProbs<T>& pred, std::span<const int> gt, const LossConfig& cfg) {
    const auto d = dice_loss(pred, gt, cfg);
    const auto f = focal_loss(pred, gt, cfg);
    const T wd = static_cast<T>(cfg.dice_weight);
    const T wf = static_cast<T>(cfg.focal_weight);
    CombinedLoss<T> out{wd * d.loss + wf * f.loss, d.loss, f.loss, std::vector<T>(pred.data.size())};
    for (std::size_t k = 0; k < out.grad.size(); ++k) out.grad[k] = wd * d.grad[k] + wf * f.grad[k];
    return out;
}

/// Fine-tuning preset: 1.25e-4 -> 2.5e-7, 100 epochs, 20 warmup.
inline ScheduleConfig finetune_schedule_config(std::size_t steps_per_epoch = 1) {
    return {1.25e-4, 2.5e-7, 100, 20, steps_per_epoch};
}

inline LrSchedule finetune_schedule(std::size_t steps_per_epoch = 1) {
    return LrSchedule(finetune_schedule_config(steps_per_epoch));
}

}  // namespace sarpatch
