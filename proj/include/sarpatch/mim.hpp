#pragma once

// Masked-image-modelling kernels: token masks, SimMIM zero corruption,
// MixMAE mixing, SAR intensity weight maps, the weighted masked L1
// reconstruction loss and the warmup + cosine learning-rate schedule.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <vector>

#include "sarpatch/error.hpp"
#include "sarpatch/rng.hpp"

namespace sarpatch {

/// Dense row-major single-channel image.
template <std::floating_point T>
struct Plane {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<T> data;

    Plane() = default;
    Plane(std::size_t w, std::size_t h, T fill = T{0}) : width(w), height(h), data(w * h, fill) {}

    T at(std::size_t c, std::size_t r) const noexcept { return data[r * width + c]; }
    T& at(std::size_t c, std::size_t r) noexcept { return data[r * width + c]; }
    std::size_t size() const noexcept { return data.size(); }
    bool same_shape(const Plane& o) const noexcept { return width == o.width && height == o.height; }

    friend bool operator==(const Plane&, const Plane&) = default;
};

struct MaskSpec {
    std::size_t image_size = 256;
    std::size_t token_size = 32;
    double mask_ratio = 0.6;
    std::uint64_t seed = 0;
};

/// Square grid of maskable tokens; true = masked.
struct TokenMask {
    std::size_t grid = 0;
    std::size_t token_size = 0;
    std::vector<std::uint8_t> masked;

    std::size_t image_size() const noexcept { return grid * token_size; }
    bool token(std::size_t tc, std::size_t tr) const noexcept { return masked[tr * grid + tc] != 0; }
    bool pixel(std::size_t c, std::size_t r) const noexcept { return token(c / token_size, r / token_size); }
    std::size_t masked_count() const noexcept { return std::accumulate(masked.begin(), masked.end(), std::size_t{0}); }

    TokenMask operator!() const {
        TokenMask m = *this;
        for (auto& v : m.masked) v = v ? 0 : 1;
        return m;
    }

    friend bool operator==(const TokenMask&, const TokenMask&) = default;
};

inline std::size_t masked_token_count(const MaskSpec& spec) {
    const std::size_t g = spec.image_size / spec.token_size;
    return static_cast<std::size_t>(std::llround(spec.mask_ratio * static_cast<double>(g * g)));
}

/// Exactly round(ratio * T) tokens masked, chosen by a seeded shuffle.
inline TokenMask generate_mask(const MaskSpec& spec) {
    if (spec.token_size == 0 || spec.image_size == 0 || spec.image_size % spec.token_size != 0)
        throw Error(Errc::invalid_argument, "image size must be a positive multiple of token size");
    if (!(spec.mask_ratio >= 0.0 && spec.mask_ratio <= 1.0))
        throw Error(Errc::invalid_argument, "mask ratio must lie in [0, 1]");
    TokenMask m;
    m.grid = spec.image_size / spec.token_size;
    m.token_size = spec.token_size;
    m.masked.assign(m.grid * m.grid, 0);
    std::vector<std::size_t> idx(m.masked.size());
    std::iota(idx.begin(), idx.end(), 0);
    Xoshiro256ss rng(spec.seed);
    seeded_shuffle(std::span<std::size_t>(idx), rng);
    const std::size_t k = masked_token_count(spec);
    for (std::size_t i = 0; i < k; ++i) m.masked[idx[i]] = 1;
    return m;
}

namespace detail {
template <std::floating_point T>
void require_tiles(const Plane<T>& img, const TokenMask& mask) {
    if (img.width != mask.image_size() || img.height != mask.image_size())
        throw Error(Errc::shape_mismatch, "mask does not tile the image");
}
}  // namespace detail

template <std::floating_point T>
Plane<T> simmim_corrupt(const Plane<T>& image, const TokenMask& mask) {
    detail::require_tiles(image, mask);
    Plane<T> out = image;
    for (std::size_t r = 0; r < image.height; ++r)
        for (std::size_t c = 0; c < image.width; ++c)
            if (mask.pixel(c, r)) out.at(c, r) = T{0};
    return out;
}

/// Masked tokens come from `b`, the rest from `a`.
template <std::floating_point T>
Plane<T> mixmae_mix(const Plane<T>& a, const Plane<T>& b, const TokenMask& mask) {
    if (!a.same_shape(b)) throw Error(Errc::shape_mismatch, "images differ in shape");
    detail::require_tiles(a, mask);
    Plane<T> out = a;
    for (std::size_t r = 0; r < a.height; ++r)
        for (std::size_t c = 0; c < a.width; ++c)
            if (mask.pixel(c, r)) out.at(c, r) = b.at(c, r);
    return out;
}

/// w = exp(-lambda |z|), z = (x - mean) / std. With `normalize`, weights are
/// scaled so their mean over masked pixels is 1.
struct WeightMapConfig {
    double lambda = 0.5;
    double mean = 0.0;
    double std = 1.0;
    bool normalize = true;
};

template <std::floating_point T>
Plane<T> sar_weight_map(const Plane<T>& target, const WeightMapConfig& cfg, const TokenMask& mask) {
    if (!(cfg.lambda >= 0.0)) throw Error(Errc::invalid_argument, "lambda must be >= 0");
    if (!(cfg.std > 0.0)) throw Error(Errc::invalid_argument, "std must be > 0");
    detail::require_tiles(target, mask);
    Plane<T> w(target.width, target.height);
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double z = (static_cast<double>(target.data[i]) - cfg.mean) / cfg.std;
        w.data[i] = static_cast<T>(std::exp(-cfg.lambda * std::abs(z)));
    }
    if (cfg.normalize) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t r = 0; r < w.height; ++r)
            for (std::size_t c = 0; c < w.width; ++c)
                if (mask.pixel(c, r)) {
                    sum += w.at(c, r);
                    ++n;
                }
        if (n == 0) throw Error(Errc::empty_mask, "normalisation needs at least one masked pixel");
        const double mean = sum / static_cast<double>(n);
        for (auto& v : w.data) v = static_cast<T>(v / mean);
    }
    return w;
}

template <std::floating_point T>
struct LossGrad {
    T loss{};
    Plane<T> grad;
};

/// sum_m w |pred - target| / sum_m w over masked pixels m. The gradient is
/// the weighted sign, zero at exact ties and outside the mask.
template <std::floating_point T>
LossGrad<T> weighted_l1_loss(const Plane<T>& pred, const Plane<T>& target, const Plane<T>& weights,
                             const TokenMask& mask) {
    if (!pred.same_shape(target) || !pred.same_shape(weights))
        throw Error(Errc::shape_mismatch, "pred, target and weights must share a shape");
    detail::require_tiles(pred, mask);
    if (mask.masked_count() == 0) throw Error(Errc::empty_mask, "no masked tokens");

    T wsum{0}, acc{0};
    for (std::size_t r = 0; r < pred.height; ++r)
        for (std::size_t c = 0; c < pred.width; ++c)
            if (mask.pixel(c, r)) {
                wsum += weights.at(c, r);
                acc += weights.at(c, r) * std::abs(pred.at(c, r) - target.at(c, r));
            }
    if (!(wsum > T{0})) throw Error(Errc::zero_total_weight, "masked weights sum to zero");

    LossGrad<T> out{acc / wsum, Plane<T>(pred.width, pred.height)};
    for (std::size_t r = 0; r < pred.height; ++r)
        for (std::size_t c = 0; c < pred.width; ++c) {
            if (!mask.pixel(c, r)) continue;
            const T d = pred.at(c, r) - target.at(c, r);
            const T sign = d > T{0} ? T{1} : (d < T{0} ? T{-1} : T{0});
            out.grad.at(c, r) = weights.at(c, r) * sign / wsum;
        }
    return out;
}

struct ScheduleConfig {
    double base_lr = 1e-4;
    double min_lr = 5e-7;
    std::size_t epochs = 800;
    std::size_t warmup_epochs = 40;
    std::size_t steps_per_epoch = 1;
};

/// Linear warmup min_lr -> base_lr, then cosine decay base_lr -> min_lr that
/// lands exactly on min_lr at the final step.
class LrSchedule {
public:
    explicit LrSchedule(const ScheduleConfig& cfg) : cfg_(cfg) {
        if (cfg.warmup_epochs > cfg.epochs) throw Error(Errc::invalid_argument, "warmup longer than training");
        if (!(cfg.min_lr <= cfg.base_lr) || !(cfg.min_lr >= 0.0))
            throw Error(Errc::invalid_argument, "need 0 <= min_lr <= base_lr");
        if (cfg.epochs == 0 || cfg.steps_per_epoch == 0) throw Error(Errc::invalid_argument, "empty schedule");
    }

    std::size_t total_steps() const noexcept { return cfg_.epochs * cfg_.steps_per_epoch; }
    std::size_t warmup_steps() const noexcept { return cfg_.warmup_epochs * cfg_.steps_per_epoch; }
    const ScheduleConfig& config() const noexcept { return cfg_; }

    double operator()(std::size_t step) const {
        const std::size_t last = total_steps() - 1;
        const std::size_t warm = warmup_steps();
        if (step >= last) return cfg_.min_lr;
        if (step < warm)
            return cfg_.min_lr + (cfg_.base_lr - cfg_.min_lr) * static_cast<double>(step) / static_cast<double>(warm);
        if (step == warm) return cfg_.base_lr;
        const double progress = static_cast<double>(step - warm) / static_cast<double>(last - warm);
        return cfg_.min_lr + (cfg_.base_lr - cfg_.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }

    std::vector<double> table() const {
        std::vector<double> t(total_steps());
        for (std::size_t s = 0; s < t.size(); ++s) t[s] = (*this)(s);
        return t;
    }

private:
    ScheduleConfig cfg_;
};

/// Self-supervised pretraining preset: 1e-4 -> 5e-7, 800 epochs, 40 warmup.
inline ScheduleConfig pretrain_schedule_config(std::size_t steps_per_epoch = 1) {
    return {1e-4, 5e-7, 800, 40, steps_per_epoch};
}

}  // namespace sarpatch
