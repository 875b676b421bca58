#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sarpatch {

enum class Errc {
    invalid_argument,
    io_error,
    missing_georeference,
    unsupported_layout,
    empty_output,
    crs_mismatch,
    empty_tile_list,
    not_coregistered,
    out_of_bounds,
    invalid_dn,
    invalid_window,
    empty_stats,
    no_valid_pixels,
    insufficient_distinct_pixels,
    invalid_ratios,
    unknown_class,
    shape_mismatch,
    empty_mask,
    zero_total_weight,
    invalid_probabilities,
    config_error,
};

constexpr std::string_view to_string(Errc e) noexcept {
    switch (e) {
    case Errc::invalid_argument: return "invalid-argument";
    case Errc::io_error: return "io-error";
    case Errc::missing_georeference: return "missing-georeference";
    case Errc::unsupported_layout: return "unsupported-layout";
    case Errc::empty_output: return "empty-output";
    case Errc::crs_mismatch: return "crs-mismatch";
    case Errc::empty_tile_list: return "empty-tile-list";
    case Errc::not_coregistered: return "not-coregistered";
    case Errc::out_of_bounds: return "out-of-bounds";
    case Errc::invalid_dn: return "invalid-dn";
    case Errc::invalid_window: return "invalid-window";
    case Errc::empty_stats: return "empty-stats";
    case Errc::no_valid_pixels: return "no-valid-pixels";
    case Errc::insufficient_distinct_pixels: return "insufficient-distinct-pixels";
    case Errc::invalid_ratios: return "invalid-ratios";
    case Errc::unknown_class: return "unknown-class";
    case Errc::shape_mismatch: return "shape-mismatch";
    case Errc::empty_mask: return "empty-mask";
    case Errc::zero_total_weight: return "zero-total-weight";
    case Errc::invalid_probabilities: return "invalid-probabilities";
    case Errc::config_error: return "config-error";
    }
    return "unknown";
}

/// Every failure in the library surfaces as this exception; `code()` carries
/// the machine-readable category.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace sarpatch
