#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace sarpatch {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;
};

/// Relative error with a 1e-6 magnitude floor, so coordinates whose true
/// gradient is zero are judged on absolute error.
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Compare `analytic` against central differences of `loss` at `x`.
/// Coordinates for which `skip(i)` holds (kinks, clamps) are not probed.
inline GradCheckResult central_difference_check(std::vector<double> x, std::span<const double> analytic,
                                                const std::function<double(const std::vector<double>&)>& loss,
                                                double h, const std::function<bool(std::size_t)>& skip = {}) {
    GradCheckResult r;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (skip && skip(i)) {
            ++r.skipped;
            continue;
        }
        const double x0 = x[i];
        x[i] = x0 + h;
        const double up = loss(x);
        x[i] = x0 - h;
        const double down = loss(x);
        x[i] = x0;
        r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[i], (up - down) / (2.0 * h)));
        ++r.checked;
    }
    return r;
}

}  // namespace sarpatch
