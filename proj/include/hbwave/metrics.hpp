// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/core.hpp"
#include "hbwave/parallel.hpp"

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hbwave::metrics {

struct ErrorReport {
    double mse = 0.0;      // pooled over hbo and hb, (g/litre)²
    double mse_hbo = 0.0;
    double mse_hb = 0.0;
    std::size_t pixels = 0;  // pixels under the mask

    double rmse() const noexcept { return std::sqrt(mse); }
    double rmse_hbo() const noexcept { return std::sqrt(mse_hbo); }
    double rmse_hb() const noexcept { return std::sqrt(mse_hb); }
};

namespace detail {

inline double pairwise_sum(std::span<const double> v) {
    if (v.empty()) return 0.0;
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const std::size_t h = v.size() / 2;
    return pairwise_sum(v.first(h)) + pairwise_sum(v.subspan(h));
}

// Fixed block size keeps the summation tree independent of the thread count.
inline constexpr std::size_t kBlock = 1024;

}  // namespace detail

/// Mask is a single-channel plane; nonzero marks a pixel as included.
inline ErrorReport concentration_mse(const ConcentrationMap& est, const ConcentrationMap& ref,
                                     const Image* mask = nullptr, int threads = 1) {
    if (est.rows() != ref.rows() || est.cols() != ref.cols())
        throw ArgumentError("concentration_mse: " + std::to_string(est.rows()) + "x" +
                            std::to_string(est.cols()) + " vs " + std::to_string(ref.rows()) +
                            "x" + std::to_string(ref.cols()));
    if (mask && (mask->rows() != est.rows() || mask->cols() != est.cols()))
        throw ArgumentError("concentration_mse: mask size does not match the maps");

    const std::size_t n = est.pixels();
    const std::size_t blocks = (n + detail::kBlock - 1) / detail::kBlock;
    std::vector<double> s_hbo(blocks), s_hb(blocks), s_cnt(blocks);
    parallel_for(blocks, threads, [&](std::size_t b0, std::size_t b1, int) {
        std::vector<double> e0, e1;
        for (std::size_t b = b0; b < b1; ++b) {
            e0.clear();
            e1.clear();
            const std::size_t end = std::min(n, (b + 1) * detail::kBlock);
            for (std::size_t i = b * detail::kBlock; i < end; ++i) {
                if (mask && mask->pixel(i)[0] == 0.0) continue;
                const double d0 = est.pixel(i)[0] - ref.pixel(i)[0];
                const double d1 = est.pixel(i)[1] - ref.pixel(i)[1];
                e0.push_back(d0 * d0);
                e1.push_back(d1 * d1);
            }
            s_hbo[b] = detail::pairwise_sum(e0);
            s_hb[b] = detail::pairwise_sum(e1);
            s_cnt[b] = static_cast<double>(e0.size());
        }
    });

    ErrorReport r;
    r.pixels = static_cast<std::size_t>(detail::pairwise_sum(s_cnt));
    if (r.pixels == 0) throw ArgumentError("concentration_mse: mask selects no pixels");
    const double cnt = static_cast<double>(r.pixels);
    const double a = detail::pairwise_sum(s_hbo), b = detail::pairwise_sum(s_hb);
    r.mse_hbo = a / cnt;
    r.mse_hb = b / cnt;
    r.mse = (a + b) / (2.0 * cnt);
    return r;
}

inline ErrorReport concentration_mse(const ConcentrationMap& est, const ConcentrationMap& ref,
                                     const std::optional<Image>& mask, int threads = 1) {
    return concentration_mse(est, ref, mask ? &*mask : nullptr, threads);
}

}  // namespace hbwave::metrics
