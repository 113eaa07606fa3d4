// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/core.hpp"
#include "hbwave/parallel.hpp"

#include <array>
#include <string>
#include <vector>

namespace hbwave::haar {

/// 0.5 * [[1,1,1,1],[1,1,-1,-1],[1,-1,-1,1],[1,-1,1,-1]]. Symmetric, orthogonal
/// and its own inverse.
inline Eigen::Matrix4d haar_matrix() {
    Eigen::Matrix4d h;
    h << 1, 1, 1, 1,
         1, 1, -1, -1,
         1, -1, -1, 1,
         1, -1, 1, -1;
    return 0.5 * h;
}

/// One decomposition level. Planes are ceil(src/2) in each dimension; the
/// source size is kept so the inverse can crop edge-replicated padding.
struct HaarLevel {
    Image lp, dh, dv, dd;
    int src_rows = 0;
    int src_cols = 0;
};

/// levels[0] is the finest. Only `residual_lp` (the coarsest low-pass) and the
/// directional planes take part in reconstruction; the per-level `lp` planes
/// are kept for inspection and may be left empty.
struct HaarPyramid {
    std::vector<HaarLevel> levels;
    Image residual_lp;

    int n_levels() const noexcept { return static_cast<int>(levels.size()); }
};

inline constexpr int kMaxLevels = 30;

namespace detail {

// Window {I(r,c), I(r,c+1), I(r+1,c), I(r+1,c+1)} times H, rows past the edge
// replicate the last row/column.
inline HaarLevel analyse(const Image& in, int threads) {
    const int rows = in.rows(), cols = in.cols(), ch = in.channels();
    const int r2 = (rows + 1) / 2, c2 = (cols + 1) / 2;
    HaarLevel lvl{Image(r2, c2, ch), Image(r2, c2, ch), Image(r2, c2, ch), Image(r2, c2, ch),
                  rows, cols};
    parallel_for(static_cast<std::size_t>(r2), threads, [&](std::size_t b, std::size_t e, int) {
        for (int i = static_cast<int>(b); i < static_cast<int>(e); ++i) {
            const int ra = 2 * i, rb = std::min(2 * i + 1, rows - 1);
            for (int j = 0; j < c2; ++j) {
                const int ca = 2 * j, cb = std::min(2 * j + 1, cols - 1);
                const double* a = in.pixel(ra, ca);
                const double* b_ = in.pixel(ra, cb);
                const double* c = in.pixel(rb, ca);
                const double* d = in.pixel(rb, cb);
                double* lp = lvl.lp.pixel(i, j);
                double* dh = lvl.dh.pixel(i, j);
                double* dv = lvl.dv.pixel(i, j);
                double* dd = lvl.dd.pixel(i, j);
                for (int k = 0; k < ch; ++k) {
                    lp[k] = 0.5 * (a[k] + b_[k] + c[k] + d[k]);
                    dh[k] = 0.5 * (a[k] + b_[k] - c[k] - d[k]);
                    dv[k] = 0.5 * (a[k] - b_[k] - c[k] + d[k]);
                    dd[k] = 0.5 * (a[k] - b_[k] + c[k] - d[k]);
                }
            }
        }
    });
    return lvl;
}

inline Image synthesise(const Image& lp, const HaarLevel& lvl, int threads) {
    const int ch = lp.channels();
    const int r2 = lp.rows(), c2 = lp.cols();
    Image out(lvl.src_rows, lvl.src_cols, ch);
    parallel_for(static_cast<std::size_t>(r2), threads, [&](std::size_t b, std::size_t e, int) {
        for (int i = static_cast<int>(b); i < static_cast<int>(e); ++i) {
            const int ra = 2 * i, rb = 2 * i + 1;
            for (int j = 0; j < c2; ++j) {
                const int ca = 2 * j, cb = 2 * j + 1;
                const double* l = lp.pixel(i, j);
                const double* h = lvl.dh.pixel(i, j);
                const double* v = lvl.dv.pixel(i, j);
                const double* d = lvl.dd.pixel(i, j);
                const bool has_rb = rb < lvl.src_rows, has_cb = cb < lvl.src_cols;
                double* pa = out.pixel(ra, ca);
                double* pb = has_cb ? out.pixel(ra, cb) : nullptr;
                double* pc = has_rb ? out.pixel(rb, ca) : nullptr;
                double* pd = has_rb && has_cb ? out.pixel(rb, cb) : nullptr;
                for (int k = 0; k < ch; ++k) {
                    pa[k] = 0.5 * (l[k] + h[k] + v[k] + d[k]);
                    if (pb) pb[k] = 0.5 * (l[k] + h[k] - v[k] - d[k]);
                    if (pc) pc[k] = 0.5 * (l[k] - h[k] - v[k] + d[k]);
                    if (pd) pd[k] = 0.5 * (l[k] - h[k] + v[k] - d[k]);
                }
            }
        }
    });
    return out;
}

}  // namespace detail

/// Multilevel 2D Haar analysis, recursing on the low-pass plane.
inline HaarPyramid forward(const Image& image, int n_levels, int threads = 1) {
    if (n_levels < 1 || n_levels > kMaxLevels)
        throw ArgumentError("haar: n_levels must be in [1, " + std::to_string(kMaxLevels) +
                            "], got " + std::to_string(n_levels));
    if (image.rows() < 1 || image.cols() < 1)
        throw ArgumentError("haar: image must have at least one pixel");
    HaarPyramid pyr;
    pyr.levels.reserve(static_cast<std::size_t>(n_levels));
    const Image* src = &image;
    for (int k = 0; k < n_levels; ++k) {
        pyr.levels.push_back(detail::analyse(*src, threads));
        src = &pyr.levels.back().lp;
    }
    pyr.residual_lp = pyr.levels.back().lp;
    return pyr;
}

/// Exact reconstruction (up to round-off) with padding removed.
inline Image inverse(const HaarPyramid& pyr, int threads = 1) {
    if (pyr.levels.empty()) throw StructureError("haar: pyramid has no levels");
    Image current = pyr.residual_lp;
    for (int k = pyr.n_levels() - 1; k >= 0; --k) {
        const HaarLevel& lvl = pyr.levels[static_cast<std::size_t>(k)];
        const int r2 = (lvl.src_rows + 1) / 2, c2 = (lvl.src_cols + 1) / 2;
        auto check = [&](const Image& p, const char* name) {
            if (p.rows() != r2 || p.cols() != c2 || p.channels() != current.channels())
                throw StructureError("haar: level " + std::to_string(k + 1) + " plane " + name +
                                     " is " + std::to_string(p.rows()) + "x" +
                                     std::to_string(p.cols()) + "x" +
                                     std::to_string(p.channels()) + ", expected " +
                                     std::to_string(r2) + "x" + std::to_string(c2) + "x" +
                                     std::to_string(current.channels()));
        };
        check(current, "lp");
        check(lvl.dh, "dh");
        check(lvl.dv, "dv");
        check(lvl.dd, "dd");
        current = detail::synthesise(current, lvl, threads);
    }
    return current;
}

}  // namespace hbwave::haar
