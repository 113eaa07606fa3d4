// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/core.hpp"
#include "hbwave/haar.hpp"
#include "hbwave/parallel.hpp"

#include <string>

namespace hbwave::unmix {

/// Applies an L x 3 matrix to every pixel of a 3-channel plane.
inline Image apply_per_pixel(const Matrix& solve, const Image& rgb, int threads = 1) {
    if (rgb.channels() != 3)
        throw ArgumentError("unmix: input plane must have 3 channels, got " +
                            std::to_string(rgb.channels()));
    const int L = static_cast<int>(solve.rows());
    Image out(rgb.rows(), rgb.cols(), L);
    parallel_for(rgb.pixels(), threads, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            Eigen::Map<const Vector3> y(rgb.pixel(i));
            out.pixel_vec(i).noalias() = solve * y;
        }
    });
    return out;
}

/// Minimum-norm least squares, Î = Cᵀ(CCᵀ)⁻¹y. CᵀC is rank 3 for L > 3, so
/// the normal equations are solved in the 3-dimensional dual form.
class LsqOperator {
public:
    explicit LsqOperator(const CameraSensitivity& s) : grid_(s.grid()) {
        const Matrix& c = s.matrix();
        const Matrix3 cct = c * c.transpose();
        Eigen::JacobiSVD<Matrix3> svd(cct);
        const auto sv = svd.singularValues();
        if (!(sv(2) > 1e-14 * sv(0)))
            throw SingularOperatorError("lsq_unmix: C Cᵀ is singular (condition " +
                                        std::to_string(sv(0) / sv(2)) + ")");
        solve_ = c.transpose() * cct.ldlt().solve(Matrix3::Identity());
    }

    const Matrix& solve() const noexcept { return solve_; }
    const WavelengthGrid& grid() const noexcept { return grid_; }

    Vector operator()(const Vector3& y) const { return solve_ * y; }
    Image operator()(const Image& rgb, int threads = 1) const {
        return apply_per_pixel(solve_, rgb, threads);
    }

private:
    WavelengthGrid grid_;
    Matrix solve_;
};

inline Vector lsq_unmix(const Vector3& y, const CameraSensitivity& s) {
    return LsqOperator(s)(y);
}
inline Image lsq_unmix(const Image& rgb, const CameraSensitivity& s, int threads = 1) {
    return LsqOperator(s)(rgb, threads);
}

/// Precomputed (CᵀC + γI)⁻¹Cᵀ, evaluated as Cᵀ(CCᵀ + γI)⁻¹.
class TikhonovOperator {
public:
    TikhonovOperator(const CameraSensitivity& s, double gamma)
        : sensitivity_(s), gamma_(gamma) {
        if (!(gamma > 0.0) || !std::isfinite(gamma))
            throw ArgumentError("tikhonov: gamma must be finite and > 0");
        const Matrix& c = s.matrix();
        const Matrix3 a = c * c.transpose() + gamma * Matrix3::Identity();
        solve_ = c.transpose() * a.ldlt().solve(Matrix3::Identity());
    }

    /// gamma given relative to trace(CᵀC)/L.
    static TikhonovOperator relative(const CameraSensitivity& s, double rel_gamma) {
        const double scale = s.matrix().squaredNorm() / s.grid().size();
        return {s, rel_gamma * scale};
    }

    const CameraSensitivity& sensitivity() const noexcept { return sensitivity_; }
    double gamma() const noexcept { return gamma_; }
    const Matrix& solve() const noexcept { return solve_; }

    Vector operator()(const Vector3& y) const { return solve_ * y; }
    Image operator()(const Image& rgb, int threads = 1) const {
        return apply_per_pixel(solve_, rgb, threads);
    }

private:
    CameraSensitivity sensitivity_;
    double gamma_;
    Matrix solve_;
};

inline Image tikhonov_unmix(const Image& rgb, const TikhonovOperator& op, int threads = 1) {
    return op(rgb, threads);
}

/// Unmixes dh/dv/dd at every level to L channels; low-pass planes are left
/// as RGB for the Bayes stage.
inline haar::HaarPyramid unmix_pyramid_directional(const haar::HaarPyramid& pyr,
                                                   const TikhonovOperator& op,
                                                   int threads = 1) {
    if (pyr.residual_lp.channels() != 3)
        throw ArgumentError("unmix_pyramid_directional: pyramid must have 3 channels");
    haar::HaarPyramid out;
    out.residual_lp = pyr.residual_lp;
    out.levels.reserve(pyr.levels.size());
    for (const auto& lvl : pyr.levels) {
        out.levels.push_back({lvl.lp, op(lvl.dh, threads), op(lvl.dv, threads),
                              op(lvl.dd, threads), lvl.src_rows, lvl.src_cols});
    }
    return out;
}

}  // namespace hbwave::unmix
