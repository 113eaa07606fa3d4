// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace hbwave;
using hbwave::fixtures::random_matrix;

namespace {

CameraSensitivity random_camera(int L, std::mt19937_64& rng) {
    return {WavelengthGrid(400, 10, L), random_matrix(3, L, rng)};
}

Vector3 random_rgb(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    return {u(rng), u(rng), u(rng)};
}

// Stacked system [C; sqrt(γ) I] x = [y; 0], solved by Householder QR.
Vector stacked_tikhonov(const Matrix& c, const Vector3& y, double gamma) {
    const int L = static_cast<int>(c.cols());
    Matrix a(3 + L, L);
    a.topRows(3) = c;
    a.bottomRows(L) = std::sqrt(gamma) * Matrix::Identity(L, L);
    Vector rhs = Vector::Zero(3 + L);
    rhs.head(3) = y;
    return a.householderQr().solve(rhs);
}

}  // namespace

TEST(Lsq, MatchesPseudoinverseOracle) {
    std::mt19937_64 rng(11);
    for (int L : {4, 8, 16, 26}) {
        for (int t = 0; t < 25; ++t) {
            const auto cam = random_camera(L, rng);
            const Vector3 y = random_rgb(rng);
            const Matrix pinv = cam.matrix().completeOrthogonalDecomposition().pseudoInverse();
            const Vector want = pinv * y;
            EXPECT_LT((unmix::lsq_unmix(y, cam) - want).cwiseAbs().maxCoeff(), 1e-9);
        }
    }
}

TEST(Lsq, ReproducesDataExactly) {
    const auto& cam = fixtures::camera();
    const Vector3 y(0.3, 0.5, 0.2);
    const Vector i = unmix::lsq_unmix(y, cam);
    EXPECT_LT((cam.matrix() * i - y).norm(), 1e-12);
}

TEST(Lsq, ZeroInputGivesZero) {
    EXPECT_EQ(unmix::lsq_unmix(Vector3::Zero(), fixtures::camera()).norm(), 0.0);
}

TEST(Tikhonov, MatchesStackedLeastSquares) {
    std::mt19937_64 rng(12);
    for (int L : {4, 8, 16, 26}) {
        for (double gamma : {1e-4, 1e-2, 1.0}) {
            const auto cam = random_camera(L, rng);
            const Vector3 y = random_rgb(rng);
            const unmix::TikhonovOperator op(cam, gamma);
            EXPECT_LT((op(y) - stacked_tikhonov(cam.matrix(), y, gamma)).cwiseAbs().maxCoeff(),
                      1e-9);
        }
    }
}

TEST(Tikhonov, ApproachesLsqAsGammaVanishes) {
    std::mt19937_64 rng(13);
    for (int t = 0; t < 20; ++t) {
        const auto cam = random_camera(8, rng);
        const Vector3 y = random_rgb(rng);
        const Vector a = unmix::TikhonovOperator(cam, 1e-10)(y);
        EXPECT_LT((a - unmix::lsq_unmix(y, cam)).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(Tikhonov, RelativeGammaScalesWithOperatorNorm) {
    const auto& cam = fixtures::camera();
    const auto op = unmix::TikhonovOperator::relative(cam, 1e-3);
    EXPECT_NEAR(op.gamma(), 1e-3 * cam.matrix().squaredNorm() / 26.0, 1e-18);
    EXPECT_THROW(unmix::TikhonovOperator(cam, 0.0), ArgumentError);
    EXPECT_THROW(unmix::TikhonovOperator(cam, -1.0), ArgumentError);
}

TEST(Tikhonov, ShrinksNorm) {
    const auto& cam = fixtures::camera();
    const Vector3 y(0.4, 0.6, 0.1);
    const double n_small = unmix::TikhonovOperator(cam, 1e-6)(y).norm();
    const double n_big = unmix::TikhonovOperator(cam, 1.0)(y).norm();
    EXPECT_LT(n_big, n_small);
}

TEST(Unmix, ImageFormMatchesPerPixel) {
    std::mt19937_64 rng(14);
    const auto& cam = fixtures::camera();
    const Image rgb = fixtures::random_image(5, 6, 3, rng);
    const auto op = unmix::TikhonovOperator::relative(cam, 1e-3);
    const Image cube = op(rgb, 2);
    EXPECT_EQ(cube.channels(), 26);
    for (std::size_t i = 0; i < rgb.pixels(); ++i) {
        const Vector want = op(Vector3(Eigen::Map<const Vector3>(rgb.pixel(i))));
        EXPECT_LT((cube.pixel_vec(i) - want).cwiseAbs().maxCoeff(), 1e-15);
    }
    EXPECT_THROW(op(Image(2, 2, 4)), ArgumentError);
}

TEST(Unmix, CommutesWithHaar) {
    std::mt19937_64 rng(15);
    const auto& cam = fixtures::camera();
    const auto op = unmix::TikhonovOperator::relative(cam, 1e-3);
    for (int t = 0; t < 10; ++t) {
        const Image rgb = fixtures::random_image(9 + t, 14 - t, 3, rng);
        const auto pyr_then = haar::forward(op(rgb), 2);
        const auto unmixed = unmix::unmix_pyramid_directional(haar::forward(rgb, 2), op);
        for (int k = 0; k < 2; ++k) {
            EXPECT_LT(fixtures::max_abs_diff(pyr_then.levels[k].dh, unmixed.levels[k].dh), 1e-12);
            EXPECT_LT(fixtures::max_abs_diff(pyr_then.levels[k].dv, unmixed.levels[k].dv), 1e-12);
            EXPECT_LT(fixtures::max_abs_diff(pyr_then.levels[k].dd, unmixed.levels[k].dd), 1e-12);
        }
        EXPECT_LT(fixtures::max_abs_diff(pyr_then.residual_lp, op(unmixed.residual_lp)), 1e-12);
    }
}

TEST(Unmix, DirectionalLeavesLowPassAsRgb) {
    const auto op = unmix::TikhonovOperator::relative(fixtures::camera(), 1e-3);
    const auto pyr = unmix::unmix_pyramid_directional(haar::forward(Image(4, 4, 3, 1.0), 1), op);
    EXPECT_EQ(pyr.residual_lp.channels(), 3);
    EXPECT_EQ(pyr.levels[0].dh.channels(), 26);
}
