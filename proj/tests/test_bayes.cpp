// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace hbwave;
using hbwave::fixtures::camera;
using hbwave::fixtures::haemoglobin;

namespace {

Matrix second_difference(int L) {
    Matrix d = Matrix::Zero(L - 2, L);
    for (int i = 0; i < L - 2; ++i) {
        d(i, i) = 1.0;
        d(i, i + 1) = -2.0;
        d(i, i + 2) = 1.0;
    }
    return d;
}

// Dense minimiser of ‖C I - y‖² + β‖D₂ diag(1/E) I - D₂ 1‖² via its normal equations.
Vector dense_prior_oracle(const Matrix& c, const Vector3& y, const Vector& e, double beta) {
    const int L = static_cast<int>(c.cols());
    const Matrix d = second_difference(L) * e.cwiseInverse().asDiagonal();
    const Matrix n = c.transpose() * c + beta * d.transpose() * d;
    const Vector rhs = c.transpose() * y + beta * d.transpose() * (second_difference(L) *
                                                                   Vector::Ones(L));
    return n.fullPivLu().solve(rhs);
}

Vector random_positive(int L, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.05, 1.0);
    Vector v(L);
    for (int i = 0; i < L; ++i) v[i] = u(rng);
    return v;
}

}  // namespace

TEST(Fit, RecoversForwardModel) {
    const Vector3 x0(35.0, 12.0, 0.2);
    const Vector i = bayes::expected_spectrum(x0, haemoglobin());
    EXPECT_LT((bayes::fit_concentration(i, haemoglobin()) - x0).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Fit, OnesGiveZero) {
    EXPECT_LT(bayes::fit_concentration(Vector::Ones(26), haemoglobin()).norm(), 1e-14);
}

TEST(Fit, MatchesNormalEquations) {
    std::mt19937_64 rng(21);
    const Matrix& xi = haemoglobin().matrix();
    const Matrix nrm = xi.transpose() * xi;
    for (int t = 0; t < 50; ++t) {
        const Vector i = random_positive(26, rng);
        const Vector3 want = -nrm.fullPivLu().solve(xi.transpose() * i.array().log().matrix());
        EXPECT_LT((bayes::fit_concentration(i, haemoglobin()) - want).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(Fit, ClampsBeforeLog) {
    Vector i = Vector::Ones(26);
    i[3] = 0.0;
    i[4] = -1.0;
    const Vector3 x = bayes::fit_concentration(i, haemoglobin());
    EXPECT_TRUE(x.allFinite());
    Vector clamped = i.cwiseMax(1e-6);
    EXPECT_EQ(x, bayes::fit_concentration(clamped, haemoglobin()));
}

TEST(Fit, WrongLengthAndCubeMismatch) {
    EXPECT_THROW(bayes::fit_concentration(Vector::Ones(10), haemoglobin()), ArgumentError);
    const bayes::ConcentrationFitter f(haemoglobin());
    EXPECT_THROW(f.fit_image(Image(2, 2, 5), 1e-6), GridMismatchError);
}

TEST(Expected, PositiveAndFixpoint) {
    const Vector3 x(60.0, 40.0, 1.5);
    const Vector e = bayes::expected_spectrum(x, haemoglobin());
    EXPECT_TRUE((e.array() > 0.0).all());
    EXPECT_LT((bayes::fit_concentration(e, haemoglobin()) - x).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(ExpectationStep, ConsistentDataReturnsPrior) {
    const Vector e = bayes::expected_spectrum(Vector3(30, 20, 0.1), haemoglobin());
    const Vector3 y = camera().matrix() * e;
    const Vector out = bayes::expectation_step(y, e, camera(), {});
    EXPECT_LT((out - e).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ExpectationStep, MatchesDenseOracleSmall) {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 20; ++t) {
        const CameraSensitivity cam(WavelengthGrid(500, 20, 6),
                                    fixtures::random_matrix(3, 6, rng));
        const Vector e = random_positive(6, rng);
        const Vector3 y = cam.matrix() * random_positive(6, rng);
        bayes::BayesConfig cfg;
        cfg.beta = 1.0;
        const Vector got = bayes::expectation_step(y, e, cam, cfg);
        EXPECT_LT((got - dense_prior_oracle(cam.matrix(), y, e, 1.0)).cwiseAbs().maxCoeff(), 1e-9);
    }
}

TEST(ExpectationStep, MatchesDenseOracleFullGrid) {
    std::mt19937_64 rng(23);
    for (double beta : {1e-3, 0.1, 10.0}) {
        const Vector e = bayes::expected_spectrum(Vector3(20, 30, 0.3), haemoglobin());
        const Vector3 y = camera().matrix() * random_positive(26, rng);
        bayes::BayesConfig cfg;
        cfg.beta = beta;
        const Vector got = bayes::expectation_step(y, e, camera(), cfg);
        const Vector want = dense_prior_oracle(camera().matrix(), y, e, beta);
        EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-9 * std::max(1.0, want.norm()));
    }
}

TEST(ExpectationStep, LargeBetaLocksShapeToPrior) {
    // As β grows the relative shape is affine in the band index and C Î fits y
    // in that two-parameter family.
    const Vector e = bayes::expected_spectrum(Vector3(25, 25, 0.2), haemoglobin());
    const Vector3 y(0.3, 0.25, 0.2);
    bayes::BayesConfig cfg;
    cfg.beta = 1e9;
    const Vector got = bayes::expectation_step(y, e, camera(), cfg);

    Matrix basis(26, 2);
    for (int l = 0; l < 26; ++l) {
        basis(l, 0) = e[l];
        basis(l, 1) = e[l] * l;
    }
    const Vector3 r = y - camera().matrix() * e;
    const Eigen::Vector2d ab = (camera().matrix() * basis).jacobiSvd(
        Eigen::ComputeThinU | Eigen::ComputeThinV).solve(r);
    const Vector want = e + basis * ab;
    EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-6 * want.cwiseAbs().maxCoeff());
    const Vector rel = second_difference(26) * got.cwiseQuotient(e);
    EXPECT_LT(rel.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(ExpectationStep, DegeneratePriorIsDiagnosed) {
    try {
        bayes::expectation_step(Vector3(0.1, 0.1, 0.1), Vector::Zero(26), camera(), {});
        FAIL() << "expected IllConditionedPriorError";
    } catch (const IllConditionedPriorError& e) {
        EXPECT_GT(e.condition(), 1e13);
    }
    bayes::BayesConfig bad;
    bad.beta = 0.0;
    EXPECT_THROW(bayes::expectation_step(Vector3::Ones(), Vector::Ones(26), camera(), bad),
                 ArgumentError);
    EXPECT_THROW(bayes::expectation_step(Vector3::Ones(), Vector::Ones(5), camera(), {}),
                 GridMismatchError);
}

namespace {

bayes::LowPassEstimate run_block(const Image& lp, double gain, bayes::BayesConfig cfg = {}) {
    const auto init = unmix::TikhonovOperator::relative(camera(), 1e-3);
    return bayes::estimate_lowpass(bayes::LowPassBlock(lp, gain), camera(), haemoglobin(), cfg,
                                   init);
}

Image rgb_of(const Vector3& x, int rows, int cols, double gain) {
    const Vector3 y = gain * camera().matrix() * bayes::expected_spectrum(x, haemoglobin());
    Image img(rows, cols, 3);
    for (std::size_t i = 0; i < img.pixels(); ++i) std::copy(y.data(), y.data() + 3, img.pixel(i));
    return img;
}

}  // namespace

TEST(LowPass, ConstantPhantomRecovered) {
    const Vector3 x0(40.0, 40.0, 0.1);
    const auto r = run_block(rgb_of(x0, 2, 2, 4.0), 4.0);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_NEAR(r.concentrations.pixel(i)[0], 40.0, 0.4);
        EXPECT_NEAR(r.concentrations.pixel(i)[1], 40.0, 0.4);
    }
    EXPECT_EQ(r.stats.unconverged, 0u);
    // spectra carry the block gain back
    const Vector want = 4.0 * bayes::expected_spectrum(x0, haemoglobin());
    EXPECT_LT((r.spectra.pixel_vec(0) - want).cwiseAbs().maxCoeff(), 0.01 * want.maxCoeff());
}

TEST(LowPass, UnitReflectanceGivesZero) {
    // Fixture sensitivity rows sum to 1, so y = (1,1,1) is the x = 0 spectrum.
    const Vector3 y = camera().matrix() * Vector::Ones(26);
    Image lp(1, 1, 3);
    std::copy(y.data(), y.data() + 3, lp.pixel(0));
    const auto r = run_block(lp, 1.0);
    EXPECT_LT(Eigen::Map<const Vector3>(r.concentrations.pixel(0)).cwiseAbs().maxCoeff(), 0.05);
}

TEST(LowPass, ConvergesOnRandomConcentrations) {
    std::mt19937_64 rng(24);
    std::uniform_real_distribution<double> c(5.0, 70.0), o(0.0, 0.5);
    Image lp(10, 10, 3);
    std::vector<Vector3> truth;
    for (std::size_t i = 0; i < lp.pixels(); ++i) {
        const Vector3 x(c(rng), c(rng), o(rng));
        truth.push_back(x);
        const Vector3 y = camera().matrix() * bayes::expected_spectrum(x, haemoglobin());
        std::copy(y.data(), y.data() + 3, lp.pixel(i));
    }
    const auto r = run_block(lp, 1.0);
    EXPECT_EQ(r.stats.coefficients, 100u);
    EXPECT_LE(r.stats.max_iterations_used, bayes::BayesConfig{}.max_iters);
    EXPECT_EQ(r.stats.unconverged, 0u);
    for (std::size_t i = 0; i < lp.pixels(); ++i) {
        EXPECT_NEAR(r.concentrations.pixel(i)[0], truth[i][0], 0.02 * truth[i][0] + 0.5);
        EXPECT_NEAR(r.concentrations.pixel(i)[1], truth[i][1], 0.02 * truth[i][1] + 0.5);
    }
}

TEST(LowPass, IterationCapIsRespected) {
    bayes::BayesConfig cfg;
    cfg.max_iters = 2;
    cfg.rel_tol = 1e-15;
    const auto r = run_block(rgb_of(Vector3(50, 10, 0.2), 3, 3, 1.0), 1.0, cfg);
    EXPECT_EQ(r.stats.max_iterations_used, 2);
    EXPECT_EQ(r.stats.unconverged, 9u);
    EXPECT_TRUE(r.concentrations.all_finite());
}

TEST(LowPass, DarkCoefficientIsDefined) {
    const auto r = run_block(Image(2, 3, 3, 0.0), 2.0);
    for (double v : r.spectra.data()) EXPECT_EQ(v, 0.0);
    const Vector3 floor_fit =
        bayes::fit_concentration(Vector::Constant(26, 1e-6), haemoglobin());
    EXPECT_EQ(Eigen::Map<const Vector3>(r.concentrations.pixel(0)), floor_fit);
}

TEST(LowPass, BlockValidation) {
    Image neg(1, 1, 3, 0.5);
    neg.pixel(0)[1] = -0.1;
    EXPECT_THROW(bayes::LowPassBlock(neg, 1.0), ArgumentError);
    EXPECT_THROW(bayes::LowPassBlock(Image(1, 1, 2), 1.0), ArgumentError);
    EXPECT_THROW(bayes::LowPassBlock(Image(1, 1, 3), 0.0), ArgumentError);
}

TEST(LowPass, DeterministicAcrossThreads) {
    std::mt19937_64 rng(25);
    const Image lp = fixtures::random_image(7, 9, 3, rng, 0.05, 1.0);
    const auto init = unmix::TikhonovOperator::relative(camera(), 1e-3);
    const bayes::BayesEstimator est(camera(), haemoglobin(), {}, init);
    const auto a = est.estimate(bayes::LowPassBlock(lp, 1.0), 1);
    const auto b = est.estimate(bayes::LowPassBlock(lp, 1.0), 4);
    EXPECT_EQ(a.spectra.data(), b.spectra.data());
    EXPECT_EQ(a.stats.total_iterations, b.stats.total_iterations);
}

TEST(BayesConfig, Validation) {
    bayes::BayesConfig c;
    EXPECT_NO_THROW(c.validate());
    c.max_iters = 0;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = {};
    c.epsilon = 0.0;
    EXPECT_THROW(c.validate(), ArgumentError);
    c = {};
    c.rel_tol = -1;
    EXPECT_THROW(c.validate(), ArgumentError);
}
