// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#include "fixtures.hpp"

#include <gtest/gtest.h>

#include <numbers>

using namespace hbwave;
using namespace hbwave::timeseries;

namespace {

Trace sinusoid(double hz, double fps, double seconds, double amp = 1.0, double offset = 0.0,
               double phase = 0.0) {
    Trace t{fps, {}};
    const auto n = static_cast<std::size_t>(std::llround(fps * seconds));
    for (std::size_t i = 0; i < n; ++i)
        t.values.push_back(offset + amp * std::sin(2.0 * std::numbers::pi * hz * i / fps + phase));
    return t;
}

ConcentrationMap thb_map(int rows, int cols, double value) {
    ConcentrationMap m(rows, cols);
    for (std::size_t i = 0; i < m.pixels(); ++i) {
        m.pixel(i)[0] = value / 2;
        m.pixel(i)[1] = value / 2;
    }
    return m;
}

}  // namespace

TEST(PatchMean, ConstantMaps) {
    const std::vector<ConcentrationMap> maps(5, thb_map(4, 4, 42.0));
    const Trace t = patch_mean(maps, {1, 1, 2, 3}, 25.0);
    ASSERT_EQ(t.size(), 5u);
    for (double v : t.values) EXPECT_DOUBLE_EQ(v, 42.0);
}

TEST(PatchMean, SinglePixelRect) {
    std::vector<ConcentrationMap> maps;
    for (int i = 0; i < 4; ++i) {
        auto m = thb_map(3, 3, 10.0);
        m.pixel(2, 1)[0] = i;
        m.pixel(2, 1)[1] = 0.0;
        maps.push_back(m);
    }
    const Trace t = patch_mean(maps, {1, 2, 1, 1}, 10.0);
    EXPECT_EQ(t.values, (std::vector<double>{0, 1, 2, 3}));
}

TEST(PatchMean, InvalidPixelsExcludedAndGapsInterpolated) {
    std::vector<ConcentrationMap> maps(4, thb_map(2, 2, 10.0));
    maps[0].pixel(0, 0)[0] = std::numeric_limits<double>::quiet_NaN();
    maps[0].pixel(0, 1)[0] = 20.0;
    maps[0].pixel(0, 1)[1] = 0.0;
    for (std::size_t i = 0; i < 4; ++i) maps[2].pixel(i)[0] = std::numeric_limits<double>::quiet_NaN();
    maps[3] = thb_map(2, 2, 30.0);
    PatchMeanAccumulator acc({0, 0, 2, 1}, 25.0);
    for (const auto& m : maps) acc.add(m);
    EXPECT_EQ(acc.missing(), 1u);
    const Trace t = acc.finish();
    EXPECT_DOUBLE_EQ(t.values[0], 20.0);
    EXPECT_DOUBLE_EQ(t.values[1], 10.0);
    EXPECT_DOUBLE_EQ(t.values[2], 20.0);
    EXPECT_DOUBLE_EQ(t.values[3], 30.0);
}

TEST(PatchMean, RectOutsideBounds) {
    const std::vector<ConcentrationMap> maps(1, thb_map(4, 4, 1.0));
    EXPECT_THROW(patch_mean(maps, {3, 0, 2, 1}, 25.0), ArgumentError);
    EXPECT_THROW(patch_mean(maps, {-1, 0, 1, 1}, 25.0), ArgumentError);
    EXPECT_THROW(patch_mean(maps, {0, 0, 0, 1}, 25.0), ArgumentError);
}

TEST(SmoothDerivative, ConstantAndRamp) {
    Trace c{25.0, std::vector<double>(50, 3.0)};
    for (double v : smooth_derivative(c, 0.4).values) EXPECT_NEAR(v, 0.0, 1e-12);
    Trace ramp{25.0, {}};
    for (int i = 0; i < 50; ++i) ramp.values.push_back(0.7 * i / 25.0);
    const Trace d = smooth_derivative(ramp, 0.4);
    for (std::size_t i = 1; i + 1 < d.size(); ++i) EXPECT_NEAR(d.values[i], 0.7, 1e-12);
}

TEST(SmoothDerivative, PhaseLeadsByQuarterCycle) {
    const Trace s = sinusoid(1.25, 25.0, 10.0);
    const Trace d = smooth_derivative(s, 0.2);
    // correlate against cos: derivative of sin is in phase with cos
    double c = 0.0, sn = 0.0;
    for (std::size_t i = 25; i + 25 < d.size(); ++i) {
        const double w = 2.0 * std::numbers::pi * 1.25 * i / 25.0;
        c += d.values[i] * std::cos(w);
        sn += d.values[i] * std::sin(w);
    }
    EXPECT_NEAR(std::atan2(sn, c), 0.0, 0.05);
}

TEST(SmoothDerivative, Errors) {
    Trace t{25.0, std::vector<double>(5, 1.0)};
    EXPECT_THROW(smooth_derivative(t, 0.01), ArgumentError);
    EXPECT_THROW(smooth_derivative(t, 1.0), ArgumentError);
}

TEST(DominantFrequency, PureTone) {
    const Peak p = dominant_frequency(sinusoid(1.25, 25.0, 10.0));
    EXPECT_NEAR(p.hz, 1.25, 0.01);
    EXPECT_NEAR(p.per_minute(), 75.0, 0.6);
    EXPECT_GT(p.power_fraction, 0.4);
    EXPECT_DOUBLE_EQ(p.bin_hz, 0.1);
}

TEST(DominantFrequency, OffBinToneWithinOneBin) {
    for (double hz : {0.93, 1.17, 1.61, 2.44}) {
        const Peak p = dominant_frequency(sinusoid(hz, 25.0, 10.0, 1.0, 0.0, 0.3));
        EXPECT_NEAR(p.hz, hz, 0.05) << hz;
    }
}

TEST(DominantFrequency, AffineAndTrendInvariance) {
    const Trace base = sinusoid(1.4, 25.0, 12.0, 1.0, 0.0, 0.7);
    const double f0 = dominant_frequency(base).hz;
    Trace scaled = base;
    for (double& v : scaled.values) v = 3.0 * v + 100.0;
    EXPECT_NEAR(dominant_frequency(scaled).hz, f0, 1e-9);
    Trace trend = base;
    for (std::size_t i = 0; i < trend.size(); ++i) trend.values[i] += 0.05 * i;
    EXPECT_NEAR(dominant_frequency(trend).hz, f0, 0.02);
}

TEST(DominantFrequency, WhiteNoiseHasNoConfidentPeak) {
    int below = 0;
    for (int seed = 0; seed < 50; ++seed) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> n(0.0, 1.0);
        Trace t{25.0, {}};
        for (int i = 0; i < 250; ++i) t.values.push_back(n(rng));
        if (dominant_frequency(t).power_fraction < 0.2) ++below;
    }
    EXPECT_GE(below, 45);
}

TEST(DominantFrequency, Errors) {
    EXPECT_THROW(dominant_frequency(Trace{25.0, {1, 2, 3}}), ArgumentError);
    const Trace t = sinusoid(1.0, 25.0, 10.0);
    EXPECT_THROW(dominant_frequency(t, {0.6, 13.0}), ArgumentError);
    EXPECT_THROW(dominant_frequency(t, {2.0, 1.0}), ArgumentError);
    EXPECT_THROW(dominant_frequency(sinusoid(1.0, 25.0, 0.4), {1.21, 1.29}), ResolutionError);
}
