// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/core.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>
#include <vector>

namespace hbwave::timeseries {

struct Trace {
    double fps = 25.0;
    std::vector<double> values;  // patch-mean THb per frame, g/litre

    std::size_t size() const noexcept { return values.size(); }
    double time(std::size_t i) const noexcept { return static_cast<double>(i) / fps; }
};

struct Rect {
    int x = 0;  // column
    int y = 0;  // row
    int w = 1;
    int h = 1;
};

/// Accumulates patch means one map at a time. Pixels with non-finite THb are
/// excluded; frames without any valid pixel are filled by linear
/// interpolation in `finish()`.
class PatchMeanAccumulator {
public:
    PatchMeanAccumulator(Rect rect, double fps) : rect_(rect), fps_(fps) {
        if (!(fps > 0.0)) throw ArgumentError("patch_mean: fps must be > 0");
        if (rect.w < 1 || rect.h < 1) throw ArgumentError("patch_mean: rect area must be >= 1");
    }

    void add(const ConcentrationMap& map) {
        if (rect_.x < 0 || rect_.y < 0 || rect_.x + rect_.w > map.cols() ||
            rect_.y + rect_.h > map.rows())
            throw ArgumentError("patch_mean: rect " + std::to_string(rect_.x) + "," +
                                std::to_string(rect_.y) + "," + std::to_string(rect_.w) + "," +
                                std::to_string(rect_.h) + " is outside the " +
                                std::to_string(map.rows()) + "x" + std::to_string(map.cols()) +
                                " map");
        double sum = 0.0;
        std::size_t n = 0;
        for (int r = rect_.y; r < rect_.y + rect_.h; ++r)
            for (int c = rect_.x; c < rect_.x + rect_.w; ++c) {
                const double t = map.thb(r, c);
                if (std::isfinite(t)) {
                    sum += t;
                    ++n;
                }
            }
        values_.push_back(n ? sum / static_cast<double>(n)
                            : std::numeric_limits<double>::quiet_NaN());
    }

    std::size_t missing() const noexcept {
        return static_cast<std::size_t>(
            std::count_if(values_.begin(), values_.end(), [](double v) { return std::isnan(v); }));
    }

    Trace finish() const {
        Trace t{fps_, values_};
        if (t.values.empty()) return t;
        std::vector<std::size_t> valid;
        for (std::size_t i = 0; i < t.values.size(); ++i)
            if (!std::isnan(t.values[i])) valid.push_back(i);
        if (valid.empty())
            throw ArgumentError("patch_mean: no frame has a valid pixel in the rect");
        for (std::size_t i = 0; i < t.values.size(); ++i) {
            if (!std::isnan(t.values[i])) continue;
            auto hi = std::lower_bound(valid.begin(), valid.end(), i);
            if (hi == valid.begin()) {
                t.values[i] = t.values[*hi];
            } else if (hi == valid.end()) {
                t.values[i] = t.values[valid.back()];
            } else {
                const std::size_t a = *(hi - 1), b = *hi;
                const double f = double(i - a) / double(b - a);
                t.values[i] = t.values[a] + f * (t.values[b] - t.values[a]);
            }
        }
        return t;
    }

private:
    Rect rect_;
    double fps_;
    std::vector<double> values_;
};

template <class Range>
Trace patch_mean(const Range& maps, Rect rect, double fps) {
    PatchMeanAccumulator acc(rect, fps);
    for (const ConcentrationMap& m : maps) acc.add(m);
    return acc.finish();
}

/// Centred moving average over round(window_s·fps) samples, then a central
/// difference scaled by fps (one-sided at the ends). Near the ends the window
/// shrinks symmetrically so it stays centred.
inline Trace smooth_derivative(const Trace& trace, double window_s) {
    const double n_real = window_s * trace.fps;
    if (!(n_real >= 1.0 - 1e-12))
        throw ArgumentError("smooth_derivative: window_s * fps must be >= 1");
    const auto width = static_cast<std::size_t>(std::llround(n_real));
    const std::size_t n = trace.size();
    if (n < std::max<std::size_t>(width, 2))
        throw ArgumentError("smooth_derivative: trace of " + std::to_string(n) +
                            " samples is shorter than the " + std::to_string(width) +
                            "-sample window");
    const std::size_t half = width / 2;
    std::vector<double> smooth(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t h = std::min({half, i, n - 1 - i});
        double s = 0.0;
        for (std::size_t j = i - h; j <= i + h; ++j) s += trace.values[j];
        smooth[i] = s / static_cast<double>(2 * h + 1);
    }
    Trace out{trace.fps, std::vector<double>(n)};
    out.values[0] = (smooth[1] - smooth[0]) * trace.fps;
    out.values[n - 1] = (smooth[n - 1] - smooth[n - 2]) * trace.fps;
    for (std::size_t i = 1; i + 1 < n; ++i)
        out.values[i] = 0.5 * (smooth[i + 1] - smooth[i - 1]) * trace.fps;
    return out;
}

struct Band {
    double lo = 0.6;
    double hi = 3.0;
};

struct Peak {
    double hz = 0.0;
    double power_fraction = 0.0;
    double bin_hz = 0.0;  // spectral resolution

    double per_minute() const noexcept { return hz * 60.0; }
};

namespace detail {

// FFTW's planner is not thread-safe.
inline std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

/// |rfft(x)|² for bins 0..n/2.
inline std::vector<double> power_spectrum(const std::vector<double>& x) {
    const int n = static_cast<int>(x.size());
    std::unique_ptr<double, decltype(&fftw_free)> in(fftw_alloc_real(n), &fftw_free);
    std::unique_ptr<fftw_complex, decltype(&fftw_free)> out(fftw_alloc_complex(n / 2 + 1),
                                                            &fftw_free);
    fftw_plan plan;
    {
        std::lock_guard lock(planner_mutex());
        plan = fftw_plan_dft_r2c_1d(n, in.get(), out.get(), FFTW_ESTIMATE);
    }
    std::copy(x.begin(), x.end(), in.get());
    fftw_execute(plan);
    std::vector<double> p(static_cast<std::size_t>(n / 2 + 1));
    for (std::size_t k = 0; k < p.size(); ++k)
        p[k] = out.get()[k][0] * out.get()[k][0] + out.get()[k][1] * out.get()[k][1];
    {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan);
    }
    return p;
}

}  // namespace detail

/// Least-squares linear detrend, Hann window, power spectrum, max bin in the
/// band refined by a parabola through the log-power of it and its
/// neighbours.
inline Peak dominant_frequency(const Trace& trace, Band band = {}) {
    const std::size_t n = trace.size();
    if (n < 4) throw ArgumentError("dominant_frequency: trace needs >= 4 samples");
    if (!(band.lo >= 0.0 && band.lo < band.hi))
        throw ArgumentError("dominant_frequency: band must satisfy 0 <= lo < hi");
    if (!(band.hi < trace.fps / 2.0))
        throw ArgumentError("dominant_frequency: band upper edge must be below fps/2");

    // detrend
    const double nn = static_cast<double>(n);
    const double tm = (nn - 1.0) / 2.0;
    double mean = 0.0;
    for (double v : trace.values) mean += v;
    mean /= nn;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - tm;
        sxy += d * (trace.values[i] - mean);
        sxx += d * d;
    }
    const double slope = sxy / sxx;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(i) - tm;
        const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / (nn - 1.0));
        x[i] = (trace.values[i] - mean - slope * d) * hann;
    }

    const std::vector<double> p = detail::power_spectrum(x);
    const double df = trace.fps / nn;
    const auto k_lo = static_cast<std::size_t>(std::ceil(band.lo / df - 1e-9));
    const auto k_hi = std::min(p.size() - 1, static_cast<std::size_t>(std::floor(band.hi / df + 1e-9)));
    if (k_lo > k_hi)
        throw ResolutionError("dominant_frequency: no spectral bins in [" +
                              std::to_string(band.lo) + ", " + std::to_string(band.hi) +
                              "] Hz at " + std::to_string(df) +
                              " Hz resolution; use a longer trace");

    std::size_t best = k_lo;
    double total = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
        total += p[k];
        if (p[k] > p[best]) best = k;
    }
    Peak peak;
    peak.bin_hz = df;
    peak.power_fraction = total > 0.0 ? p[best] / total : 0.0;

    double delta = 0.0;
    if (best > 0 && best + 1 < p.size() && p[best - 1] > 0.0 && p[best] > 0.0 &&
        p[best + 1] > 0.0) {
        const double a = std::log(p[best - 1]), b = std::log(p[best]), c = std::log(p[best + 1]);
        const double denom = a - 2.0 * b + c;
        if (denom < 0.0) delta = std::clamp(0.5 * (a - c) / denom, -1.0, 1.0);
    }
    peak.hz = (static_cast<double>(best) + delta) * df;
    return peak;
}

}  // namespace hbwave::timeseries
