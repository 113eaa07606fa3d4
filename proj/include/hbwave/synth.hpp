// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/bayes.hpp"
#include "hbwave/core.hpp"
#include "hbwave/parallel.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace hbwave::synth {

/// Gaussian concentration feature, added on top of the background.
struct Blob {
    double row = 0.0;
    double col = 0.0;
    double radius = 1.0;  // standard deviation, pixels
    double hbo = 0.0;     // peak increment, g/litre
    double hb = 0.0;
};

struct PhantomSpec {
    int height = 64;
    int width = 64;
    double background_hbo = 30.0;
    double background_hb = 20.0;
    std::vector<Blob> blobs;
    double illumination_offset = 0.1;
    double offset_gradient = 0.0;     // added linearly from left (0) to right edge
    std::optional<Image> offset_plane;  // overrides the two fields above
    double noise_sigma = 0.0;         // additive Gaussian on reflectance
    std::uint64_t seed = 0;
    double exposure = 1.0;

    void validate() const {
        if (height < 1 || width < 1) throw ArgumentError("phantom: size must be >= 1x1");
        if (background_hbo < 0.0 || background_hb < 0.0)
            throw ArgumentError("phantom: background concentrations must be >= 0");
        for (const auto& b : blobs)
            if (b.hbo < 0.0 || b.hb < 0.0 || !(b.radius > 0.0))
                throw ArgumentError("phantom: blob concentrations must be >= 0, radius > 0");
        if (!(noise_sigma >= 0.0)) throw ArgumentError("phantom: noise_sigma must be >= 0");
        if (!(exposure > 0.0)) throw ArgumentError("phantom: exposure must be > 0");
        if (offset_plane && (offset_plane->rows() != height || offset_plane->cols() != width ||
                             offset_plane->channels() != 1))
            throw ArgumentError("phantom: offset plane must be height x width x 1");
    }
};

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Background plus `n_blobs` Gaussian features with sizes 5-20 % of the
/// frame, and a left-to-right illumination ramp; all drawn from `seed`.
inline PhantomSpec random_phantom(int height, int width, std::uint64_t seed,
                                  double noise_sigma = 0.0, int n_blobs = 6) {
    PhantomSpec spec;
    spec.height = height;
    spec.width = width;
    spec.seed = seed;
    spec.noise_sigma = noise_sigma;
    spec.illumination_offset = 0.1;
    spec.offset_gradient = 0.3;
    std::mt19937_64 rng(mix_seed(seed, 0xb10b));
    std::uniform_real_distribution<double> pos(0.1, 0.9), rad(0.05, 0.2), amp(0.0, 30.0);
    const double size = std::min(height, width);
    for (int i = 0; i < n_blobs; ++i) {
        Blob b;
        b.col = pos(rng) * width;
        b.row = pos(rng) * height;
        b.radius = rad(rng) * size;
        b.hbo = amp(rng);
        b.hb = amp(rng);
        spec.blobs.push_back(b);
    }
    return spec;
}

inline ConcentrationMap make_truth(const PhantomSpec& spec) {
    spec.validate();
    ConcentrationMap truth(spec.height, spec.width);
    for (int r = 0; r < spec.height; ++r) {
        for (int c = 0; c < spec.width; ++c) {
            double hbo = spec.background_hbo, hb = spec.background_hb;
            for (const auto& b : spec.blobs) {
                const double d2 = (r - b.row) * (r - b.row) + (c - b.col) * (c - b.col);
                const double g = std::exp(-d2 / (2.0 * b.radius * b.radius));
                hbo += b.hbo * g;
                hb += b.hb * g;
            }
            double* px = truth.pixel(r, c);
            px[0] = hbo;
            px[1] = hb;
            px[2] = spec.offset_plane
                        ? (*spec.offset_plane)(r, c, 0)
                        : spec.illumination_offset +
                              spec.offset_gradient * (spec.width > 1 ? double(c) / (spec.width - 1) : 0.0);
        }
    }
    return truth;
}

/// I(λ) = exp(-ξ(λ)·x) per pixel.
inline SpectralCube forward_msi(const ConcentrationMap& truth, const ChromophoreBasis& basis,
                                int threads = 1) {
    if (!truth.all_finite()) throw ArgumentError("forward_msi: truth must be finite");
    const Matrix& xi = basis.matrix();
    SpectralCube cube(truth.rows(), truth.cols(), basis.grid());
    parallel_for(truth.pixels(), threads, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) {
            const Eigen::Map<const Vector3> x(truth.pixel(i));
            cube.pixel_vec(i) = (-(xi * x)).array().exp().matrix();
        }
    });
    return cube;
}

/// Additive Gaussian noise on reflectance, clamped at `floor`.
inline void add_reflectance_noise(Image& cube, double sigma, std::uint64_t seed,
                                  double floor = bayes::BayesConfig{}.epsilon) {
    if (!(sigma >= 0.0)) throw ArgumentError("noise sigma must be >= 0");
    if (sigma == 0.0) return;
    std::mt19937_64 rng(mix_seed(seed, 0x7015e));
    std::normal_distribution<double> n(0.0, sigma);
    for (double& v : cube.data()) v = std::max(v + n(rng), floor);
}

/// y = exposure · C · I per pixel.
inline RgbImage synthesize_rgb(const SpectralCube& cube, const CameraSensitivity& s,
                               double exposure = 1.0, int threads = 1) {
    require_same_grid(cube.grid(), s.grid(), "synthesize_rgb");
    if (!(exposure > 0.0)) throw ArgumentError("synthesize_rgb: exposure must be > 0");
    const Matrix c = exposure * s.matrix();
    RgbImage rgb(cube.rows(), cube.cols());
    parallel_for(cube.pixels(), threads, [&](std::size_t b, std::size_t e, int) {
        for (std::size_t i = b; i < e; ++i) rgb.pixel_vec(i).noalias() = c * cube.pixel_vec(i);
    });
    return rgb;
}

struct Phantom {
    ConcentrationMap truth;
    SpectralCube cube;  // noisy reflectance
    RgbImage rgb;
};

inline Phantom make_phantom(const PhantomSpec& spec, const ChromophoreBasis& basis,
                            const CameraSensitivity& s, int threads = 1) {
    ConcentrationMap truth = make_truth(spec);
    SpectralCube cube = forward_msi(truth, basis, threads);
    add_reflectance_noise(cube, spec.noise_sigma, spec.seed);
    RgbImage rgb = synthesize_rgb(cube, s, spec.exposure, threads);
    return {std::move(truth), std::move(cube), std::move(rgb)};
}

/// Pulsatile frames: THb scaled by 1 + amplitude·sin(2π·f·t) with the
/// HbO:Hb ratio fixed, each frame with independent noise.
class PulseSequence {
public:
    PulseSequence(PhantomSpec spec, ChromophoreBasis basis, CameraSensitivity s, double fps,
                  double duration_s, double pulse_hz, double amplitude)
        : spec_(std::move(spec)),
          basis_(std::move(basis)),
          sensitivity_(std::move(s)),
          fps_(fps),
          pulse_hz_(pulse_hz),
          amplitude_(amplitude) {
        if (!(fps > 0.0)) throw ArgumentError("pulse: fps must be > 0");
        if (!(pulse_hz > 0.0 && pulse_hz < fps / 2.0))
            throw ArgumentError("pulse: pulse_hz must lie in (0, fps/2) to avoid aliasing");
        if (!(duration_s > 0.0)) throw ArgumentError("pulse: duration must be > 0");
        if (!(amplitude >= 0.0 && amplitude < 1.0))
            throw ArgumentError("pulse: amplitude must lie in [0, 1)");
        frames_ = static_cast<std::size_t>(std::llround(duration_s * fps));
        base_ = make_truth(spec_);
    }

    std::size_t size() const noexcept { return frames_; }
    double fps() const noexcept { return fps_; }
    const ConcentrationMap& base_truth() const noexcept { return base_; }

    double modulation(std::size_t i) const noexcept {
        return 1.0 + amplitude_ * std::sin(2.0 * std::numbers::pi * pulse_hz_ *
                                           static_cast<double>(i) / fps_);
    }

    ConcentrationMap truth(std::size_t i) const {
        ConcentrationMap t = base_;
        t.scale_concentrations(modulation(i));
        return t;
    }

    RgbImage frame(std::size_t i) const {
        SpectralCube cube = forward_msi(truth(i), basis_);
        add_reflectance_noise(cube, spec_.noise_sigma, mix_seed(spec_.seed, i));
        return synthesize_rgb(cube, sensitivity_, spec_.exposure);
    }

    std::optional<RgbImage> next() {
        if (cursor_ >= frames_) return std::nullopt;
        return frame(cursor_++);
    }

private:
    PhantomSpec spec_;
    ChromophoreBasis basis_;
    CameraSensitivity sensitivity_;
    double fps_, pulse_hz_, amplitude_;
    std::size_t frames_ = 0;
    std::size_t cursor_ = 0;
    ConcentrationMap base_;
};

}  // namespace hbwave::synth
