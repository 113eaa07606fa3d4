// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/bayes.hpp"
#include "hbwave/core.hpp"
#include "hbwave/haar.hpp"
#include "hbwave/unmix.hpp"

#include <algorithm>
#include <chrono>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace hbwave {

enum class Mode { hybrid, tikhonov_only, bayes_only, direct_msi };

inline std::string_view mode_name(Mode m) noexcept {
    switch (m) {
        case Mode::hybrid: return "hybrid";
        case Mode::tikhonov_only: return "tikhonov";
        case Mode::bayes_only: return "bayes";
        case Mode::direct_msi: return "direct_msi";
    }
    return "unknown";
}

inline Mode parse_mode(std::string_view s) {
    if (s == "hybrid") return Mode::hybrid;
    if (s == "tikhonov" || s == "tikhonov_only") return Mode::tikhonov_only;
    if (s == "bayes" || s == "bayes_only") return Mode::bayes_only;
    if (s == "direct_msi" || s == "msi") return Mode::direct_msi;
    throw ArgumentError("unknown mode '" + std::string(s) + "'");
}

struct PipelineConfig {
    int n_levels = 1;                 // 1 = w1, 3 = w3
    double tikhonov_gamma = 1e-3;     // relative to trace(CᵀC)/L
    bayes::BayesConfig bayes;
    Mode mode = Mode::hybrid;
    double calibration_scale = 1.0;   // multiplies reported hbo/hb
    int threads = 1;

    void validate() const {
        if (n_levels < 1 || n_levels > haar::kMaxLevels)
            throw ArgumentError("pipeline: n_levels must be >= 1");
        if (!(tikhonov_gamma > 0.0)) throw ArgumentError("pipeline: gamma must be > 0");
        if (!(calibration_scale > 0.0))
            throw ArgumentError("pipeline: calibration_scale must be > 0");
        bayes.validate();
    }
};

struct FrameStats {
    std::size_t pixels = 0;
    bayes::LowPassStats bayes;  // coefficients routed to the Bayes stage
    double seconds = 0.0;       // includes decomposition and recomposition
};

struct FrameResult {
    SpectralCube cube;
    ConcentrationMap map;
    FrameStats stats;
};

/// Hybrid estimator: Tikhonov on directional Haar coefficients, Bayes on the
/// coarsest low-pass, recomposition in the spectral domain, per-pixel
/// Beer-Lambert fit. Immutable after construction.
class Pipeline {
public:
    Pipeline(const CameraSensitivity& s, const ChromophoreBasis& basis, PipelineConfig cfg)
        : cfg_(checked(cfg, s, basis)),
          sensitivity_(s),
          tikhonov_(unmix::TikhonovOperator::relative(s, cfg.tikhonov_gamma)),
          estimator_(s, basis, cfg.bayes, tikhonov_),
          fitter_(basis) {}

    const PipelineConfig& config() const noexcept { return cfg_; }
    const WavelengthGrid& grid() const noexcept { return sensitivity_.grid(); }
    const unmix::TikhonovOperator& tikhonov() const noexcept { return tikhonov_; }
    const bayes::BayesEstimator& bayes_estimator() const noexcept { return estimator_; }
    const bayes::ConcentrationFitter& fitter() const noexcept { return fitter_; }

    FrameResult estimate(const RgbImage& rgb) const {
        const auto t0 = std::chrono::steady_clock::now();
        if (cfg_.mode == Mode::direct_msi)
            throw ArgumentError("pipeline: direct_msi mode takes a spectral cube, not RGB");
        if (rgb.rows() < 1 || rgb.cols() < 1) throw ArgumentError("pipeline: empty frame");
        if (!rgb.all_finite()) throw ArgumentError("pipeline: frame contains non-finite values");

        const int threads = cfg_.threads;
        FrameStats stats;
        stats.pixels = rgb.pixels();
        Image spectra;
        switch (cfg_.mode) {
            case Mode::hybrid: {
                const long need = 1L << cfg_.n_levels;
                if (rgb.rows() < need || rgb.cols() < need)
                    throw ArgumentError("pipeline: " + std::to_string(rgb.rows()) + "x" +
                                        std::to_string(rgb.cols()) + " frame is smaller than 2^" +
                                        std::to_string(cfg_.n_levels) + " in a dimension");
                const auto pyr = haar::forward(rgb, cfg_.n_levels, threads);
                auto spec_pyr = unmix::unmix_pyramid_directional(pyr, tikhonov_, threads);
                const bayes::LowPassBlock block(pyr.residual_lp,
                                                std::ldexp(1.0, cfg_.n_levels));
                auto lp = estimator_.estimate(block, threads);
                stats.bayes = lp.stats;
                spec_pyr.residual_lp = std::move(lp.spectra);
                for (auto& lvl : spec_pyr.levels) lvl.lp = Image();
                spectra = haar::inverse(spec_pyr, threads);
                break;
            }
            case Mode::tikhonov_only:
                spectra = tikhonov_(rgb, threads);
                break;
            case Mode::bayes_only: {
                auto lp = estimator_.estimate(bayes::LowPassBlock(rgb, 1.0), threads);
                stats.bayes = lp.stats;
                spectra = std::move(lp.spectra);
                break;
            }
            case Mode::direct_msi:
                break;
        }
        ConcentrationMap map = fitter_.fit_image(spectra, cfg_.bayes.epsilon, threads);
        if (cfg_.calibration_scale != 1.0) map.scale_concentrations(cfg_.calibration_scale);
        stats.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return {SpectralCube(std::move(spectra), grid()), std::move(map), stats};
    }

    /// Reference path: Beer-Lambert fit straight from a multispectral cube.
    ConcentrationMap estimate_msi(const SpectralCube& cube) const {
        require_same_grid(cube.grid(), grid(), "direct_msi");
        ConcentrationMap map = fitter_.fit_image(cube, cfg_.bayes.epsilon, cfg_.threads);
        if (cfg_.calibration_scale != 1.0) map.scale_concentrations(cfg_.calibration_scale);
        return map;
    }

private:
    // Runs before the operators are built so bad input reports the real cause.
    static PipelineConfig checked(const PipelineConfig& cfg, const CameraSensitivity& s,
                                  const ChromophoreBasis& basis) {
        cfg.validate();
        require_same_grid(s.grid(), basis.grid(), "pipeline");
        return cfg;
    }

    PipelineConfig cfg_;
    CameraSensitivity sensitivity_;
    unmix::TikhonovOperator tikhonov_;
    bayes::BayesEstimator estimator_;
    bayes::ConcentrationFitter fitter_;
};

inline FrameResult estimate_frame(const RgbImage& rgb, const CameraSensitivity& s,
                                  const ChromophoreBasis& basis, const PipelineConfig& cfg) {
    return Pipeline(s, basis, cfg).estimate(rgb);
}

/// Streams frames through a pipeline. `next()` returns std::nullopt at the
/// end; `sink(index, FrameResult&&)` receives each result. Only one frame is
/// held at a time.
template <class Source, class Sink>
std::size_t estimate_sequence(const Pipeline& pipeline, Source&& next, Sink&& sink) {
    std::optional<std::pair<int, int>> dims;
    std::size_t index = 0;
    while (std::optional<RgbImage> frame = next()) {
        if (dims && (frame->rows() != dims->first || frame->cols() != dims->second))
            throw StreamError("estimate_sequence: frame " + std::to_string(index) + " is " +
                              std::to_string(frame->rows()) + "x" +
                              std::to_string(frame->cols()) + ", stream started at " +
                              std::to_string(dims->first) + "x" + std::to_string(dims->second));
        dims = {frame->rows(), frame->cols()};
        sink(index, pipeline.estimate(*frame));
        ++index;
    }
    return index;
}

/// Median frames/sec over `repeat` passes across all frames.
inline double measure_throughput(const Pipeline& pipeline, const std::vector<RgbImage>& frames,
                                 int repeat) {
    if (frames.empty() || repeat < 1)
        throw ArgumentError("measure_throughput: need frames and repeat >= 1");
    std::vector<double> rates;
    for (int r = 0; r < repeat; ++r) {
        const auto t0 = std::chrono::steady_clock::now();
        for (const auto& f : frames) (void)pipeline.estimate(f);
        const double s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        rates.push_back(static_cast<double>(frames.size()) / std::max(s, 1e-12));
    }
    std::nth_element(rates.begin(), rates.begin() + rates.size() / 2, rates.end());
    return rates[rates.size() / 2];
}

}  // namespace hbwave
