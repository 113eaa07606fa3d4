// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hbwave {

// ---------------------------------------------------------------------------
// Errors. The CLI maps each family to an exit code (argument 2, data 3,
// numerical 4).
// ---------------------------------------------------------------------------

class ArgumentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Wavelength grid not covered by a coefficient table.
class RangeError : public std::out_of_range {
public:
    using std::out_of_range::out_of_range;
};

/// Malformed file contents (header, payload, table layout).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Pyramid levels or inputs whose dimensions do not fit together.
class StructureError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A frame stream changed shape mid-sequence.
class StreamError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GridMismatchError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularOperatorError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class IllConditionedPriorError : public NumericalError {
public:
    IllConditionedPriorError(const std::string& what, double condition)
        : NumericalError(what), condition_(condition) {}
    double condition() const noexcept { return condition_; }

private:
    double condition_;
};

/// Frequency band holds no spectral bins at the available resolution.
class ResolutionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

// ---------------------------------------------------------------------------
// Wavelength grid
// ---------------------------------------------------------------------------

class WavelengthGrid {
public:
    WavelengthGrid(double start_nm, double step_nm, int count)
        : start_(start_nm), step_(step_nm), count_(count) {
        if (!std::isfinite(start_nm) || !std::isfinite(step_nm) || !(step_nm > 0.0))
            throw ArgumentError("wavelength grid step must be finite and > 0");
        if (count < 3)
            throw ArgumentError("wavelength grid needs at least 3 samples, got " +
                                std::to_string(count));
    }

    /// 450-700 nm at 10 nm (26 bands).
    static WavelengthGrid visible() { return {450.0, 10.0, 26}; }

    double start() const noexcept { return start_; }
    double step() const noexcept { return step_; }
    int size() const noexcept { return count_; }
    double end() const noexcept { return start_ + step_ * (count_ - 1); }
    double at(int i) const noexcept { return start_ + step_ * i; }

    bool operator==(const WavelengthGrid& o) const noexcept {
        return count_ == o.count_ && start_ == o.start_ && step_ == o.step_;
    }
    bool operator!=(const WavelengthGrid& o) const noexcept { return !(*this == o); }

    std::string describe() const {
        std::ostringstream os;
        os << start_ << ":" << step_ << ":" << end() << " nm (" << count_ << " bands)";
        return os.str();
    }

private:
    double start_;
    double step_;
    int count_;
};

inline void require_same_grid(const WavelengthGrid& a, const WavelengthGrid& b,
                              const char* context) {
    if (a != b)
        throw GridMismatchError(std::string(context) + ": grid " + a.describe() +
                                " does not match " + b.describe());
}

// ---------------------------------------------------------------------------
// Image storage: row-major (row, col, channel), channels interleaved.
// ---------------------------------------------------------------------------

class Image {
public:
    Image() = default;
    Image(int rows, int cols, int channels, double fill = 0.0)
        : rows_(rows), cols_(cols), channels_(channels) {
        if (rows < 0 || cols < 0 || channels < 1)
            throw ArgumentError("image dimensions must be non-negative with >= 1 channel");
        data_.assign(static_cast<std::size_t>(rows) * cols * channels, fill);
    }

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    int channels() const noexcept { return channels_; }
    std::size_t pixels() const noexcept { return static_cast<std::size_t>(rows_) * cols_; }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(int r, int c, int ch) noexcept { return data_[index(r, c, ch)]; }
    double operator()(int r, int c, int ch) const noexcept { return data_[index(r, c, ch)]; }

    double* pixel(int r, int c) noexcept { return data_.data() + index(r, c, 0); }
    const double* pixel(int r, int c) const noexcept { return data_.data() + index(r, c, 0); }
    double* pixel(std::size_t i) noexcept { return data_.data() + i * channels_; }
    const double* pixel(std::size_t i) const noexcept { return data_.data() + i * channels_; }

    Eigen::Map<Vector> pixel_vec(std::size_t i) noexcept { return {pixel(i), channels_}; }
    Eigen::Map<const Vector> pixel_vec(std::size_t i) const noexcept {
        return {pixel(i), channels_};
    }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool same_shape(const Image& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_ && channels_ == o.channels_;
    }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(),
                           [](double v) { return std::isfinite(v); });
    }

private:
    std::size_t index(int r, int c, int ch) const noexcept {
        return (static_cast<std::size_t>(r) * cols_ + c) * channels_ + ch;
    }

    int rows_ = 0;
    int cols_ = 0;
    int channels_ = 1;
    std::vector<double> data_;
};

/// Linear-light three-channel frame.
class RgbImage : public Image {
public:
    RgbImage() : Image(0, 0, 3) {}
    RgbImage(int rows, int cols, double fill = 0.0) : Image(rows, cols, 3, fill) {}
    explicit RgbImage(Image img) : Image(std::move(img)) {
        if (channels() != 3)
            throw ArgumentError("RGB image needs 3 channels, got " + std::to_string(channels()));
    }
};

/// H x W x L reflectance datacube on a fixed wavelength grid.
class SpectralCube : public Image {
public:
    SpectralCube(int rows, int cols, WavelengthGrid grid, double fill = 0.0)
        : Image(rows, cols, grid.size(), fill), grid_(grid) {}
    SpectralCube(Image img, WavelengthGrid grid) : Image(std::move(img)), grid_(grid) {
        if (channels() != grid.size())
            throw GridMismatchError("cube has " + std::to_string(channels()) +
                                    " channels but grid has " + std::to_string(grid.size()));
    }

    const WavelengthGrid& grid() const noexcept { return grid_; }

private:
    WavelengthGrid grid_;
};

// ---------------------------------------------------------------------------
// Camera sensitivity and chromophore basis
// ---------------------------------------------------------------------------

/// 3 x L channel response per unit reflectance per band.
class CameraSensitivity {
public:
    CameraSensitivity(WavelengthGrid grid, Matrix c) : grid_(grid), c_(std::move(c)) {
        if (c_.rows() != 3 || c_.cols() != grid.size())
            throw ArgumentError("sensitivity must be 3 x " + std::to_string(grid.size()));
        if (!c_.allFinite() || (c_.array() < 0.0).any())
            throw ArgumentError("sensitivity entries must be finite and >= 0");
        for (int i = 0; i < 3; ++i)
            if (!(c_.row(i).maxCoeff() > 0.0))
                throw ArgumentError("sensitivity row " + std::to_string(i) +
                                    " has no positive entry");
        Eigen::FullPivLU<Matrix> lu(c_);
        if (lu.rank() < 3)
            throw SingularOperatorError("camera sensitivity is rank deficient (rank " +
                                        std::to_string(lu.rank()) + ")");
    }

    const WavelengthGrid& grid() const noexcept { return grid_; }
    const Matrix& matrix() const noexcept { return c_; }

private:
    WavelengthGrid grid_;
    Matrix c_;
};

/// L x 3 attenuation matrix: columns HbO, Hb, constant.
class ChromophoreBasis {
public:
    ChromophoreBasis(WavelengthGrid grid, const Vector& hbo, const Vector& hb)
        : grid_(grid), xi_(grid.size(), 3) {
        if (hbo.size() != grid.size() || hb.size() != grid.size())
            throw ArgumentError("chromophore columns must match grid size " +
                                std::to_string(grid.size()));
        if (!hbo.allFinite() || !hb.allFinite() || (hbo.array() < 0.0).any() ||
            (hb.array() < 0.0).any())
            throw ArgumentError("chromophore attenuation must be finite and >= 0");
        xi_.col(0) = hbo;
        xi_.col(1) = hb;
        xi_.col(2).setOnes();
        Eigen::FullPivLU<Matrix> lu(xi_.leftCols(2));
        if (lu.rank() < 2)
            throw SingularOperatorError("HbO and Hb attenuation columns are collinear");
    }

    const WavelengthGrid& grid() const noexcept { return grid_; }
    const Matrix& matrix() const noexcept { return xi_; }

private:
    WavelengthGrid grid_;
    Matrix xi_;
};

// ---------------------------------------------------------------------------
// Concentration map
// ---------------------------------------------------------------------------

/// Per-pixel (hbo, hb, offset). Fitted values may be negative; only the
/// derived THb / SatO2 planes are clamped.
class ConcentrationMap : public Image {
public:
    ConcentrationMap() : Image(0, 0, 3) {}
    ConcentrationMap(int rows, int cols) : Image(rows, cols, 3) {}
    explicit ConcentrationMap(Image img) : Image(std::move(img)) {
        if (channels() != 3)
            throw ArgumentError("concentration map needs 3 channels");
    }

    double hbo(int r, int c) const noexcept { return (*this)(r, c, 0); }
    double hb(int r, int c) const noexcept { return (*this)(r, c, 1); }
    double offset(int r, int c) const noexcept { return (*this)(r, c, 2); }

    static double thb_of(double hbo, double hb) noexcept {
        return std::max(hbo, 0.0) + std::max(hb, 0.0);
    }
    /// THb at or below this (g/litre) leaves SatO2 undefined.
    static constexpr double kMinThb = 1e-9;

    /// NaN where THb <= kMinThb.
    static double sato2_of(double hbo, double hb) noexcept {
        const double t = thb_of(hbo, hb);
        if (!(t > kMinThb)) return std::numeric_limits<double>::quiet_NaN();
        return std::clamp(std::max(hbo, 0.0) / t, 0.0, 1.0);
    }

    double thb(int r, int c) const noexcept { return thb_of(hbo(r, c), hb(r, c)); }
    double sato2(int r, int c) const noexcept { return sato2_of(hbo(r, c), hb(r, c)); }

    Image thb_plane() const { return derived([](double o, double d) { return thb_of(o, d); }); }
    Image sato2_plane() const {
        return derived([](double o, double d) { return sato2_of(o, d); });
    }

    /// Multiply hbo/hb by a calibration scale (offset is dimensionless).
    void scale_concentrations(double s) noexcept {
        for (std::size_t i = 0; i < pixels(); ++i) {
            pixel(i)[0] *= s;
            pixel(i)[1] *= s;
        }
    }

private:
    template <class F>
    Image derived(F f) const {
        Image out(rows(), cols(), 1);
        for (std::size_t i = 0; i < pixels(); ++i) out.pixel(i)[0] = f(pixel(i)[0], pixel(i)[1]);
        return out;
    }
};

// ---------------------------------------------------------------------------
// Table resampling
// ---------------------------------------------------------------------------

/// Linear interpolation of a (wavelength, value) table at each grid sample.
inline Vector resample_to_grid(const std::vector<std::pair<double, double>>& table,
                               const WavelengthGrid& grid) {
    if (table.size() < 2) throw ArgumentError("coefficient table needs >= 2 rows");
    for (std::size_t i = 1; i < table.size(); ++i)
        if (!(table[i].first > table[i - 1].first))
            throw ArgumentError("table wavelengths must be strictly increasing");

    const double lo = table.front().first;
    const double hi = table.back().first;
    // Half-ulp-scale slack so grids computed as start + i*step still match.
    const double tol = 1e-9 * std::max(1.0, std::abs(hi));
    if (grid.start() < lo - tol || grid.end() > hi + tol) {
        std::ostringstream os;
        os << "table covers [" << lo << ", " << hi << "] nm but grid needs [" << grid.start()
           << ", " << grid.end() << "] nm; missing";
        if (grid.start() < lo - tol) os << " [" << grid.start() << ", " << lo << ")";
        if (grid.end() > hi + tol) os << " (" << hi << ", " << grid.end() << "]";
        throw RangeError(os.str());
    }

    Vector out(grid.size());
    std::size_t seg = 0;
    for (int i = 0; i < grid.size(); ++i) {
        const double w = std::clamp(grid.at(i), lo, hi);
        while (seg + 2 < table.size() && w > table[seg + 1].first) ++seg;
        const auto& [w0, v0] = table[seg];
        const auto& [w1, v1] = table[seg + 1];
        const double t = (w - w0) / (w1 - w0);
        out[i] = v0 + t * (v1 - v0);
    }
    return out;
}

}  // namespace hbwave
