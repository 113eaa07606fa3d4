// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the hbwave Project.

#pragma once

#include "hbwave/hbwave.hpp"

#include <random>
#include <string>

namespace hbwave::fixtures {

inline std::string data_path(const std::string& name) {
    return std::string(HBWAVE_DATA_DIR) + "/" + name;
}

inline const CameraSensitivity& camera() {
    static const CameraSensitivity s =
        io::load_sensitivity(data_path("camera_sensitivity.csv"), WavelengthGrid::visible());
    return s;
}

inline const ChromophoreBasis& haemoglobin() {
    static const ChromophoreBasis b =
        io::load_basis(data_path("haemoglobin_attenuation.csv"), WavelengthGrid::visible());
    return b;
}

inline Image random_image(int rows, int cols, int channels, std::mt19937_64& rng,
                          double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(rows, cols, channels);
    for (double& v : img.data()) v = u(rng);
    return img;
}

inline Matrix random_matrix(int rows, int cols, std::mt19937_64& rng, double lo = 0.0,
                            double hi = 1.0) {
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = u(rng);
    return m;
}

inline double max_abs_diff(const Image& a, const Image& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

}  // namespace hbwave::fixtures
