#pragma once

#include "fsdet/geometry.hpp"
#include "fsdet/sdm.hpp"

#include <filesystem>
#include <random>
#include <string>

namespace testing {

inline fsdet::Box random_box(std::mt19937_64& rng, double extent = 100.0, double min_size = 0.5,
                             double max_size = 40.0) {
    std::uniform_real_distribution<double> pos(0.0, extent);
    std::uniform_real_distribution<double> size(min_size, max_size);
    return {pos(rng), pos(rng), size(rng), size(rng)};
}

inline fsdet::Image random_image(std::mt19937_64& rng, int w, int h, int channels = 1) {
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    fsdet::Image img(w, h, channels);
    for (float& v : img.pixels()) v = u(rng);
    return img;
}

inline fsdet::DensityMap random_map(std::mt19937_64& rng, int w, int h) {
    std::uniform_real_distribution<float> u(0.0f, 0.999f);
    fsdet::DensityMap m(w, h);
    for (float& v : m.values) v = u(rng);
    return m;
}

/// Pastes `patch` with its top-left corner at (x, y).
inline void paste(fsdet::Image& dst, const fsdet::Image& patch, int x, int y) {
    for (int j = 0; j < patch.height(); ++j)
        for (int i = 0; i < patch.width(); ++i) dst.at(x + i, y + j) = patch.at(i, j);
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("fsdet_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
