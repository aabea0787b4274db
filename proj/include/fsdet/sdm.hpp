/**
 * @file sdm.hpp
 * @brief Similarity density map: multi-scale zero-normalized
 *        cross-correlation of exemplar patches against a query image, and
 *        candidate-center (peak) extraction.
 */
#pragma once

#include "fsdet/geometry.hpp"

#include <span>
#include <vector>

namespace fsdet {

/// Cropped support object plus the box it was cut from.
struct Exemplar {
    Image patch;
    Box source_box;
    int category = 0;

    /// Crops `box` out of `image` at its native (rounded) size.
    static Exemplar from_image(const Image& image, const Box& box, int category);
};

struct SdmConfig {
    std::vector<double> scales{0.8, 1.0, 1.25};
    double smoothing_sigma = 1.0;
    double peak_rel_threshold = 0.2;
    bool use_fft = true;

    void validate() const;
};

struct Peak {
    int x = 0;
    int y = 0;
    double score = 0.0;
};

/// Valid-region correlation scores: entry (u, v) is the ZNCC of the template
/// placed with its top-left corner at (u, v). Zero-variance windows score 0.
struct CorrelationMap {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    double at(int u, int v) const { return values[static_cast<std::size_t>(v) * width + u]; }
};

/// Direct sliding-window ZNCC over grayscale inputs.
CorrelationMap zncc_naive(const Image& query, const Image& templ);

/// Same result via FFT cross-correlation plus summed-area window statistics.
CorrelationMap zncc_fft(const Image& query, const Image& templ);

/// Half-open upper bound used when squeezing maps into [0,1).
inline constexpr double kDensityEpsilon = 1.0 / (1 << 23);

/**
 * Fused similarity map before normalization.
 *
 * For each exemplar and scale the (ZNCC + 1) / 2 score of every valid window
 * is written at the window center; pixels without a valid window and
 * zero-variance windows are 0. Scales fuse by max, exemplars by mean.
 */
DensityMap similarity_map(const Image& query, std::span<const Exemplar> exemplars,
                          const SdmConfig& cfg);

/// Scales a non-negative map so its maximum becomes 1 - 2^-23. All-zero maps
/// are returned unchanged.
DensityMap normalize_half_open(DensityMap map);

/// similarity_map followed by normalize_half_open; result lies in [0,1).
DensityMap compute_sdm(const Image& query, std::span<const Exemplar> exemplars,
                       const SdmConfig& cfg);

/// Separable Gaussian blur with clamp-to-edge borders; sigma <= 0 is a copy.
DensityMap gaussian_smooth(const DensityMap& map, double sigma);

/**
 * Strict 3x3 local maxima of the smoothed map whose value clears
 * min + peak_rel_threshold * (max - min), sorted by descending score.
 */
std::vector<Peak> extract_peaks(const DensityMap& map, const SdmConfig& cfg);

}  // namespace fsdet
