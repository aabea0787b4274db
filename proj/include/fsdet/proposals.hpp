#pragma once

#include "fsdet/geometry.hpp"
#include "fsdet/sdm.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace fsdet {

struct ProposalConfig {
    std::vector<double> anchor_scales{0.5, 0.71, 1.0, 1.41, 2.0};
    std::vector<double> aspect_ratios{0.5, 1.0, 2.0};
    int max_proposals = 300;

    void validate() const;
};

struct PurifyConfig {
    double h = 0.1;

    void validate() const;
};

/**
 * Peak-anchored class-agnostic proposals. One box per (peak, scale, aspect),
 * sized scale*sqrt(aspect)*w by scale/sqrt(aspect)*h of the support box and
 * clipped to the image. Peaks are visited in the given (descending score)
 * order and the list is truncated to max_proposals.
 */
std::vector<Box> anchor_proposals(std::span<const Peak> peaks, const Box& support_box,
                                  int image_width, int image_height, const ProposalConfig& cfg);

/// Proposal text file: one "cx cy w h" per line, '#' starts a comment.
std::vector<Box> load_external_proposals(const std::filesystem::path& path);
void save_proposals(const std::filesystem::path& path, std::span<const Box> boxes);

/// Summed density over member pixels divided by the member-pixel count.
/// Returns -1 when the box has no member pixels.
double purification_ratio(const IntegralImage& ii, const Box& b);

/// Region purification: keeps boxes whose mean density reaches cfg.h.
/// Order is preserved; boxes without member pixels are dropped.
std::vector<Box> purify(const DensityMap& map, std::span<const Box> boxes, const PurifyConfig& cfg);

}  // namespace fsdet
