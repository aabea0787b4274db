/**
 * @file ran.hpp
 * @brief Region alignment: target encoding/decoding, patch descriptors,
 *        siamese fuse-and-regress forward pass, training and box alignment.
 *
 * Geometry is expressed in the candidate patch frame: the candidate box is
 * resampled to W x H, its own center lands at (W/2, H/2) and the ground-truth
 * center is mapped through the same transform. With that convention
 *
 *     dx = (1 + 2 (x'_cand - x'_gt) / W) / 2
 *     sw = (lambda_w * cand.w / gt.w - 1) / (lambda_w^2 - 1)
 *
 * and analogously for y / height. decode() is the exact inverse.
 */
#pragma once

#include "fsdet/geometry.hpp"
#include "fsdet/nn.hpp"
#include "fsdet/ran_target.hpp"
#include "fsdet/sdm.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace fsdet {

struct RanConfig {
    double lambda_w = 2.0;
    double lambda_h = 2.0;
    int patch_width = 256;
    int patch_height = 256;
    int embedding_length = 128;
    double classify_threshold = 0.5;

    void validate() const;
};

/// True when (gt, cand) satisfies the encoding preconditions.
bool encodable(const Box& gt, const Box& cand, const RanConfig& cfg);

/// Encodes the geometry of gt relative to cand; c is 1 for matching
/// categories. Throws EncodingDomainError outside the encodable range.
RanTarget encode_pair(const Box& gt, const Box& cand, const RanConfig& cfg, bool same_category = true);

/// Inverse of encode_pair for targets with geometry channels in (0,1).
Box decode(const Box& cand, const RanTarget& t, const RanConfig& cfg);

/// Unit-norm patch embedding of length L.
using Descriptor = std::vector<float>;

/// Raw cell features before projection: 8x8 cells, each contributing its
/// mean intensity and an 8-bin magnitude-weighted Sobel orientation histogram.
/// Pixels are shared bilinearly between the nearest cell centers, so the
/// features vary smoothly as content shifts inside the patch.
inline constexpr int kDescriptorGrid = 8;
inline constexpr int kOrientationBins = 8;
inline constexpr int kRawFeatureLength = kDescriptorGrid * kDescriptorGrid * (1 + kOrientationBins);

std::vector<float> raw_cell_features(const Image& patch);

/// Grayscale, W x H resample when needed, cell features, fixed seeded random
/// projection to L, unit normalization.
Descriptor describe(const Image& patch, const RanConfig& cfg);

/// Crops `box` out of `image` straight to W x H and describes it.
Descriptor describe_region(const Image& image, const Box& box, const RanConfig& cfg);

/// Runs the head on support ++ candidate descriptors.
RanTarget ran_forward_descriptors(const Descriptor& support, const Descriptor& candidate,
                                  const MlpHead& head);

RanTarget ran_forward(const Image& support, const Image& candidate, const MlpHead& head,
                      const RanConfig& cfg);

/// One RAN training/evaluation unit.
struct PairSample {
    Box gt_geom;
    Box cand_geom;
    Image gt_patch;
    Image cand_patch;
    RanTarget target;
    int gt_category = 0;
    int cand_category = 0;
};

struct TrainResult {
    MlpHead head;
    std::vector<double> epoch_loss;
};

/// Per-epoch callback: (epoch index, mean loss).
using EpochLogger = std::function<void(int, double)>;

/// Fused 2L input rows for a pair set, in pair order.
Tensor pair_features(std::span<const PairSample> pairs, const RanConfig& cfg);

/// Trains a freshly initialized head (seeded by train_cfg.seed) with Adam on
/// shuffled mini-batches. Throws NumericError on a non-finite loss.
TrainResult train_ran(std::span<const PairSample> pairs, const RanConfig& cfg,
                      const TrainConfig& train_cfg, const EpochLogger& log = {});

/// Same, on precomputed pair_features rows.
TrainResult train_ran_features(const Tensor& features, std::span<const RanTarget> targets,
                               const RanConfig& cfg, const TrainConfig& train_cfg,
                               const EpochLogger& log = {});

/// Predicted targets for each pair (no thresholding).
std::vector<RanTarget> predict_pairs(std::span<const PairSample> pairs, const MlpHead& head,
                                     const RanConfig& cfg);

/// Predicted targets for candidate boxes against one support descriptor.
std::vector<RanTarget> score_candidates(std::span<const Box> candidates, const Image& query,
                                        const Descriptor& support, const MlpHead& head,
                                        const RanConfig& cfg);

/// Keeps candidates with c >= classify_threshold and replaces each with its
/// decoded box. Score is the predicted c, category the exemplar's.
std::vector<Detection> align(std::span<const Box> candidates, const Image& query,
                             const Exemplar& support, const MlpHead& head, const RanConfig& cfg);

}  // namespace fsdet
