/**
 * @file pipeline.hpp
 * @brief End-to-end detection: SDM, peaks, proposals, purification, region
 *        alignment and NMS, with per-stage toggles and wall-clock timing.
 */
#pragma once

#include "fsdet/geometry.hpp"
#include "fsdet/nn.hpp"
#include "fsdet/proposals.hpp"
#include "fsdet/ran.hpp"
#include "fsdet/sdm.hpp"

#include <optional>
#include <span>
#include <vector>

namespace fsdet {

struct SupportSet {
    int category = 0;
    std::vector<Exemplar> exemplars;

    void validate() const;
};

struct PipelineConfig {
    SdmConfig sdm;
    ProposalConfig proposals;
    PurifyConfig purify;
    RanConfig ran;
    double nms_iou = 0.5;
    bool purify_on = true;
    bool ran_on = true;

    void validate() const;
};

/// Wall time per stage in milliseconds.
struct StageTimings {
    double sdm_ms = 0.0;
    double peaks_ms = 0.0;
    double proposals_ms = 0.0;
    double purify_ms = 0.0;
    double ran_ms = 0.0;
    double nms_ms = 0.0;
    double total_ms = 0.0;
};

struct DetectResult {
    std::vector<Detection> detections;
    StageTimings timings;
    DensityMap sdm;
    std::vector<Peak> peaks;
    std::vector<Box> proposals;   // before purification
    std::vector<Box> candidates;  // entering RAN (after purification when on)
    /// candidates[sources[i]] produced detections[i].
    std::vector<std::size_t> sources;
};

/**
 * Detects the support category in `query`.
 *
 * Anchors use the mean exemplar box size. With several exemplars each
 * candidate is scored against every shot: the score is the mean predicted c
 * and the geometry comes from the shot with the highest c. With ran_on off
 * candidates pass through unchanged, scored by their purification ratio.
 * `external` replaces the anchor proposals when given. `head` may be null
 * only when ran_on is off.
 */
DetectResult detect(const Image& query, const SupportSet& support, const MlpHead* head,
                    const PipelineConfig& cfg, const std::vector<Box>* external = nullptr);

/// detect() per image; results keep input order. threads <= 1 runs inline.
std::vector<DetectResult> detect_batch(std::span<const Image> queries, const SupportSet& support,
                                       const MlpHead* head, const PipelineConfig& cfg,
                                       int threads = 1);

}  // namespace fsdet
