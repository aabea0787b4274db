/**
 * @file eval.hpp
 * @brief Detection AP (101-point interpolation), RAN pair accuracy and the
 *        bucketed before/after IoU analysis.
 */
#pragma once

#include "fsdet/geometry.hpp"
#include "fsdet/ran_target.hpp"

#include <array>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace fsdet {

struct GroundTruthObject {
    Box box;
    int category = 0;
};

/// Per-image object lists; index i of detections and ground truth refer to
/// the same image.
using GroundTruth = std::vector<std::vector<GroundTruthObject>>;
using ImageDetections = std::vector<std::vector<Detection>>;

/// AP for one category at one IoU threshold. Zero ground truth scores 1 with
/// no detections and 0 otherwise.
double average_precision(const ImageDetections& dets, const GroundTruth& gts, int category,
                         double iou_threshold);

/// Precision/recall after each score-sorted detection of one category.
struct PrCurve {
    std::vector<double> precision;
    std::vector<double> recall;
    std::size_t num_gt = 0;
};
PrCurve precision_recall(const ImageDetections& dets, const GroundTruth& gts, int category,
                         double iou_threshold);

/// Interpolated AP over recall points 0, 0.01, ..., 1.
double interpolated_ap(const PrCurve& curve);

struct ApReport {
    double ap = 0.0;    // mean over IoU 0.50:0.05:0.95 and categories
    double ap50 = 0.0;
    double ap75 = 0.0;
    struct PerCategory {
        double ap = 0.0;
        double ap50 = 0.0;
        double ap75 = 0.0;
    };
    std::map<int, PerCategory> per_category;
};

/// Evaluates every category present in either detections or ground truth.
ApReport evaluate_detections(const ImageDetections& dets, const GroundTruth& gts);

/// Fraction of pairs where (c_pred >= threshold) agrees with (c_true == 1).
double pair_accuracy(std::span<const RanTarget> predicted, std::span<const RanTarget> truth,
                     double threshold);

struct IouStats {
    double mean = 0.0;
    double max = 0.0;
    double min = 0.0;
    double variance = 0.0;  // population variance
};

struct IouBucket {
    double lower = 0.0;
    double upper = 0.0;  // exclusive except for the last bucket
    std::size_t count = 0;
    std::optional<IouStats> before;
    std::optional<IouStats> after;
    std::optional<double> mean_increment;
};

struct BucketReport {
    std::array<IouBucket, 5> buckets;
    std::size_t total = 0;
};

/// Buckets (iou_before, iou_after) pairs by iou_before into
/// [0,.2) [.2,.4) [.4,.6) [.6,.8) [.8,1].
BucketReport bucket_analysis(std::span<const std::pair<double, double>> pairs);

}  // namespace fsdet
