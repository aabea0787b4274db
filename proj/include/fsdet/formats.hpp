/**
 * @file formats.hpp
 * @brief On-disk formats shared by the CLI and tests: detection and
 *        annotation JSON-lines, pair datasets, checkpoint sidecars, reports.
 */
#pragma once

#include "fsdet/eval.hpp"
#include "fsdet/nn.hpp"
#include "fsdet/pipeline.hpp"
#include "fsdet/ran.hpp"

#include "json.hpp"

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fsdet {

using Json = nlohmann::json;

/// {"image": path, "category": id, "score": s, "box": [cx, cy, w, h]}
Json detection_to_json(const std::string& image, const Detection& det);
void write_detections_jsonl(std::ostream& out, const std::string& image, std::span<const Detection> dets);

struct DetectionRecord {
    std::string image;
    Detection detection;
};
std::vector<DetectionRecord> read_detections_jsonl(const std::filesystem::path& path);

/// {"image": path, "objects": [{"box": [cx, cy, w, h], "category": id}, ...]}
struct AnnotationRecord {
    std::string image;
    std::vector<GroundTruthObject> objects;
};
Json annotation_to_json(const AnnotationRecord& rec);
std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path);

/// Aligns detection records with annotation order by image path. Detections
/// for images without annotations raise IoError.
std::pair<ImageDetections, GroundTruth> join_by_image(std::span<const DetectionRecord> dets,
                                                     std::span<const AnnotationRecord> gts);

/**
 * Pair dataset: `jsonl` lists one pair per line with its geometry, target,
 * categories and the relative paths of its two patch PNGs, which are written
 * to `patch_dir` (relative to the jsonl file's directory).
 */
void write_pairs(const std::filesystem::path& jsonl, std::span<const PairSample> pairs,
                 const std::string& patch_dir = "patches");
std::vector<PairSample> read_pairs(const std::filesystem::path& jsonl);

/// JSON sidecar written next to a checkpoint (`<ckpt>.json`).
std::filesystem::path sidecar_path(const std::filesystem::path& ckpt);
Json ran_config_to_json(const RanConfig& cfg);
RanConfig ran_config_from_json(const Json& j);
Json train_config_to_json(const TrainConfig& cfg);

Json timings_to_json(const StageTimings& t);
Json ap_report_to_json(const ApReport& r);
Json bucket_report_to_json(const BucketReport& r);
void write_bucket_csv(std::ostream& out, const BucketReport& r);

}  // namespace fsdet
