#include "fsdet/formats.hpp"

#include "fsdet/error.hpp"
#include "fsdet/image_io.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>

namespace fsdet {
namespace {

Json box_to_json(const Box& b) { return Json::array({b.cx, b.cy, b.w, b.h}); }

Box box_from_json(const Json& j) {
    if (!j.is_array() || j.size() != 4) throw IoError("box must be [cx, cy, w, h]");
    Box b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
    if (!b.valid()) throw IoError("box has non-positive size");
    return b;
}

// Calls fn(json, line_no) for every non-blank line; wraps parse errors.
template <typename Fn>
void for_each_jsonl(const std::filesystem::path& path, Fn&& fn) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            fn(Json::parse(line), line_no);
        } catch (const Json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        } catch (const IoError& e) {
            throw IoError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

Json stats_json(const std::optional<IouStats>& s) {
    if (!s) return nullptr;
    return Json{{"mean", s->mean}, {"max", s->max}, {"min", s->min}, {"variance", s->variance}};
}

}  // namespace

Json detection_to_json(const std::string& image, const Detection& det) {
    return Json{{"image", image}, {"category", det.category}, {"score", det.score}, {"box", box_to_json(det.box)}};
}

void write_detections_jsonl(std::ostream& out, const std::string& image, std::span<const Detection> dets) {
    for (const auto& d : dets) out << detection_to_json(image, d).dump() << '\n';
}

std::vector<DetectionRecord> read_detections_jsonl(const std::filesystem::path& path) {
    std::vector<DetectionRecord> out;
    for_each_jsonl(path, [&](const Json& j, int) {
        DetectionRecord r;
        r.image = j.at("image").get<std::string>();
        r.detection.category = j.at("category").get<int>();
        r.detection.score = j.at("score").get<double>();
        r.detection.box = box_from_json(j.at("box"));
        out.push_back(std::move(r));
    });
    return out;
}

Json annotation_to_json(const AnnotationRecord& rec) {
    Json objects = Json::array();
    for (const auto& o : rec.objects) objects.push_back(Json{{"box", box_to_json(o.box)}, {"category", o.category}});
    return Json{{"image", rec.image}, {"objects", objects}};
}

std::vector<AnnotationRecord> read_annotations_jsonl(const std::filesystem::path& path) {
    std::vector<AnnotationRecord> out;
    for_each_jsonl(path, [&](const Json& j, int) {
        AnnotationRecord r;
        r.image = j.at("image").get<std::string>();
        for (const auto& o : j.at("objects")) {
            r.objects.push_back({box_from_json(o.at("box")), o.at("category").get<int>()});
        }
        out.push_back(std::move(r));
    });
    return out;
}

std::pair<ImageDetections, GroundTruth> join_by_image(std::span<const DetectionRecord> dets,
                                                     std::span<const AnnotationRecord> gts) {
    std::map<std::string, std::size_t> index;
    GroundTruth gt;
    for (const auto& a : gts) {
        if (!index.emplace(a.image, gt.size()).second) throw IoError("duplicate annotation for " + a.image);
        gt.push_back(a.objects);
    }
    ImageDetections out(gt.size());
    for (const auto& d : dets) {
        const auto it = index.find(d.image);
        if (it == index.end()) throw IoError("detection for unannotated image " + d.image);
        out[it->second].push_back(d.detection);
    }
    return {std::move(out), std::move(gt)};
}

void write_pairs(const std::filesystem::path& jsonl, std::span<const PairSample> pairs,
                 const std::string& patch_dir) {
    const auto base = jsonl.parent_path();
    std::filesystem::create_directories(base / patch_dir);
    std::ofstream out(jsonl);
    if (!out) throw IoError("cannot open " + jsonl.string() + " for writing");
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        char name[32];
        std::snprintf(name, sizeof(name), "%06zu", i);
        const std::string gt_rel = patch_dir + "/" + name + "_gt.png";
        const std::string cand_rel = patch_dir + "/" + name + "_cand.png";
        write_image(base / gt_rel, p.gt_patch);
        write_image(base / cand_rel, p.cand_patch);
        const auto t = p.target.as_array();
        out << Json{{"gt_box", box_to_json(p.gt_geom)},
                    {"cand_box", box_to_json(p.cand_geom)},
                    {"gt_category", p.gt_category},
                    {"cand_category", p.cand_category},
                    {"target", Json::array({t[0], t[1], t[2], t[3], t[4]})},
                    {"gt_patch", gt_rel},
                    {"cand_patch", cand_rel}}
                   .dump()
            << '\n';
    }
    if (!out) throw IoError("write failed for " + jsonl.string());
}

std::vector<PairSample> read_pairs(const std::filesystem::path& jsonl) {
    const auto base = jsonl.parent_path();
    std::vector<PairSample> out;
    for_each_jsonl(jsonl, [&](const Json& j, int) {
        PairSample p;
        p.gt_geom = box_from_json(j.at("gt_box"));
        p.cand_geom = box_from_json(j.at("cand_box"));
        p.gt_category = j.at("gt_category").get<int>();
        p.cand_category = j.at("cand_category").get<int>();
        const auto& t = j.at("target");
        if (!t.is_array() || t.size() != 5) throw IoError("target must have 5 entries");
        p.target = RanTarget{t[0].get<double>(), t[1].get<double>(), t[2].get<double>(),
                             t[3].get<double>(), t[4].get<double>()};
        p.gt_patch = read_image(base / j.at("gt_patch").get<std::string>());
        p.cand_patch = read_image(base / j.at("cand_patch").get<std::string>());
        out.push_back(std::move(p));
    });
    return out;
}

std::filesystem::path sidecar_path(const std::filesystem::path& ckpt) {
    auto p = ckpt;
    p += ".json";
    return p;
}

Json ran_config_to_json(const RanConfig& cfg) {
    return Json{{"lambda_w", cfg.lambda_w},
                {"lambda_h", cfg.lambda_h},
                {"patch_width", cfg.patch_width},
                {"patch_height", cfg.patch_height},
                {"embedding_length", cfg.embedding_length},
                {"classify_threshold", cfg.classify_threshold}};
}

RanConfig ran_config_from_json(const Json& j) {
    RanConfig cfg;
    cfg.lambda_w = j.value("lambda_w", cfg.lambda_w);
    cfg.lambda_h = j.value("lambda_h", cfg.lambda_h);
    cfg.patch_width = j.value("patch_width", cfg.patch_width);
    cfg.patch_height = j.value("patch_height", cfg.patch_height);
    cfg.embedding_length = j.value("embedding_length", cfg.embedding_length);
    cfg.classify_threshold = j.value("classify_threshold", cfg.classify_threshold);
    return cfg;
}

Json train_config_to_json(const TrainConfig& cfg) {
    return Json{{"learning_rate", cfg.learning_rate}, {"beta1", cfg.beta1},   {"beta2", cfg.beta2},
                {"epsilon", cfg.epsilon},             {"batch_size", cfg.batch_size},
                {"epochs", cfg.epochs},               {"seed", cfg.seed},
                {"final_lr_scale", cfg.final_lr_scale}};
}

Json timings_to_json(const StageTimings& t) {
    return Json{{"sdm", t.sdm_ms},         {"peaks", t.peaks_ms}, {"proposals", t.proposals_ms},
                {"purify", t.purify_ms},   {"ran", t.ran_ms},     {"nms", t.nms_ms},
                {"total", t.total_ms}};
}

Json ap_report_to_json(const ApReport& r) {
    Json per = Json::object();
    for (const auto& [cat, pc] : r.per_category) {
        per[std::to_string(cat)] = Json{{"AP", pc.ap}, {"AP50", pc.ap50}, {"AP75", pc.ap75}};
    }
    return Json{{"AP", r.ap}, {"AP50", r.ap50}, {"AP75", r.ap75}, {"per_category", per}};
}

Json bucket_report_to_json(const BucketReport& r) {
    Json arr = Json::array();
    for (const auto& b : r.buckets) {
        arr.push_back(Json{{"lower", b.lower},
                           {"upper", b.upper},
                           {"count", b.count},
                           {"before", stats_json(b.before)},
                           {"after", stats_json(b.after)},
                           {"mean_increment", b.mean_increment ? Json(*b.mean_increment) : Json(nullptr)}});
    }
    return arr;
}

void write_bucket_csv(std::ostream& out, const BucketReport& r) {
    out << "lower,upper,count,before_mean,before_min,before_max,before_var,"
           "after_mean,after_min,after_max,after_var,mean_increment\n";
    auto opt = [](const std::optional<double>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& b : r.buckets) {
        out << b.lower << ',' << b.upper << ',' << b.count;
        for (const auto& s : {b.before, b.after}) {
            if (s) {
                out << ',' << s->mean << ',' << s->min << ',' << s->max << ',' << s->variance;
            } else {
                out << ",,,,";
            }
        }
        out << ',' << opt(b.mean_increment) << '\n';
    }
}

}  // namespace fsdet
