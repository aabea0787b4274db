#include "cli.hpp"

#include "fsdet/error.hpp"

#include <fstream>
#include <iostream>
#include <memory>

namespace fsdet::cli {
namespace {

struct EvalOptions {
    std::filesystem::path dets;
    std::filesystem::path gt;
    std::filesystem::path pairs;
    std::filesystem::path ckpt;
    std::filesystem::path bucket_csv;
    RanConfig ran;
    bool threshold_set = false;
};

void run(const EvalOptions& o) {
    Json out;
    auto dets = read_detections_jsonl(o.dets);
    auto gts = read_annotations_jsonl(o.gt);
    // Both files may name images relative to different places; compare
    // resolved paths (detections against the working directory).
    const auto cwd = std::filesystem::current_path();
    for (auto& a : gts) a.image = normalize_image_path(a.image, o.gt.parent_path());
    for (auto& d : dets) d.image = normalize_image_path(d.image, cwd);
    const auto [by_image, truth] = join_by_image(dets, gts);
    out = ap_report_to_json(evaluate_detections(by_image, truth));

    if (!o.pairs.empty()) {
        if (o.ckpt.empty()) throw InvalidArgument("--pairs needs --ckpt");
        auto loaded = load_head(o.ckpt, o.ran, false, false, false);
        if (o.threshold_set) loaded.ran.classify_threshold = o.ran.classify_threshold;
        const auto pairs = read_pairs(o.pairs);
        const auto pred = predict_pairs(pairs, loaded.head, loaded.ran);
        std::vector<RanTarget> truth_targets;
        std::vector<std::pair<double, double>> ious;
        for (std::size_t i = 0; i < pairs.size(); ++i) {
            truth_targets.push_back(pairs[i].target);
            if (pairs[i].target.c != 1.0) continue;
            const Box aligned = decode(pairs[i].cand_geom, pred[i], loaded.ran);
            ious.emplace_back(iou(pairs[i].cand_geom, pairs[i].gt_geom), iou(aligned, pairs[i].gt_geom));
        }
        const auto buckets = bucket_analysis(ious);
        out["pair_accuracy"] = pairs.empty() ? Json(nullptr)
                                             : Json(pair_accuracy(pred, truth_targets, loaded.ran.classify_threshold));
        out["pairs"] = pairs.size();
        out["buckets"] = bucket_report_to_json(buckets);
        if (!o.bucket_csv.empty()) {
            std::ofstream csv(o.bucket_csv, std::ios::binary);
            write_bucket_csv(csv, buckets);
            if (!csv) throw IoError("cannot write " + o.bucket_csv.string());
        }
    } else if (!o.bucket_csv.empty()) {
        throw InvalidArgument("--bucket-csv needs --pairs and --ckpt");
    }
    std::cout << out.dump(2) << "\n";
}

}  // namespace

void add_evaluate(CLI::App& app) {
    auto opt = std::make_shared<EvalOptions>();
    auto* sub = app.add_subcommand("evaluate", "Score detections and, optionally, RAN pair predictions");
    sub->add_option("--config", "TOML or JSON file with flag values");
    sub->add_option("--dets", opt->dets, "Detections JSON-lines from detect")->required();
    sub->add_option("--gt", opt->gt, "annotations.jsonl")->required();
    sub->add_option("--pairs", opt->pairs, "pairs.jsonl for pair accuracy and the IoU bucket table");
    sub->add_option("--ckpt", opt->ckpt, "RAN checkpoint used with --pairs");
    sub->add_option("--bucket-csv", opt->bucket_csv, "Also write the bucket table as CSV");
    auto* t = sub->add_option("--threshold", opt->ran.classify_threshold, "Pair classification threshold");
    sub->callback([sub, opt, t] {
        echo_config(*sub);
        opt->threshold_set = t->count() > 0;
        run(*opt);
    });
}

}  // namespace fsdet::cli
