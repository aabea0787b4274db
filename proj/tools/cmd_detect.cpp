#include "cli.hpp"

#include "fsdet/error.hpp"
#include "fsdet/image_io.hpp"
#include "fsdet/pipeline.hpp"

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>
#include <thread>

namespace fsdet::cli {
namespace {

struct DetectOptions {
    std::vector<std::string> queries;
    std::string support;
    int category = 0;
    std::filesystem::path ckpt;
    bool no_purify = false;
    bool no_ran = false;
    std::filesystem::path proposals;
    std::filesystem::path dump_sdm;
    std::filesystem::path render;
    std::filesystem::path gt;
    int threads = 0;
    PipelineConfig pipeline;
    bool embedding_set = false;
    bool width_set = false;
    bool height_set = false;
};

// With several queries, per-query artifacts get the query index as suffix.
std::filesystem::path indexed(const std::filesystem::path& p, std::size_t i, std::size_t n) {
    if (n <= 1) return p;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "_%03zu", i);
    auto out = p;
    out.replace_filename(p.stem().string() + buf + p.extension().string());
    return out;
}

void run(DetectOptions o) {
    auto& cfg = o.pipeline;
    cfg.purify_on = !o.no_purify;
    cfg.ran_on = !o.no_ran;

    const auto specs = parse_support(o.support);
    std::optional<LoadedHead> loaded;
    if (cfg.ran_on) {
        if (o.ckpt.empty()) throw InvalidArgument("--ckpt is required unless --no-ran is given");
        loaded = load_head(o.ckpt, cfg.ran, o.embedding_set, o.width_set, o.height_set);
        const double tau = cfg.ran.classify_threshold;
        cfg.ran = loaded->ran;
        cfg.ran.classify_threshold = tau;
    }
    cfg.validate();

    SupportSet support{o.category, {}};
    for (const auto& s : specs) support.exemplars.push_back(Exemplar::from_image(read_image(s.image), s.box, o.category));
    support.validate();

    std::vector<Image> queries;
    for (const auto& q : o.queries) queries.push_back(read_image(q));

    std::vector<Box> external;
    if (!o.proposals.empty()) {
        if (queries.size() != 1) throw InvalidArgument("--proposals needs exactly one --query");
        external = load_external_proposals(o.proposals);
    }

    std::vector<AnnotationRecord> gts;
    if (!o.gt.empty()) gts = read_annotations_jsonl(o.gt);

    const MlpHead* head = loaded ? &loaded->head : nullptr;
    const int threads = o.threads > 0 ? o.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    std::vector<DetectResult> results;
    if (!o.proposals.empty()) {
        results.push_back(detect(queries[0], support, head, cfg, &external));
    } else {
        results = detect_batch(queries, support, head, cfg, threads);
    }

    const auto cwd = std::filesystem::current_path();
    const auto gt_base = o.gt.parent_path();
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        write_detections_jsonl(std::cout, o.queries[i], r.detections);
        const Json report{{"image", o.queries[i]},
                          {"timings_ms", timings_to_json(r.timings)},
                          {"peaks", r.peaks.size()},
                          {"proposals", r.proposals.size()},
                          {"candidates", r.candidates.size()},
                          {"detections", r.detections.size()}};
        std::cerr << report.dump() << "\n";

        if (!o.dump_sdm.empty()) {
            const auto p = indexed(o.dump_sdm, i, results.size());
            write_density_map(p, r.sdm);
            auto pgm = p;
            pgm.replace_extension(".pgm");
            if (pgm != p) write_image(pgm, density_to_image(r.sdm));
        }
        if (!o.render.empty()) {
            Overlay red{{}, {1.0f, 0.0f, 0.0f}};
            Overlay blue{{}, {0.0f, 0.3f, 1.0f}};
            Overlay yellow{{}, {1.0f, 0.9f, 0.0f}};
            for (std::size_t k = 0; k < r.detections.size(); ++k) {
                blue.boxes.push_back(r.detections[k].box);
                if (k < r.sources.size()) red.boxes.push_back(r.candidates[r.sources[k]]);
            }
            if (!gts.empty()) {
                const auto key = normalize_image_path(o.queries[i], cwd);
                for (const auto& a : gts) {
                    if (normalize_image_path(a.image, gt_base) != key) continue;
                    for (const auto& obj : a.objects)
                        if (obj.category == o.category) yellow.boxes.push_back(obj.box);
                }
            }
            write_image(indexed(o.render, i, results.size()), render_overlays(queries[i], {yellow, red, blue}));
        }
    }
    std::cout.flush();
    if (!std::cout) throw IoError("write to standard output failed");
}

}  // namespace

void add_detect(CLI::App& app) {
    auto opt = std::make_shared<DetectOptions>();
    auto* sub = app.add_subcommand("detect", "Detect support-category objects in query images");
    auto& cfg = opt->pipeline;
    sub->add_option("--config", "TOML or JSON file with flag values");
    sub->add_option("--query", opt->queries, "Query image(s)")->required();
    sub->add_option("--support", opt->support, "Exemplars as IMG:cx:cy:w:h[,IMG:cx:cy:w:h...]")->required();
    sub->add_option("--category", opt->category, "Category id reported for detections");
    sub->add_option("--ckpt", opt->ckpt, "RAN checkpoint (not needed with --no-ran)");
    sub->add_flag("--no-purify", opt->no_purify, "Skip density purification");
    sub->add_flag("--no-ran", opt->no_ran, "Skip region alignment, emit proposals directly");
    sub->add_option("--proposals", opt->proposals, "External proposal file replacing SDM anchors");
    sub->add_option("--dump-sdm", opt->dump_sdm, "Write the density map (SDM1, plus a .pgm preview)");
    sub->add_option("--render", opt->render, "Write a box overlay image");
    sub->add_option("--gt", opt->gt, "Annotations for yellow ground-truth boxes in --render");
    sub->add_option("--threads", opt->threads, "Worker threads across queries (0: all cores)");
    sub->add_option("--scales", cfg.sdm.scales, "Exemplar scales for correlation");
    sub->add_option("--smoothing-sigma", cfg.sdm.smoothing_sigma, "Density smoothing sigma");
    sub->add_option("--peak-threshold", cfg.sdm.peak_rel_threshold, "Peak threshold relative to the maximum");
    sub->add_option("--max-proposals", cfg.proposals.max_proposals, "Proposal cap");
    sub->add_option("--purify-h", cfg.purify.h, "Purification density threshold h");
    sub->add_option("--threshold", cfg.ran.classify_threshold, "RAN classification threshold");
    sub->add_option("--nms-iou", cfg.nms_iou, "NMS IoU threshold");
    auto* l = sub->add_option("--embedding", cfg.ran.embedding_length, "Expected descriptor length L");
    auto* w = sub->add_option("--patch-width", cfg.ran.patch_width, "Expected patch width W");
    auto* h = sub->add_option("--patch-height", cfg.ran.patch_height, "Expected patch height H");
    sub->callback([sub, opt, l, w, h] {
        echo_config(*sub);
        opt->embedding_set = l->count() > 0;
        opt->width_set = w->count() > 0;
        opt->height_set = h->count() > 0;
        run(*opt);
    });
}

}  // namespace fsdet::cli
