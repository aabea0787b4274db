#include "cli.hpp"

#include "fsdet/error.hpp"
#include "fsdet/image_io.hpp"
#include "fsdet/synth.hpp"

#include <cstdio>
#include <fstream>
#include <memory>

namespace fsdet::cli {
namespace {

struct GenOptions {
    std::filesystem::path out;
    int scenes = 10;
    SynthConfig synth;
    bool pairs = false;
    std::size_t pair_count = 0;
    JitterConfig jitter;
    RanConfig ran;
    double density_sigma = 0.0;
};

std::string scene_name(std::size_t i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "scene_%05zu", i);
    return buf;
}

void run(const GenOptions& o) {
    o.synth.validate();
    o.jitter.validate();
    o.ran.validate();
    if (o.scenes < 0) throw InvalidArgument("--scenes must be non-negative");
    if (o.density_sigma < 0) throw InvalidArgument("--density-sigma must be non-negative");

    namespace fs = std::filesystem;
    fs::create_directories(o.out / "images");
    if (o.density_sigma > 0) fs::create_directories(o.out / "density");

    std::vector<Scene> scenes;
    std::ofstream ann(o.out / "annotations.jsonl", std::ios::binary);
    if (!ann) throw IoError("cannot write " + (o.out / "annotations.jsonl").string());
    std::size_t objects = 0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(o.scenes); ++i) {
        Scene s = gen_scene(o.synth, scene_seed(o.synth, i));
        const std::string rel = "images/" + scene_name(i) + ".png";
        write_image(o.out / rel, s.image);
        if (o.density_sigma > 0) {
            const auto d = gen_density_gt(s.objects, s.image.width(), s.image.height(), o.density_sigma);
            write_density_map(o.out / "density" / (scene_name(i) + ".sdm"), d);
        }
        ann << annotation_to_json({rel, s.objects}).dump() << "\n";
        objects += s.objects.size();
        if (o.pairs) scenes.push_back(std::move(s));
    }
    ann.close();
    if (!ann) throw IoError("write failed for annotations.jsonl");

    std::size_t n_pairs = 0;
    std::size_t n_negative = 0;
    if (o.pairs) {
        const std::size_t count = o.pair_count > 0 ? o.pair_count : 20 * scenes.size();
        const auto pairs = scenes.empty() ? std::vector<PairSample>{}
                                          : gen_ran_pairs(scenes, o.jitter, o.ran, count);
        write_pairs(o.out / "pairs.jsonl", pairs);
        n_pairs = pairs.size();
        for (const auto& p : pairs) n_negative += p.target.c == 0.0;
    }

    Json manifest{
        {"generator", "fsdet gen-synth"},
        {"scenes", o.scenes},
        {"objects", objects},
        {"synth",
         {{"width", o.synth.width},
          {"height", o.synth.height},
          {"first_category", o.synth.first_category},
          {"categories", o.synth.n_categories},
          {"instances", o.synth.instances_per_scene},
          {"size_jitter", o.synth.size_jitter},
          {"noise", o.synth.background_noise},
          {"seed", o.synth.seed}}},
        {"annotations", "annotations.jsonl"},
        {"images", "images"},
    };
    if (o.density_sigma > 0) manifest["density"] = {{"dir", "density"}, {"sigma", o.density_sigma}};
    if (o.pairs) {
        manifest["pairs"] = {{"file", "pairs.jsonl"},
                             {"count", n_pairs},
                             {"negatives", n_negative},
                             {"jitter",
                              {{"translation", o.jitter.translation},
                               {"scale_margin", o.jitter.scale_margin},
                               {"negative_fraction", o.jitter.negative_fraction},
                               {"negative_iou_ceiling", o.jitter.negative_iou_ceiling},
                               {"seed", o.jitter.seed}}},
                             {"ran", ran_config_to_json(o.ran)}};
    }
    std::ofstream mf(o.out / "MANIFEST", std::ios::binary);
    mf << manifest.dump(2) << "\n";
    if (!mf) throw IoError("cannot write MANIFEST");
}

}  // namespace

void add_gen_synth(CLI::App& app) {
    auto opt = std::make_shared<GenOptions>();
    auto* sub = app.add_subcommand("gen-synth", "Generate a synthetic detection dataset");
    sub->add_option("--config", "TOML or JSON file with flag values");
    sub->add_option("--out", opt->out, "Output directory")->required();
    sub->add_option("--scenes", opt->scenes, "Number of scenes");
    sub->add_option("--categories", opt->synth.n_categories, "Number of categories");
    sub->add_option("--first-category", opt->synth.first_category, "Id of the first category");
    sub->add_option("--instances", opt->synth.instances_per_scene, "Objects per scene");
    sub->add_option("--width", opt->synth.width, "Scene width");
    sub->add_option("--height", opt->synth.height, "Scene height");
    sub->add_option("--size-jitter", opt->synth.size_jitter, "Relative object size jitter");
    sub->add_option("--noise", opt->synth.background_noise, "Background noise amplitude");
    sub->add_option("--seed", opt->synth.seed, "Dataset seed");
    sub->add_flag("--pairs", opt->pairs, "Also write RAN training pairs");
    sub->add_option("--pair-count", opt->pair_count, "Number of pairs (0: 20 per scene)");
    sub->add_option("--translation", opt->jitter.translation, "Pair jitter, fraction of candidate size");
    sub->add_option("--negative-fraction", opt->jitter.negative_fraction, "Share of negative pairs");
    sub->add_option("--pair-seed", opt->jitter.seed, "Pair jitter seed");
    sub->add_option("--patch-width", opt->ran.patch_width, "Pair patch width");
    sub->add_option("--patch-height", opt->ran.patch_height, "Pair patch height");
    sub->add_option("--density-sigma", opt->density_sigma, "Also write GT density maps (0: off)");
    sub->callback([sub, opt] {
        echo_config(*sub);
        run(*opt);
    });
}

}  // namespace fsdet::cli
