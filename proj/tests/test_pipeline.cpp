#include "doctest.h"
#include "fixtures.hpp"
#include "support.hpp"

#include "fsdet/error.hpp"
#include "fsdet/pipeline.hpp"
#include "fsdet/synth.hpp"

#include <algorithm>

using namespace fsdet;

namespace {

PipelineConfig trained_pipeline() {
    PipelineConfig cfg;
    cfg.ran = testing::trained_config();
    return cfg;
}

bool same(const std::vector<Detection>& a, const std::vector<Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i].box == b[i].box) || a[i].score != b[i].score || a[i].category != b[i].category) return false;
    return true;
}

struct Fixture {
    Scene scene;
    SupportSet support;
};

// One category, several instances; the exemplar is an exact copy of one.
Fixture planted(std::uint64_t seed, int instances) {
    SynthConfig sc;
    sc.first_category = 3000000;
    sc.n_categories = 1;
    sc.instances_per_scene = instances;
    sc.seed = seed;
    Fixture f{gen_scene(sc, 0), {}};
    const auto& o = f.scene.objects.at(0);
    f.support = SupportSet{o.category, {Exemplar::from_image(f.scene.image, o.box, o.category)}};
    return f;
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("three planted instances are found with a one-shot exemplar") {
    const Fixture f = planted(41, 3);
    const auto r = detect(f.scene.image, f.support, &testing::trained_head(), trained_pipeline());
    // Every instance is recovered. Partial-overlap duplicates also survive
    // NMS, so the count is reported rather than pinned to 3.
    MESSAGE("detections: " << r.detections.size());
    CHECK(r.detections.size() >= 3);
    for (const auto& o : f.scene.objects) {
        double best = 0;
        for (const auto& d : r.detections) best = std::max(best, iou(d.box, o.box));
        CHECK(best >= 0.5);
    }
    CHECK(r.timings.total_ms > 0.0);
    CHECK(r.timings.total_ms >= r.timings.sdm_ms + r.timings.ran_ms);
}

TEST_CASE("scene without instances yields no detections") {
    const Fixture f = planted(42, 2);
    SynthConfig empty;
    empty.instances_per_scene = 0;
    empty.seed = 42;
    const Scene blank = gen_scene(empty, 0);
    const auto r = detect(blank.image, f.support, &testing::trained_head(), trained_pipeline());
    CHECK(r.detections.empty());
}

TEST_CASE("ran off passes candidates through scored by purification ratio") {
    const Fixture f = planted(43, 3);
    PipelineConfig cfg;
    cfg.ran_on = false;
    const auto r = detect(f.scene.image, f.support, nullptr, cfg);
    const IntegralImage ii(r.sdm);
    REQUIRE_FALSE(r.detections.empty());
    for (std::size_t i = 0; i < r.detections.size(); ++i) {
        CHECK(r.detections[i].box == r.candidates[r.sources[i]]);
        CHECK(r.detections[i].score == purification_ratio(ii, r.detections[i].box));
        CHECK(r.detections[i].category == f.support.category);
    }

    // With NMS disabled as well, every proposal comes out untouched.
    cfg.purify_on = false;
    cfg.nms_iou = 1.0;
    const auto raw = detect(f.scene.image, f.support, nullptr, cfg);
    REQUIRE(raw.detections.size() == raw.proposals.size());
    for (const auto& d : raw.detections)
        CHECK(std::find(raw.proposals.begin(), raw.proposals.end(), d.box) != raw.proposals.end());
}

TEST_CASE("purification toggle and provenance") {
    const Fixture f = planted(44, 3);
    PipelineConfig on = trained_pipeline();
    PipelineConfig off = on;
    off.purify_on = false;
    const MlpHead& head = testing::trained_head();
    const auto a = detect(f.scene.image, f.support, &head, on);
    const auto b = detect(f.scene.image, f.support, &head, off);
    CHECK(b.candidates.size() >= a.candidates.size());
    const IntegralImage ii(a.sdm);
    for (std::size_t i = 0; i < a.detections.size(); ++i)
        CHECK(purification_ratio(ii, a.candidates[a.sources[i]]) >= on.purify.h);
}

TEST_CASE("detect is deterministic and batch-consistent") {
    const Fixture f = planted(45, 3);
    const Fixture g = planted(46, 2);
    const MlpHead& head = testing::trained_head();
    const auto cfg = trained_pipeline();
    const auto a = detect(f.scene.image, f.support, &head, cfg);
    CHECK(same(a.detections, detect(f.scene.image, f.support, &head, cfg).detections));

    const std::vector<Image> one{f.scene.image};
    CHECK(same(detect_batch(one, f.support, &head, cfg)[0].detections, a.detections));

    const std::vector<Image> fwd{f.scene.image, g.scene.image, f.scene.image};
    const auto x = detect_batch(fwd, f.support, &head, cfg, 3);
    const std::vector<Image> perm{g.scene.image, f.scene.image, f.scene.image};
    const auto y = detect_batch(perm, f.support, &head, cfg, 2);
    CHECK(same(x[0].detections, y[1].detections));
    CHECK(same(x[1].detections, y[0].detections));
    CHECK(same(x[2].detections, a.detections));
}

TEST_CASE("multi-shot support and external proposals") {
    const Fixture f = planted(47, 3);
    const auto& objs = f.scene.objects;
    SupportSet two{f.support.category,
                   {Exemplar::from_image(f.scene.image, objs[0].box, f.support.category),
                    Exemplar::from_image(f.scene.image, objs[1].box, f.support.category)}};
    const auto r = detect(f.scene.image, two, &testing::trained_head(), trained_pipeline());
    CHECK(r.detections.size() >= 2);

    std::vector<Box> external;
    for (const auto& o : objs) external.push_back(o.box);
    external.push_back(Box{5, 5, 4, 4});
    PipelineConfig cfg;
    cfg.ran_on = false;
    cfg.purify_on = false;
    const auto e = detect(f.scene.image, f.support, nullptr, cfg, &external);
    CHECK(e.peaks.empty());
    CHECK(e.proposals == external);
}

TEST_CASE("configuration errors") {
    const Fixture f = planted(48, 1);
    PipelineConfig cfg;
    CHECK_THROWS_AS(detect(f.scene.image, f.support, nullptr, cfg), InvalidArgument);
    cfg.ran.embedding_length = 128;
    const MlpHead small = MlpHead::initialized(64, 1);
    CHECK_THROWS_AS(detect(f.scene.image, f.support, &small, cfg), CompatibilityError);
    CHECK_THROWS_AS(detect(f.scene.image, SupportSet{0, {}}, nullptr, PipelineConfig{}), InvalidArgument);
}

}  // TEST_SUITE
