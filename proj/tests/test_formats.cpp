#include "doctest.h"
#include "support.hpp"

#include "fsdet/error.hpp"
#include "fsdet/formats.hpp"
#include "fsdet/image_io.hpp"
#include "fsdet/synth.hpp"

#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

using namespace fsdet;

TEST_SUITE("formats") {

TEST_CASE("png and pnm round trips quantize to 8 bits") {
    const auto dir = testing::scratch_dir("images");
    std::mt19937_64 rng(81);
    Image gray = testing::random_image(rng, 13, 7);
    for (float& v : gray.pixels()) v = std::round(v * 255.0f) / 255.0f;
    for (const char* name : {"g.png", "g.pgm"}) {
        write_image(dir / name, gray);
        const Image back = read_image(dir / name);
        REQUIRE(back.width() == 13);
        for (std::size_t i = 0; i < gray.pixels().size(); ++i) CHECK(back.pixels()[i] == doctest::Approx(gray.pixels()[i]).epsilon(1e-6));
    }
    Image rgb = testing::random_image(rng, 5, 4, 3);
    for (float& v : rgb.pixels()) v = std::round(v * 255.0f) / 255.0f;
    for (const char* name : {"c.png", "c.ppm"}) {
        write_image(dir / name, rgb);
        const Image back = read_image(dir / name);
        CHECK(back.channels() == 3);
        for (std::size_t i = 0; i < rgb.pixels().size(); ++i) CHECK(back.pixels()[i] == doctest::Approx(rgb.pixels()[i]).epsilon(1e-6));
    }
    CHECK_THROWS_AS(read_image(dir / "missing.png"), IoError);
    std::ofstream(dir / "junk.png") << "not a png";
    CHECK_THROWS_AS(read_image(dir / "junk.png"), IoError);
}

TEST_CASE("density map dump layout") {
    const auto dir = testing::scratch_dir("sdm");
    DensityMap m(3, 2);
    for (std::size_t i = 0; i < 6; ++i) m.values[i] = 0.1f * static_cast<float>(i);
    write_density_map(dir / "m.sdm", m);
    std::ifstream in(dir / "m.sdm", std::ios::binary);
    const std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    REQUIRE(bytes.size() == 16 + 6 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "SDM1");
    std::uint32_t w = 0, h = 0;
    std::memcpy(&w, bytes.data() + 4, 4);
    std::memcpy(&h, bytes.data() + 8, 4);
    CHECK(w == 3);
    CHECK(h == 2);
    float v5 = 0;
    std::memcpy(&v5, bytes.data() + 16 + 5 * 4, 4);
    CHECK(v5 == m.values[5]);
    const DensityMap back = read_density_map(dir / "m.sdm");
    CHECK(back.values == m.values);

    const Image preview = density_to_image(m);
    CHECK(preview.width() == 3);
    CHECK(preview.at(2, 1) == doctest::Approx(0.5f).epsilon(0.01));
}

TEST_CASE("detections and annotations json lines") {
    const auto dir = testing::scratch_dir("jsonl");
    const std::vector<Detection> dets{{{1.5, 2.25, 3, 4}, 7, 0.125}, {{10, 20, 5, 6}, 7, 0.875}};
    {
        std::ofstream out(dir / "d.jsonl");
        write_detections_jsonl(out, "a.png", dets);
    }
    const auto back = read_detections_jsonl(dir / "d.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[1].image == "a.png");
    CHECK(back[1].detection.box == dets[1].box);
    CHECK(back[1].detection.score == 0.875);
    CHECK(back[0].detection.category == 7);

    const Json j = detection_to_json("a.png", dets[0]);
    CHECK(j.at("box") == Json::array({1.5, 2.25, 3.0, 4.0}));

    {
        std::ofstream out(dir / "gt.jsonl");
        out << annotation_to_json({"a.png", {{{2, 2, 3, 4}, 7}}}).dump() << "\n";
        out << annotation_to_json({"b.png", {}}).dump() << "\n";
    }
    const auto gts = read_annotations_jsonl(dir / "gt.jsonl");
    REQUIRE(gts.size() == 2);
    const auto [by_image, truth] = join_by_image(back, gts);
    REQUIRE(by_image.size() == 2);
    CHECK(by_image[0].size() == 2);
    CHECK(by_image[1].empty());
    CHECK(truth[0].size() == 1);

    const std::vector<DetectionRecord> stray{{"c.png", dets[0]}};
    CHECK_THROWS_AS(join_by_image(stray, gts), IoError);

    std::ofstream(dir / "bad.jsonl") << "{\"image\": \"a.png\", \"box\": [1, 2]}\n";
    CHECK_THROWS_AS(read_detections_jsonl(dir / "bad.jsonl"), IoError);
}

TEST_CASE("pair dataset round trip") {
    const auto dir = testing::scratch_dir("pairs");
    SynthConfig sc;
    std::vector<Scene> scenes{gen_scene(sc, 1), gen_scene(sc, 2)};
    const auto pairs = gen_ran_pairs(scenes, JitterConfig{}, RanConfig{}, 12);
    write_pairs(dir / "p.jsonl", pairs);
    const auto back = read_pairs(dir / "p.jsonl");
    REQUIRE(back.size() == pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        CHECK(back[i].gt_geom == pairs[i].gt_geom);
        CHECK(back[i].cand_geom == pairs[i].cand_geom);
        CHECK(back[i].target == pairs[i].target);
        CHECK(back[i].cand_category == pairs[i].cand_category);
        CHECK(back[i].gt_patch.width() == pairs[i].gt_patch.width());
    }
}

TEST_CASE("config and report json") {
    RanConfig cfg;
    cfg.embedding_length = 64;
    cfg.patch_width = 128;
    const RanConfig back = ran_config_from_json(ran_config_to_json(cfg));
    CHECK(back.embedding_length == 64);
    CHECK(back.patch_width == 128);
    CHECK(sidecar_path("x/h.ran") == std::filesystem::path("x/h.ran.json"));

    const std::vector<std::pair<double, double>> pairs{{0.1, 0.3}, {0.5, 0.6}};
    const BucketReport r = bucket_analysis(pairs);
    std::ostringstream csv;
    write_bucket_csv(csv, r);
    std::istringstream lines(csv.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) ++n;
    CHECK(n == 6);
    CHECK(bucket_report_to_json(r).size() == 5);
    CHECK(timings_to_json(StageTimings{}).contains("sdm"));
}

}  // TEST_SUITE
