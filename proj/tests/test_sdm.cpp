#include "doctest.h"
#include "support.hpp"

#include "fsdet/error.hpp"
#include "fsdet/sdm.hpp"
#include "fsdet/synth.hpp"

#include <algorithm>
#include <cmath>

using namespace fsdet;

namespace {

// ZNCC of one window, written out from the definition.
double window_zncc(const Image& q, const Image& t, int u, int v) {
    const int n = t.width() * t.height();
    double mq = 0, mt = 0;
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) {
            mq += q.at(u + x, v + y);
            mt += t.at(x, y);
        }
    mq /= n;
    mt /= n;
    double num = 0, vq = 0, vt = 0;
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x) {
            const double a = q.at(u + x, v + y) - mq;
            const double b = t.at(x, y) - mt;
            num += a * b;
            vq += a * a;
            vt += b * b;
        }
    if (vq <= 1e-12 || vt <= 1e-12) return 0.0;
    return num / std::sqrt(vq * vt);
}

std::pair<int, int> argmax(const DensityMap& m) {
    const auto it = std::max_element(m.values.begin(), m.values.end());
    const auto i = static_cast<int>(it - m.values.begin());
    return {i % m.width, i / m.width};
}

SdmConfig single_scale() {
    SdmConfig cfg;
    cfg.scales = {1.0};
    return cfg;
}

}  // namespace

TEST_SUITE("sdm") {

TEST_CASE("naive zncc equals the window definition") {
    std::mt19937_64 rng(21);
    const Image q = testing::random_image(rng, 20, 16);
    const Image t = testing::random_image(rng, 5, 4);
    const CorrelationMap c = zncc_naive(q, t);
    REQUIRE(c.width == 16);
    REQUIRE(c.height == 13);
    for (int v = 0; v < c.height; ++v)
        for (int u = 0; u < c.width; ++u) CHECK(std::abs(c.at(u, v) - window_zncc(q, t, u, v)) < 1e-9);
}

TEST_CASE("fft and naive zncc agree") {
    std::mt19937_64 rng(22);
    for (int trial = 0; trial < 12; ++trial) {
        const int qw = 16 + static_cast<int>(rng() % 80);
        const int qh = 16 + static_cast<int>(rng() % 80);
        const int tw = 1 + static_cast<int>(rng() % 16);
        const int th = 1 + static_cast<int>(rng() % 16);
        Image q = testing::random_image(rng, qw, qh);
        // Flat regions exercise the zero-variance path.
        for (int y = 0; y < qh / 3; ++y)
            for (int x = 0; x < qw / 3; ++x) q.at(x, y) = 0.5f;
        const Image t = testing::random_image(rng, tw, th);
        const auto a = zncc_fft(q, t);
        const auto b = zncc_naive(q, t);
        REQUIRE(a.values.size() == b.values.size());
        double err = 0;
        for (std::size_t i = 0; i < a.values.size(); ++i) err = std::max(err, std::abs(a.values[i] - b.values[i]));
        CHECK(err < 1e-5);
    }
}

TEST_CASE("exact copy peaks at 1 on the planted center") {
    std::mt19937_64 rng(23);
    Image q(64, 48, 1, 0.2f);
    const Image patch = testing::random_image(rng, 10, 8);
    testing::paste(q, patch, 30, 20);
    const auto ex = Exemplar::from_image(q, Box::from_corners(30, 20, 40, 28), 0);
    const DensityMap sim = similarity_map(q, std::span(&ex, 1), single_scale());
    const auto [x, y] = argmax(sim);
    CHECK(sim.at(x, y) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(std::abs(x - 35) <= 1);
    CHECK(std::abs(y - 24) <= 1);
}

TEST_CASE("constant query gives an all-zero map") {
    std::mt19937_64 rng(24);
    const Image q(40, 40, 1, 0.6f);
    Exemplar ex{testing::random_image(rng, 8, 8), Box{4, 4, 8, 8}, 0};
    const SdmConfig cfg;
    const auto sim = similarity_map(q, std::span(&ex, 1), cfg);
    CHECK(std::all_of(sim.values.begin(), sim.values.end(), [](float v) { return v == 0.0f; }));
    const auto sdm = compute_sdm(q, std::span(&ex, 1), cfg);
    CHECK(std::all_of(sdm.values.begin(), sdm.values.end(), [](float v) { return v == 0.0f; }));
}

TEST_CASE("two planted copies match the window oracle at their centers") {
    std::mt19937_64 rng(25);
    Image q = testing::random_image(rng, 80, 60);
    for (float& v : q.pixels()) v *= 0.3f;
    const Image patch = testing::random_image(rng, 9, 7);
    testing::paste(q, patch, 10, 12);
    testing::paste(q, patch, 55, 40);
    const Exemplar ex{patch, Box{0, 0, 9, 7}, 0};
    const auto sim = similarity_map(q, std::span(&ex, 1), single_scale());
    // Windows with top-left (u, v) are written at (u + w/2, v + h/2).
    for (auto [u, v] : {std::pair{10, 12}, std::pair{55, 40}, std::pair{30, 30}}) {
        const double want = (window_zncc(q, patch, u, v) + 1.0) / 2.0;
        CHECK(std::abs(sim.at(u + 4, v + 3) - want) < 1e-5);
    }
}

TEST_CASE("normalized map lies in [0,1) with the maximum at 1 - 2^-23") {
    std::mt19937_64 rng(26);
    const Image q = testing::random_image(rng, 50, 40);
    const Exemplar ex{testing::random_image(rng, 6, 6), Box{3, 3, 6, 6}, 0};
    const auto sdm = compute_sdm(q, std::span(&ex, 1), SdmConfig{});
    const float mx = *std::max_element(sdm.values.begin(), sdm.values.end());
    CHECK(mx == static_cast<float>(1.0 - kDensityEpsilon));
    CHECK(std::all_of(sdm.values.begin(), sdm.values.end(), [](float v) { return v >= 0.0f && v < 1.0f; }));
    CHECK(sdm.width == 50);
    CHECK(sdm.height == 40);
}

TEST_CASE("sdm argmax is translation covariant") {
    std::mt19937_64 rng(27);
    const Image patch = testing::random_image(rng, 12, 12);
    const Exemplar ex{patch, Box{6, 6, 12, 12}, 0};
    std::pair<int, int> base{};
    for (int shift = 0; shift < 6; ++shift) {
        const int dx = 3 * shift, dy = 2 * shift;
        Image q(96, 96, 1, 0.5f);
        testing::paste(q, patch, 20 + dx, 30 + dy);
        const auto [x, y] = argmax(compute_sdm(q, std::span(&ex, 1), SdmConfig{}));
        if (shift == 0) base = {x, y};
        CHECK(std::abs(x - (base.first + dx)) <= 1);
        CHECK(std::abs(y - (base.second + dy)) <= 1);
    }
}

TEST_CASE("mean fusion over exemplars") {
    std::mt19937_64 rng(28);
    const Image q = testing::random_image(rng, 40, 30);
    const std::vector<Exemplar> ex{{testing::random_image(rng, 6, 6), Box{3, 3, 6, 6}, 0},
                                   {testing::random_image(rng, 6, 6), Box{3, 3, 6, 6}, 0}};
    const auto cfg = single_scale();
    const auto a = similarity_map(q, std::span(&ex[0], 1), cfg);
    const auto b = similarity_map(q, std::span(&ex[1], 1), cfg);
    const auto both = similarity_map(q, ex, cfg);
    for (std::size_t i = 0; i < both.values.size(); ++i)
        CHECK(both.values[i] == doctest::Approx((a.values[i] + b.values[i]) / 2.0).epsilon(1e-6));
}

TEST_CASE("peaks: planted copy, empty map, two gaussians") {
    SynthConfig sc;
    sc.instances_per_scene = 1;
    sc.seed = 5;
    const Scene s = gen_scene(sc, 0);
    const auto& o = s.objects.at(0);
    const auto ex = Exemplar::from_image(s.image, o.box, o.category);
    SdmConfig cfg;
    cfg.peak_rel_threshold = 0.9;
    const auto peaks = extract_peaks(compute_sdm(s.image, std::span(&ex, 1), cfg), cfg);
    REQUIRE(peaks.size() == 1);
    CHECK(std::hypot(peaks[0].x + 0.5 - o.box.cx, peaks[0].y + 0.5 - o.box.cy) <= 3.0);

    CHECK(extract_peaks(DensityMap(30, 30), SdmConfig{}).empty());

    DensityMap two(60, 40);
    for (int y = 0; y < 40; ++y)
        for (int x = 0; x < 60; ++x) {
            const auto g = [&](double cx, double cy) { return std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) / 18.0); };
            two.at(x, y) = static_cast<float>(0.9 * (g(15, 20) + g(45, 20)));
        }
    const auto p2 = extract_peaks(two, SdmConfig{});
    REQUIRE(p2.size() == 2);
    CHECK(p2[0].score == doctest::Approx(p2[1].score));
}

TEST_CASE("peak positions are invariant to affine rescaling") {
    std::mt19937_64 rng(29);
    const Image q = testing::random_image(rng, 48, 48);
    const Exemplar ex{testing::random_image(rng, 7, 7), Box{3.5, 3.5, 7, 7}, 0};
    const SdmConfig cfg;
    const auto m = compute_sdm(q, std::span(&ex, 1), cfg);
    DensityMap scaled = m;
    for (float& v : scaled.values) v = 0.5f * v + 0.25f;
    const auto a = extract_peaks(m, cfg);
    const auto b = extract_peaks(scaled, cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
    }
}

TEST_CASE("sdm config validation") {
    SdmConfig cfg;
    cfg.scales = {1.0, -1.0};
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = {};
    cfg.peak_rel_threshold = 1.0;
    CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}

}  // TEST_SUITE
