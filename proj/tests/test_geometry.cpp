#include "doctest.h"
#include "support.hpp"

#include "fsdet/error.hpp"
#include "fsdet/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace fsdet;

namespace {

// Counts lattice points of a fine grid inside both boxes.
double raster_iou(const Box& a, const Box& b, double step) {
    const double x0 = std::min(a.left(), b.left());
    const double x1 = std::max(a.right(), b.right());
    const double y0 = std::min(a.top(), b.top());
    const double y1 = std::max(a.bottom(), b.bottom());
    long long both = 0, either = 0;
    for (double y = y0 + step / 2; y < y1; y += step) {
        for (double x = x0 + step / 2; x < x1; x += step) {
            const bool in_a = x > a.left() && x < a.right() && y > a.top() && y < a.bottom();
            const bool in_b = x > b.left() && x < b.right() && y > b.top() && y < b.bottom();
            both += in_a && in_b;
            either += in_a || in_b;
        }
    }
    return either ? static_cast<double>(both) / either : 0.0;
}

// Exhaustive greedy suppression straight from the definition.
std::vector<Detection> reference_nms(std::vector<Detection> dets, double thr) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return dets[i].score > dets[j].score; });
    std::vector<bool> dead(dets.size(), false);
    std::vector<Detection> out;
    for (std::size_t a = 0; a < order.size(); ++a) {
        if (dead[order[a]]) continue;
        out.push_back(dets[order[a]]);
        for (std::size_t b = a + 1; b < order.size(); ++b) {
            const auto& p = dets[order[a]];
            const auto& q = dets[order[b]];
            if (p.category == q.category && iou(p.box, q.box) > thr) dead[order[b]] = true;
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("core_geometry") {

TEST_CASE("iou identity, disjoint and rasterized corner case") {
    const Box a{10, 10, 4, 6};
    CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(iou(a, Box{100, 100, 4, 6}) == 0.0);

    const Box p = Box::from_corners(0, 0, 2, 2);
    const Box q = Box::from_corners(1, 1, 3, 3);
    CHECK(std::abs(iou(p, q) - raster_iou(p, q, 0.001)) < 1e-3);
    CHECK(iou(p, q) == doctest::Approx(1.0 / 7.0));
}

TEST_CASE("iou agrees with rasterization on random boxes") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 30; ++i) {
        const Box a = testing::random_box(rng, 10, 1, 6);
        const Box b = testing::random_box(rng, 10, 1, 6);
        CHECK(std::abs(iou(a, b) - raster_iou(a, b, 0.01)) < 5e-3);
    }
}

TEST_CASE("iou properties over 1e5 random pairs") {
    std::mt19937_64 rng(12);
    int failures = 0;
    for (int i = 0; i < 100000; ++i) {
        const Box a = testing::random_box(rng);
        const Box b = testing::random_box(rng);
        const double ab = iou(a, b);
        if (!(ab >= 0.0 && ab <= 1.0) || ab != iou(b, a) || std::abs(iou(a, a) - 1.0) > 1e-12) ++failures;
    }
    CHECK(failures == 0);
}

TEST_CASE("nms examples") {
    const std::vector<Detection> one{{{5, 5, 2, 2}, 0, 0.3}};
    CHECK(nms(one, 0.5).size() == 1);

    const std::vector<Detection> twins{{{5, 5, 2, 2}, 0, 0.8}, {{5, 5, 2, 2}, 0, 0.9}};
    const auto kept = nms(twins, 0.5);
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].score == 0.9);

    // Other categories never suppress each other.
    const std::vector<Detection> mixed{{{5, 5, 2, 2}, 0, 0.8}, {{5, 5, 2, 2}, 1, 0.9}};
    CHECK(nms(mixed, 0.5).size() == 2);
}

TEST_CASE("nms matches exhaustive reference on random sets") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> score(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<Detection> dets;
        const int n = 1 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i)
            dets.push_back({testing::random_box(rng, 50, 5, 25), static_cast<int>(rng() % 3), score(rng)});
        const double thr = 0.2 + 0.6 * score(rng);
        const auto got = nms(dets, thr);
        const auto want = reference_nms(dets, thr);
        REQUIRE(got.size() == want.size());
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(got[i].box == want[i].box);
            CHECK(got[i].score == want[i].score);
        }
        for (std::size_t i = 1; i < got.size(); ++i) CHECK(got[i - 1].score >= got[i].score);
        for (std::size_t i = 0; i < got.size(); ++i)
            for (std::size_t j = i + 1; j < got.size(); ++j)
                if (got[i].category == got[j].category) CHECK(iou(got[i].box, got[j].box) <= thr);
    }
}

TEST_CASE("integral image sums") {
    const DensityMap zeros(20, 15);
    CHECK(IntegralImage(zeros).box_sum(Box{7, 7, 5, 5}) == 0.0);

    DensityMap ones(20, 15, 1.0f);
    // Pixel centers strictly inside [2,5] x [3,7]: columns 2..4, rows 3..6.
    CHECK(IntegralImage(ones).box_sum(Box::from_corners(2, 3, 5, 7)) == 12.0);

    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 300; ++trial) {
        const int w = 1 + static_cast<int>(rng() % 60);
        const int h = 1 + static_cast<int>(rng() % 60);
        const DensityMap m = testing::random_map(rng, w, h);
        const IntegralImage ii(m);
        const Box b = testing::random_box(rng, 60, 0.5, 50);
        double naive = 0.0;
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x)
                if (x + 0.5 > b.left() && x + 0.5 < b.right() && y + 0.5 > b.top() && y + 0.5 < b.bottom())
                    naive += m.at(x, y);
        CHECK(std::abs(ii.box_sum(b) - naive) <= 1e-9 * std::max(1.0, std::abs(naive)));
    }
}

TEST_CASE("integral image table is monotone for non-negative maps") {
    std::mt19937_64 rng(15);
    const DensityMap m = testing::random_map(rng, 30, 20);
    const IntegralImage ii(m);
    for (int y = 0; y < 20; ++y)
        for (int x = 0; x < 30; ++x) {
            CHECK(ii.rect_sum({0, 0, x + 1, y + 1}) >= ii.rect_sum({0, 0, x, y + 1}));
            CHECK(ii.rect_sum({0, 0, x + 1, y + 1}) >= ii.rect_sum({0, 0, x + 1, y}));
        }
}

TEST_CASE("crop_resize identity") {
    std::mt19937_64 rng(16);
    const Image img = testing::random_image(rng, 17, 9);
    const Image out = crop_resize(img, Box::from_corners(0, 0, 17, 9), 17, 9);
    REQUIRE(out.width() == 17);
    for (std::size_t i = 0; i < img.pixels().size(); ++i) CHECK(std::abs(out.pixels()[i] - img.pixels()[i]) < 1e-6);

    const Image rgb = testing::random_image(rng, 6, 5, 3);
    const Image rgb_out = crop_resize(rgb, Box::from_corners(0, 0, 6, 5), 6, 5);
    for (std::size_t i = 0; i < rgb.pixels().size(); ++i) CHECK(std::abs(rgb_out.pixels()[i] - rgb.pixels()[i]) < 1e-6);
}

TEST_CASE("crop_resize checkerboard upsampling matches hand bilinear") {
    // Output sample i sits at source coordinate (i + 0.5) / 2 - 0.5, clamped to
    // [0, 1]: 0, 0.25, 0.75, 1. With f the fraction toward pixel 1 on each
    // axis the value is (1 - fx)(1 - fy) + fx fy.
    const Image board(2, 2, 1, {1.0f, 0.0f, 0.0f, 1.0f});
    const Image up = crop_resize(board, Box{1, 1, 2, 2}, 4, 4);
    const float expected[4][4] = {{1.0f, 0.75f, 0.25f, 0.0f},
                                  {0.75f, 0.625f, 0.375f, 0.25f},
                                  {0.25f, 0.375f, 0.625f, 0.75f},
                                  {0.0f, 0.25f, 0.75f, 1.0f}};
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) CHECK(up.at(x, y) == doctest::Approx(expected[y][x]).epsilon(1e-7));
}

TEST_CASE("crop_resize fills outside samples with zero") {
    const Image img(10, 10, 1, 0.7f);
    const Image out = crop_resize(img, Box{10, 5, 10, 10}, 10, 10);
    for (int y = 0; y < 10; ++y) {
        for (int x = 0; x < 5; ++x) CHECK(out.at(x, y) == doctest::Approx(0.7f));
        for (int x = 5; x < 10; ++x) CHECK(out.at(x, y) == 0.0f);
    }
    CHECK_THROWS_AS(crop_resize(img, Box{50, 50, 4, 4}, 4, 4), InvalidArgument);
}

TEST_CASE("crop_resize of a constant image is constant") {
    std::mt19937_64 rng(17);
    const Image img(45, 40, 1, 0.3f);
    for (int i = 0; i < 50; ++i) {
        Box b = testing::random_box(rng, 25, 2, 12);
        b.cx += 6;  // keep the box inside the image
        b.cy += 6;
        const Image out = crop_resize(img, b, 7 + i % 5, 5 + i % 7);
        for (float v : out.pixels()) CHECK(v == doctest::Approx(0.3f));
    }
}

TEST_CASE("image validation and gray conversion") {
    CHECK_THROWS_AS(Image(2, 2, 1, std::vector<float>(3, 0.f)), InvalidArgument);
    Image bad(2, 2, 1, 0.5f);
    bad.at(1, 1) = 1.5f;
    CHECK_THROWS_AS(bad.validate(), InvalidArgument);

    Image rgb(1, 1, 3);
    rgb.at(0, 0, 0) = 1.0f;
    rgb.at(0, 0, 1) = 0.5f;
    rgb.at(0, 0, 2) = 0.25f;
    CHECK(to_gray(rgb).at(0, 0) == doctest::Approx(0.299 + 0.587 * 0.5 + 0.114 * 0.25));
}

TEST_CASE("member pixels and clipping") {
    const PixelRect r = member_pixels(Box::from_corners(0.5, 0.5, 2.5, 3.0), 10, 10);
    // Centers 0.5 and 2.5 lie on the border, so only column 1; rows 1 and 2.
    CHECK(r.x0 == 1);
    CHECK(r.x1 == 2);
    CHECK(r.y0 == 1);
    CHECK(r.y1 == 3);

    Box clipped;
    CHECK(clip_box(Box{0, 0, 10, 10}, 20, 20, clipped));
    CHECK(clipped == Box::from_corners(0, 0, 5, 5));
    CHECK_FALSE(clip_box(Box{-10, -10, 4, 4}, 20, 20, clipped));
}

}  // TEST_SUITE
