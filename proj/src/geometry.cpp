#include "fsdet/geometry.hpp"

#include "fsdet/error.hpp"
#include "simd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fsdet {

Image::Image(int width, int height, int channels, float fill)
    : width_(width), height_(height), channels_(channels) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw InvalidArgument("Image: bad dimensions " + std::to_string(width) + "x" +
                              std::to_string(height) + "x" + std::to_string(channels));
    }
    pixels_.assign(static_cast<std::size_t>(width) * height * channels, fill);
}

Image::Image(int width, int height, int channels, std::vector<float> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw InvalidArgument("Image: bad dimensions");
    }
    if (pixels_.size() != static_cast<std::size_t>(width) * height * channels) {
        throw InvalidArgument("Image: pixel count does not match dimensions");
    }
}

void Image::validate() const {
    for (float v : pixels_) {
        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
            throw InvalidArgument("Image: pixel value outside [0,1]");
        }
    }
}

Image to_gray(const Image& img) {
    if (img.channels() == 1) return img;
    Image out(img.width(), img.height(), 1);
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            out.at(x, y) = 0.299f * img.at(x, y, 0) + 0.587f * img.at(x, y, 1) +
                           0.114f * img.at(x, y, 2);
        }
    }
    return out;
}

bool Box::valid() const {
    return std::isfinite(cx) && std::isfinite(cy) && std::isfinite(w) && std::isfinite(h) &&
           w > 0.0 && h > 0.0;
}

Box Box::from_corners(double x0, double y0, double x1, double y1) {
    return Box{(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
}

bool clip_box(const Box& b, int width, int height, Box& out) {
    const double x0 = std::max(b.left(), 0.0);
    const double y0 = std::max(b.top(), 0.0);
    const double x1 = std::min(b.right(), static_cast<double>(width));
    const double y1 = std::min(b.bottom(), static_cast<double>(height));
    if (x1 <= x0 || y1 <= y0) return false;
    out = Box::from_corners(x0, y0, x1, y1);
    return true;
}

PixelRect member_pixels(const Box& b, int width, int height) {
    PixelRect r;
    r.x0 = std::max(0, static_cast<int>(std::floor(b.left() - 0.5)) + 1);
    r.y0 = std::max(0, static_cast<int>(std::floor(b.top() - 0.5)) + 1);
    r.x1 = std::min(width, static_cast<int>(std::ceil(b.right() - 0.5)));
    r.y1 = std::min(height, static_cast<int>(std::ceil(b.bottom() - 0.5)));
    if (r.empty()) r = PixelRect{};
    return r;
}

double iou(const Box& a, const Box& b) {
    const double iw = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    const double uni = a.area() + b.area() - inter;
    return uni > 0.0 ? std::clamp(inter / uni, 0.0, 1.0) : 0.0;
}

IntegralImage::IntegralImage(const DensityMap& map)
    : width_(map.width), height_(map.height),
      sums_(static_cast<std::size_t>(map.width + 1) * (map.height + 1), 0.0) {
    const std::size_t stride = width_ + 1;
    for (int y = 0; y < height_; ++y) {
        double row = 0.0;
        for (int x = 0; x < width_; ++x) {
            row += map.at(x, y);
            sums_[(y + 1) * stride + x + 1] = sums_[y * stride + x + 1] + row;
        }
    }
}

double IntegralImage::rect_sum(PixelRect r) const {
    r.x0 = std::clamp(r.x0, 0, width_);
    r.x1 = std::clamp(r.x1, 0, width_);
    r.y0 = std::clamp(r.y0, 0, height_);
    r.y1 = std::clamp(r.y1, 0, height_);
    if (r.empty()) return 0.0;
    return table(r.x1, r.y1) - table(r.x0, r.y1) - table(r.x1, r.y0) + table(r.x0, r.y0);
}

double IntegralImage::box_sum(const Box& b) const {
    return rect_sum(member_pixels(b, width_, height_));
}

std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });

    std::vector<std::size_t> kept;
    for (std::size_t idx : order) {
        const Detection& d = dets[idx];
        const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](std::size_t k) {
            return dets[k].category == d.category && iou(dets[k].box, d.box) > iou_threshold;
        });
        if (!suppressed) kept.push_back(idx);
    }
    return kept;
}

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold) {
    std::vector<Detection> out;
    for (std::size_t i : nms_indices(dets, iou_threshold)) out.push_back(dets[i]);
    return out;
}

namespace {

// Bilinear taps for one axis: output sample i reads src[i0]*(1-f) + src[i1]*f,
// or is zero when it falls outside [-0.5, n-0.5].
struct AxisTaps {
    std::vector<int> i0, i1;
    std::vector<double> f;
    std::vector<char> inside;
};

AxisTaps axis_taps(double start, double step, int count, int n) {
    AxisTaps t;
    t.i0.resize(count);
    t.i1.resize(count);
    t.f.resize(count);
    t.inside.resize(count);
    for (int i = 0; i < count; ++i) {
        double x = start + (i + 0.5) * step - 0.5;
        t.inside[i] = !(x < -0.5 || x > n - 0.5);
        x = std::clamp(x, 0.0, static_cast<double>(n - 1));
        const int x0 = std::min(static_cast<int>(x), n - 1);
        t.i0[i] = x0;
        t.i1[i] = std::min(x0 + 1, n - 1);
        t.f[i] = x - x0;
    }
    return t;
}

FSDET_HOT void lerp_rows(const float* __restrict a, const float* __restrict b, float t, int n,
                         float* __restrict out) {
    for (int i = 0; i < n; ++i) out[i] = a[i] + (b[i] - a[i]) * t;
}

}  // namespace

Image crop_resize(const Image& img, const Box& b, int out_w, int out_h) {
    if (!b.valid()) throw InvalidArgument("crop_resize: invalid box");
    Box clipped;
    if (!clip_box(b, img.width(), img.height(), clipped)) {
        throw InvalidArgument("crop_resize: box does not intersect the image (empty crop)");
    }
    const int ch = img.channels();
    const AxisTaps tx = axis_taps(b.left(), b.w / out_w, out_w, img.width());
    const AxisTaps ty = axis_taps(b.top(), b.h / out_h, out_h, img.height());
    Image out(out_w, out_h, ch);
    const float* src = img.pixels().data();
    float* dst = out.pixels().data();
    const std::size_t stride = static_cast<std::size_t>(img.width()) * ch;
    if (ch == 1) {
        // Vertical pass into a scratch row over the source columns in use,
        // then a horizontal pass per output pixel.
        const int c0 = *std::min_element(tx.i0.begin(), tx.i0.end());
        const int c1 = *std::max_element(tx.i1.begin(), tx.i1.end()) + 1;
        std::vector<float> fx(tx.f.begin(), tx.f.end());
        std::vector<int> i0(out_w), i1(out_w);
        for (int i = 0; i < out_w; ++i) {
            i0[i] = tx.i0[i] - c0;
            i1[i] = tx.i1[i] - c0;
            if (!tx.inside[i]) fx[i] = 0.0f;
        }
        std::vector<float> scratch(static_cast<std::size_t>(c1 - c0));
        for (int j = 0; j < out_h; ++j) {
            if (!ty.inside[j]) continue;
            lerp_rows(src + ty.i0[j] * stride + c0, src + ty.i1[j] * stride + c0, static_cast<float>(ty.f[j]),
                      c1 - c0, scratch.data());
            float* row = dst + static_cast<std::size_t>(j) * out_w;
            for (int i = 0; i < out_w; ++i) {
                const float v = scratch[i0[i]] + (scratch[i1[i]] - scratch[i0[i]]) * fx[i];
                row[i] = tx.inside[i] ? v : 0.0f;
            }
        }
        return out;
    }
    for (int j = 0; j < out_h; ++j) {
        float* row = dst + static_cast<std::size_t>(j) * out_w * ch;
        if (!ty.inside[j]) continue;
        const float* r0 = src + ty.i0[j] * stride;
        const float* r1 = src + ty.i1[j] * stride;
        const double fy = ty.f[j];
        for (int i = 0; i < out_w; ++i) {
            if (!tx.inside[i]) continue;
            const int a = tx.i0[i] * ch;
            const int c1 = tx.i1[i] * ch;
            const double fx = tx.f[i];
            for (int c = 0; c < ch; ++c) {
                const double top = r0[a + c] * (1.0 - fx) + r0[c1 + c] * fx;
                const double bot = r1[a + c] * (1.0 - fx) + r1[c1 + c] * fx;
                row[i * ch + c] = static_cast<float>(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    return out;
}

}  // namespace fsdet
