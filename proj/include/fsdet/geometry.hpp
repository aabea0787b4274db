/**
 * @file geometry.hpp
 * @brief Images, boxes, IoU, NMS, integral images and crop-resize.
 */
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fsdet {

/// Float image in [0,1], row-major, interleaved channels (1 or 3).
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels = 1, float fill = 0.0f);
    Image(int width, int height, int channels, std::vector<float> pixels);

    int width() const { return width_; }
    int height() const { return height_; }
    int channels() const { return channels_; }
    bool empty() const { return pixels_.empty(); }

    float at(int x, int y, int c = 0) const {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    float& at(int x, int y, int c = 0) {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    std::span<const float> pixels() const { return pixels_; }
    std::span<float> pixels() { return pixels_; }

    /// Throws InvalidArgument if any pixel is non-finite or outside [0,1].
    void validate() const;

    bool operator==(const Image&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    int channels_ = 1;
    std::vector<float> pixels_;
};

/// Luma conversion (0.299, 0.587, 0.114). Single-channel input is copied.
Image to_gray(const Image& img);

/// Axis-aligned box, center + size in pixels.
struct Box {
    double cx = 0.0;
    double cy = 0.0;
    double w = 1.0;
    double h = 1.0;

    double left() const { return cx - w / 2.0; }
    double right() const { return cx + w / 2.0; }
    double top() const { return cy - h / 2.0; }
    double bottom() const { return cy + h / 2.0; }
    double area() const { return w * h; }
    bool valid() const;

    static Box from_corners(double x0, double y0, double x1, double y1);

    bool operator==(const Box&) const = default;
};

/// Clips a box to [0,width] x [0,height]. Returns false when nothing is left.
bool clip_box(const Box& b, int width, int height, Box& out);

/// Half-open pixel index rectangle [x0,x1) x [y0,y1).
struct PixelRect {
    int x0 = 0;
    int y0 = 0;
    int x1 = 0;
    int y1 = 0;

    bool empty() const { return x1 <= x0 || y1 <= y0; }
    long long count() const {
        return empty() ? 0 : static_cast<long long>(x1 - x0) * (y1 - y0);
    }
};

/// Pixels of a width x height grid whose centers lie strictly inside b.
PixelRect member_pixels(const Box& b, int width, int height);

double iou(const Box& a, const Box& b);

/// Per-pixel similarity map; values in [0,1) once normalized.
struct DensityMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;

    DensityMap() = default;
    DensityMap(int w, int h, float fill = 0.0f)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
    float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

/// Summed-area table over a DensityMap, (width+1) x (height+1) doubles.
class IntegralImage {
public:
    explicit IntegralImage(const DensityMap& map);

    int width() const { return width_; }
    int height() const { return height_; }

    /// Sum over a half-open pixel rectangle (clipped to the grid).
    double rect_sum(PixelRect r) const;
    /// Sum over pixels whose centers lie strictly inside the clipped box.
    double box_sum(const Box& b) const;

private:
    double table(int x, int y) const { return sums_[static_cast<std::size_t>(y) * (width_ + 1) + x]; }

    int width_ = 0;
    int height_ = 0;
    std::vector<double> sums_;
};

struct Detection {
    Box box;
    int category = 0;
    double score = 0.0;
};

/// Greedy per-category suppression in descending score order. Ties keep
/// input order. Returns surviving input indices in output order.
std::vector<std::size_t> nms_indices(std::span<const Detection> dets, double iou_threshold);

std::vector<Detection> nms(std::span<const Detection> dets, double iou_threshold);

/**
 * Bilinear resample of the box footprint to out_w x out_h.
 *
 * Output pixel centers map onto the box footprint; samples falling outside
 * the source image extent are 0, samples inside use clamp-to-edge bilinear
 * interpolation. Throws InvalidArgument when the box does not intersect the
 * image.
 */
Image crop_resize(const Image& img, const Box& b, int out_w, int out_h);

}  // namespace fsdet
