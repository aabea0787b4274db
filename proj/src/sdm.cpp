#include "fsdet/sdm.hpp"

#include "fsdet/error.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <mutex>
#include <numeric>

namespace fsdet {
namespace {

// Windows whose summed squared deviation falls below this (per pixel) are
// treated as constant.
constexpr double kVarianceFloor = 1e-10;

std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(void* p) const { fftw_free(p); }
};
template <typename T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <typename T>
FftwBuffer<T> fftw_alloc(std::size_t n) {
    auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
    if (!p) throw std::bad_alloc();
    return FftwBuffer<T>(p);
}

class Plan {
public:
    explicit Plan(fftw_plan p) : plan_(p) {}
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }
    void execute() const { fftw_execute(plan_); }

private:
    fftw_plan plan_;
};

// Prefix sums of values and squared values, (w+1) x (h+1).
struct WindowStats {
    int width;
    int height;
    std::vector<double> sum;
    std::vector<double> sum_sq;

    explicit WindowStats(const Image& img)
        : width(img.width()), height(img.height()),
          sum(static_cast<std::size_t>(width + 1) * (height + 1), 0.0),
          sum_sq(sum.size(), 0.0) {
        const std::size_t stride = width + 1;
        for (int y = 0; y < height; ++y) {
            double r = 0.0;
            double r2 = 0.0;
            for (int x = 0; x < width; ++x) {
                const double v = img.at(x, y);
                r += v;
                r2 += v * v;
                sum[(y + 1) * stride + x + 1] = sum[y * stride + x + 1] + r;
                sum_sq[(y + 1) * stride + x + 1] = sum_sq[y * stride + x + 1] + r2;
            }
        }
    }

    static double rect(const std::vector<double>& t, std::size_t stride, int x, int y, int w,
                       int h) {
        return t[(y + h) * stride + x + w] - t[y * stride + x + w] - t[(y + h) * stride + x] +
               t[y * stride + x];
    }

    // Sum of squared deviations from the window mean.
    double deviation(int x, int y, int w, int h) const {
        const std::size_t stride = width + 1;
        const double s = rect(sum, stride, x, y, w, h);
        const double s2 = rect(sum_sq, stride, x, y, w, h);
        return std::max(0.0, s2 - s * s / (static_cast<double>(w) * h));
    }
};

// Zero-mean template and its summed squared deviation.
std::pair<std::vector<double>, double> centered_template(const Image& templ) {
    const auto px = templ.pixels();
    const double n = static_cast<double>(px.size());
    const double mean = std::accumulate(px.begin(), px.end(), 0.0) / n;
    std::vector<double> centered(px.size());
    double dev = 0.0;
    for (std::size_t i = 0; i < px.size(); ++i) {
        centered[i] = px[i] - mean;
        dev += centered[i] * centered[i];
    }
    if (dev < kVarianceFloor * n) {
        throw InvalidArgument("exemplar has zero variance; correlation is undefined");
    }
    return {std::move(centered), dev};
}

void check_shapes(const Image& query, const Image& templ) {
    if (query.channels() != 1 || templ.channels() != 1) {
        throw InvalidArgument("zncc: inputs must be grayscale");
    }
    if (templ.width() > query.width() || templ.height() > query.height()) {
        throw InvalidArgument("zncc: exemplar larger than query");
    }
}

double finish_zncc(double numerator, double window_dev, double templ_dev, double n) {
    if (window_dev < kVarianceFloor * n) return 0.0;
    return std::clamp(numerator / std::sqrt(window_dev * templ_dev), -1.0, 1.0);
}

// FFT correlation engine for one query; reusable across templates.
class FftCorrelator {
public:
    explicit FftCorrelator(const Image& query)
        : width_(query.width()), height_(query.height()), stats_(query),
          spectrum_size_(static_cast<std::size_t>(height_) * (width_ / 2 + 1)),
          real_(fftw_alloc<double>(static_cast<std::size_t>(width_) * height_)),
          query_spec_(fftw_alloc<fftw_complex>(spectrum_size_)),
          work_spec_(fftw_alloc<fftw_complex>(spectrum_size_)) {
        {
            std::lock_guard lock(planner_mutex());
            forward_ = std::make_unique<Plan>(
                fftw_plan_dft_r2c_2d(height_, width_, real_.get(), work_spec_.get(), FFTW_ESTIMATE));
            inverse_ = std::make_unique<Plan>(
                fftw_plan_dft_c2r_2d(height_, width_, work_spec_.get(), real_.get(), FFTW_ESTIMATE));
        }
        const auto px = query.pixels();
        std::copy(px.begin(), px.end(), real_.get());
        forward_->execute();
        std::memcpy(query_spec_.get(), work_spec_.get(), sizeof(fftw_complex) * spectrum_size_);
    }

    CorrelationMap zncc(const Image& templ) {
        if (templ.channels() != 1 || templ.width() > width_ || templ.height() > height_) {
            throw InvalidArgument("zncc: exemplar must be grayscale and fit inside the query");
        }
        auto [centered, templ_dev] = centered_template(templ);
        const int tw = templ.width();
        const int th = templ.height();

        std::fill_n(real_.get(), static_cast<std::size_t>(width_) * height_, 0.0);
        for (int y = 0; y < th; ++y) {
            std::copy_n(centered.begin() + static_cast<std::ptrdiff_t>(y) * tw, tw,
                        real_.get() + static_cast<std::size_t>(y) * width_);
        }
        forward_->execute();
        // Cross-correlation: Q * conj(T).
        for (std::size_t i = 0; i < spectrum_size_; ++i) {
            const double qr = query_spec_[i][0];
            const double qi = query_spec_[i][1];
            const double tr = work_spec_[i][0];
            const double ti = work_spec_[i][1];
            work_spec_[i][0] = qr * tr + qi * ti;
            work_spec_[i][1] = qi * tr - qr * ti;
        }
        inverse_->execute();

        const double scale = 1.0 / (static_cast<double>(width_) * height_);
        const double n = static_cast<double>(tw) * th;
        CorrelationMap out;
        out.width = width_ - tw + 1;
        out.height = height_ - th + 1;
        out.values.resize(static_cast<std::size_t>(out.width) * out.height);
        for (int v = 0; v < out.height; ++v) {
            for (int u = 0; u < out.width; ++u) {
                const double num = real_[static_cast<std::size_t>(v) * width_ + u] * scale;
                out.values[static_cast<std::size_t>(v) * out.width + u] =
                    finish_zncc(num, stats_.deviation(u, v, tw, th), templ_dev, n);
            }
        }
        return out;
    }

private:
    int width_;
    int height_;
    WindowStats stats_;
    std::size_t spectrum_size_;
    FftwBuffer<double> real_;
    FftwBuffer<fftw_complex> query_spec_;
    FftwBuffer<fftw_complex> work_spec_;
    std::unique_ptr<Plan> forward_;
    std::unique_ptr<Plan> inverse_;
};

Image scaled_exemplar(const Image& gray_patch, double scale) {
    const int w = std::max(1, static_cast<int>(std::lround(gray_patch.width() * scale)));
    const int h = std::max(1, static_cast<int>(std::lround(gray_patch.height() * scale)));
    if (w == gray_patch.width() && h == gray_patch.height()) return gray_patch;
    const Box whole{gray_patch.width() / 2.0, gray_patch.height() / 2.0,
                    static_cast<double>(gray_patch.width()),
                    static_cast<double>(gray_patch.height())};
    return crop_resize(gray_patch, whole, w, h);
}

}  // namespace

Exemplar Exemplar::from_image(const Image& image, const Box& box, int category) {
    const int w = std::max(1, static_cast<int>(std::lround(box.w)));
    const int h = std::max(1, static_cast<int>(std::lround(box.h)));
    return Exemplar{crop_resize(image, box, w, h), box, category};
}

void SdmConfig::validate() const {
    if (scales.empty()) throw InvalidArgument("SdmConfig: no scales");
    for (double s : scales) {
        if (!(s > 0.0)) throw InvalidArgument("SdmConfig: scales must be positive");
    }
    if (!(peak_rel_threshold > 0.0 && peak_rel_threshold < 1.0)) {
        throw InvalidArgument("SdmConfig: peak_rel_threshold must lie in (0,1)");
    }
    if (smoothing_sigma < 0.0) throw InvalidArgument("SdmConfig: negative smoothing sigma");
}

CorrelationMap zncc_naive(const Image& query, const Image& templ) {
    check_shapes(query, templ);
    auto [centered, templ_dev] = centered_template(templ);
    const int tw = templ.width();
    const int th = templ.height();
    const double n = static_cast<double>(tw) * th;

    CorrelationMap out;
    out.width = query.width() - tw + 1;
    out.height = query.height() - th + 1;
    out.values.resize(static_cast<std::size_t>(out.width) * out.height);
    for (int v = 0; v < out.height; ++v) {
        for (int u = 0; u < out.width; ++u) {
            double s = 0.0;
            for (int y = 0; y < th; ++y) {
                for (int x = 0; x < tw; ++x) s += query.at(u + x, v + y);
            }
            const double mean = s / n;
            double num = 0.0;
            double dev = 0.0;
            for (int y = 0; y < th; ++y) {
                for (int x = 0; x < tw; ++x) {
                    const double d = query.at(u + x, v + y) - mean;
                    num += d * centered[static_cast<std::size_t>(y) * tw + x];
                    dev += d * d;
                }
            }
            out.values[static_cast<std::size_t>(v) * out.width + u] =
                finish_zncc(num, dev, templ_dev, n);
        }
    }
    return out;
}

CorrelationMap zncc_fft(const Image& query, const Image& templ) {
    check_shapes(query, templ);
    FftCorrelator corr(query);
    return corr.zncc(templ);
}

DensityMap similarity_map(const Image& query, std::span<const Exemplar> exemplars,
                          const SdmConfig& cfg) {
    cfg.validate();
    if (exemplars.empty()) throw InvalidArgument("similarity_map: no exemplars");
    const Image gray_query = to_gray(query);
    const int qw = gray_query.width();
    const int qh = gray_query.height();

    std::unique_ptr<FftCorrelator> fft;
    if (cfg.use_fft) fft = std::make_unique<FftCorrelator>(gray_query);

    std::vector<double> fused(static_cast<std::size_t>(qw) * qh, 0.0);
    std::vector<double> per_exemplar(fused.size());
    for (const Exemplar& ex : exemplars) {
        const Image gray_patch = to_gray(ex.patch);
        std::fill(per_exemplar.begin(), per_exemplar.end(), 0.0);
        for (double scale : cfg.scales) {
            const Image templ = scaled_exemplar(gray_patch, scale);
            if (templ.width() >= qw || templ.height() >= qh) {
                throw InvalidArgument("similarity_map: exemplar not smaller than query at scale " +
                                      std::to_string(scale));
            }
            const CorrelationMap corr = fft ? fft->zncc(templ) : zncc_naive(gray_query, templ);
            const int ox = templ.width() / 2;
            const int oy = templ.height() / 2;
            for (int v = 0; v < corr.height; ++v) {
                for (int u = 0; u < corr.width; ++u) {
                    const double z = corr.at(u, v);
                    // Zero-variance windows report exactly 0 and carry no similarity.
                    const double s = z == 0.0 ? 0.0 : (z + 1.0) / 2.0;
                    double& dst = per_exemplar[static_cast<std::size_t>(v + oy) * qw + u + ox];
                    dst = std::max(dst, s);
                }
            }
        }
        for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += per_exemplar[i];
    }

    DensityMap out(qw, qh);
    const double inv = 1.0 / static_cast<double>(exemplars.size());
    for (std::size_t i = 0; i < fused.size(); ++i) {
        out.values[i] = static_cast<float>(fused[i] * inv);
    }
    return out;
}

DensityMap normalize_half_open(DensityMap map) {
    const float mx = map.values.empty() ? 0.0f : *std::max_element(map.values.begin(), map.values.end());
    if (!(mx > 0.0f)) return map;
    const double k = (1.0 - kDensityEpsilon) / mx;
    for (float& v : map.values) {
        v = static_cast<float>(std::max(0.0, v * k));
    }
    return map;
}

DensityMap compute_sdm(const Image& query, std::span<const Exemplar> exemplars,
                       const SdmConfig& cfg) {
    DensityMap map = normalize_half_open(similarity_map(query, exemplars, cfg));
    for (float v : map.values) {
        if (!(v >= 0.0f && v < 1.0f)) throw NumericError("compute_sdm: value escaped [0,1)");
    }
    return map;
}

DensityMap gaussian_smooth(const DensityMap& map, double sigma) {
    if (sigma <= 0.0) return map;
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    for (int i = -radius; i <= radius; ++i) kernel[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
    const double norm = std::accumulate(kernel.begin(), kernel.end(), 0.0);
    for (double& k : kernel) k /= norm;

    const int w = map.width;
    const int h = map.height;
    std::vector<double> tmp(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                s += kernel[i + radius] * map.at(std::clamp(x + i, 0, w - 1), y);
            }
            tmp[static_cast<std::size_t>(y) * w + x] = s;
        }
    }
    DensityMap out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                s += kernel[i + radius] * tmp[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
            }
            out.at(x, y) = static_cast<float>(s);
        }
    }
    return out;
}

std::vector<Peak> extract_peaks(const DensityMap& map, const SdmConfig& cfg) {
    cfg.validate();
    const DensityMap smooth = gaussian_smooth(map, cfg.smoothing_sigma);
    if (smooth.values.empty()) return {};
    const auto [lo_it, hi_it] = std::minmax_element(smooth.values.begin(), smooth.values.end());
    const double lo = *lo_it;
    const double hi = *hi_it;
    if (!(hi > lo)) return {};
    const double threshold = lo + cfg.peak_rel_threshold * (hi - lo);

    std::vector<Peak> peaks;
    for (int y = 0; y < smooth.height; ++y) {
        for (int x = 0; x < smooth.width; ++x) {
            const float v = smooth.at(x, y);
            if (v < threshold) continue;
            bool is_max = true;
            for (int dy = -1; dy <= 1 && is_max; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    const int nx = x + dx;
                    const int ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= smooth.width || ny >= smooth.height) continue;
                    if (smooth.at(nx, ny) >= v) {
                        is_max = false;
                        break;
                    }
                }
            }
            if (is_max) peaks.push_back(Peak{x, y, v});
        }
    }
    std::stable_sort(peaks.begin(), peaks.end(),
                     [](const Peak& a, const Peak& b) { return a.score > b.score; });
    return peaks;
}

}  // namespace fsdet
