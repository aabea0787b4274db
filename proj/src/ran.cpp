#include "fsdet/ran.hpp"

#include "fsdet/error.hpp"
#include "simd.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>

namespace fsdet {

void RanConfig::validate() const {
    if (!(lambda_w > 1.0) || !(lambda_h > 1.0)) throw InvalidArgument("RanConfig: lambda must exceed 1");
    if (patch_width <= 0 || patch_height <= 0) throw InvalidArgument("RanConfig: patch size must be positive");
    if (patch_width < kDescriptorGrid || patch_height < kDescriptorGrid) {
        throw InvalidArgument("RanConfig: patch smaller than the descriptor grid");
    }
    if (embedding_length <= 0 || embedding_length % 4 != 0) {
        throw InvalidArgument("RanConfig: L must be a positive multiple of 4");
    }
    if (!(classify_threshold >= 0.0 && classify_threshold <= 1.0)) {
        throw InvalidArgument("RanConfig: classify threshold outside [0,1]");
    }
}

namespace {

double scale_code(double ratio, double lambda) {
    return (lambda * ratio - 1.0) / (lambda * lambda - 1.0);
}

double scale_ratio(double code, double lambda) {
    return (code * (lambda * lambda - 1.0) + 1.0) / lambda;
}

// Center of `gt` along one axis in the candidate patch frame of extent `patch`.
double patch_coord(double gt_center, double cand_start, double cand_size, double patch) {
    return (gt_center - cand_start) * patch / cand_size;
}

}  // namespace

bool encodable(const Box& gt, const Box& cand, const RanConfig& cfg) {
    if (!gt.valid() || !cand.valid()) return false;
    const double rw = cand.w / gt.w;
    const double rh = cand.h / gt.h;
    if (!(rw > 1.0 / cfg.lambda_w && rw < cfg.lambda_w)) return false;
    if (!(rh > 1.0 / cfg.lambda_h && rh < cfg.lambda_h)) return false;
    return std::abs(gt.cx - cand.cx) <= cand.w / 2.0 && std::abs(gt.cy - cand.cy) <= cand.h / 2.0;
}

RanTarget encode_pair(const Box& gt, const Box& cand, const RanConfig& cfg, bool same_category) {
    if (!encodable(gt, cand, cfg)) {
        throw EncodingDomainError("encode_pair: scale ratio or center offset outside the encodable range");
    }
    const double pw = cfg.patch_width;
    const double ph = cfg.patch_height;
    const double cand_x = patch_coord(cand.cx, cand.left(), cand.w, pw);  // == W/2
    const double cand_y = patch_coord(cand.cy, cand.top(), cand.h, ph);   // == H/2
    const double gt_x = patch_coord(gt.cx, cand.left(), cand.w, pw);
    const double gt_y = patch_coord(gt.cy, cand.top(), cand.h, ph);
    const double delta_x = 1.0 + 2.0 * (cand_x - gt_x) / pw;
    const double delta_y = 1.0 + 2.0 * (cand_y - gt_y) / ph;

    RanTarget t;
    t.c = same_category ? 1.0 : 0.0;
    t.dx = delta_x / 2.0;
    t.dy = delta_y / 2.0;
    t.sw = scale_code(cand.w / gt.w, cfg.lambda_w);
    t.sh = scale_code(cand.h / gt.h, cfg.lambda_h);
    return t;
}

Box decode(const Box& cand, const RanTarget& t, const RanConfig& cfg) {
    const double pw = cfg.patch_width;
    const double ph = cfg.patch_height;
    const double rw = scale_ratio(t.sw, cfg.lambda_w);
    const double rh = scale_ratio(t.sh, cfg.lambda_h);
    const double gt_x = pw / 2.0 - (2.0 * t.dx - 1.0) * pw / 2.0;
    const double gt_y = ph / 2.0 - (2.0 * t.dy - 1.0) * ph / 2.0;
    return Box{cand.left() + gt_x * cand.w / pw, cand.top() + gt_y * cand.h / ph, cand.w / rw,
               cand.h / rh};
}

namespace {

// Sobel responses for one row, edges replicated.
FSDET_HOT void sobel_row(const float* __restrict up, const float* __restrict mid, const float* __restrict down,
               int w, float* __restrict gx, float* __restrict gy) {
    auto at = [&](int x) {
        const int xl = x > 0 ? x - 1 : 0;
        const int xr = x + 1 < w ? x + 1 : w - 1;
        gx[x] = (up[xr] + 2.0f * mid[xr] + down[xr]) - (up[xl] + 2.0f * mid[xl] + down[xl]);
        gy[x] = (down[xl] + 2.0f * down[x] + down[xr]) - (up[xl] + 2.0f * up[x] + up[xr]);
    };
    at(0);
    for (int x = 1; x < w - 1; ++x) {
        gx[x] = (up[x + 1] + 2.0f * mid[x + 1] + down[x + 1]) - (up[x - 1] + 2.0f * mid[x - 1] + down[x - 1]);
        gy[x] = (down[x - 1] + 2.0f * down[x] + down[x + 1]) - (up[x - 1] + 2.0f * up[x] + up[x + 1]);
    }
    if (w > 1) at(w - 1);
}

// Octant by sign tests: quadrant from the signs, then which of |gx|, |gy|
// dominates (ties go to the upper bin of the quadrant).
FSDET_HOT void octant_row(const float* __restrict gx, const float* __restrict gy, int w, int* __restrict bin,
                float* __restrict mag) {
    for (int x = 0; x < w; ++x) {
        const float ax = gx[x];
        const float ay = gy[x];
        const int yneg = ay < 0.0f;
        const int xnonpos = !(ax > 0.0f);
        const int quadrant = 2 * yneg + (yneg ^ xnonpos);
        const float fx = std::fabs(ax);
        const float fy = std::fabs(ay);
        const int odd_upper = !(fx < fy);
        const int even_upper = !(fy < fx);
        bin[x] = 2 * quadrant + (even_upper ^ ((even_upper ^ odd_upper) & quadrant & 1));
        mag[x] = std::sqrt(ax * ax + ay * ay);
    }
}

}  // namespace

namespace {

// Bilinear weights spreading pixel i of n over the two nearest cell centers
// along one axis. Cells past the border get weight 0.
struct CellTaps {
    std::vector<int> lo, hi;
    std::vector<float> w_lo, w_hi;
};

CellTaps cell_taps(int n) {
    CellTaps t;
    t.lo.resize(n);
    t.hi.resize(n);
    t.w_lo.resize(n);
    t.w_hi.resize(n);
    for (int i = 0; i < n; ++i) {
        const double pos = (i + 0.5) * kDescriptorGrid / n - 0.5;
        const int c0 = static_cast<int>(std::floor(pos));
        const double frac = pos - c0;
        t.lo[i] = std::max(c0, 0);
        t.hi[i] = std::min(c0 + 1, kDescriptorGrid - 1);
        t.w_lo[i] = c0 >= 0 ? static_cast<float>(1.0 - frac) : 0.0f;
        t.w_hi[i] = c0 + 1 < kDescriptorGrid ? static_cast<float>(frac) : 0.0f;
    }
    return t;
}

}  // namespace

std::vector<float> raw_cell_features(const Image& patch) {
    if (patch.channels() != 1) return raw_cell_features(to_gray(patch));
    const int w = patch.width();
    const int h = patch.height();
    const int cells = kDescriptorGrid * kDescriptorGrid;
    std::vector<double> mean(cells, 0.0);
    std::vector<double> hist(static_cast<std::size_t>(cells) * kOrientationBins, 0.0);
    std::vector<double> weight(cells, 0.0);

    const CellTaps tx = cell_taps(w);
    const CellTaps ty = cell_taps(h);

    std::vector<float> gx(w), gy(w), mag(w);
    std::vector<int> bin(w);
    std::vector<float> row_hist(static_cast<std::size_t>(kDescriptorGrid) * kOrientationBins);
    std::vector<float> row_hist_hi(row_hist.size());
    // Intensity is separable: collect wy-weighted column sums per cell row
    // and spread them over cell columns once at the end.
    std::vector<float> column_sum(static_cast<std::size_t>(kDescriptorGrid) * w, 0.0f);
    std::vector<float> row_weight(kDescriptorGrid, 0.0f);
    for (int x = 0; x < w; ++x) {
        row_weight[tx.lo[x]] += tx.w_lo[x];
        row_weight[tx.hi[x]] += tx.w_hi[x];
    }
    const float* px = patch.pixels().data();
    for (int y = 0; y < h; ++y) {
        const float* up = px + static_cast<std::size_t>(std::max(y - 1, 0)) * w;
        const float* mid = px + static_cast<std::size_t>(y) * w;
        const float* down = px + static_cast<std::size_t>(std::min(y + 1, h - 1)) * w;
        sobel_row(up, mid, down, w, gx.data(), gy.data());
        octant_row(gx.data(), gy.data(), w, bin.data(), mag.data());

        // Soft-bin the row across cell columns, then across cell rows.
        // Separate accumulators for the two taps keep the scatter free of
        // back-to-back dependencies on the same slot.
        std::fill(row_hist.begin(), row_hist.end(), 0.0f);
        std::fill(row_hist_hi.begin(), row_hist_hi.end(), 0.0f);
        for (int x = 0; x < w; ++x) {
            row_hist[tx.lo[x] * kOrientationBins + bin[x]] += tx.w_lo[x] * mag[x];
            row_hist_hi[tx.hi[x] * kOrientationBins + bin[x]] += tx.w_hi[x] * mag[x];
        }
        for (std::size_t i = 0; i < row_hist.size(); ++i) row_hist[i] += row_hist_hi[i];

        for (const auto& [cy, wy] : {std::pair{ty.lo[y], ty.w_lo[y]}, std::pair{ty.hi[y], ty.w_hi[y]}}) {
            if (wy == 0.0f) continue;
            float* cs = column_sum.data() + static_cast<std::size_t>(cy) * w;
            for (int x = 0; x < w; ++x) cs[x] += wy * mid[x];
            for (int cx = 0; cx < kDescriptorGrid; ++cx) {
                const int cell = cy * kDescriptorGrid + cx;
                weight[cell] += static_cast<double>(wy) * row_weight[cx];
                for (int b = 0; b < kOrientationBins; ++b) {
                    hist[static_cast<std::size_t>(cell) * kOrientationBins + b] +=
                        static_cast<double>(wy) * row_hist[cx * kOrientationBins + b];
                }
            }
        }
    }

    for (int cy = 0; cy < kDescriptorGrid; ++cy) {
        const float* cs = column_sum.data() + static_cast<std::size_t>(cy) * w;
        for (int x = 0; x < w; ++x) {
            mean[cy * kDescriptorGrid + tx.lo[x]] += static_cast<double>(tx.w_lo[x]) * cs[x];
            mean[cy * kDescriptorGrid + tx.hi[x]] += static_cast<double>(tx.w_hi[x]) * cs[x];
        }
    }

    std::vector<float> out(kRawFeatureLength);
    for (int c = 0; c < cells; ++c) {
        const double n = weight[c] > 0.0 ? weight[c] : 1.0;
        float* f = out.data() + static_cast<std::size_t>(c) * (1 + kOrientationBins);
        f[0] = static_cast<float>(mean[c] / n);
        for (int b = 0; b < kOrientationBins; ++b) {
            f[1 + b] = static_cast<float>(hist[static_cast<std::size_t>(c) * kOrientationBins + b] / n);
        }
    }
    return out;
}

namespace {

constexpr std::uint64_t kProjectionSeed = 0x5eed5eedULL;
constexpr double kHistogramFloor = 1e-3;
constexpr double kIntensityWeight = 1.0;

// L x kRawFeatureLength Gaussian projection, one per L, built once.
const std::vector<float>& projection(int embedding_length) {
    static std::mutex mutex;
    static std::map<int, std::unique_ptr<const std::vector<float>>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[embedding_length];
    if (!slot) {
        std::mt19937_64 rng(kProjectionSeed);
        auto unit = [&] { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
        std::vector<float> m(static_cast<std::size_t>(embedding_length) * kRawFeatureLength);
        // Box-Muller keeps the matrix independent of the standard library's
        // distribution implementation.
        for (std::size_t i = 0; i < m.size(); i += 2) {
            const double r = std::sqrt(-2.0 * std::log(unit()));
            const double a = 2.0 * M_PI * unit();
            m[i] = static_cast<float>(r * std::cos(a));
            if (i + 1 < m.size()) m[i + 1] = static_cast<float>(r * std::sin(a));
        }
        slot = std::make_unique<const std::vector<float>>(std::move(m));
    }
    return *slot;
}

// Histogram block scaled to unit L2 (contrast and resample-factor
// invariant); intensity block scaled by kIntensityWeight / grid width.
std::vector<float> balance_blocks(std::vector<float> raw) {
    const int stride = 1 + kOrientationBins;
    const int cells = kDescriptorGrid * kDescriptorGrid;
    double hist_norm = 0.0;
    for (int c = 0; c < cells; ++c) {
        for (int b = 1; b < stride; ++b) hist_norm += static_cast<double>(raw[c * stride + b]) * raw[c * stride + b];
    }
    hist_norm = std::max(std::sqrt(hist_norm), kHistogramFloor);
    for (int c = 0; c < cells; ++c) {
        raw[c * stride] = static_cast<float>(raw[c * stride] * kIntensityWeight / kDescriptorGrid);
        for (int b = 1; b < stride; ++b) raw[c * stride + b] = static_cast<float>(raw[c * stride + b] / hist_norm);
    }
    return raw;
}

// Eight independent partial sums let the compiler vectorize the dot product.
FSDET_HOT double projection_dot(const float* row, const float* raw) {
    float lanes[8] = {};
    static_assert(kRawFeatureLength % 8 == 0);
    for (int j = 0; j < kRawFeatureLength; j += 8) {
        for (int k = 0; k < 8; ++k) lanes[k] += row[j + k] * raw[j + k];
    }
    double s = 0.0;
    for (float v : lanes) s += v;
    return s;
}

Descriptor project(const std::vector<float>& raw, int embedding_length) {
    const auto& m = projection(embedding_length);
    Descriptor d(embedding_length);
    double norm = 0.0;
    for (int i = 0; i < embedding_length; ++i) {
        const float* row = m.data() + static_cast<std::size_t>(i) * kRawFeatureLength;
        const double s = projection_dot(row, raw.data());
        d[i] = static_cast<float>(s);
        norm += s * s;
    }
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) {
        // Only an all-black patch lands here; give it a fixed direction.
        std::fill(d.begin(), d.end(), static_cast<float>(1.0 / std::sqrt(embedding_length)));
        return d;
    }
    for (float& v : d) v = static_cast<float>(v / norm);
    return d;
}

}  // namespace

Descriptor describe(const Image& patch, const RanConfig& cfg) {
    cfg.validate();
    if (patch.width() != cfg.patch_width || patch.height() != cfg.patch_height) {
        const Box whole{patch.width() / 2.0, patch.height() / 2.0, static_cast<double>(patch.width()),
                        static_cast<double>(patch.height())};
        return describe(crop_resize(to_gray(patch), whole, cfg.patch_width, cfg.patch_height), cfg);
    }
    return project(balance_blocks(raw_cell_features(patch)), cfg.embedding_length);
}

Descriptor describe_region(const Image& image, const Box& box, const RanConfig& cfg) {
    const Image& gray = image.channels() == 1 ? image : to_gray(image);
    return describe(crop_resize(gray, box, cfg.patch_width, cfg.patch_height), cfg);
}

RanTarget ran_forward_descriptors(const Descriptor& support, const Descriptor& candidate,
                                  const MlpHead& head) {
    const std::size_t l = static_cast<std::size_t>(head.embedding_length());
    if (support.size() != l || candidate.size() != l) {
        throw InvalidArgument("ran_forward: descriptor length differs from head L");
    }
    std::vector<float> fused(2 * l);
    std::copy(support.begin(), support.end(), fused.begin());
    std::copy(candidate.begin(), candidate.end(), fused.begin() + static_cast<std::ptrdiff_t>(l));
    const auto out = forward_rows<float>(head, fused, 1);
    return RanTarget{out[0], out[1], out[2], out[3], out[4]};
}

RanTarget ran_forward(const Image& support, const Image& candidate, const MlpHead& head,
                      const RanConfig& cfg) {
    return ran_forward_descriptors(describe(support, cfg), describe(candidate, cfg), head);
}

Tensor pair_features(std::span<const PairSample> pairs, const RanConfig& cfg) {
    const std::size_t l = static_cast<std::size_t>(cfg.embedding_length);
    Tensor x(pairs.size(), 2 * l);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const Descriptor s = describe(pairs[i].gt_patch, cfg);
        const Descriptor c = describe(pairs[i].cand_patch, cfg);
        std::copy(s.begin(), s.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * 2 * l));
        std::copy(c.begin(), c.end(), x.data.begin() + static_cast<std::ptrdiff_t>(i * 2 * l + l));
    }
    return x;
}

TrainResult train_ran_features(const Tensor& features, std::span<const RanTarget> targets,
                               const RanConfig& cfg, const TrainConfig& train_cfg,
                               const EpochLogger& log) {
    cfg.validate();
    train_cfg.validate();
    const std::size_t width = 2 * static_cast<std::size_t>(cfg.embedding_length);
    if (features.rows() != targets.size() || (features.rows() > 0 && features.cols() != width)) {
        throw InvalidArgument("train_ran: feature rows do not match targets or L");
    }
    TrainResult result{MlpHead::initialized(cfg.embedding_length, train_cfg.seed), {}};
    AdamOptimizer opt(result.head);
    std::mt19937_64 rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ULL);
    std::vector<std::size_t> order(targets.size());
    std::iota(order.begin(), order.end(), 0);
    const std::size_t bs = static_cast<std::size_t>(train_cfg.batch_size);

    for (int epoch = 0; epoch < train_cfg.epochs; ++epoch) {
        // Fisher-Yates with an explicit index draw so the order only depends on the engine.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[rng() % i]);
        }
        TrainConfig step_cfg = train_cfg;
        step_cfg.learning_rate = train_cfg.epoch_learning_rate(epoch);
        double loss_sum = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t n = std::min(bs, order.size() - start);
            Batch batch{Tensor(n, width), {}};
            batch.targets.reserve(n);
            for (std::size_t k = 0; k < n; ++k) {
                const std::size_t row = order[start + k];
                std::copy_n(features.data.begin() + static_cast<std::ptrdiff_t>(row * width), width,
                            batch.inputs.data.begin() + static_cast<std::ptrdiff_t>(k * width));
                batch.targets.push_back(targets[row]);
            }
            loss_sum += train_step(result.head, opt, batch, step_cfg).total * static_cast<double>(n);
            seen += n;
        }
        const double mean_loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
        result.epoch_loss.push_back(mean_loss);
        if (log) log(epoch, mean_loss);
    }
    return result;
}

TrainResult train_ran(std::span<const PairSample> pairs, const RanConfig& cfg,
                      const TrainConfig& train_cfg, const EpochLogger& log) {
    std::vector<RanTarget> targets;
    targets.reserve(pairs.size());
    for (const auto& p : pairs) targets.push_back(p.target);
    return train_ran_features(pair_features(pairs, cfg), targets, cfg, train_cfg, log);
}

std::vector<RanTarget> predict_pairs(std::span<const PairSample> pairs, const MlpHead& head,
                                     const RanConfig& cfg) {
    const Tensor x = pair_features(pairs, cfg);
    const Tensor y = forward(head, x);
    std::vector<RanTarget> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        out.push_back(RanTarget{y.at(i, 0), y.at(i, 1), y.at(i, 2), y.at(i, 3), y.at(i, 4)});
    }
    return out;
}

std::vector<RanTarget> score_candidates(std::span<const Box> candidates, const Image& query,
                                        const Descriptor& support, const MlpHead& head,
                                        const RanConfig& cfg) {
    std::vector<RanTarget> out;
    out.reserve(candidates.size());
    const Image gray = to_gray(query);
    for (const Box& b : candidates) {
        out.push_back(ran_forward_descriptors(support, describe_region(gray, b, cfg), head));
    }
    return out;
}

std::vector<Detection> align(std::span<const Box> candidates, const Image& query,
                             const Exemplar& support, const MlpHead& head, const RanConfig& cfg) {
    if (candidates.empty()) return {};
    const Descriptor sd = describe(support.patch, cfg);
    const auto preds = score_candidates(candidates, query, sd, head, cfg);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (preds[i].c < cfg.classify_threshold) continue;
        out.push_back(Detection{decode(candidates[i], preds[i], cfg), support.category, preds[i].c});
    }
    return out;
}

}  // namespace fsdet
