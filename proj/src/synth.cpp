#include "fsdet/synth.hpp"

#include "fsdet/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace fsdet {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unit(rng); }

int uniform_int(std::mt19937_64& rng, int lo, int hi_inclusive) {
    return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi_inclusive - lo + 1));
}

// Per-category texture parameters, a pure function of the category id.
struct Texture {
    int family = 0;  // 0 stripes, 1 checks, 2 blobs
    double lo = 0.1;
    double hi = 0.9;
    double angle = 0.0;
    double cycles = 2.0;
    double phase = 0.0;
    int cells_x = 2;
    int cells_y = 2;
    struct Blob {
        double u, v, sigma, amplitude;
    };
    std::vector<Blob> blobs;
};

Texture texture_of(int category) {
    std::mt19937_64 rng(splitmix(0xc0ffeeULL + static_cast<std::uint64_t>(category)));
    Texture t;
    const int idx = category / 3;
    t.family = category % 3;
    t.lo = uniform(rng, 0.05, 0.3);
    t.hi = uniform(rng, 0.7, 0.95);
    switch (t.family) {
        case 0:
            t.angle = ((idx * 47) % 180) * std::numbers::pi / 180.0;
            t.cycles = 1.5 + (idx % 3);
            t.phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
            break;
        case 1:
            t.cells_x = 2 + idx % 4;
            t.cells_y = 2 + (idx / 4 + idx) % 4;
            break;
        default: {
            const int n = 3 + idx % 4;
            for (int i = 0; i < n; ++i) {
                t.blobs.push_back({uniform(rng, 0.15, 0.85), uniform(rng, 0.15, 0.85),
                                   uniform(rng, 0.08, 0.2), uniform(rng, 0.0, 1.0) < 0.5 ? -1.0 : 1.0});
            }
            break;
        }
    }
    return t;
}

double texture_value(const Texture& t, double u, double v) {
    switch (t.family) {
        case 0: {
            const double s = (u * std::cos(t.angle) + v * std::sin(t.angle)) * t.cycles;
            return t.lo + (t.hi - t.lo) * (0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * s + t.phase));
        }
        case 1: {
            const int cx = static_cast<int>(std::floor(u * t.cells_x));
            const int cy = static_cast<int>(std::floor(v * t.cells_y));
            return ((cx + cy) % 2 == 0) ? t.hi : t.lo;
        }
        default: {
            double s = 0.5;
            for (const auto& b : t.blobs) {
                const double d2 = (u - b.u) * (u - b.u) + (v - b.v) * (v - b.v);
                s += 0.45 * b.amplitude * std::exp(-0.5 * d2 / (b.sigma * b.sigma));
            }
            return t.lo + (t.hi - t.lo) * std::clamp(s, 0.0, 1.0);
        }
    }
}

Image crop_native(const Image& img, const Box& b) {
    const int w = std::max(1, static_cast<int>(std::lround(b.w)));
    const int h = std::max(1, static_cast<int>(std::lround(b.h)));
    return crop_resize(img, b, w, h);
}

Box jitter_box(const Box& around, const JitterConfig& j, const RanConfig& rc, std::mt19937_64& rng) {
    const double lw = std::log(rc.lambda_w / j.scale_margin);
    const double lh = std::log(rc.lambda_h / j.scale_margin);
    const double w = around.w * std::exp(uniform(rng, -lw, lw));
    const double h = around.h * std::exp(uniform(rng, -lh, lh));
    const double tx = uniform(rng, -j.translation, j.translation) * w;
    const double ty = uniform(rng, -j.translation, j.translation) * h;
    return Box{around.cx + tx, around.cy + ty, w, h};
}

}  // namespace

void SynthConfig::validate() const {
    if (width < 16 || height < 16) throw InvalidArgument("SynthConfig: image too small");
    if (n_categories <= 0 || first_category < 0) throw InvalidArgument("SynthConfig: bad category range");
    if (instances_per_scene < 0) throw InvalidArgument("SynthConfig: negative instance count");
    if (!(size_jitter >= 0.0 && size_jitter < 0.5)) throw InvalidArgument("SynthConfig: size_jitter must lie in [0,0.5)");
    if (!(background_noise >= 0.0 && background_noise <= 0.5)) {
        throw InvalidArgument("SynthConfig: background_noise must lie in [0,0.5]");
    }
}

void JitterConfig::validate() const {
    if (!(translation >= 0.0 && translation < 0.5)) throw InvalidArgument("JitterConfig: translation must lie in [0,0.5)");
    if (!(scale_margin >= 1.0)) throw InvalidArgument("JitterConfig: scale margin must be >= 1");
    if (!(negative_fraction >= 0.0 && negative_fraction <= 1.0)) {
        throw InvalidArgument("JitterConfig: negative fraction outside [0,1]");
    }
    if (!(negative_iou_ceiling > 0.0 && negative_iou_ceiling <= 1.0)) {
        throw InvalidArgument("JitterConfig: negative IoU ceiling outside (0,1]");
    }
}

std::pair<int, int> category_base_size(int category) {
    const std::uint64_t h = splitmix(0xb0b0ULL + static_cast<std::uint64_t>(category));
    return {28 + static_cast<int>(h % 29), 28 + static_cast<int>((h >> 20) % 29)};
}

Image render_object(int category, int w, int h) {
    const Texture t = texture_of(category);
    Image out(w, h, 1);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out.at(x, y) = static_cast<float>(texture_value(t, (x + 0.5) / w, (y + 0.5) / h));
        }
    }
    return out;
}

std::uint64_t scene_seed(const SynthConfig& cfg, std::size_t index) {
    return cfg.seed ^ (0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(index) + 1));
}

Scene gen_scene(const SynthConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(splitmix(seed));
    Scene scene{Image(cfg.width, cfg.height, 1), {}};
    for (float& p : scene.image.pixels()) {
        p = static_cast<float>(0.5 + uniform(rng, -cfg.background_noise, cfg.background_noise));
    }
    constexpr int kMaxAttempts = 1000;
    for (int n = 0; n < cfg.instances_per_scene; ++n) {
        const int category = cfg.first_category + uniform_int(rng, 0, cfg.n_categories - 1);
        const auto [bw, bh] = category_base_size(category);
        const double s = uniform(rng, 1.0 - cfg.size_jitter, 1.0 + cfg.size_jitter);
        const int w = std::max(4, static_cast<int>(std::lround(bw * s)));
        const int h = std::max(4, static_cast<int>(std::lround(bh * s)));
        if (w > cfg.width || h > cfg.height) throw InvalidArgument("gen_scene: object larger than image");
        bool placed = false;
        for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
            const int x0 = uniform_int(rng, 0, cfg.width - w);
            const int y0 = uniform_int(rng, 0, cfg.height - h);
            const Box box = Box::from_corners(x0, y0, x0 + w, y0 + h);
            // Disjoint with a small gap, so every instance stays pixel-exact.
            const Box padded{box.cx, box.cy, box.w + 4.0, box.h + 4.0};
            const bool clear = std::none_of(scene.objects.begin(), scene.objects.end(),
                                            [&](const GroundTruthObject& o) { return iou(o.box, padded) > 0.0; });
            if (!clear) continue;
            const Image obj = render_object(category, w, h);
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) scene.image.at(x0 + x, y0 + y) = obj.at(x, y);
            }
            scene.objects.push_back({box, category});
            placed = true;
        }
        if (!placed) throw Error("gen_scene: could not place instance " + std::to_string(n));
    }
    return scene;
}

std::vector<PairSample> gen_ran_pairs(std::span<const Scene> scenes, const JitterConfig& jitter,
                                      const RanConfig& ran_cfg, std::size_t count) {
    jitter.validate();
    ran_cfg.validate();
    struct Ref {
        std::size_t scene;
        std::size_t object;
    };
    std::vector<Ref> refs;
    for (std::size_t s = 0; s < scenes.size(); ++s) {
        for (std::size_t o = 0; o < scenes[s].objects.size(); ++o) refs.push_back({s, o});
    }
    if (refs.empty() || count == 0) return {};

    std::mt19937_64 rng(splitmix(jitter.seed));
    const auto n_neg = static_cast<std::size_t>(std::llround(static_cast<double>(count) * jitter.negative_fraction));
    const std::size_t n_pos = count - n_neg;
    const RanTarget identity = encode_pair(Box{0, 0, 1, 1}, Box{0, 0, 1, 1}, ran_cfg, false);

    std::vector<PairSample> pairs;
    pairs.reserve(count);
    for (std::size_t k = 0; k < n_pos; ++k) {
        const Ref& r = refs[rng() % refs.size()];
        const Scene& sc = scenes[r.scene];
        const GroundTruthObject& gt = sc.objects[r.object];
        const Box cand = jitter_box(gt.box, jitter, ran_cfg, rng);
        PairSample p;
        p.gt_geom = gt.box;
        p.cand_geom = cand;
        p.target = encode_pair(gt.box, cand, ran_cfg, true);
        p.gt_category = gt.category;
        p.cand_category = gt.category;
        p.gt_patch = crop_native(sc.image, gt.box);
        p.cand_patch = crop_native(sc.image, cand);
        pairs.push_back(std::move(p));
    }

    for (std::size_t k = 0; k < n_neg; ++k) {
        const Ref& r = refs[rng() % refs.size()];
        const Scene& sc = scenes[r.scene];
        const GroundTruthObject& gt = sc.objects[r.object];
        auto clear_of = [&](const Box& b, bool any_category) {
            return std::all_of(sc.objects.begin(), sc.objects.end(), [&](const GroundTruthObject& o) {
                if (!any_category && o.category != gt.category) return true;
                return iou(o.box, b) < jitter.negative_iou_ceiling;
            });
        };
        std::vector<std::size_t> others;
        for (std::size_t o = 0; o < sc.objects.size(); ++o) {
            if (sc.objects[o].category != gt.category) others.push_back(o);
        }

        Box cand;
        int cand_category = -1;
        bool found = false;
        if (!others.empty() && unit(rng) < 0.5) {
            const GroundTruthObject& other = sc.objects[others[rng() % others.size()]];
            for (int attempt = 0; attempt < 50 && !found; ++attempt) {
                cand = jitter_box(other.box, jitter, ran_cfg, rng);
                found = clear_of(cand, false);
            }
            if (found) cand_category = other.category;
        }
        for (int attempt = 0; attempt < 200 && !found; ++attempt) {
            const double lw = std::log(ran_cfg.lambda_w / jitter.scale_margin);
            const double lh = std::log(ran_cfg.lambda_h / jitter.scale_margin);
            const double w = gt.box.w * std::exp(uniform(rng, -lw, lw));
            const double h = gt.box.h * std::exp(uniform(rng, -lh, lh));
            const int iw = sc.image.width();
            const int ih = sc.image.height();
            cand = Box{uniform(rng, std::min(w / 2, iw / 2.0), std::max(iw - w / 2, iw / 2.0)),
                       uniform(rng, std::min(h / 2, ih / 2.0), std::max(ih - h / 2, ih / 2.0)), w, h};
            found = clear_of(cand, true);
        }
        if (!found) throw Error("gen_ran_pairs: could not find a negative crop");

        PairSample p;
        p.gt_geom = gt.box;
        p.cand_geom = cand;
        p.target = identity;
        p.gt_category = gt.category;
        p.cand_category = cand_category;
        p.gt_patch = crop_native(sc.image, gt.box);
        p.cand_patch = crop_native(sc.image, cand);
        pairs.push_back(std::move(p));
    }

    for (std::size_t i = pairs.size(); i > 1; --i) std::swap(pairs[i - 1], pairs[rng() % i]);
    return pairs;
}

DensityMap dot_density(std::span<const GroundTruthObject> objects, int width, int height, double sigma) {
    if (!(sigma > 0.0)) throw InvalidArgument("dot_density: sigma must be positive");
    DensityMap map(width, height);
    const int radius = static_cast<int>(std::ceil(6.0 * sigma));
    const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
    for (const auto& o : objects) {
        const int x0 = std::max(0, static_cast<int>(std::floor(o.box.cx)) - radius);
        const int x1 = std::min(width - 1, static_cast<int>(std::floor(o.box.cx)) + radius);
        const int y0 = std::max(0, static_cast<int>(std::floor(o.box.cy)) - radius);
        const int y1 = std::min(height - 1, static_cast<int>(std::floor(o.box.cy)) + radius);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                const double dx = x + 0.5 - o.box.cx;
                const double dy = y + 0.5 - o.box.cy;
                map.at(x, y) += static_cast<float>(norm * std::exp(-0.5 * (dx * dx + dy * dy) / (sigma * sigma)));
            }
        }
    }
    return map;
}

DensityMap gen_density_gt(std::span<const GroundTruthObject> objects, int width, int height,
                          double sigma) {
    return normalize_half_open(dot_density(objects, width, height, sigma));
}

}  // namespace fsdet
