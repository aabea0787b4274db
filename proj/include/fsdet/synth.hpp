/**
 * @file synth.hpp
 * @brief Deterministic synthetic scenes with planted textured objects, RAN
 *        training pairs and Gaussian dot-annotation density maps.
 *
 * Every category owns a procedural texture (stripes, checks or blobs) and a
 * base size derived from its id alone, so the same category renders
 * identically in every scene. Textures are evaluated in object-normalized
 * coordinates; two instances of equal integer size are pixel-identical.
 */
#pragma once

#include "fsdet/eval.hpp"
#include "fsdet/geometry.hpp"
#include "fsdet/ran.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fsdet {

struct SynthConfig {
    int width = 256;
    int height = 256;
    int first_category = 0;
    int n_categories = 5;
    int instances_per_scene = 3;
    /// Instance size is base * s with s uniform in [1 - size_jitter, 1 + size_jitter].
    double size_jitter = 0.0;
    double background_noise = 0.08;
    std::uint64_t seed = 0;

    void validate() const;
};

struct Scene {
    Image image;
    std::vector<GroundTruthObject> objects;
};

/// Base (width, height) of a category's objects, in pixels.
std::pair<int, int> category_base_size(int category);

/// Renders one category's texture into a w x h grayscale patch.
Image render_object(int category, int w, int h);

/// Background plus disjoint planted instances (2 px apart, so pairwise IoU is 0).
/// Throws Error if placement fails after bounded retries.
Scene gen_scene(const SynthConfig& cfg, std::uint64_t seed);

/// Scene i of a dataset uses seed cfg.seed ^ (i * golden-ratio constant).
std::uint64_t scene_seed(const SynthConfig& cfg, std::size_t index);

struct JitterConfig {
    /// Center shift uniform in +-translation * candidate size per axis (< 0.5 keeps pairs encodable).
    double translation = 0.45;
    /// Scale ratios are log-uniform in (margin / lambda, lambda / margin).
    double scale_margin = 1.05;
    double negative_fraction = 0.4;
    double negative_iou_ceiling = 0.3;
    std::uint64_t seed = 0;

    void validate() const;
};

/**
 * Builds `count` pairs: round(count * negative_fraction) negatives, the rest
 * positives. Positives jitter a ground-truth box within the encodable range
 * and carry exact encoded targets. Negatives pair a ground-truth box with a
 * background crop or an other-category crop whose IoU with every
 * same-category object stays below the ceiling; their geometry channels hold
 * the identity encoding and are masked in the loss. Patches are native-size
 * crops.
 */
std::vector<PairSample> gen_ran_pairs(std::span<const Scene> scenes, const JitterConfig& jitter,
                                      const RanConfig& ran_cfg, std::size_t count);

/// Sum of unit-integral Gaussians at object centers (pixel-center sampling).
DensityMap dot_density(std::span<const GroundTruthObject> objects, int width, int height, double sigma);

/// dot_density squeezed into [0,1).
DensityMap gen_density_gt(std::span<const GroundTruthObject> objects, int width, int height,
                          double sigma);

}  // namespace fsdet
