#pragma once

#include "fsdet/formats.hpp"
#include "fsdet/geometry.hpp"
#include "fsdet/sdm.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace fsdet::cli {

enum ExitCode : int {
    kOk = 0,
    kFailure = 1,
    kUsage = 2,
    kIo = 3,
    kNumeric = 4,
    kCompatibility = 5,
};

/**
 * Rewrites argv (minus the program name) so that `--config FILE` expands to
 * the flags it lists, placed before the command-line flags. Keys the command
 * line already sets are dropped, so flags always win. TOML and JSON files
 * are accepted; keys are flag names without the leading dashes. Throws
 * InvalidArgument on unreadable or malformed files.
 */
std::vector<std::string> expand_config(int argc, const char* const* argv);

/// Writes the fully resolved options of `sub` to stderr as TOML.
void echo_config(const CLI::App& sub);

/// "IMG:cx:cy:w:h[,IMG:cx:cy:w:h...]"
struct SupportSpec {
    std::filesystem::path image;
    Box box;
};
std::vector<SupportSpec> parse_support(const std::string& spec);

/// Box outlines on an RGB copy of `img`, drawn in the given order.
struct Overlay {
    std::vector<Box> boxes;
    std::array<float, 3> color;
};
Image render_overlays(const Image& img, const std::vector<Overlay>& layers);

/// Resolves `image` against `base` unless absolute, in canonical form.
std::string normalize_image_path(const std::string& image, const std::filesystem::path& base);

/// Loads a checkpoint and reconciles its sidecar with the requested RAN
/// configuration. Fields the user set explicitly must match the checkpoint
/// (CompatibilityError otherwise); the rest are taken from the sidecar.
struct LoadedHead {
    MlpHead head;
    RanConfig ran;
};
LoadedHead load_head(const std::filesystem::path& ckpt, RanConfig requested, bool l_set, bool w_set,
                     bool h_set);

void add_gen_synth(CLI::App& app);
void add_train_ran(CLI::App& app);
void add_detect(CLI::App& app);
void add_evaluate(CLI::App& app);

}  // namespace fsdet::cli
