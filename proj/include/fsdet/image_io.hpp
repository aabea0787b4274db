#pragma once

#include "fsdet/geometry.hpp"

#include <filesystem>

namespace fsdet {

/// Reads PNG, PGM (P5) or PPM (P6) by extension; 8-bit samples map to [0,1].
Image read_image(const std::filesystem::path& path);

/// Writes PNG, PGM or PPM by extension, quantizing to 8 bits.
void write_image(const std::filesystem::path& path, const Image& img);

/// SDM1 dump: "SDM1", u32 width, u32 height (little-endian), then row-major
/// little-endian float32 values.
void write_density_map(const std::filesystem::path& path, const DensityMap& map);
DensityMap read_density_map(const std::filesystem::path& path);

/// 8-bit grayscale rendering of a density map (values scaled by 255).
Image density_to_image(const DensityMap& map);

}  // namespace fsdet
