#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "protolayer/checkpoint.hpp"

namespace protolayer {

struct GrayImage {
  std::size_t rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // row-major
};

/// Min-max normalization to 0..255 with rounding; a constant input maps to 128.
std::vector<std::uint8_t> normalize_to_gray(std::span<const double> values);

/// Binary graymap (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const GrayImage& image);
GrayImage read_pgm(const std::filesystem::path& path);

/// Writes image-shaped prototypes of a checkpoint: head prototypes that live
/// in a single-channel image space and kernel-prototypes with one channel.
/// csv writes every prototype as one CSV row instead and works for any shape.
/// Returns the written paths.
std::vector<std::filesystem::path> export_prototypes(const Checkpoint& ck, const std::filesystem::path& out_dir,
                                                     bool csv = false);

}  // namespace protolayer
