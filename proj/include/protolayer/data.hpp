#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "protolayer/tensor.hpp"

namespace protolayer {

/// Labelled samples, one flattened sample per row of inputs.
struct Dataset {
  Tensor inputs;            // samples x prod(sample_shape)
  std::vector<int> labels;  // one per sample
  Shape sample_shape;       // e.g. {28, 28, 1} for images, {dim} for vectors

  std::size_t size() const { return labels.size(); }
  Tensor sample(std::size_t i) const;
  /// Rows selected by indices, in the given order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count * rows * cols
};

/// Readers raise FormatError naming the byte offset of the first problem.
IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path);
void write_idx_images(const std::filesystem::path& path, const IdxImages& images);
void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels);

/// Parses an IDX image/label pair into {rows, cols, 1} samples with pixels
/// scaled to [0, 1]; shuffles with seed, then keeps the first limit samples
/// (limit 0 keeps all).
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t limit, std::uint64_t seed);

/// Class means for gen_blobs; pairwise distances are at least max(8 spread, 1).
Tensor blob_means(std::size_t n_classes, std::size_t dim, double spread, std::uint64_t seed);

/// Isotropic Gaussian blobs of scale spread around blob_means(seed); labels
/// 0..n_classes-1, samples ordered class by class. Different streams draw
/// independent samples around the same means (train/test splits).
Dataset gen_blobs(std::size_t n_classes, std::size_t n_per_class, std::size_t dim, double spread,
                  std::uint64_t seed, std::uint64_t stream = 0);

/// Points uniformly drawn from a box around the means, kept only when at
/// least min_distance away from every mean. Labelled -1.
Dataset gen_outliers(const Tensor& means, std::size_t count, double min_distance, std::uint64_t seed);

}  // namespace protolayer
