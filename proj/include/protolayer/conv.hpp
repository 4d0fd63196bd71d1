#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "protolayer/tensor.hpp"

namespace protolayer {

enum class Padding {
  valid,  // no padding: out = floor((in - f) / s) + 1
  same,   // zero padding so that out = ceil(in / s); extra padding goes after
};

struct Extent2 {
  std::size_t rows = 1;
  std::size_t cols = 1;
  friend bool operator==(const Extent2&, const Extent2&) = default;
};

struct Stride2 {
  std::size_t rows = 1;
  std::size_t cols = 1;
  friend bool operator==(const Stride2&, const Stride2&) = default;
};

/// Resolved geometry of a 2-D sliding window over a {rows, cols, channels} image.
///
/// The output extent follows out = floor((in + pad_before + pad_after - f) / s) + 1.
struct ConvGeometry {
  std::size_t in_rows = 0, in_cols = 0, channels = 0;
  Extent2 kernel;
  Stride2 stride;
  std::size_t pad_top = 0, pad_bottom = 0, pad_left = 0, pad_right = 0;
  std::size_t out_rows = 0, out_cols = 0;

  static ConvGeometry make(const Shape& image_shape, Extent2 kernel, Stride2 stride, Padding padding);

  std::size_t window_len() const { return kernel.rows * kernel.cols * channels; }
  std::size_t positions() const { return out_rows * out_cols; }
};

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

/// One flattened window per output position, in the canonical channel-fastest,
/// then column, then row order. Padded entries are zero.
struct WindowMatrix {
  Tensor rows;  // positions x window_len
  ConvGeometry geometry;
  // Top-left source coordinate (row, col) of each window; negative inside padding.
  std::vector<std::pair<long, long>> origin;

  std::size_t n_positions() const { return rows.rows(); }
  std::size_t window_len() const { return rows.cols(); }
};

WindowMatrix extract_windows(const Tensor& image, Extent2 kernel, Stride2 stride = {}, Padding padding = Padding::valid);

/// Adjoint of extract_windows: scatters per-window values back onto the image,
/// summing where windows overlap. Padded entries are dropped.
Tensor accumulate_windows(const Tensor& window_values, const ConvGeometry& geometry);

/// Filter banks have shape {n_filters, k_rows, k_cols, channels}; each filter is
/// contiguous in the same order as a flattened window.
std::size_t filter_count(const Tensor& bank);
Extent2 filter_extent(const Tensor& bank);

/// Sliding dot product (cross-correlation) with an optional per-filter bias.
/// Output shape {out_rows, out_cols, n_filters}.
Tensor conv2d(const Tensor& image, const Tensor& bank, std::optional<std::span<const double>> bias = std::nullopt,
              Stride2 stride = {}, Padding padding = Padding::valid);

/// Squared L2 norm of every window, computed as the convolution of the
/// component-wise square with an all-ones kernel. Output {out_rows, out_cols, 1}.
Tensor squared_window_norms(const Tensor& image, Extent2 kernel, Stride2 stride = {}, Padding padding = Padding::valid);

}  // namespace protolayer
