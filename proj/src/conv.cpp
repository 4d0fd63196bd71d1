#include "protolayer/conv.hpp"

#include <string>

#include "protolayer/errors.hpp"

namespace protolayer {

namespace {

void require_image(const Tensor& image) {
  if (image.rank() != 3) {
    throw ShapeError("expected an image of shape {rows, cols, channels}, got " + shape_to_string(image.shape()));
  }
}

std::size_t total_same_padding(std::size_t in, std::size_t kernel, std::size_t stride) {
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  return needed > in ? needed - in : 0;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (in == 0 || kernel == 0 || stride == 0) throw ArgumentError("extents and strides must be positive");
  const std::size_t pad = padding == Padding::same ? total_same_padding(in, kernel, stride) : 0;
  if (kernel > in + pad) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " exceeds padded input extent " +
                     std::to_string(in + pad));
  }
  return (in + pad - kernel) / stride + 1;
}

ConvGeometry ConvGeometry::make(const Shape& image_shape, Extent2 kernel, Stride2 stride, Padding padding) {
  if (image_shape.size() != 3) {
    throw ShapeError("expected an image of shape {rows, cols, channels}, got " + shape_to_string(image_shape));
  }
  ConvGeometry g;
  g.in_rows = image_shape[0];
  g.in_cols = image_shape[1];
  g.channels = image_shape[2];
  g.kernel = kernel;
  g.stride = stride;
  g.out_rows = conv_output_extent(g.in_rows, kernel.rows, stride.rows, padding);
  g.out_cols = conv_output_extent(g.in_cols, kernel.cols, stride.cols, padding);
  if (padding == Padding::same) {
    const auto pr = total_same_padding(g.in_rows, kernel.rows, stride.rows);
    const auto pc = total_same_padding(g.in_cols, kernel.cols, stride.cols);
    g.pad_top = pr / 2;
    g.pad_bottom = pr - g.pad_top;
    g.pad_left = pc / 2;
    g.pad_right = pc - g.pad_left;
  }
  return g;
}

WindowMatrix extract_windows(const Tensor& image, Extent2 kernel, Stride2 stride, Padding padding) {
  require_image(image);
  WindowMatrix wm;
  wm.geometry = ConvGeometry::make(image.shape(), kernel, stride, padding);
  const auto& g = wm.geometry;
  wm.rows = Tensor({g.positions(), g.window_len()});
  wm.origin.reserve(g.positions());

  std::size_t p = 0;
  for (std::size_t orow = 0; orow < g.out_rows; ++orow) {
    for (std::size_t ocol = 0; ocol < g.out_cols; ++ocol, ++p) {
      const long r0 = static_cast<long>(orow * g.stride.rows) - static_cast<long>(g.pad_top);
      const long c0 = static_cast<long>(ocol * g.stride.cols) - static_cast<long>(g.pad_left);
      wm.origin.emplace_back(r0, c0);
      auto out = wm.rows.row(p);
      std::size_t e = 0;
      for (std::size_t kr = 0; kr < g.kernel.rows; ++kr) {
        const long r = r0 + static_cast<long>(kr);
        for (std::size_t kc = 0; kc < g.kernel.cols; ++kc) {
          const long c = c0 + static_cast<long>(kc);
          const bool inside = r >= 0 && c >= 0 && r < static_cast<long>(g.in_rows) && c < static_cast<long>(g.in_cols);
          for (std::size_t ch = 0; ch < g.channels; ++ch, ++e) {
            out[e] = inside ? image.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) : 0.0;
          }
        }
      }
    }
  }
  return wm;
}

Tensor accumulate_windows(const Tensor& window_values, const ConvGeometry& g) {
  if (window_values.rank() != 2 || window_values.rows() != g.positions() || window_values.cols() != g.window_len()) {
    throw ShapeError("accumulate_windows: expected " + std::to_string(g.positions()) + "x" +
                     std::to_string(g.window_len()) + ", got " + shape_to_string(window_values.shape()));
  }
  Tensor image({g.in_rows, g.in_cols, g.channels});
  std::size_t p = 0;
  for (std::size_t orow = 0; orow < g.out_rows; ++orow) {
    for (std::size_t ocol = 0; ocol < g.out_cols; ++ocol, ++p) {
      const long r0 = static_cast<long>(orow * g.stride.rows) - static_cast<long>(g.pad_top);
      const long c0 = static_cast<long>(ocol * g.stride.cols) - static_cast<long>(g.pad_left);
      const auto src = window_values.row(p);
      std::size_t e = 0;
      for (std::size_t kr = 0; kr < g.kernel.rows; ++kr) {
        const long r = r0 + static_cast<long>(kr);
        for (std::size_t kc = 0; kc < g.kernel.cols; ++kc) {
          const long c = c0 + static_cast<long>(kc);
          const bool inside = r >= 0 && c >= 0 && r < static_cast<long>(g.in_rows) && c < static_cast<long>(g.in_cols);
          for (std::size_t ch = 0; ch < g.channels; ++ch, ++e) {
            if (inside) image.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) += src[e];
          }
        }
      }
    }
  }
  return image;
}

std::size_t filter_count(const Tensor& bank) {
  if (bank.rank() != 4) {
    throw ShapeError("expected a filter bank of shape {n, k_rows, k_cols, channels}, got " +
                     shape_to_string(bank.shape()));
  }
  return bank.dim(0);
}

Extent2 filter_extent(const Tensor& bank) {
  filter_count(bank);
  return {bank.dim(1), bank.dim(2)};
}

Tensor conv2d(const Tensor& image, const Tensor& bank, std::optional<std::span<const double>> bias, Stride2 stride,
              Padding padding) {
  require_image(image);
  const std::size_t n_filters = filter_count(bank);
  if (bank.dim(3) != image.dim(2)) {
    throw ShapeError("conv2d: filter channels " + std::to_string(bank.dim(3)) + " do not match image channels " +
                     std::to_string(image.dim(2)));
  }
  if (bias && bias->size() != n_filters) {
    throw ShapeError("conv2d: bias length " + std::to_string(bias->size()) + " does not match filter count " +
                     std::to_string(n_filters));
  }
  const auto g = ConvGeometry::make(image.shape(), filter_extent(bank), stride, padding);
  Tensor out({g.out_rows, g.out_cols, n_filters});

  for (std::size_t orow = 0; orow < g.out_rows; ++orow) {
    for (std::size_t ocol = 0; ocol < g.out_cols; ++ocol) {
      const long r0 = static_cast<long>(orow * g.stride.rows) - static_cast<long>(g.pad_top);
      const long c0 = static_cast<long>(ocol * g.stride.cols) - static_cast<long>(g.pad_left);
      for (std::size_t f = 0; f < n_filters; ++f) {
        const auto k = bank.row(f);
        double s = 0.0;
        std::size_t e = 0;
        for (std::size_t kr = 0; kr < g.kernel.rows; ++kr) {
          const long r = r0 + static_cast<long>(kr);
          for (std::size_t kc = 0; kc < g.kernel.cols; ++kc) {
            const long c = c0 + static_cast<long>(kc);
            const bool inside =
                r >= 0 && c >= 0 && r < static_cast<long>(g.in_rows) && c < static_cast<long>(g.in_cols);
            for (std::size_t ch = 0; ch < g.channels; ++ch, ++e) {
              if (inside) s += image.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c), ch) * k[e];
            }
          }
        }
        out.at(orow, ocol, f) = bias ? s + (*bias)[f] : s;
      }
    }
  }
  return out;
}

Tensor squared_window_norms(const Tensor& image, Extent2 kernel, Stride2 stride, Padding padding) {
  require_image(image);
  Tensor squared = image;
  for (auto& v : squared.data()) v *= v;
  const Tensor ones({1, kernel.rows, kernel.cols, image.dim(2)}, 1.0);
  return conv2d(squared, ones, std::nullopt, stride, padding);
}

}  // namespace protolayer
