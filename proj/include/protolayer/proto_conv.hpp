#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protolayer/conv.hpp"
#include "protolayer/tensor.hpp"

namespace protolayer {

/// N_W kernel-prototypes of shape {k_rows, k_cols, channels}, stored as a
/// filter bank {N_W, k_rows, k_cols, channels}, with optional squared radii.
struct KernelPrototypeBank {
  Tensor kernels;
  std::optional<std::vector<double>> radii_sq;
  Stride2 stride;
  Padding padding = Padding::valid;

  std::size_t size() const { return filter_count(kernels); }
  Extent2 extent() const { return filter_extent(kernels); }
  std::size_t channels() const { return kernels.dim(3); }
  std::size_t window_len() const { return kernels.cols(); }
  bool has_radii() const { return radii_sq.has_value(); }

  std::vector<double> kernel_norms() const;
  /// Projects the radii back onto r^2 >= 0.
  void clamp_radii();
  void validate() const;
};

enum class StackKind { distance, nball_score, soft_prob, soft_possibility, hard_onehot, hard_binary };

const char* to_string(StackKind k);

/// Output of a kernel-prototype convolution: {out_rows, out_cols, N_W}, one
/// dissimilarity map per kernel-prototype.
struct DissimilarityStack {
  Tensor values;
  StackKind kind = StackKind::distance;

  std::size_t channels() const { return values.dim(2); }
  std::size_t pixels() const { return values.dim(0) * values.dim(1); }
  std::span<const double> pixel(std::size_t p) const { return values.data().subspan(p * channels(), channels()); }
};

/// Squared distance of every window to every kernel-prototype via
/// |x~|^2 - 2 x~.k + |k|^2 (squared window norms, a convolution, and a
/// per-kernel broadcast). Rounding residue below zero is clamped to zero.
DissimilarityStack proto_conv(const Tensor& image, const KernelPrototypeBank& bank);

/// r_k^2 - d: positive exactly when the window is inside the n-ball of k.
DissimilarityStack nball_score(const DissimilarityStack& distances, std::span<const double> radii_sq);

/// The layer output: the n-ball score when the bank has radii, else the distances.
DissimilarityStack proto_conv_output(const Tensor& image, const KernelPrototypeBank& bank);

/// Per-pixel softmax(-d / sigma^2) over channels.
DissimilarityStack soft_assign_softmax(const DissimilarityStack& distances, double sigma);
/// sigmoid(score / sigma^2).
DissimilarityStack soft_assign_sigmoid(const DissimilarityStack& scores, double sigma);

enum class HardMode { onehot, heaviside };

/// onehot: unit vector at the per-pixel winner (lowest channel on ties) of a
/// distance stack. heaviside: 1 where the n-ball score is > 0, else 0.
DissimilarityStack hard_assign(const DissimilarityStack& input, HardMode mode);

/// Gradient of the soft assignments with respect to their input stack.
Tensor soft_assign_softmax_backward(const DissimilarityStack& distances, double sigma, const Tensor& upstream);
Tensor soft_assign_sigmoid_backward(const DissimilarityStack& scores, double sigma, const Tensor& upstream);

/// Straight-through: the hard forward output paired with the gradient of its
/// sigma-parameterized soft surrogate (softmax for onehot, sigmoid for heaviside).
Tensor hard_assign_backward(const DissimilarityStack& input, HardMode mode, double sigma, const Tensor& upstream);

struct ProtoConvGradients {
  Tensor input;                              // {rows, cols, channels}
  Tensor kernels;                            // like bank.kernels
  std::optional<std::vector<double>> radii_sq;
};

/// Gradients of <upstream, proto_conv_output(image, bank)>. When rank_weights
/// (shaped like the output) is given, each position's contribution to a
/// kernel-prototype gradient is scaled by the matching weight.
ProtoConvGradients proto_conv_backward(const Tensor& image, const KernelPrototypeBank& bank, const Tensor& upstream,
                                       const Tensor* rank_weights = nullptr);

}  // namespace protolayer
