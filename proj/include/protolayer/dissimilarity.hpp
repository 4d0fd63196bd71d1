#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protolayer/tensor.hpp"

namespace protolayer {

enum class Activation { identity, relu, sigmoid };

Activation parse_activation(const std::string& name);
const char* to_string(Activation a);

/// Sigmoid is 1 / (1 + exp(-t)).
double activate(Activation a, double t);
/// Derivative with respect to the pre-activation t.
double activate_derivative(Activation a, double t);

enum class DissimilarityKind {
  euclidean,             // (x - w)^T (x - w)
  omega,                 // (x - w)^T Omega^T Omega (x - w); prototypes in input space
  projection,            // (Omega x - w)^T (Omega x - w); prototypes in projection space
  nonlinear_projection,  // |phi(Omega x - b) - w|^2
};

DissimilarityKind parse_dissimilarity_kind(const std::string& name);
const char* to_string(DissimilarityKind k);

struct DissimilaritySpec {
  DissimilarityKind kind = DissimilarityKind::euclidean;
  Tensor omega;              // m x n, unused for euclidean
  std::vector<double> bias;  // length m, nonlinear_projection only
  Activation activation = Activation::identity;

  static DissimilaritySpec euclidean();
  static DissimilaritySpec omega_metric(Tensor omega);
  static DissimilaritySpec projection(Tensor omega);
  static DissimilaritySpec nonlinear_projection(Tensor omega, std::vector<double> bias, Activation activation);

  bool has_omega() const { return kind != DissimilarityKind::euclidean; }
  bool has_bias() const { return kind == DissimilarityKind::nonlinear_projection; }

  /// Dimension prototypes live in for inputs of dimension n.
  std::size_t prototype_dim(std::size_t input_dim) const;
  /// Throws ShapeError unless inputs of dimension n and prototypes of dimension
  /// proto_dim are consistent with this measure.
  void validate(std::size_t input_dim, std::size_t proto_dim) const;
};

/// Matrix of row prototypes with optional class labels.
///
/// Squared prototype norms are cached; every mutation goes through set_weights()
/// or update(), which refresh the cache before returning, so readers never
/// observe a stale norm.
class PrototypeSet {
 public:
  PrototypeSet() = default;
  explicit PrototypeSet(Tensor weights, std::vector<int> labels = {});

  const Tensor& weights() const noexcept { return weights_; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  bool has_labels() const noexcept { return !labels_.empty(); }
  std::size_t size() const noexcept { return weights_.rows(); }
  std::size_t dim() const noexcept { return weights_.cols(); }
  std::span<const double> prototype(std::size_t k) const { return weights_.row(k); }
  std::span<const double> squared_norms() const noexcept { return norms_; }

  /// Sorted distinct labels.
  std::vector<int> classes() const;

  void set_weights(Tensor weights);
  template <class Fn>
  void update(Fn&& fn) {
    fn(weights_);
    refresh();
  }

 private:
  void refresh();

  Tensor weights_;
  std::vector<int> labels_;
  std::vector<double> norms_;
};

double euclidean_sq(std::span<const double> x, std::span<const double> w);
double omega_sq(std::span<const double> x, std::span<const double> w, const Tensor& omega);
double projection_sq(std::span<const double> x, std::span<const double> w, const Tensor& omega);
double nonlinear_projection_sq(std::span<const double> x, std::span<const double> w, const Tensor& omega,
                               std::span<const double> bias, Activation activation);

/// The measure selected by spec for one (input, prototype) pair.
double pair_dissimilarity(std::span<const double> x, std::span<const double> w, const DissimilaritySpec& spec);

/// The input as seen by the prototypes: x, Omega x or phi(Omega x - b).
/// For the omega kind this is Omega x and the prototypes must be projected too.
std::vector<double> transform_input(std::span<const double> x, const DissimilaritySpec& spec);

/// Prototype response computed prototype by prototype. Materializes one copy of
/// the input per prototype, as a parallel evaluation of the per-pair form would.
std::vector<double> response_naive(std::span<const double> x, const PrototypeSet& protos,
                                   const DissimilaritySpec& spec);

/// Prototype response via d = -2 W z + (|z|^2 + |w_k|^2): one matrix-vector
/// product plus a dynamic bias. Negative rounding residue is clamped to zero.
std::vector<double> response_efficient(std::span<const double> x, const PrototypeSet& protos,
                                       const DissimilaritySpec& spec);

/// Row-wise batched variants; inputs is batch x n, result batch x N_W.
Tensor response_naive(const Tensor& inputs, const PrototypeSet& protos, const DissimilaritySpec& spec);
Tensor response_efficient(const Tensor& inputs, const PrototypeSet& protos, const DissimilaritySpec& spec);

/// The affine map (A, b) with response_efficient(x) = A x + b for the euclidean
/// kind: A = -2 W, b_k = |x|^2 + |w_k|^2.
struct AffineResponse {
  Tensor weight;
  std::vector<double> bias;
};
AffineResponse euclidean_response_as_affine(std::span<const double> x, const PrototypeSet& protos);

struct ResponseGradients {
  std::vector<double> input;       // d/dx
  Tensor prototypes;               // d/dW, N_W x proto_dim
  std::optional<Tensor> omega;     // d/dOmega
  std::optional<std::vector<double>> bias;  // d/db
};

/// Exact gradients of sum_k upstream_k * d_k with respect to every argument.
ResponseGradients response_backward(std::span<const double> x, const PrototypeSet& protos,
                                    const DissimilaritySpec& spec, std::span<const double> upstream);

}  // namespace protolayer
