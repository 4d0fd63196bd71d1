#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "protolayer/data.hpp"
#include "protolayer/dissimilarity.hpp"
#include "protolayer/proto_conv.hpp"
#include "protolayer/tensor.hpp"
#include "protolayer/train_kit.hpp"

namespace protolayer {

/// What a layer's output means; activations check it before accepting input.
enum class SignalKind { features, distance, nball_score };

struct LayerShape {
  Shape shape;
  SignalKind kind = SignalKind::features;
};

/// A trainable tensor plus its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool nonnegative = false;

  void zero_grad();
};

/// A network stage. Layers are stateless during forward/backward: the caller
/// keeps the input and output of every stage and hands them back to backward.
class Layer {
 public:
  virtual ~Layer() = default;

  virtual std::string describe() const = 0;
  /// Output shape for a given input; throws ShapeError/ConfigError when the
  /// input is unacceptable.
  virtual LayerShape output_shape(const LayerShape& input) const = 0;
  virtual Tensor forward(const Tensor& x) const = 0;
  /// Accumulates parameter gradients and returns the gradient for x.
  virtual Tensor backward(const Tensor& x, const Tensor& y, const Tensor& grad_y) = 0;

  virtual std::vector<Parameter*> parameters() { return {}; }
  /// Refreshes derived state after parameters changed (caches, clamping).
  virtual void parameters_updated() {}
  virtual void set_epoch(std::size_t /*epoch*/) {}
};

struct NeuralGasSettings {
  bool enabled = false;
  NeighborhoodSchedule schedule;
};

class ProtoConvLayer final : public Layer {
 public:
  ProtoConvLayer(std::size_t n_prototypes, Extent2 kernel, Stride2 stride, Padding padding, bool with_radii,
                 std::size_t channels);

  std::string describe() const override;
  LayerShape output_shape(const LayerShape& input) const override;
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& grad_y) override;
  std::vector<Parameter*> parameters() override;
  void parameters_updated() override;
  void set_epoch(std::size_t epoch) override;

  KernelPrototypeBank bank() const;
  void set_kernels(const Tensor& kernels);
  void set_radii(const std::vector<double>& radii_sq);
  bool has_radii() const { return with_radii_; }

  NeuralGasSettings neural_gas;
  double l1_radii = 0.0;

 private:
  Extent2 kernel_;
  Stride2 stride_;
  Padding padding_;
  bool with_radii_;
  Parameter kernels_;
  Parameter radii_;
  double lambda_ = 1.0;
};

enum class ActivationKind {
  identity,
  relu,
  sigmoid,
  channel_softmax,      // soft assignment over channels of a distance stack
  possibility_sigmoid,  // sigmoid(score / sigma^2) of an n-ball score stack
  hard_onehot,          // straight-through, softmax surrogate
  hard_heaviside,       // straight-through, sigmoid surrogate
};

ActivationKind parse_activation_kind(const std::string& name);
const char* to_string(ActivationKind k);

class ActivationLayer final : public Layer {
 public:
  ActivationLayer(ActivationKind kind, double sigma, double sigma_decay);

  std::string describe() const override;
  LayerShape output_shape(const LayerShape& input) const override;
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& grad_y) override;
  void set_epoch(std::size_t epoch) override;

  ActivationKind kind() const { return kind_; }
  double sigma() const { return sigma_; }

 private:
  ActivationKind kind_;
  double sigma0_;
  double sigma_decay_;
  double sigma_;
};

class LvqHeadLayer final : public Layer {
 public:
  LvqHeadLayer(DissimilarityKind kind, std::size_t input_dim, std::size_t projection_dim, Activation activation,
               std::vector<int> prototype_labels);

  std::string describe() const override;
  LayerShape output_shape(const LayerShape& input) const override;
  Tensor forward(const Tensor& x) const override;
  Tensor backward(const Tensor& x, const Tensor& y, const Tensor& grad_y) override;
  std::vector<Parameter*> parameters() override;
  void parameters_updated() override;

  const PrototypeSet& prototypes() const { return protos_; }
  const DissimilaritySpec& spec() const { return spec_; }
  const std::vector<int>& labels() const { return protos_.labels(); }
  std::size_t input_dim() const { return input_dim_; }

  void set_prototypes(const Tensor& weights);
  void set_omega(const Tensor& omega);
  void set_bias(const std::vector<double>& bias);

 private:
  void sync_from_parameters();

  std::size_t input_dim_;
  DissimilaritySpec spec_;
  PrototypeSet protos_;
  Parameter weights_;
  Parameter omega_;
  Parameter bias_;
};

/// Ordered chain of layers ending in an LVQ head.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void add(std::unique_ptr<Layer> layer);
  std::size_t size() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  LvqHeadLayer& head();
  const LvqHeadLayer& head() const;

  /// Shape-checks the chain end to end for samples of input_shape and returns
  /// the shape after every stage. Throws before any computation runs.
  std::vector<LayerShape> check(const Shape& input_shape) const;

  /// Input and output of every stage: acts[0] is the sample, acts.back() the
  /// prototype response.
  std::vector<Tensor> forward(const Tensor& sample) const;
  /// Backpropagates grad of the response through every stage.
  void backward(const std::vector<Tensor>& acts, const Tensor& grad_response);

  std::vector<Parameter*> parameters();
  void zero_grad();
  void parameters_updated();
  void set_epoch(std::size_t epoch);

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace protolayer
