#include "protolayer/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "protolayer/errors.hpp"

namespace protolayer {

void Parameter::zero_grad() {
  for (auto& g : grad.data()) g = 0.0;
}

namespace {

void add_into(Tensor& acc, std::span<const double> g) {
  auto a = acc.data();
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i];
}

const char* padding_name(Padding p) { return p == Padding::same ? "same" : "valid"; }

}  // namespace

// ---------------------------------------------------------------- proto_conv

ProtoConvLayer::ProtoConvLayer(std::size_t n_prototypes, Extent2 kernel, Stride2 stride, Padding padding,
                               bool with_radii, std::size_t channels)
    : kernel_(kernel), stride_(stride), padding_(padding), with_radii_(with_radii) {
  if (n_prototypes == 0) throw ConfigError("proto_conv: prototypes must be >= 1");
  if (kernel.rows == 0 || kernel.cols == 0) throw ConfigError("proto_conv: kernel extents must be >= 1");
  if (stride.rows == 0 || stride.cols == 0) throw ConfigError("proto_conv: stride must be >= 1");
  const Shape shape{n_prototypes, kernel.rows, kernel.cols, channels};
  kernels_ = Parameter{"kernels", Tensor(shape), Tensor(shape), false};
  if (with_radii_) radii_ = Parameter{"radii_sq", Tensor({n_prototypes}, 1.0), Tensor({n_prototypes}), true};
}

std::string ProtoConvLayer::describe() const {
  std::ostringstream os;
  os << "proto_conv(" << kernels_.value.dim(0) << " x " << kernel_.rows << "x" << kernel_.cols << ", stride "
     << stride_.rows << "x" << stride_.cols << ", " << padding_name(padding_) << (with_radii_ ? ", radii" : "") << ")";
  return os.str();
}

LayerShape ProtoConvLayer::output_shape(const LayerShape& input) const {
  if (input.shape.size() != 3) {
    throw ShapeError(describe() + ": needs {rows, cols, channels} input, got " + shape_to_string(input.shape));
  }
  if (input.shape[2] != kernels_.value.dim(3)) {
    throw ShapeError(describe() + ": input has " + std::to_string(input.shape[2]) + " channels, kernels have " +
                     std::to_string(kernels_.value.dim(3)));
  }
  const auto g = ConvGeometry::make(input.shape, kernel_, stride_, padding_);
  return {{g.out_rows, g.out_cols, kernels_.value.dim(0)}, with_radii_ ? SignalKind::nball_score : SignalKind::distance};
}

KernelPrototypeBank ProtoConvLayer::bank() const {
  KernelPrototypeBank b;
  b.kernels = kernels_.value;
  if (with_radii_) b.radii_sq = radii_.value.values();
  b.stride = stride_;
  b.padding = padding_;
  return b;
}

Tensor ProtoConvLayer::forward(const Tensor& x) const { return proto_conv_output(x, bank()).values; }

Tensor ProtoConvLayer::backward(const Tensor& x, const Tensor& y, const Tensor& grad_y) {
  const auto b = bank();
  std::optional<Tensor> weights;
  if (neural_gas.enabled) {
    // rank of every kernel-prototype among the channels of each pixel
    const std::size_t n = b.size();
    weights = Tensor(y.shape());
    const auto yv = y.data();
    std::vector<double> d(n);
    for (std::size_t p = 0; p < yv.size() / n; ++p) {
      for (std::size_t k = 0; k < n; ++k) d[k] = with_radii_ ? (*b.radii_sq)[k] - yv[p * n + k] : yv[p * n + k];
      const auto w = neural_gas_rank_weights(d, lambda_);
      std::copy(w.begin(), w.end(), weights->data().begin() + static_cast<std::ptrdiff_t>(p * n));
    }
  }
  auto grads = proto_conv_backward(x, b, grad_y, weights ? &*weights : nullptr);
  add_into(kernels_.grad, grads.kernels.data());
  if (with_radii_) add_into(radii_.grad, *grads.radii_sq);
  return std::move(grads.input);
}

std::vector<Parameter*> ProtoConvLayer::parameters() {
  if (with_radii_) return {&kernels_, &radii_};
  return {&kernels_};
}

void ProtoConvLayer::parameters_updated() {
  if (with_radii_) {
    for (auto& r : radii_.value.data()) r = std::max(r, 0.0);
  }
}

void ProtoConvLayer::set_epoch(std::size_t epoch) {
  if (neural_gas.enabled) lambda_ = neural_gas.schedule.lambda_at(epoch);
}

void ProtoConvLayer::set_kernels(const Tensor& kernels) {
  if (kernels.shape() != kernels_.value.shape()) {
    throw ShapeError("proto_conv: kernels " + shape_to_string(kernels.shape()) + ", expected " +
                     shape_to_string(kernels_.value.shape()));
  }
  kernels_.value = kernels;
}

void ProtoConvLayer::set_radii(const std::vector<double>& radii_sq) {
  if (!with_radii_) throw ConfigError("proto_conv: layer has no radii");
  if (radii_sq.size() != radii_.value.size()) throw ShapeError("proto_conv: wrong number of radii");
  radii_.value = Tensor::vector(radii_sq);
  parameters_updated();
}

// ---------------------------------------------------------------- activation

ActivationKind parse_activation_kind(const std::string& name) {
  if (name == "identity") return ActivationKind::identity;
  if (name == "relu") return ActivationKind::relu;
  if (name == "sigmoid") return ActivationKind::sigmoid;
  if (name == "channel_softmax") return ActivationKind::channel_softmax;
  if (name == "possibility_sigmoid") return ActivationKind::possibility_sigmoid;
  if (name == "hard_onehot") return ActivationKind::hard_onehot;
  if (name == "hard_heaviside") return ActivationKind::hard_heaviside;
  throw ConfigError("unknown activation function '" + name + "'");
}

const char* to_string(ActivationKind k) {
  switch (k) {
    case ActivationKind::identity: return "identity";
    case ActivationKind::relu: return "relu";
    case ActivationKind::sigmoid: return "sigmoid";
    case ActivationKind::channel_softmax: return "channel_softmax";
    case ActivationKind::possibility_sigmoid: return "possibility_sigmoid";
    case ActivationKind::hard_onehot: return "hard_onehot";
    case ActivationKind::hard_heaviside: return "hard_heaviside";
  }
  return "?";
}

ActivationLayer::ActivationLayer(ActivationKind kind, double sigma, double sigma_decay)
    : kind_(kind), sigma0_(sigma), sigma_decay_(sigma_decay), sigma_(sigma) {
  if (!(sigma > 0.0)) throw ConfigError("activation: sigma must be positive");
  if (!(sigma_decay > 0.0 && sigma_decay <= 1.0)) throw ConfigError("activation: sigma_decay must lie in (0, 1]");
}

std::string ActivationLayer::describe() const { return std::string("activation(") + to_string(kind_) + ")"; }

LayerShape ActivationLayer::output_shape(const LayerShape& input) const {
  switch (kind_) {
    case ActivationKind::identity:
    case ActivationKind::relu:
    case ActivationKind::sigmoid: return {input.shape, input.kind};
    case ActivationKind::channel_softmax:
    case ActivationKind::hard_onehot:
      if (input.kind != SignalKind::distance || input.shape.size() != 3) {
        throw ConfigError(describe() + " needs the distance stack of a proto_conv without radii");
      }
      return {input.shape, SignalKind::features};
    case ActivationKind::possibility_sigmoid:
    case ActivationKind::hard_heaviside:
      if (input.kind != SignalKind::nball_score || input.shape.size() != 3) {
        throw ConfigError(describe() + " needs the n-ball score stack of a proto_conv with radii");
      }
      return {input.shape, SignalKind::features};
  }
  return input;
}

Tensor ActivationLayer::forward(const Tensor& x) const {
  switch (kind_) {
    case ActivationKind::identity: return x;
    case ActivationKind::relu:
    case ActivationKind::sigmoid: {
      Tensor y = x;
      const auto a = kind_ == ActivationKind::relu ? Activation::relu : Activation::sigmoid;
      for (auto& v : y.data()) v = activate(a, v);
      return y;
    }
    case ActivationKind::channel_softmax: return soft_assign_softmax({x, StackKind::distance}, sigma_).values;
    case ActivationKind::possibility_sigmoid: return soft_assign_sigmoid({x, StackKind::nball_score}, sigma_).values;
    case ActivationKind::hard_onehot: return hard_assign({x, StackKind::distance}, HardMode::onehot).values;
    case ActivationKind::hard_heaviside: return hard_assign({x, StackKind::nball_score}, HardMode::heaviside).values;
  }
  return x;
}

Tensor ActivationLayer::backward(const Tensor& x, const Tensor& /*y*/, const Tensor& grad_y) {
  switch (kind_) {
    case ActivationKind::identity: return grad_y;
    case ActivationKind::relu:
    case ActivationKind::sigmoid: {
      Tensor g = grad_y;
      const auto a = kind_ == ActivationKind::relu ? Activation::relu : Activation::sigmoid;
      const auto xv = x.data();
      auto gv = g.data();
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] *= activate_derivative(a, xv[i]);
      return g;
    }
    case ActivationKind::channel_softmax:
      return soft_assign_softmax_backward({x, StackKind::distance}, sigma_, grad_y);
    case ActivationKind::possibility_sigmoid:
      return soft_assign_sigmoid_backward({x, StackKind::nball_score}, sigma_, grad_y);
    case ActivationKind::hard_onehot:
      return hard_assign_backward({x, StackKind::distance}, HardMode::onehot, sigma_, grad_y);
    case ActivationKind::hard_heaviside:
      return hard_assign_backward({x, StackKind::nball_score}, HardMode::heaviside, sigma_, grad_y);
  }
  return grad_y;
}

void ActivationLayer::set_epoch(std::size_t epoch) {
  sigma_ = sigma0_ * std::pow(sigma_decay_, static_cast<double>(epoch));
}

// ---------------------------------------------------------------- lvq head

LvqHeadLayer::LvqHeadLayer(DissimilarityKind kind, std::size_t input_dim, std::size_t projection_dim,
                           Activation activation, std::vector<int> prototype_labels)
    : input_dim_(input_dim) {
  if (prototype_labels.empty()) throw ConfigError("lvq_head: needs at least one prototype");
  spec_.kind = kind;
  spec_.activation = activation;
  const std::size_t m = projection_dim == 0 ? input_dim : projection_dim;
  if (spec_.has_omega()) {
    spec_.omega = Tensor({m, input_dim});
    for (std::size_t i = 0; i < std::min(m, input_dim); ++i) spec_.omega.at(i, i) = 1.0;
    omega_ = Parameter{"omega", spec_.omega, Tensor(spec_.omega.shape()), false};
  }
  if (spec_.has_bias()) {
    spec_.bias.assign(m, 0.0);
    bias_ = Parameter{"bias", Tensor({m}), Tensor({m}), false};
  }
  const std::size_t pdim = spec_.prototype_dim(input_dim);
  const Shape wshape{prototype_labels.size(), pdim};
  protos_ = PrototypeSet(Tensor(wshape), std::move(prototype_labels));
  weights_ = Parameter{"prototypes", Tensor(wshape), Tensor(wshape), false};
}

std::string LvqHeadLayer::describe() const {
  std::ostringstream os;
  os << "lvq_head(" << protos_.size() << " prototypes, " << to_string(spec_.kind) << ")";
  return os.str();
}

LayerShape LvqHeadLayer::output_shape(const LayerShape& input) const {
  const auto n = shape_product(input.shape);
  if (n != input_dim_) {
    throw ShapeError(describe() + ": expects " + std::to_string(input_dim_) + " input features, got " +
                     shape_to_string(input.shape));
  }
  return {{protos_.size()}, SignalKind::distance};
}

Tensor LvqHeadLayer::forward(const Tensor& x) const {
  return Tensor::vector(response_efficient(x.data(), protos_, spec_));
}

Tensor LvqHeadLayer::backward(const Tensor& x, const Tensor& /*y*/, const Tensor& grad_y) {
  auto g = response_backward(x.data(), protos_, spec_, grad_y.data());
  add_into(weights_.grad, g.prototypes.data());
  if (g.omega) add_into(omega_.grad, g.omega->data());
  if (g.bias) add_into(bias_.grad, *g.bias);
  return Tensor(x.shape(), std::move(g.input));
}

std::vector<Parameter*> LvqHeadLayer::parameters() {
  std::vector<Parameter*> out{&weights_};
  if (spec_.has_omega()) out.push_back(&omega_);
  if (spec_.has_bias()) out.push_back(&bias_);
  return out;
}

void LvqHeadLayer::sync_from_parameters() {
  protos_.set_weights(weights_.value);
  if (spec_.has_omega()) spec_.omega = omega_.value;
  if (spec_.has_bias()) spec_.bias = bias_.value.values();
}

void LvqHeadLayer::parameters_updated() { sync_from_parameters(); }

void LvqHeadLayer::set_prototypes(const Tensor& weights) {
  if (weights.shape() != weights_.value.shape()) {
    throw ShapeError("lvq_head: prototypes " + shape_to_string(weights.shape()) + ", expected " +
                     shape_to_string(weights_.value.shape()));
  }
  weights_.value = weights;
  sync_from_parameters();
}

void LvqHeadLayer::set_omega(const Tensor& omega) {
  if (!spec_.has_omega() || omega.shape() != omega_.value.shape()) {
    throw ShapeError("lvq_head: omega " + shape_to_string(omega.shape()) + " does not fit this head");
  }
  omega_.value = omega;
  sync_from_parameters();
}

void LvqHeadLayer::set_bias(const std::vector<double>& bias) {
  if (!spec_.has_bias() || bias.size() != bias_.value.size()) throw ShapeError("lvq_head: bias does not fit this head");
  bias_.value = Tensor::vector(bias);
  sync_from_parameters();
}

// ---------------------------------------------------------------- network

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

LvqHeadLayer& Network::head() {
  auto* h = layers_.empty() ? nullptr : dynamic_cast<LvqHeadLayer*>(layers_.back().get());
  if (!h) throw ConfigError("the final layer must be an lvq_head");
  return *h;
}

const LvqHeadLayer& Network::head() const { return const_cast<Network*>(this)->head(); }

std::vector<LayerShape> Network::check(const Shape& input_shape) const {
  if (layers_.empty()) throw ConfigError("model has no layers");
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    if (dynamic_cast<const LvqHeadLayer*>(layers_[i].get())) {
      throw ConfigError("layer " + std::to_string(i) + ": lvq_head is only allowed as the final layer");
    }
  }
  head();
  std::vector<LayerShape> shapes{{input_shape, SignalKind::features}};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    try {
      shapes.push_back(layers_[i]->output_shape(shapes.back()));
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return shapes;
}

std::vector<Tensor> Network::forward(const Tensor& sample) const {
  std::vector<Tensor> acts;
  acts.reserve(layers_.size() + 1);
  acts.push_back(sample);
  for (const auto& l : layers_) acts.push_back(l->forward(acts.back()));
  return acts;
}

void Network::backward(const std::vector<Tensor>& acts, const Tensor& grad_response) {
  Tensor grad = grad_response;
  for (std::size_t i = layers_.size(); i-- > 0;) grad = layers_[i]->backward(acts[i], acts[i + 1], grad);
}

std::vector<Parameter*> Network::parameters() {
  std::vector<Parameter*> out;
  for (auto& l : layers_) {
    for (auto* p : l->parameters()) out.push_back(p);
  }
  return out;
}

void Network::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

void Network::parameters_updated() {
  for (auto& l : layers_) l->parameters_updated();
}

void Network::set_epoch(std::size_t epoch) {
  for (auto& l : layers_) l->set_epoch(epoch);
}

}  // namespace protolayer
