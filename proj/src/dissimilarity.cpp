#include "protolayer/dissimilarity.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "protolayer/errors.hpp"

namespace protolayer {

Activation parse_activation(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + name + "' (expected identity, relu or sigmoid)");
}

const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

double activate(Activation a, double t) {
  switch (a) {
    case Activation::identity: return t;
    case Activation::relu: return t > 0.0 ? t : 0.0;
    case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-t));
  }
  return t;
}

double activate_derivative(Activation a, double t) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return t > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
      const double s = 1.0 / (1.0 + std::exp(-t));
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

DissimilarityKind parse_dissimilarity_kind(const std::string& name) {
  if (name == "euclidean") return DissimilarityKind::euclidean;
  if (name == "omega") return DissimilarityKind::omega;
  if (name == "projection") return DissimilarityKind::projection;
  if (name == "nonlinear_projection") return DissimilarityKind::nonlinear_projection;
  throw ConfigError("unknown dissimilarity '" + name +
                    "' (expected euclidean, omega, projection or nonlinear_projection)");
}

const char* to_string(DissimilarityKind k) {
  switch (k) {
    case DissimilarityKind::euclidean: return "euclidean";
    case DissimilarityKind::omega: return "omega";
    case DissimilarityKind::projection: return "projection";
    case DissimilarityKind::nonlinear_projection: return "nonlinear_projection";
  }
  return "?";
}

DissimilaritySpec DissimilaritySpec::euclidean() { return {}; }

DissimilaritySpec DissimilaritySpec::omega_metric(Tensor omega) {
  DissimilaritySpec s;
  s.kind = DissimilarityKind::omega;
  s.omega = std::move(omega);
  return s;
}

DissimilaritySpec DissimilaritySpec::projection(Tensor omega) {
  DissimilaritySpec s;
  s.kind = DissimilarityKind::projection;
  s.omega = std::move(omega);
  return s;
}

DissimilaritySpec DissimilaritySpec::nonlinear_projection(Tensor omega, std::vector<double> bias,
                                                          Activation activation) {
  DissimilaritySpec s;
  s.kind = DissimilarityKind::nonlinear_projection;
  s.omega = std::move(omega);
  s.bias = std::move(bias);
  s.activation = activation;
  return s;
}

std::size_t DissimilaritySpec::prototype_dim(std::size_t input_dim) const {
  switch (kind) {
    case DissimilarityKind::euclidean:
    case DissimilarityKind::omega: return input_dim;
    case DissimilarityKind::projection:
    case DissimilarityKind::nonlinear_projection: return omega.rows();
  }
  return input_dim;
}

void DissimilaritySpec::validate(std::size_t input_dim, std::size_t proto_dim) const {
  if (has_omega()) {
    if (omega.rank() != 2) throw ShapeError("omega must be a matrix, got " + shape_to_string(omega.shape()));
    if (omega.cols() != input_dim) {
      throw ShapeError("omega has " + std::to_string(omega.cols()) + " columns but the input has dimension " +
                       std::to_string(input_dim));
    }
  }
  if (has_bias() && bias.size() != omega.rows()) {
    throw ShapeError("projection bias has length " + std::to_string(bias.size()) + ", expected " +
                     std::to_string(omega.rows()));
  }
  const auto expected = prototype_dim(input_dim);
  if (proto_dim != expected) {
    throw ShapeError(std::string(to_string(kind)) + ": prototypes have dimension " + std::to_string(proto_dim) +
                     ", expected " + std::to_string(expected));
  }
}

PrototypeSet::PrototypeSet(Tensor weights, std::vector<int> labels)
    : weights_(std::move(weights)), labels_(std::move(labels)) {
  if (weights_.rank() != 2) {
    throw ShapeError("prototypes must be an N_W x n matrix, got " + shape_to_string(weights_.shape()));
  }
  if (!labels_.empty() && labels_.size() != weights_.rows()) {
    throw ShapeError("got " + std::to_string(labels_.size()) + " labels for " + std::to_string(weights_.rows()) +
                     " prototypes");
  }
  if (!weights_.all_finite()) throw ArgumentError("prototypes must be finite");
  refresh();
}

std::vector<int> PrototypeSet::classes() const {
  std::set<int> s(labels_.begin(), labels_.end());
  return {s.begin(), s.end()};
}

void PrototypeSet::set_weights(Tensor weights) {
  if (weights.shape() != weights_.shape()) {
    throw ShapeError("set_weights: expected " + shape_to_string(weights_.shape()) + ", got " +
                     shape_to_string(weights.shape()));
  }
  weights_ = std::move(weights);
  refresh();
}

void PrototypeSet::refresh() {
  norms_.resize(weights_.rows());
  for (std::size_t k = 0; k < weights_.rows(); ++k) norms_[k] = squared_norm(weights_.row(k));
}

double euclidean_sq(std::span<const double> x, std::span<const double> w) { return squared_distance(x, w); }

double omega_sq(std::span<const double> x, std::span<const double> w, const Tensor& omega) {
  if (x.size() != w.size() || omega.rank() != 2 || omega.cols() != x.size()) {
    throw ShapeError("omega_sq: inconsistent dimensions");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < omega.rows(); ++i) {
    const auto o = omega.row(i);
    double e = 0.0;
    for (std::size_t j = 0; j < x.size(); ++j) e += o[j] * (x[j] - w[j]);
    s += e * e;
  }
  return s;
}

double projection_sq(std::span<const double> x, std::span<const double> w, const Tensor& omega) {
  if (omega.rank() != 2 || omega.cols() != x.size() || omega.rows() != w.size()) {
    throw ShapeError("projection_sq: inconsistent dimensions");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < omega.rows(); ++i) {
    const double e = dot(omega.row(i), x) - w[i];
    s += e * e;
  }
  return s;
}

double nonlinear_projection_sq(std::span<const double> x, std::span<const double> w, const Tensor& omega,
                               std::span<const double> bias, Activation activation) {
  if (omega.rank() != 2 || omega.cols() != x.size() || omega.rows() != w.size() || bias.size() != w.size()) {
    throw ShapeError("nonlinear_projection_sq: inconsistent dimensions");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < omega.rows(); ++i) {
    const double e = activate(activation, dot(omega.row(i), x) - bias[i]) - w[i];
    s += e * e;
  }
  return s;
}

double pair_dissimilarity(std::span<const double> x, std::span<const double> w, const DissimilaritySpec& spec) {
  switch (spec.kind) {
    case DissimilarityKind::euclidean: return euclidean_sq(x, w);
    case DissimilarityKind::omega: return omega_sq(x, w, spec.omega);
    case DissimilarityKind::projection: return projection_sq(x, w, spec.omega);
    case DissimilarityKind::nonlinear_projection:
      return nonlinear_projection_sq(x, w, spec.omega, spec.bias, spec.activation);
  }
  return 0.0;
}

std::vector<double> transform_input(std::span<const double> x, const DissimilaritySpec& spec) {
  switch (spec.kind) {
    case DissimilarityKind::euclidean: return {x.begin(), x.end()};
    case DissimilarityKind::omega:
    case DissimilarityKind::projection: return matvec(spec.omega, x);
    case DissimilarityKind::nonlinear_projection: {
      auto z = matvec(spec.omega, x);
      for (std::size_t i = 0; i < z.size(); ++i) z[i] = activate(spec.activation, z[i] - spec.bias[i]);
      return z;
    }
  }
  return {};
}

std::vector<double> response_naive(std::span<const double> x, const PrototypeSet& protos,
                                   const DissimilaritySpec& spec) {
  spec.validate(x.size(), protos.dim());
  const std::size_t n_protos = protos.size();
  Tensor copies({n_protos, x.size()});
  for (std::size_t k = 0; k < n_protos; ++k) std::copy(x.begin(), x.end(), copies.row(k).begin());
  std::vector<double> d(n_protos);
  for (std::size_t k = 0; k < n_protos; ++k) d[k] = pair_dissimilarity(copies.row(k), protos.prototype(k), spec);
  return d;
}

namespace {

// |Omega w_k|^2 for every prototype, the prototype-side bias of the omega kind.
std::vector<double> projected_prototype_norms(const PrototypeSet& protos, const Tensor& omega) {
  std::vector<double> norms(protos.size());
  for (std::size_t k = 0; k < protos.size(); ++k) {
    const auto w = protos.prototype(k);
    double s = 0.0;
    for (std::size_t i = 0; i < omega.rows(); ++i) {
      const double e = dot(omega.row(i), w);
      s += e * e;
    }
    norms[k] = s;
  }
  return norms;
}

void efficient_into(std::span<const double> x, const PrototypeSet& protos, const DissimilaritySpec& spec,
                    std::span<const double> proto_norms, std::span<double> out) {
  const auto z = transform_input(x, spec);
  const double z_norm = squared_norm(z);
  if (spec.kind == DissimilarityKind::omega) {
    // <Omega x, Omega w_k> = <Omega^T Omega x, w_k>
    const auto u = matvec_transposed(spec.omega, z);
    for (std::size_t k = 0; k < protos.size(); ++k) {
      out[k] = std::max(0.0, -2.0 * dot(protos.prototype(k), u) + (z_norm + proto_norms[k]));
    }
    return;
  }
  for (std::size_t k = 0; k < protos.size(); ++k) {
    out[k] = std::max(0.0, -2.0 * dot(protos.prototype(k), z) + (z_norm + proto_norms[k]));
  }
}

}  // namespace

std::vector<double> response_efficient(std::span<const double> x, const PrototypeSet& protos,
                                       const DissimilaritySpec& spec) {
  spec.validate(x.size(), protos.dim());
  std::vector<double> d(protos.size());
  if (spec.kind == DissimilarityKind::omega) {
    const auto norms = projected_prototype_norms(protos, spec.omega);
    efficient_into(x, protos, spec, norms, d);
  } else {
    efficient_into(x, protos, spec, protos.squared_norms(), d);
  }
  return d;
}

Tensor response_naive(const Tensor& inputs, const PrototypeSet& protos, const DissimilaritySpec& spec) {
  if (inputs.rank() != 2) throw ShapeError("batched response expects a batch x n matrix");
  Tensor out({inputs.rows(), protos.size()});
  for (std::size_t b = 0; b < inputs.rows(); ++b) {
    const auto d = response_naive(inputs.row(b), protos, spec);
    std::copy(d.begin(), d.end(), out.row(b).begin());
  }
  return out;
}

Tensor response_efficient(const Tensor& inputs, const PrototypeSet& protos, const DissimilaritySpec& spec) {
  if (inputs.rank() != 2) throw ShapeError("batched response expects a batch x n matrix");
  spec.validate(inputs.cols(), protos.dim());
  Tensor out({inputs.rows(), protos.size()});
  std::vector<double> omega_norms;
  std::span<const double> norms = protos.squared_norms();
  if (spec.kind == DissimilarityKind::omega) {
    omega_norms = projected_prototype_norms(protos, spec.omega);
    norms = omega_norms;
  }
  for (std::size_t b = 0; b < inputs.rows(); ++b) efficient_into(inputs.row(b), protos, spec, norms, out.row(b));
  return out;
}

AffineResponse euclidean_response_as_affine(std::span<const double> x, const PrototypeSet& protos) {
  if (x.size() != protos.dim()) throw ShapeError("affine response: input/prototype dimension mismatch");
  AffineResponse a;
  a.weight = protos.weights();
  for (auto& v : a.weight.data()) v *= -2.0;
  const double x_norm = squared_norm(x);
  a.bias.resize(protos.size());
  for (std::size_t k = 0; k < protos.size(); ++k) a.bias[k] = x_norm + protos.squared_norms()[k];
  return a;
}

ResponseGradients response_backward(std::span<const double> x, const PrototypeSet& protos,
                                    const DissimilaritySpec& spec, std::span<const double> upstream) {
  spec.validate(x.size(), protos.dim());
  if (upstream.size() != protos.size()) {
    throw ShapeError("response_backward: upstream length " + std::to_string(upstream.size()) + " vs " +
                     std::to_string(protos.size()) + " prototypes");
  }
  const std::size_t n_protos = protos.size();
  const std::size_t pdim = protos.dim();
  double g_sum = 0.0;
  for (double g : upstream) g_sum += g;

  ResponseGradients out;
  out.prototypes = Tensor({n_protos, pdim});

  if (spec.kind == DissimilarityKind::omega) {
    const Tensor& omega = spec.omega;
    const std::size_t m = omega.rows();
    Tensor grad_omega({m, x.size()});
    std::vector<double> grad_x(x.size(), 0.0);
    std::vector<double> diff(x.size());
    for (std::size_t k = 0; k < n_protos; ++k) {
      const double g = upstream[k];
      if (g == 0.0) continue;
      const auto w = protos.prototype(k);
      for (std::size_t j = 0; j < x.size(); ++j) diff[j] = x[j] - w[j];
      const auto e = matvec(omega, diff);
      const auto back = matvec_transposed(omega, e);  // Omega^T Omega (x - w_k)
      axpy(2.0 * g, back, grad_x);
      axpy(-2.0 * g, back, out.prototypes.row(k));
      for (std::size_t i = 0; i < m; ++i) axpy(2.0 * g * e[i], diff, grad_omega.row(i));
    }
    out.input = std::move(grad_x);
    out.omega = std::move(grad_omega);
    return out;
  }

  // Kinds where the prototypes live in the space of z = transform_input(x).
  const auto z = transform_input(x, spec);
  std::vector<double> grad_z(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) grad_z[i] = 2.0 * g_sum * z[i];
  for (std::size_t k = 0; k < n_protos; ++k) {
    const double g = upstream[k];
    const auto w = protos.prototype(k);
    axpy(-2.0 * g, w, grad_z);
    auto gw = out.prototypes.row(k);
    for (std::size_t i = 0; i < pdim; ++i) gw[i] = -2.0 * g * (z[i] - w[i]);
  }

  if (spec.kind == DissimilarityKind::euclidean) {
    out.input = std::move(grad_z);
    return out;
  }

  // grad with respect to the pre-activation a = Omega x - b
  std::vector<double> grad_a = grad_z;
  if (spec.kind == DissimilarityKind::nonlinear_projection) {
    const auto pre = matvec(spec.omega, x);
    for (std::size_t i = 0; i < grad_a.size(); ++i) {
      grad_a[i] *= activate_derivative(spec.activation, pre[i] - spec.bias[i]);
    }
    std::vector<double> grad_b(grad_a.size());
    for (std::size_t i = 0; i < grad_a.size(); ++i) grad_b[i] = -grad_a[i];
    out.bias = std::move(grad_b);
  }
  Tensor grad_omega(spec.omega.shape());
  for (std::size_t i = 0; i < grad_a.size(); ++i) axpy(grad_a[i], x, grad_omega.row(i));
  out.omega = std::move(grad_omega);
  out.input = matvec_transposed(spec.omega, grad_a);
  return out;
}

}  // namespace protolayer
