#include "protolayer/proto_conv.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "protolayer/errors.hpp"

namespace protolayer {

std::vector<double> KernelPrototypeBank::kernel_norms() const {
  std::vector<double> norms(size());
  for (std::size_t k = 0; k < norms.size(); ++k) norms[k] = squared_norm(kernels.row(k));
  return norms;
}

void KernelPrototypeBank::clamp_radii() {
  if (!radii_sq) return;
  for (auto& r : *radii_sq) r = std::max(r, 0.0);
}

void KernelPrototypeBank::validate() const {
  filter_count(kernels);
  if (radii_sq && radii_sq->size() != size()) {
    throw ShapeError("kernel-prototype bank has " + std::to_string(size()) + " kernels but " +
                     std::to_string(radii_sq->size()) + " radii");
  }
  if (stride.rows == 0 || stride.cols == 0) throw ArgumentError("stride must be positive");
}

const char* to_string(StackKind k) {
  switch (k) {
    case StackKind::distance: return "distance";
    case StackKind::nball_score: return "nball_score";
    case StackKind::soft_prob: return "soft_prob";
    case StackKind::soft_possibility: return "soft_possibility";
    case StackKind::hard_onehot: return "hard_onehot";
    case StackKind::hard_binary: return "hard_binary";
  }
  return "?";
}

namespace {

void require_kind(const DissimilarityStack& s, StackKind expected, const char* op) {
  if (s.kind != expected) {
    throw ArgumentError(std::string(op) + " expects a " + to_string(expected) + " stack, got " + to_string(s.kind));
  }
}

void require_sigma(double sigma) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ArgumentError("sigma must be positive and finite");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": upstream " + shape_to_string(b.shape()) + " does not match " +
                     shape_to_string(a.shape()));
  }
}

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

}  // namespace

DissimilarityStack proto_conv(const Tensor& image, const KernelPrototypeBank& bank) {
  bank.validate();
  if (image.rank() != 3 || image.dim(2) != bank.channels()) {
    throw ShapeError("proto_conv: image " + shape_to_string(image.shape()) + " vs kernel channels " +
                     std::to_string(bank.channels()));
  }
  const Tensor window_norms = squared_window_norms(image, bank.extent(), bank.stride, bank.padding);
  Tensor cross = conv2d(image, bank.kernels, std::nullopt, bank.stride, bank.padding);
  const auto norms = bank.kernel_norms();
  const std::size_t n = bank.size();
  auto out = cross.data();
  const auto wn = window_norms.data();
  for (std::size_t p = 0; p < wn.size(); ++p) {
    for (std::size_t k = 0; k < n; ++k) {
      double& v = out[p * n + k];
      v = std::max(0.0, wn[p] - 2.0 * v + norms[k]);
    }
  }
  return {std::move(cross), StackKind::distance};
}

DissimilarityStack nball_score(const DissimilarityStack& distances, std::span<const double> radii_sq) {
  require_kind(distances, StackKind::distance, "nball_score");
  const std::size_t n = distances.channels();
  if (radii_sq.size() != n) throw ShapeError("nball_score: radii length does not match channel count");
  Tensor out = distances.values;
  auto v = out.data();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = radii_sq[i % n] - v[i];
  return {std::move(out), StackKind::nball_score};
}

DissimilarityStack proto_conv_output(const Tensor& image, const KernelPrototypeBank& bank) {
  auto d = proto_conv(image, bank);
  if (bank.has_radii()) return nball_score(d, *bank.radii_sq);
  return d;
}

DissimilarityStack soft_assign_softmax(const DissimilarityStack& distances, double sigma) {
  require_kind(distances, StackKind::distance, "soft_assign_softmax");
  require_sigma(sigma);
  const double temp = sigma * sigma;
  const std::size_t n = distances.channels();
  Tensor out = distances.values;
  auto v = out.data();
  for (std::size_t p = 0; p < distances.pixels(); ++p) {
    auto px = v.subspan(p * n, n);
    double top = -std::numeric_limits<double>::infinity();
    for (double d : px) top = std::max(top, -d / temp);
    double sum = 0.0;
    for (auto& d : px) {
      d = std::exp(-d / temp - top);
      sum += d;
    }
    for (auto& d : px) d /= sum;
  }
  return {std::move(out), StackKind::soft_prob};
}

DissimilarityStack soft_assign_sigmoid(const DissimilarityStack& scores, double sigma) {
  require_kind(scores, StackKind::nball_score, "soft_assign_sigmoid");
  require_sigma(sigma);
  const double temp = sigma * sigma;
  Tensor out = scores.values;
  for (auto& v : out.data()) v = sigmoid(v / temp);
  return {std::move(out), StackKind::soft_possibility};
}

DissimilarityStack hard_assign(const DissimilarityStack& input, HardMode mode) {
  Tensor out(input.values.shape(), 0.0);
  auto v = out.data();
  if (mode == HardMode::onehot) {
    require_kind(input, StackKind::distance, "hard_assign(onehot)");
    const std::size_t n = input.channels();
    for (std::size_t p = 0; p < input.pixels(); ++p) {
      const auto px = input.pixel(p);
      std::size_t best = 0;
      for (std::size_t k = 1; k < n; ++k) {
        if (px[k] < px[best]) best = k;
      }
      v[p * n + best] = 1.0;
    }
    return {std::move(out), StackKind::hard_onehot};
  }
  require_kind(input, StackKind::nball_score, "hard_assign(heaviside)");
  const auto in = input.values.data();
  for (std::size_t i = 0; i < in.size(); ++i) v[i] = in[i] > 0.0 ? 1.0 : 0.0;
  return {std::move(out), StackKind::hard_binary};
}

Tensor soft_assign_softmax_backward(const DissimilarityStack& distances, double sigma, const Tensor& upstream) {
  require_same_shape(distances.values, upstream, "soft_assign_softmax_backward");
  const auto y = soft_assign_softmax(distances, sigma);
  const double temp = sigma * sigma;
  const std::size_t n = distances.channels();
  Tensor grad(upstream.shape());
  const auto yv = y.values.data();
  const auto g = upstream.data();
  auto out = grad.data();
  for (std::size_t p = 0; p < distances.pixels(); ++p) {
    double inner = 0.0;
    for (std::size_t k = 0; k < n; ++k) inner += g[p * n + k] * yv[p * n + k];
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = p * n + k;
      out[i] = -yv[i] * (g[i] - inner) / temp;
    }
  }
  return grad;
}

Tensor soft_assign_sigmoid_backward(const DissimilarityStack& scores, double sigma, const Tensor& upstream) {
  require_same_shape(scores.values, upstream, "soft_assign_sigmoid_backward");
  require_kind(scores, StackKind::nball_score, "soft_assign_sigmoid_backward");
  require_sigma(sigma);
  const double temp = sigma * sigma;
  Tensor grad(upstream.shape());
  const auto s = scores.values.data();
  const auto g = upstream.data();
  auto out = grad.data();
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double y = sigmoid(s[i] / temp);
    out[i] = g[i] * y * (1.0 - y) / temp;
  }
  return grad;
}

Tensor hard_assign_backward(const DissimilarityStack& input, HardMode mode, double sigma, const Tensor& upstream) {
  if (mode == HardMode::onehot) return soft_assign_softmax_backward(input, sigma, upstream);
  return soft_assign_sigmoid_backward(input, sigma, upstream);
}

ProtoConvGradients proto_conv_backward(const Tensor& image, const KernelPrototypeBank& bank, const Tensor& upstream,
                                       const Tensor* rank_weights) {
  bank.validate();
  const auto windows = extract_windows(image, bank.extent(), bank.stride, bank.padding);
  const auto& g = windows.geometry;
  const std::size_t n = bank.size();
  const Shape out_shape{g.out_rows, g.out_cols, n};
  if (upstream.shape() != out_shape) {
    throw ShapeError("proto_conv_backward: upstream " + shape_to_string(upstream.shape()) + ", expected " +
                     shape_to_string(out_shape));
  }
  if (rank_weights && rank_weights->shape() != out_shape) {
    throw ShapeError("proto_conv_backward: rank weights must match the output shape");
  }
  if (image.dim(2) != bank.channels()) throw ShapeError("proto_conv_backward: channel mismatch");

  ProtoConvGradients out;
  out.kernels = Tensor(bank.kernels.shape());
  // The score is r^2 - d, so the distance sees the negated upstream.
  const double sign = bank.has_radii() ? -1.0 : 1.0;
  if (bank.has_radii()) {
    std::vector<double> gr(n, 0.0);
    const auto up = upstream.data();
    for (std::size_t i = 0; i < up.size(); ++i) gr[i % n] += up[i];
    out.radii_sq = std::move(gr);
  }

  const std::size_t len = windows.window_len();
  Tensor grad_windows({windows.n_positions(), len});
  const auto up = upstream.data();
  for (std::size_t p = 0; p < windows.n_positions(); ++p) {
    const auto xw = windows.rows.row(p);
    auto gw = grad_windows.row(p);
    double g_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double gd = sign * up[p * n + k];
      if (gd == 0.0) continue;
      g_sum += gd;
      const auto kern = bank.kernels.row(k);
      // d/dx~ of |x~ - k|^2 is 2 (x~ - k); the x~ part is added once below.
      axpy(-2.0 * gd, kern, gw);
      const double scaled = rank_weights ? gd * (*rank_weights)[p * n + k] : gd;
      if (scaled == 0.0) continue;
      auto gk = out.kernels.row(k);
      for (std::size_t e = 0; e < len; ++e) gk[e] -= 2.0 * scaled * (xw[e] - kern[e]);
    }
    if (g_sum != 0.0) axpy(2.0 * g_sum, xw, gw);
  }
  out.input = accumulate_windows(grad_windows, g);
  return out;
}

}  // namespace protolayer
