#include "protolayer/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "protolayer/errors.hpp"
#include "protolayer/lvq_head.hpp"
#include "protolayer/proto_conv.hpp"
#include "protolayer/train_kit.hpp"
#include "protolayer/trainer.hpp"

namespace protolayer {

namespace {

using Rng = std::mt19937_64;

std::vector<double> gaussian(Rng& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = normal(rng);
  return v;
}

Tensor gaussian_tensor(Rng& rng, Shape shape, double scale = 1.0) {
  const auto n = shape_product(shape);
  return Tensor(std::move(shape), gaussian(rng, n, scale));
}

std::size_t uniform_int(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

class Tally {
 public:
  void add(const std::string& op, const GradcheckResult& r) {
    for (auto& rep : reports_) {
      if (rep.op == op) {
        rep.points += 1;
        rep.max_relative_error = std::max(rep.max_relative_error, r.max_relative_error);
        return;
      }
    }
    reports_.push_back({op, 1, r.max_relative_error});
  }
  std::vector<OpReport> take() { return std::move(reports_); }

 private:
  std::vector<OpReport> reports_;
};

// <u, v>
double inner(std::span<const double> u, std::span<const double> v) { return dot(u, v); }

// Smallest |pre-activation| of phi(Omega x - b); relu is only checked away from its kink.
double min_abs_preactivation(std::span<const double> x, const DissimilaritySpec& spec) {
  const auto t = matvec(spec.omega, x);
  double m = INFINITY;
  for (std::size_t i = 0; i < t.size(); ++i) m = std::min(m, std::abs(t[i] - spec.bias[i]));
  return m;
}

void check_response(Rng& rng, Tally& tally, DissimilarityKind kind, Activation act) {
  const std::size_t n = uniform_int(rng, 1, 8);
  const std::size_t m = uniform_int(rng, 1, 6);
  const std::size_t nw = uniform_int(rng, 1, 5);
  DissimilaritySpec spec;
  std::vector<double> x;
  for (;;) {
    spec.kind = kind;
    spec.activation = act;
    if (kind != DissimilarityKind::euclidean) spec.omega = gaussian_tensor(rng, {m, n});
    if (kind == DissimilarityKind::nonlinear_projection) spec.bias = gaussian(rng, m);
    x = gaussian(rng, n);
    if (kind != DissimilarityKind::nonlinear_projection || act != Activation::relu ||
        min_abs_preactivation(x, spec) > 1e-3) {
      break;
    }
  }
  const std::size_t pdim = spec.prototype_dim(n);
  PrototypeSet protos(gaussian_tensor(rng, {nw, pdim}));
  const auto u = gaussian(rng, nw);
  const auto g = response_backward(x, protos, spec, u);
  const std::string name = std::string("response[") + to_string(kind) +
                           (kind == DissimilarityKind::nonlinear_projection ? std::string(",") + to_string(act) : "") +
                           "]";

  tally.add(name + " d/dx", gradcheck([&](std::span<const double> p) { return inner(u, response_naive(p, protos, spec)); },
                                      g.input, x));
  tally.add(name + " d/dW", gradcheck(
                                [&](std::span<const double> p) {
                                  PrototypeSet q(Tensor(protos.weights().shape(), {p.begin(), p.end()}));
                                  return inner(u, response_naive(x, q, spec));
                                },
                                g.prototypes.data(), protos.weights().data()));
  if (g.omega) {
    tally.add(name + " d/dOmega", gradcheck(
                                      [&](std::span<const double> p) {
                                        DissimilaritySpec s = spec;
                                        s.omega = Tensor(spec.omega.shape(), {p.begin(), p.end()});
                                        return inner(u, response_naive(x, protos, s));
                                      },
                                      g.omega->data(), spec.omega.data()));
  }
  if (g.bias) {
    tally.add(name + " d/db", gradcheck(
                                  [&](std::span<const double> p) {
                                    DissimilaritySpec s = spec;
                                    s.bias.assign(p.begin(), p.end());
                                    return inner(u, response_naive(x, protos, s));
                                  },
                                  *g.bias, spec.bias));
  }
}

// Prototype labels covering at least two classes, plus a true class among them.
std::vector<int> random_labels(Rng& rng, std::size_t nw) {
  std::vector<int> labels(nw);
  for (std::size_t k = 0; k < nw; ++k) labels[k] = static_cast<int>(k % 2 == 0 ? 0 : uniform_int(rng, 1, 3));
  return labels;
}

void check_losses(Rng& rng, Tally& tally) {
  const std::size_t nw = uniform_int(rng, 2, 7);
  const auto labels = random_labels(rng, nw);
  std::uniform_real_distribution<double> pos(0.1, 5.0);
  std::vector<double> d(nw);
  for (auto& v : d) v = pos(rng);
  const int truth = labels[uniform_int(rng, 0, nw - 1)];
  tally.add("glvq_backward", gradcheck([&](std::span<const double> p) { return glvq_loss(p, labels, truth); },
                                       glvq_backward(d, labels, truth), d));
  tally.add("rslvq_backward", gradcheck([&](std::span<const double> p) { return rslvq_loss(p, labels, truth); },
                                        rslvq_backward(d, labels, truth), d));
}

void check_assignments(Rng& rng, Tally& tally) {
  const Shape shape{uniform_int(rng, 1, 3), uniform_int(rng, 1, 3), uniform_int(rng, 2, 4)};
  std::uniform_real_distribution<double> pos(0.0, 4.0);
  Tensor dist(shape);
  for (auto& v : dist.data()) v = pos(rng);
  const Tensor score = gaussian_tensor(rng, shape);
  const Tensor u = gaussian_tensor(rng, shape);
  const double sigma = std::uniform_real_distribution<double>(0.5, 2.0)(rng);

  auto soft_max = [&](std::span<const double> p) {
    return inner(u.data(), soft_assign_softmax({Tensor(shape, {p.begin(), p.end()}), StackKind::distance}, sigma).values.data());
  };
  auto soft_sig = [&](std::span<const double> p) {
    return inner(u.data(),
                 soft_assign_sigmoid({Tensor(shape, {p.begin(), p.end()}), StackKind::nball_score}, sigma).values.data());
  };
  const DissimilarityStack ds{dist, StackKind::distance};
  const DissimilarityStack ss{score, StackKind::nball_score};
  tally.add("soft_assign_softmax_backward",
            gradcheck(soft_max, soft_assign_softmax_backward(ds, sigma, u).data(), dist.data()));
  tally.add("soft_assign_sigmoid_backward",
            gradcheck(soft_sig, soft_assign_sigmoid_backward(ss, sigma, u).data(), score.data()));
  // straight-through rules are checked against the surrogate they stand in for
  tally.add("hard_assign_backward[onehot]",
            gradcheck(soft_max, hard_assign_backward(ds, HardMode::onehot, sigma, u).data(), dist.data()));
  tally.add("hard_assign_backward[heaviside]",
            gradcheck(soft_sig, hard_assign_backward(ss, HardMode::heaviside, sigma, u).data(), score.data()));
}

void check_activation(Rng& rng, Tally& tally, ActivationKind kind) {
  ActivationLayer layer(kind, 1.0, 1.0);
  const Shape shape{uniform_int(rng, 1, 6)};
  Tensor x = gaussian_tensor(rng, shape);
  for (auto& v : x.data()) {
    if (std::abs(v) < 1e-3) v = 0.5;  // keep relu off its kink
  }
  const Tensor u = gaussian_tensor(rng, shape);
  const Tensor y = layer.forward(x);
  tally.add(std::string("activation[") + to_string(kind) + "]",
            gradcheck([&](std::span<const double> p) { return inner(u.data(), layer.forward(Tensor(shape, {p.begin(), p.end()})).data()); },
                      layer.backward(x, y, u).data(), x.data()));
}

void check_proto_conv(Rng& rng, Tally& tally, bool radii) {
  const std::size_t c = uniform_int(rng, 1, 2);
  const Extent2 k{uniform_int(rng, 1, 3), uniform_int(rng, 1, 3)};
  const Shape ishape{uniform_int(rng, k.rows, 6), uniform_int(rng, k.cols, 6), c};
  KernelPrototypeBank bank;
  bank.kernels = gaussian_tensor(rng, {uniform_int(rng, 1, 4), k.rows, k.cols, c});
  bank.stride = {uniform_int(rng, 1, 2), uniform_int(rng, 1, 2)};
  bank.padding = uniform_int(rng, 0, 1) ? Padding::same : Padding::valid;
  if (radii) {
    std::uniform_real_distribution<double> pos(0.5, 3.0);
    std::vector<double> r(bank.size());
    for (auto& v : r) v = pos(rng);
    bank.radii_sq = r;
  }
  const Tensor image = gaussian_tensor(rng, ishape);
  const Tensor probe = proto_conv_output(image, bank).values;
  const Tensor u = gaussian_tensor(rng, probe.shape());
  const auto g = proto_conv_backward(image, bank, u);
  const std::string name = radii ? "proto_conv_backward[radii]" : "proto_conv_backward";

  tally.add(name + " d/dimage", gradcheck(
                                    [&](std::span<const double> p) {
                                      return inner(u.data(), proto_conv_output(Tensor(ishape, {p.begin(), p.end()}), bank).values.data());
                                    },
                                    g.input.data(), image.data()));
  tally.add(name + " d/dkernels", gradcheck(
                                      [&](std::span<const double> p) {
                                        KernelPrototypeBank b = bank;
                                        b.kernels = Tensor(bank.kernels.shape(), {p.begin(), p.end()});
                                        return inner(u.data(), proto_conv_output(image, b).values.data());
                                      },
                                      g.kernels.data(), bank.kernels.data()));
  if (radii) {
    tally.add(name + " d/dradii", gradcheck(
                                      [&](std::span<const double> p) {
                                        KernelPrototypeBank b = bank;
                                        b.radii_sq = std::vector<double>(p.begin(), p.end());
                                        return inner(u.data(), proto_conv_output(image, b).values.data());
                                      },
                                      *g.radii_sq, *bank.radii_sq));
  }
}

}  // namespace

std::vector<OpReport> run_gradient_suite(std::uint64_t seed, std::size_t points) {
  Rng rng(seed);
  Tally tally;
  for (std::size_t i = 0; i < points; ++i) {
    check_response(rng, tally, DissimilarityKind::euclidean, Activation::identity);
    check_response(rng, tally, DissimilarityKind::omega, Activation::identity);
    check_response(rng, tally, DissimilarityKind::projection, Activation::identity);
    for (auto a : {Activation::identity, Activation::relu, Activation::sigmoid}) {
      check_response(rng, tally, DissimilarityKind::nonlinear_projection, a);
    }
    check_losses(rng, tally);
    check_assignments(rng, tally);
    for (auto a : {ActivationKind::identity, ActivationKind::relu, ActivationKind::sigmoid}) check_activation(rng, tally, a);
    check_proto_conv(rng, tally, false);
    check_proto_conv(rng, tally, true);
  }
  return tally.take();
}

namespace {

// Random subset of coordinates so large parameters stay cheap to check.
std::vector<std::size_t> pick_coords(Rng& rng, std::size_t n, std::size_t max) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(max);
  std::sort(idx.begin(), idx.end());
  return idx;
}

void corrupt(std::vector<double>& g, double fault) {
  if (fault <= 0.0) return;
  for (auto& v : g) v += fault * (std::abs(v) + 1.0);
}

// Per-pair prototype response in long double.
std::vector<long double> extended_response(std::span<const double> x, const PrototypeSet& protos,
                                           const DissimilaritySpec& spec) {
  using ld = long double;
  std::vector<ld> z(x.begin(), x.end());
  if (spec.kind == DissimilarityKind::projection || spec.kind == DissimilarityKind::nonlinear_projection) {
    const Tensor& om = spec.omega;
    std::vector<ld> t(om.rows(), 0.0L);
    for (std::size_t i = 0; i < om.rows(); ++i) {
      for (std::size_t j = 0; j < om.cols(); ++j) t[i] += static_cast<ld>(om.at(i, j)) * z[j];
    }
    if (spec.kind == DissimilarityKind::nonlinear_projection) {
      for (std::size_t i = 0; i < t.size(); ++i) {
        const ld a = t[i] - static_cast<ld>(spec.bias[i]);
        switch (spec.activation) {
          case Activation::identity: t[i] = a; break;
          case Activation::relu: t[i] = a > 0 ? a : 0.0L; break;
          case Activation::sigmoid: t[i] = 1.0L / (1.0L + std::exp(-a)); break;
        }
      }
    }
    z = std::move(t);
  }
  std::vector<ld> out(protos.size());
  for (std::size_t k = 0; k < protos.size(); ++k) {
    const auto w = protos.prototype(k);
    ld d = 0.0L;
    if (spec.kind == DissimilarityKind::omega) {
      const Tensor& om = spec.omega;
      for (std::size_t i = 0; i < om.rows(); ++i) {
        ld p = 0.0L;
        for (std::size_t j = 0; j < om.cols(); ++j) p += static_cast<ld>(om.at(i, j)) * (z[j] - static_cast<ld>(w[j]));
        d += p * p;
      }
    } else {
      for (std::size_t i = 0; i < z.size(); ++i) {
        const ld e = z[i] - static_cast<ld>(w[i]);
        d += e * e;
      }
    }
    out[k] = d;
  }
  return out;
}

}  // namespace

std::vector<OpReport> check_network(Network& net, const Dataset& data, LossKind loss, std::uint64_t seed,
                                    const NetworkCheckOptions& options) {
  if (data.size() == 0) throw DataError("gradcheck: empty dataset");
  Rng rng(seed);
  Tally tally;

  std::vector<std::pair<ProtoConvLayer*, bool>> ng;
  for (std::size_t i = 0; i < net.size(); ++i) {
    if (auto* pc = dynamic_cast<ProtoConvLayer*>(&net.layer(i))) {
      ng.emplace_back(pc, pc->neural_gas.enabled);
      pc->neural_gas.enabled = false;
    }
  }

  const auto labels = net.head().labels();
  for (std::size_t point = 0; point < options.points; ++point) {
    const std::size_t s = uniform_int(rng, 0, data.size() - 1);
    const auto acts = net.forward(data.sample(s));
    for (std::size_t i = 0; i < net.size(); ++i) {
      Layer& layer = net.layer(i);
      const Tensor& x = acts[i];
      const Tensor u = gaussian_tensor(rng, acts[i + 1].shape());
      const std::string prefix = "layer" + std::to_string(i) + " " + layer.describe();

      // hard assignments are piecewise constant; check their surrogate instead
      const auto* act = dynamic_cast<const ActivationLayer*>(&layer);
      std::function<Tensor(const Tensor&)> fwd = [&](const Tensor& t) { return layer.forward(t); };
      const auto* head = dynamic_cast<const LvqHeadLayer*>(&layer);
      if (act && act->kind() == ActivationKind::hard_onehot) {
        fwd = [&, sigma = act->sigma()](const Tensor& t) {
          return soft_assign_softmax({t, StackKind::distance}, sigma).values;
        };
      } else if (act && act->kind() == ActivationKind::hard_heaviside) {
        fwd = [&, sigma = act->sigma()](const Tensor& t) {
          return soft_assign_sigmoid({t, StackKind::nball_score}, sigma).values;
        };
      }

      for (auto* p : layer.parameters()) p->zero_grad();
      const Tensor gx = layer.backward(x, acts[i + 1], u);
      // <u, y(p) - y(x)>: outputs untouched by a probe cancel exactly, so the
      // rounding noise does not scale with the size of the whole output
      // The head is probed in long double: a near-zero feature leaves its
      // column of Omega nearly inert and the signal would sink below double
      // rounding of the distances.
      std::function<double(const Tensor&)> probe_value;
      if (head) {
        const auto y0 = extended_response(x.data(), head->prototypes(), head->spec());
        probe_value = [&, head, y0](const Tensor& t) {
          const auto y = extended_response(t.data(), head->prototypes(), head->spec());
          long double s = 0.0L;
          for (std::size_t j = 0; j < y.size(); ++j) s += static_cast<long double>(u[j]) * (y[j] - y0[j]);
          return static_cast<double>(s);
        };
      } else {
        probe_value = [&, y0 = fwd(x)](const Tensor& t) {
          const Tensor y = fwd(t);
          double s = 0.0;
          for (std::size_t j = 0; j < y.size(); ++j) s += u[j] * (y[j] - y0[j]);
          return s;
        };
      }

      {
        const auto coords = pick_coords(rng, x.size(), options.max_coords);
        std::vector<double> point_v, analytic;
        for (auto c : coords) {
          point_v.push_back(x[c]);
          analytic.push_back(gx[c]);
        }
        corrupt(analytic, options.fault);
        Tensor probe = x;
        tally.add(prefix + " d/dinput", gradcheck(
                                            [&](std::span<const double> p) {
                                              for (std::size_t j = 0; j < coords.size(); ++j) probe[coords[j]] = p[j];
                                              return probe_value(probe);
                                            },
                                            analytic, point_v));
      }

      for (auto* p : layer.parameters()) {
        const auto coords = pick_coords(rng, p->value.size(), options.max_coords);
        const Tensor original = p->value;
        std::vector<double> point_v, analytic;
        for (auto c : coords) {
          point_v.push_back(original[c]);
          analytic.push_back(p->grad[c]);
        }
        corrupt(analytic, options.fault);
        const auto r = gradcheck(
            [&](std::span<const double> q) {
              for (std::size_t j = 0; j < coords.size(); ++j) p->value[coords[j]] = q[j];
              layer.parameters_updated();
              return probe_value(x);
            },
            analytic, point_v);
        p->value = original;
        layer.parameters_updated();
        tally.add(prefix + " d/d" + p->name, r);
      }
      for (auto* p : layer.parameters()) p->zero_grad();
    }

    const Tensor& d = acts.back();
    auto analytic = sample_loss_backward(loss, d.data(), labels, data.labels[s]);
    corrupt(analytic, options.fault);
    tally.add(std::string("loss[") + to_string(loss) + "]",
              gradcheck([&](std::span<const double> p) { return sample_loss(loss, p, labels, data.labels[s]); }, analytic,
                        d.data()));
  }

  for (auto& [pc, enabled] : ng) pc->neural_gas.enabled = enabled;
  return tally.take();
}

}  // namespace protolayer
