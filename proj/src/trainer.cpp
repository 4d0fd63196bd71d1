#include "protolayer/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "protolayer/errors.hpp"
#include "protolayer/train_kit.hpp"

namespace protolayer {

DataSplits load_datasets(const RunConfig& config) {
  const auto& d = config.dataset;
  if (d.kind == DatasetKind::synthetic_blobs) {
    const auto& b = d.blobs;
    return {gen_blobs(b.n_classes, b.train_per_class, b.dim, b.spread, config.seed, 0),
            gen_blobs(b.n_classes, b.test_per_class, b.dim, b.spread, config.seed, 1)};
  }
  const auto& x = d.idx;
  return {load_idx(x.train_images, x.train_labels, x.train_limit, config.seed),
          load_idx(x.test_images, x.test_labels, x.test_limit, derive_seed(config.seed, 1))};
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{seed, a, b, std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  return rng();
}

namespace {

std::vector<int> distinct_sorted(std::span<const int> labels) {
  std::set<int> s(labels.begin(), labels.end());
  return {s.begin(), s.end()};
}

std::string layer_name(std::size_t i) { return "layer" + std::to_string(i); }

Tensor shape_tensor(const Shape& shape) {
  std::vector<double> v(shape.begin(), shape.end());
  return Tensor::vector(std::move(v));
}

Shape tensor_shape(const Tensor& t, const std::string& what) {
  Shape s;
  for (double v : t.data()) {
    if (!(v >= 1.0) || v != std::floor(v)) throw FormatError("checkpoint entry '" + what + "' is not a shape");
    s.push_back(static_cast<std::size_t>(v));
  }
  return s;
}

// Outputs of the layers before `end`, for one sample.
Tensor prefix_forward(const Network& net, std::size_t end, const Tensor& sample) {
  Tensor x = sample;
  for (std::size_t i = 0; i < end; ++i) x = net.layer(i).forward(x);
  return x;
}

std::vector<std::size_t> seeded_permutation(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

// Windows (rows) of the inputs seen by proto_conv layer `index`, taken from
// the first `count` images of a seeded permutation.
Tensor window_pool(const Network& net, std::size_t index, const ProtoConvLayer& layer, const Dataset& train,
                   std::size_t count, std::uint64_t seed) {
  const auto order = seeded_permutation(train.size(), seed);
  count = std::min(count, order.size());
  const auto b = layer.bank();
  std::vector<double> rows;
  std::size_t n_rows = 0;
  for (std::size_t s = 0; s < count; ++s) {
    const Tensor x = prefix_forward(net, index, train.sample(order[s]));
    const auto w = extract_windows(x, b.extent(), b.stride, b.padding);
    rows.insert(rows.end(), w.rows.data().begin(), w.rows.data().end());
    n_rows += w.n_positions();
  }
  return Tensor({n_rows, b.window_len()}, std::move(rows));
}

double median(std::vector<double> v) {
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

void init_proto_conv(Network& net, std::size_t index, ProtoConvLayer& layer, const ProtoConvConfig& cfg,
                     const Dataset& train, std::uint64_t seed) {
  const Tensor pool = window_pool(net, index, layer, train, cfg.init_samples, derive_seed(seed, 1));
  const std::size_t n = layer.bank().size();
  Tensor centers = cfg.init == InitKind::kmeans ? init_kmeans(pool, n, cfg.kmeans_iters, derive_seed(seed, 2)).centers.weights()
                                                : init_from_samples(pool, {}, n, derive_seed(seed, 2)).weights();
  layer.set_kernels(centers.reshaped(layer.bank().kernels.shape()));
  if (!layer.has_radii()) return;

  double r = 0.0;
  if (cfg.radius_init) {
    r = *cfg.radius_init;
  } else {
    std::vector<double> nearest(pool.rows());
    for (std::size_t i = 0; i < pool.rows(); ++i) {
      double best = squared_distance(pool.row(i), centers.row(0));
      for (std::size_t k = 1; k < centers.rows(); ++k) best = std::min(best, squared_distance(pool.row(i), centers.row(k)));
      nearest[i] = best;
    }
    r = median(std::move(nearest));
  }
  layer.set_radii(std::vector<double>(n, r));
}

constexpr std::size_t kHeadInitPool = 2000;

void init_head(Network& net, LvqHeadLayer& head, const LvqHeadConfig& cfg, const Dataset& train, std::uint64_t seed) {
  const auto& spec = head.spec();
  const std::size_t n = head.input_dim();
  if (spec.has_omega()) {
    const std::size_t m = spec.omega.rows();
    Tensor omega({m, n});
    if (m == n) {
      for (std::size_t i = 0; i < n; ++i) omega.at(i, i) = 1.0;
    } else {
      std::mt19937_64 rng(derive_seed(seed, 1));
      std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(n)));
      for (auto& v : omega.data()) v = normal(rng);
    }
    head.set_omega(omega);
  }

  // Features of a seeded subset of the training data, as the prototypes see them.
  const auto order = seeded_permutation(train.size(), derive_seed(seed, 2));
  const std::size_t count = std::min(order.size(), kHeadInitPool);
  const std::size_t pdim = head.prototypes().dim();
  Tensor features({count, pdim});
  std::vector<int> labels(count);
  const std::size_t head_index = net.size() - 1;
  for (std::size_t s = 0; s < count; ++s) {
    const Tensor x = prefix_forward(net, head_index, train.sample(order[s]));
    const bool input_space = spec.kind == DissimilarityKind::euclidean || spec.kind == DissimilarityKind::omega;
    const auto z = input_space ? std::vector<double>(x.data().begin(), x.data().end()) : transform_input(x.data(), head.spec());
    std::copy(z.begin(), z.end(), features.row(s).begin());
    labels[s] = train.labels[order[s]];
  }
  auto protos = init_from_samples(features, labels, cfg.per_class, derive_seed(seed, 3));
  if (protos.labels() != head.labels()) {
    throw DataError("lvq_head init: sampled classes differ from the training classes");
  }
  head.set_prototypes(protos.weights());
}

}  // namespace

Network assemble_network(const RunConfig& config, const Shape& sample_shape, const std::vector<int>& classes) {
  if (classes.empty()) throw DataError("training data has no labels");
  Network net;
  Shape shape = sample_shape;
  SignalKind kind = SignalKind::features;
  for (std::size_t i = 0; i < config.model.size(); ++i) {
    const auto& lc = config.model[i];
    std::unique_ptr<Layer> layer;
    if (const auto* c = std::get_if<ProtoConvConfig>(&lc)) {
      if (shape.size() != 3) {
        throw ShapeError("layer " + std::to_string(i) + ": proto_conv needs {rows, cols, channels} input, got " +
                         shape_to_string(shape));
      }
      auto pc = std::make_unique<ProtoConvLayer>(c->prototypes, c->kernel, c->stride, c->padding, c->radii, shape[2]);
      if (c->neural_gas) {
        pc->neural_gas.enabled = true;
        pc->neural_gas.schedule = *c->neural_gas;
      }
      pc->l1_radii = c->l1_radii;
      layer = std::move(pc);
    } else if (const auto* c = std::get_if<ActivationConfig>(&lc)) {
      layer = std::make_unique<ActivationLayer>(c->function, c->sigma, c->sigma_decay);
    } else {
      const auto& h = std::get<LvqHeadConfig>(lc);
      std::vector<int> labels;
      for (int c : classes) labels.insert(labels.end(), h.per_class, c);
      layer = std::make_unique<LvqHeadLayer>(h.dissimilarity, shape_product(shape), h.projection_dim, h.activation,
                                             std::move(labels));
    }
    try {
      const auto out = layer->output_shape({shape, kind});
      shape = out.shape;
      kind = out.kind;
    } catch (const ShapeError& e) {
      throw ShapeError("layer " + std::to_string(i) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw ConfigError("layer " + std::to_string(i) + ": " + e.what());
    }
    net.add(std::move(layer));
  }
  net.check(sample_shape);
  return net;
}

void initialize_network(Network& net, const RunConfig& config, const Dataset& train) {
  for (std::size_t i = 0; i < net.size(); ++i) {
    const auto seed = derive_seed(config.seed, 100 + i);
    if (auto* pc = dynamic_cast<ProtoConvLayer*>(&net.layer(i))) {
      init_proto_conv(net, i, *pc, std::get<ProtoConvConfig>(config.model[i]), train, seed);
    } else if (auto* head = dynamic_cast<LvqHeadLayer*>(&net.layer(i))) {
      init_head(net, *head, std::get<LvqHeadConfig>(config.model[i]), train, seed);
    }
  }
}

Network build_network(const RunConfig& config, const Dataset& train) {
  Network net = assemble_network(config, train.sample_shape, distinct_sorted(train.labels));
  initialize_network(net, config, train);
  return net;
}

Tensor head_responses(const Network& net, const Dataset& data) {
  const std::size_t nw = net.head().prototypes().size();
  Tensor out({std::max<std::size_t>(data.size(), 1), nw});
  if (data.size() == 0) throw DataError("empty dataset");
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Tensor d = prefix_forward(net, net.size(), data.sample(i));
    std::copy(d.data().begin(), d.data().end(), out.row(i).begin());
  }
  return out;
}

double sample_loss(LossKind loss, std::span<const double> d, std::span<const int> labels, int true_class) {
  return loss == LossKind::glvq ? glvq_loss(d, labels, true_class) : rslvq_loss(d, labels, true_class);
}

std::vector<double> sample_loss_backward(LossKind loss, std::span<const double> d, std::span<const int> labels,
                                         int true_class) {
  return loss == LossKind::glvq ? glvq_backward(d, labels, true_class) : rslvq_backward(d, labels, true_class);
}

RejectPolicy make_reject_policy(const RejectConfig& reject, const Tensor& train_responses,
                                std::span<const int> train_labels, std::span<const int> prototype_labels) {
  switch (reject.kind) {
    case RejectKind::none: return RejectPolicy::none();
    case RejectKind::cost_ratio: return RejectPolicy::cost_ratio(reject.lambda_error, reject.lambda_reject);
    case RejectKind::nball:
      if (reject.radii_sq) {
        auto radii = *reject.radii_sq;
        if (radii.size() == 1) radii.assign(prototype_labels.size(), radii[0]);
        if (radii.size() != prototype_labels.size()) {
          throw ConfigError("reject.radii_sq: " + std::to_string(radii.size()) + " radii for " +
                            std::to_string(prototype_labels.size()) + " prototypes");
        }
        return RejectPolicy::nball(std::move(radii));
      }
      return RejectPolicy::nball(calibrate_nball_radii(train_responses, train_labels, prototype_labels, reject.quantile));
  }
  return RejectPolicy::none();
}

Evaluation evaluate_responses(const Tensor& responses, std::span<const int> labels, std::span<const int> prototype_labels,
                              LossKind loss, const RejectPolicy& policy) {
  if (responses.rank() != 2 || responses.rows() != labels.size() || responses.cols() != prototype_labels.size()) {
    throw ShapeError("evaluate: responses must be samples x prototypes");
  }
  Evaluation ev;
  ev.samples = labels.size();
  ev.true_classes = distinct_sorted(labels);
  ev.predicted_classes = distinct_sorted(prototype_labels);
  const std::set<int> known(ev.predicted_classes.begin(), ev.predicted_classes.end());
  std::map<int, std::size_t> row_of, col_of;
  for (std::size_t i = 0; i < ev.true_classes.size(); ++i) row_of[ev.true_classes[i]] = i;
  for (std::size_t i = 0; i < ev.predicted_classes.size(); ++i) col_of[ev.predicted_classes[i]] = i;
  ev.confusion.assign(ev.true_classes.size(), std::vector<std::size_t>(ev.predicted_classes.size() + 1, 0));

  const bool probs = policy.kind == RejectKind::cost_ratio;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto d = responses.row(i);
    if (known.count(labels[i])) {
      loss_sum += sample_loss(loss, d, prototype_labels, labels[i]);
      ++loss_count;
    }
    const auto dec = apply_reject(decide(d, prototype_labels, probs), policy);
    auto& row = ev.confusion[row_of[labels[i]]];
    if (dec.rejected()) {
      ++row.back();
      continue;
    }
    ++row[col_of[dec.predicted_class]];
    ++ev.accepted;
    if (dec.predicted_class == labels[i]) ++ev.correct;
  }
  ev.loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
  ev.accuracy = ev.accepted ? static_cast<double>(ev.correct) / static_cast<double>(ev.accepted) : 0.0;
  ev.reject_rate = static_cast<double>(ev.samples - ev.accepted) / static_cast<double>(ev.samples);
  return ev;
}

Evaluation evaluate(const Network& net, const Dataset& data, LossKind loss, const RejectPolicy& policy) {
  return evaluate_responses(head_responses(net, data), data.labels, net.head().labels(), loss, policy);
}

Checkpoint make_checkpoint(const Network& net, const Shape& sample_shape, const RejectPolicy& policy) {
  Checkpoint ck;
  ck.put("input_shape", shape_tensor(sample_shape));
  for (std::size_t i = 0; i + 1 < net.size(); ++i) {
    if (const auto* pc = dynamic_cast<const ProtoConvLayer*>(&net.layer(i))) {
      const auto b = pc->bank();
      ck.put(layer_name(i) + ".kernels", b.kernels);
      if (b.radii_sq) ck.put(layer_name(i) + ".radii_sq", Tensor::vector(*b.radii_sq));
    }
  }
  const auto& head = net.head();
  ck.put("head.kind", Tensor::vector({static_cast<double>(head.spec().kind)}));
  ck.put("head.input_shape", shape_tensor(net.check(sample_shape)[net.size() - 1].shape));
  ck.put("head.prototypes", head.prototypes().weights());
  std::vector<double> labels(head.labels().begin(), head.labels().end());
  ck.put("head.labels", Tensor::vector(std::move(labels)));
  if (head.spec().has_omega()) ck.put("head.omega", head.spec().omega);
  if (head.spec().has_bias()) ck.put("head.bias", Tensor::vector(head.spec().bias));
  if (policy.kind == RejectKind::nball) ck.put("reject.radii_sq", Tensor::vector(policy.radii_sq));
  return ck;
}

namespace {

void expect_shape(const Tensor& got, const Shape& want, const std::string& name) {
  if (got.shape() != want) {
    throw FormatError("incompatible checkpoint: '" + name + "' has shape " + shape_to_string(got.shape()) +
                      ", the configured model needs " + shape_to_string(want));
  }
}

}  // namespace

void load_checkpoint(Network& net, const Checkpoint& ck) {
  for (std::size_t i = 0; i + 1 < net.size(); ++i) {
    auto* pc = dynamic_cast<ProtoConvLayer*>(&net.layer(i));
    if (!pc) continue;
    const auto name = layer_name(i);
    const auto& k = ck.get(name + ".kernels");
    expect_shape(k, pc->bank().kernels.shape(), name + ".kernels");
    pc->set_kernels(k);
    if (pc->has_radii()) {
      const auto& r = ck.get(name + ".radii_sq");
      expect_shape(r, {pc->bank().size()}, name + ".radii_sq");
      pc->set_radii(r.values());
    } else if (ck.contains(name + ".radii_sq")) {
      throw FormatError("incompatible checkpoint: '" + name + ".radii_sq' present but the layer has no radii");
    }
  }
  auto& head = net.head();
  const double kind = ck.get("head.kind")[0];
  if (kind != static_cast<double>(head.spec().kind)) {
    throw FormatError("incompatible checkpoint: head dissimilarity differs from the configured " +
                      std::string(to_string(head.spec().kind)));
  }
  const auto& labels = ck.get("head.labels");
  std::vector<int> want(head.labels().begin(), head.labels().end());
  std::vector<int> got;
  for (double v : labels.data()) got.push_back(static_cast<int>(v));
  if (got != want) throw FormatError("incompatible checkpoint: prototype labels differ from the configured head");
  const auto& w = ck.get("head.prototypes");
  expect_shape(w, head.prototypes().weights().shape(), "head.prototypes");
  if (head.spec().has_omega()) {
    const auto& om = ck.get("head.omega");
    expect_shape(om, head.spec().omega.shape(), "head.omega");
    head.set_omega(om);
  }
  if (head.spec().has_bias()) {
    const auto& b = ck.get("head.bias");
    expect_shape(b, {head.spec().bias.size()}, "head.bias");
    head.set_bias(b.values());
  }
  head.set_prototypes(w);
}

Network network_from_checkpoint(const RunConfig& config, const Checkpoint& ck) {
  const Shape sample_shape = tensor_shape(ck.get("input_shape"), "input_shape");
  // Head labels come in per_class runs of each class.
  std::vector<int> classes;
  for (double v : ck.get("head.labels").data()) {
    const int c = static_cast<int>(v);
    if (classes.empty() || classes.back() != c) classes.push_back(c);
  }
  Network net;
  try {
    net = assemble_network(config, sample_shape, classes);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("incompatible checkpoint: ") + e.what());
  }
  load_checkpoint(net, ck);
  return net;
}

RejectPolicy checkpoint_reject_policy(const RunConfig& config, const Checkpoint& ck, const Network& net) {
  const auto& r = config.reject;
  if (r.kind == RejectKind::nball && !r.radii_sq) {
    if (!ck.contains("reject.radii_sq")) {
      throw FormatError("checkpoint has no calibrated reject radii; give reject.radii_sq in the config");
    }
    const auto& radii = ck.get("reject.radii_sq");
    expect_shape(radii, {net.head().prototypes().size()}, "reject.radii_sq");
    return RejectPolicy::nball(radii.values());
  }
  // nothing left to calibrate
  return make_reject_policy(r, Tensor(), {}, net.head().labels());
}

std::string to_csv_row(const MetricsRecord& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu,%s,%.17g,%.17g,%.17g,%.3f", r.epoch, r.split.c_str(), r.loss, r.accuracy,
                r.reject_rate, r.wall_time_s);
  return buf;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write metrics '" + path.string() + "'");
  out << kMetricsHeader << '\n';
  for (const auto& r : records) out << to_csv_row(r) << '\n';
}

namespace {

// Names the first stage whose output went non-finite for this sample.
[[noreturn]] void report_nan(const Network& net, const std::vector<Tensor>& acts, std::size_t epoch) {
  for (std::size_t i = 1; i < acts.size(); ++i) {
    if (!acts[i].all_finite()) {
      throw NumericError("non-finite output of layer " + std::to_string(i - 1) + " (" + net.layer(i - 1).describe() +
                         ") in epoch " + std::to_string(epoch));
    }
  }
  throw NumericError("non-finite loss after layer " + std::to_string(net.size() - 1) + " (" +
                     net.layer(net.size() - 1).describe() + ") in epoch " + std::to_string(epoch));
}

}  // namespace

namespace {

void require_finite(const Dataset& ds, const char* split) {
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.inputs.row(i)) {
      if (!std::isfinite(v)) throw DataError(std::string(split) + " sample " + std::to_string(i) + " has a non-finite value");
    }
  }
}

}  // namespace

TrainResult train(const RunConfig& config, const DataSplits& data, const TrainOptions& options) {
  require_finite(data.train, "train");
  require_finite(data.test, "test");
  const auto start = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count(); };

  TrainResult result{build_network(config, data.train), {}, {}, {}};
  Network& net = result.network;
  const auto proto_labels = net.head().labels();

  auto record = [&](std::size_t epoch) {
    const Tensor train_d = head_responses(net, data.train);
    result.reject = make_reject_policy(config.reject, train_d, data.train.labels, proto_labels);
    const auto tr = evaluate_responses(train_d, data.train.labels, proto_labels, config.loss, result.reject);
    const auto te = evaluate(net, data.test, config.loss, result.reject);
    for (const auto& [split, ev] : {std::pair{"train", tr}, std::pair{"test", te}}) {
      MetricsRecord m{epoch, split, ev.loss, ev.accuracy, ev.reject_rate, elapsed()};
      result.metrics.push_back(m);
      if (options.on_record) options.on_record(m);
    }
  };

  net.set_epoch(0);
  record(0);

  Adam adam(config.optimizer);
  const std::size_t n = data.train.size();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    net.set_epoch(epoch - 1);
    const auto order = seeded_permutation(n, derive_seed(config.seed, 7, epoch));
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      net.zero_grad();
      for (std::size_t b = begin; b < end; ++b) {
        const std::size_t i = order[b];
        const auto acts = net.forward(data.train.sample(i));
        const auto& d = acts.back();
        const int label = data.train.labels[i];
        const double loss = sample_loss(config.loss, d.data(), proto_labels, label);
        if (!std::isfinite(loss)) report_nan(net, acts, epoch);
        net.backward(acts, Tensor::vector(sample_loss_backward(config.loss, d.data(), proto_labels, label)));
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      for (auto* p : net.parameters()) {
        for (auto& g : p->grad.data()) g *= scale;
      }
      for (std::size_t l = 0; l < net.size(); ++l) {
        auto* pc = dynamic_cast<ProtoConvLayer*>(&net.layer(l));
        if (!pc || pc->l1_radii == 0.0) continue;
        for (auto* p : pc->parameters()) {
          if (p->name != "radii_sq") continue;
          const auto pen = l1_bias_penalty(p->value.data(), pc->l1_radii);
          axpy(1.0, pen.gradient, p->grad.data());
        }
      }
      std::vector<ParameterRef> refs;
      for (auto* p : net.parameters()) refs.push_back({p->name, p->value.data(), p->grad.data(), p->nonnegative});
      adam.step(refs);
      net.parameters_updated();
    }
    record(epoch);
  }
  result.checkpoint = make_checkpoint(net, data.train.sample_shape, result.reject);
  return result;
}

TrainResult train_and_save(const RunConfig& config, const TrainOptions& options) {
  const auto data = load_datasets(config);
  auto result = train(config, data, options);
  std::filesystem::create_directories(config.output_dir);
  write_metrics_csv(config.output_dir / "metrics.csv", result.metrics);
  result.checkpoint.save(config.output_dir / "checkpoint.bin");
  std::ofstream(config.output_dir / "config.json") << dump_config(config) << '\n';
  return result;
}

}  // namespace protolayer
