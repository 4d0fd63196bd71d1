#include "protolayer/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <json.hpp>

#include "protolayer/errors.hpp"

namespace protolayer {

using nlohmann::json;

LossKind parse_loss_kind(const std::string& name) {
  if (name == "glvq") return LossKind::glvq;
  if (name == "rslvq") return LossKind::rslvq;
  throw ConfigError("unknown loss '" + name + "' (expected glvq or rslvq)");
}

const char* to_string(LossKind k) { return k == LossKind::glvq ? "glvq" : "rslvq"; }

namespace {

// Reads the keys of one JSON object and complains about anything left over.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(raw(key), where(key));
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ConfigError(where(key) + ": missing required key");
    return convert<T>(raw(key), where(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(where(it.key()) + ": unknown key");
    }
  }

  template <class T>
  static T convert(const json& v, const std::string& where) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError(where + ": expected true or false");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(where + ": expected a nonnegative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!v.is_number()) throw ConfigError(where + ": expected a number");
      return v.get<double>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ConfigError(where + ": expected a string");
      return v.get<std::string>();
    } else {
      static_assert(sizeof(T) == 0, "unsupported config type");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Rethrows library errors with the key path in front.
template <class Fn>
auto at_key(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::size_t positive(std::size_t v, const std::string& where) {
  if (v == 0) throw ConfigError(where + ": must be >= 1");
  return v;
}

// Either one integer or a [rows, cols] pair.
std::pair<std::size_t, std::size_t> extent_pair(const json& v, const std::string& where) {
  if (v.is_array()) {
    if (v.size() != 2) throw ConfigError(where + ": expected [rows, cols]");
    return {positive(ObjectReader::convert<std::size_t>(v[0], where), where),
            positive(ObjectReader::convert<std::size_t>(v[1], where), where)};
  }
  const auto n = positive(ObjectReader::convert<std::size_t>(v, where), where);
  return {n, n};
}

InitKind parse_init(const std::string& s, const std::string& where) {
  if (s == "samples") return InitKind::samples;
  if (s == "kmeans") return InitKind::kmeans;
  throw ConfigError(where + ": unknown init '" + s + "' (expected samples or kmeans)");
}

Padding parse_padding(const std::string& s, const std::string& where) {
  if (s == "valid") return Padding::valid;
  if (s == "same") return Padding::same;
  throw ConfigError(where + ": unknown padding '" + s + "' (expected valid or same)");
}

DatasetConfig parse_dataset(const json& j) {
  ObjectReader r(j, "dataset");
  DatasetConfig d;
  const auto kind = r.require<std::string>("kind");
  if (kind == "synthetic_blobs") {
    d.kind = DatasetKind::synthetic_blobs;
    auto& b = d.blobs;
    b.n_classes = positive(r.get("n_classes", b.n_classes), r.where("n_classes"));
    b.dim = positive(r.get("dim", b.dim), r.where("dim"));
    b.train_per_class = positive(r.get("train_per_class", b.train_per_class), r.where("train_per_class"));
    b.test_per_class = positive(r.get("test_per_class", b.test_per_class), r.where("test_per_class"));
    b.spread = r.get("spread", b.spread);
    if (!(b.spread > 0.0)) throw ConfigError("dataset.spread: must be positive");
  } else if (kind == "idx_images") {
    d.kind = DatasetKind::idx_images;
    auto& x = d.idx;
    x.train_images = r.require<std::string>("train_images");
    x.train_labels = r.require<std::string>("train_labels");
    x.test_images = r.require<std::string>("test_images");
    x.test_labels = r.require<std::string>("test_labels");
    x.train_limit = r.get("train_limit", x.train_limit);
    x.test_limit = r.get("test_limit", x.test_limit);
  } else {
    throw ConfigError("dataset.kind: unknown dataset kind '" + kind + "' (expected synthetic_blobs or idx_images)");
  }
  r.finish();
  return d;
}

ProtoConvConfig parse_proto_conv(ObjectReader& r) {
  ProtoConvConfig c;
  c.prototypes = positive(r.get("prototypes", c.prototypes), r.where("prototypes"));
  if (r.has("kernel")) {
    const auto [kr, kc] = extent_pair(r.raw("kernel"), r.where("kernel"));
    c.kernel = {kr, kc};
  }
  if (r.has("stride")) {
    const auto [sr, sc] = extent_pair(r.raw("stride"), r.where("stride"));
    c.stride = {sr, sc};
  }
  if (r.has("padding")) c.padding = parse_padding(r.get<std::string>("padding", ""), r.where("padding"));
  c.radii = r.get("radii", c.radii);
  if (r.has("init")) c.init = parse_init(r.get<std::string>("init", ""), r.where("init"));
  c.init_samples = positive(r.get("init_samples", c.init_samples), r.where("init_samples"));
  c.kmeans_iters = positive(r.get("kmeans_iters", c.kmeans_iters), r.where("kmeans_iters"));
  if (r.has("radius_init")) {
    const auto& v = r.raw("radius_init");
    if (v.is_string() && v.get<std::string>() == "median") {
      c.radius_init.reset();
    } else {
      c.radius_init = ObjectReader::convert<double>(v, r.where("radius_init"));
      if (!(*c.radius_init >= 0.0)) throw ConfigError(r.where("radius_init") + ": must be >= 0 or \"median\"");
    }
  }
  if (r.has("neural_gas")) {
    ObjectReader ng(r.raw("neural_gas"), r.where("neural_gas"));
    NeighborhoodSchedule s;
    s.lambda0 = ng.require<double>("lambda");
    s.decay = ng.get("decay", 1.0);
    ng.finish();
    at_key(r.where("neural_gas"), [&] {
      s.validate();
      return 0;
    });
    c.neural_gas = s;
  }
  c.l1_radii = r.get("l1_radii", c.l1_radii);
  if (!(c.l1_radii >= 0.0)) throw ConfigError(r.where("l1_radii") + ": must be >= 0");
  if (c.l1_radii > 0.0 && !c.radii) throw ConfigError(r.where("l1_radii") + ": needs \"radii\": true");
  return c;
}

ActivationConfig parse_activation_layer(ObjectReader& r) {
  ActivationConfig c;
  c.function = at_key(r.where("function"), [&] { return parse_activation_kind(r.require<std::string>("function")); });
  c.sigma = r.get("sigma", c.sigma);
  c.sigma_decay = r.get("sigma_decay", c.sigma_decay);
  if (!(c.sigma > 0.0)) throw ConfigError(r.where("sigma") + ": must be positive");
  if (!(c.sigma_decay > 0.0 && c.sigma_decay <= 1.0)) throw ConfigError(r.where("sigma_decay") + ": must lie in (0, 1]");
  return c;
}

LvqHeadConfig parse_lvq_head(ObjectReader& r) {
  LvqHeadConfig c;
  c.per_class = positive(r.get("per_class", c.per_class), r.where("per_class"));
  if (r.has("dissimilarity")) {
    c.dissimilarity = at_key(r.where("dissimilarity"),
                             [&] { return parse_dissimilarity_kind(r.get<std::string>("dissimilarity", "")); });
  }
  c.projection_dim = r.get("projection_dim", c.projection_dim);
  if (r.has("activation")) {
    c.activation = at_key(r.where("activation"), [&] { return parse_activation(r.get<std::string>("activation", "")); });
  }
  if (r.has("init")) c.init = parse_init(r.get<std::string>("init", ""), r.where("init"));
  if (c.init != InitKind::samples) throw ConfigError(r.where("init") + ": an lvq_head is initialized from samples");
  if (c.projection_dim != 0 && c.dissimilarity == DissimilarityKind::euclidean) {
    throw ConfigError(r.where("projection_dim") + ": the euclidean dissimilarity has no projection");
  }
  if (c.activation != Activation::identity && c.dissimilarity != DissimilarityKind::nonlinear_projection) {
    throw ConfigError(r.where("activation") + ": only used by nonlinear_projection");
  }
  return c;
}

std::vector<LayerConfig> parse_model(const json& j) {
  if (!j.is_array() || j.empty()) throw ConfigError("model: expected a non-empty list of layers");
  std::vector<LayerConfig> layers;
  for (std::size_t i = 0; i < j.size(); ++i) {
    ObjectReader r(j[i], "model[" + std::to_string(i) + "]");
    const auto type = r.require<std::string>("type");
    if (type == "proto_conv") {
      layers.emplace_back(parse_proto_conv(r));
    } else if (type == "activation") {
      layers.emplace_back(parse_activation_layer(r));
    } else if (type == "lvq_head") {
      layers.emplace_back(parse_lvq_head(r));
    } else {
      throw ConfigError(r.where("type") + ": unknown layer type '" + type +
                        "' (expected proto_conv, activation or lvq_head)");
    }
    r.finish();
  }
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    if (std::holds_alternative<LvqHeadConfig>(layers[i])) {
      throw ConfigError("model[" + std::to_string(i) + "]: lvq_head is only allowed as the final layer");
    }
  }
  if (!std::holds_alternative<LvqHeadConfig>(layers.back())) {
    throw ConfigError("model: the final layer must be an lvq_head");
  }
  return layers;
}

AdamConfig parse_optimizer(const json& j) {
  ObjectReader r(j, "optimizer");
  AdamConfig a;
  a.learning_rate = r.get("learning_rate", a.learning_rate);
  a.beta1 = r.get("beta1", a.beta1);
  a.beta2 = r.get("beta2", a.beta2);
  a.epsilon = r.get("epsilon", a.epsilon);
  r.finish();
  at_key("optimizer", [&] {
    a.validate();
    return 0;
  });
  return a;
}

RejectConfig parse_reject(const json& j) {
  ObjectReader r(j, "reject");
  RejectConfig c;
  const auto kind = r.require<std::string>("kind");
  if (kind == "none") {
    c.kind = RejectKind::none;
  } else if (kind == "nball") {
    c.kind = RejectKind::nball;
    if (r.has("radii_sq")) {
      const auto& v = r.raw("radii_sq");
      if (!v.is_array()) throw ConfigError(r.where("radii_sq") + ": expected a list of numbers or \"inf\"");
      std::vector<double> radii;
      for (const auto& e : v) {
        if (e.is_string() && e.get<std::string>() == "inf") {
          radii.push_back(std::numeric_limits<double>::infinity());
        } else {
          radii.push_back(ObjectReader::convert<double>(e, r.where("radii_sq")));
        }
        if (!(radii.back() >= 0.0)) throw ConfigError(r.where("radii_sq") + ": radii must be >= 0");
      }
      c.radii_sq = std::move(radii);
      if (r.has("quantile")) throw ConfigError(r.where("quantile") + ": give either quantile or radii_sq");
    } else {
      c.quantile = r.get("quantile", c.quantile);
      if (!(c.quantile > 0.0 && c.quantile <= 1.0)) throw ConfigError(r.where("quantile") + ": must lie in (0, 1]");
    }
  } else if (kind == "cost_ratio") {
    c.kind = RejectKind::cost_ratio;
    c.lambda_error = r.get("lambda_error", c.lambda_error);
    c.lambda_reject = r.get("lambda_reject", c.lambda_reject);
    at_key("reject", [&] {
      RejectPolicy::cost_ratio(c.lambda_error, c.lambda_reject);
      return 0;
    });
  } else {
    throw ConfigError("reject.kind: unknown reject kind '" + kind + "' (expected none, nball or cost_ratio)");
  }
  r.finish();
  return c;
}

json layer_to_json(const LayerConfig& layer) {
  if (const auto* c = std::get_if<ProtoConvConfig>(&layer)) {
    json j{{"type", "proto_conv"},
           {"prototypes", c->prototypes},
           {"kernel", {c->kernel.rows, c->kernel.cols}},
           {"stride", {c->stride.rows, c->stride.cols}},
           {"padding", c->padding == Padding::same ? "same" : "valid"},
           {"radii", c->radii},
           {"init", c->init == InitKind::kmeans ? "kmeans" : "samples"},
           {"init_samples", c->init_samples},
           {"kmeans_iters", c->kmeans_iters},
           {"l1_radii", c->l1_radii}};
    if (c->radius_init) {
      j["radius_init"] = *c->radius_init;
    } else {
      j["radius_init"] = "median";
    }
    if (c->neural_gas) j["neural_gas"] = {{"lambda", c->neural_gas->lambda0}, {"decay", c->neural_gas->decay}};
    return j;
  }
  if (const auto* c = std::get_if<ActivationConfig>(&layer)) {
    return {{"type", "activation"}, {"function", to_string(c->function)}, {"sigma", c->sigma},
            {"sigma_decay", c->sigma_decay}};
  }
  const auto& c = std::get<LvqHeadConfig>(layer);
  return {{"type", "lvq_head"},
          {"per_class", c.per_class},
          {"dissimilarity", to_string(c.dissimilarity)},
          {"projection_dim", c.projection_dim},
          {"activation", to_string(c.activation)},
          {"init", "samples"}};
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("malformed JSON: ") + e.what());
  }
  ObjectReader r(j, "");
  RunConfig c;
  c.seed = r.get<std::uint64_t>("seed", c.seed);
  if (!r.has("dataset")) throw ConfigError("dataset: missing required key");
  if (!r.has("model")) throw ConfigError("model: missing required key");
  c.dataset = parse_dataset(r.raw("dataset"));
  c.model = parse_model(r.raw("model"));
  if (r.has("loss")) c.loss = at_key("loss", [&] { return parse_loss_kind(r.get<std::string>("loss", "")); });
  if (r.has("optimizer")) c.optimizer = parse_optimizer(r.raw("optimizer"));
  if (r.has("reject")) c.reject = parse_reject(r.raw("reject"));
  c.epochs = r.get("epochs", c.epochs);
  c.batch_size = positive(r.get("batch_size", c.batch_size), "batch_size");
  c.output_dir = r.get<std::string>("output_dir", c.output_dir.string());
  r.finish();
  return c;
}

void apply_seed_override(RunConfig& config) {
  const char* env = std::getenv("PROTOLAYER_SEED");
  if (!env) return;
  errno = 0;
  char* end = nullptr;
  const auto v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0' || std::string(env).find('-') != std::string::npos) {
    throw ConfigError(std::string("PROTOLAYER_SEED: expected a nonnegative integer, got '") + env + "'");
  }
  config.seed = v;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_config(ss.str());
  apply_seed_override(c);
  return c;
}

std::string dump_config(const RunConfig& c) {
  json j;
  j["seed"] = c.seed;
  if (c.dataset.kind == DatasetKind::synthetic_blobs) {
    const auto& b = c.dataset.blobs;
    j["dataset"] = {{"kind", "synthetic_blobs"},        {"n_classes", b.n_classes},
                    {"dim", b.dim},                     {"train_per_class", b.train_per_class},
                    {"test_per_class", b.test_per_class}, {"spread", b.spread}};
  } else {
    const auto& x = c.dataset.idx;
    j["dataset"] = {{"kind", "idx_images"},
                    {"train_images", x.train_images.string()},
                    {"train_labels", x.train_labels.string()},
                    {"test_images", x.test_images.string()},
                    {"test_labels", x.test_labels.string()},
                    {"train_limit", x.train_limit},
                    {"test_limit", x.test_limit}};
  }
  j["model"] = json::array();
  for (const auto& l : c.model) j["model"].push_back(layer_to_json(l));
  j["loss"] = to_string(c.loss);
  j["optimizer"] = {{"learning_rate", c.optimizer.learning_rate},
                    {"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"epsilon", c.optimizer.epsilon}};
  switch (c.reject.kind) {
    case RejectKind::none: j["reject"] = {{"kind", "none"}}; break;
    case RejectKind::nball:
      if (c.reject.radii_sq) {
        json radii = json::array();
        for (double r : *c.reject.radii_sq) {
          if (std::isinf(r)) {
            radii.push_back("inf");
          } else {
            radii.push_back(r);
          }
        }
        j["reject"] = {{"kind", "nball"}, {"radii_sq", radii}};
      } else {
        j["reject"] = {{"kind", "nball"}, {"quantile", c.reject.quantile}};
      }
      break;
    case RejectKind::cost_ratio:
      j["reject"] = {{"kind", "cost_ratio"},
                     {"lambda_error", c.reject.lambda_error},
                     {"lambda_reject", c.reject.lambda_reject}};
      break;
  }
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["output_dir"] = c.output_dir.string();
  return j.dump(2);
}

}  // namespace protolayer
