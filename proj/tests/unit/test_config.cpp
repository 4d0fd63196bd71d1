#include <doctest.h>

#include <cstdlib>
#include <json.hpp>
#include <random>

#include "protolayer/config.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/trainer.hpp"

using namespace protolayer;
using nlohmann::json;

namespace {

json base_config() {
  return json::parse(R"({
    "seed": 3,
    "dataset": {"kind": "synthetic_blobs", "n_classes": 2, "dim": 2, "train_per_class": 20, "test_per_class": 5},
    "model": [{"type": "lvq_head"}],
    "epochs": 1
  })");
}

std::string config_error(const json& j) {
  try {
    parse_config(j.dump());
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("minimal config gets the documented defaults") {
  const auto c = parse_config(base_config().dump());
  CHECK(c.seed == 3);
  CHECK(c.loss == LossKind::glvq);
  CHECK(c.batch_size == 32);
  CHECK(c.optimizer.learning_rate == 1e-3);
  CHECK(c.optimizer.beta1 == 0.9);
  CHECK(c.optimizer.beta2 == 0.999);
  CHECK(c.optimizer.epsilon == 1e-8);
  CHECK(c.reject.kind == RejectKind::none);
  REQUIRE(c.model.size() == 1);
  CHECK(std::get<LvqHeadConfig>(c.model[0]).per_class == 1);
  // dump then parse is a fixpoint
  CHECK(dump_config(parse_config(dump_config(c))) == dump_config(c));
}

TEST_CASE("shipped configs parse") {
  for (const char* name : {"configs/blobs_glvq.json", "configs/mnist_rslvq.json"}) {
    const auto path = std::filesystem::path(PROTOLAYER_SOURCE_DIR) / name;
    CHECK_NOTHROW(load_config(path));
  }
  const auto m = load_config(std::filesystem::path(PROTOLAYER_SOURCE_DIR) / "configs/mnist_rslvq.json");
  const auto& pc = std::get<ProtoConvConfig>(m.model[0]);
  CHECK(pc.kernel == Extent2{5, 5});
  CHECK(pc.stride == Stride2{2, 2});
}

TEST_CASE("unknown keys are errors naming the key path") {
  auto j = base_config();
  j["epoch"] = 3;
  CHECK(config_error(j).find("epoch") != std::string::npos);
  j = base_config();
  j["optimizer"] = {{"learning_rat", 0.1}};
  CHECK(config_error(j).find("optimizer.learning_rat") != std::string::npos);
  j = base_config();
  j["model"][0]["per_clas"] = 2;
  CHECK(config_error(j).find("model[0].per_clas") != std::string::npos);
  j = base_config();
  j["dataset"]["train_images"] = "x";
  CHECK_FALSE(config_error(j).empty());
}

TEST_CASE("type and range errors") {
  const std::vector<std::pair<std::string, json>> bad{
      {"/epochs", -1},
      {"/epochs", "ten"},
      {"/batch_size", 0},
      {"/loss", "hinge"},
      {"/dataset/spread", 0.0},
      {"/dataset/kind", "cifar"},
      {"/optimizer", json{{"learning_rate", 0.0}}},
      {"/optimizer", json{{"beta1", 1.0}}},
      {"/reject", json{{"kind", "cost_ratio"}, {"lambda_error", 1.0}, {"lambda_reject", 2.0}}},
      {"/reject", json{{"kind", "nball"}, {"quantile", 1.5}}},
      {"/reject", json{{"kind", "nball"}, {"quantile", 0.9}, {"radii_sq", {1.0}}}},
      {"/reject", json{{"kind", "nball"}, {"radii_sq", {-1.0}}}},
      {"/model/0/dissimilarity", "cosine"},
      {"/model/0/projection_dim", 3},
      {"/model/0/per_class", 0},
      {"/model", json::array()},
  };
  for (const auto& [ptr, value] : bad) {
    auto j = base_config();
    j[json::json_pointer(ptr)] = value;
    CAPTURE(ptr);
    CHECK_FALSE(config_error(j).empty());
  }
  CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"model": [{"type": "lvq_head"}]})"), ConfigError);
}

TEST_CASE("reject radii accept inf") {
  auto j = base_config();
  j["reject"] = {{"kind", "nball"}, {"radii_sq", {"inf", 2.0}}};
  const auto c = parse_config(j.dump());
  REQUIRE(c.reject.radii_sq);
  CHECK(std::isinf((*c.reject.radii_sq)[0]));
  CHECK((*c.reject.radii_sq)[1] == 2.0);
}

TEST_CASE("PROTOLAYER_SEED overrides the config seed") {
  auto c = parse_config(base_config().dump());
  ::setenv("PROTOLAYER_SEED", "12345", 1);
  apply_seed_override(c);
  CHECK(c.seed == 12345);
  ::setenv("PROTOLAYER_SEED", "abc", 1);
  CHECK_THROWS_AS(apply_seed_override(c), ConfigError);
  ::unsetenv("PROTOLAYER_SEED");
  apply_seed_override(c);
  CHECK(c.seed == 12345);
}

// Independent oracle for chain validity, tracking (shape, signal kind) by hand.
namespace {

struct Sim {
  std::vector<std::size_t> shape;
  int kind = 0;  // 0 features, 1 distance, 2 score
};

std::size_t same_out(std::size_t in, std::size_t s) { return (in + s - 1) / s; }

bool simulate(const json& model, Sim s) {
  for (std::size_t i = 0; i < model.size(); ++i) {
    const auto& l = model[i];
    const std::string type = l["type"];
    const bool last = i + 1 == model.size();
    if (type == "lvq_head") return last;
    if (last) return false;
    if (type == "proto_conv") {
      if (s.shape.size() != 3) return false;
      const std::size_t k = l["kernel"], st = l["stride"];
      const bool same = l["padding"] == "same";
      std::size_t out[2];
      for (int a = 0; a < 2; ++a) {
        const std::size_t in = s.shape[a];
        if (same) {
          out[a] = same_out(in, st);
        } else {
          if (k > in) return false;
          out[a] = (in - k) / st + 1;
        }
      }
      s.shape = {out[0], out[1], static_cast<std::size_t>(l["prototypes"])};
      s.kind = l["radii"] ? 2 : 1;
    } else {
      const std::string f = l["function"];
      if (f == "channel_softmax" || f == "hard_onehot") {
        if (s.kind != 1) return false;
        s.kind = 0;
      } else if (f == "possibility_sigmoid" || f == "hard_heaviside") {
        if (s.kind != 2) return false;
        s.kind = 0;
      }
    }
  }
  return false;  // no head at all
}

json random_layer(std::mt19937_64& rng) {
  const int t = static_cast<int>(rng() % 3);
  if (t == 0) return {{"type", "lvq_head"}};
  if (t == 1) {
    const char* fs[] = {"identity", "relu", "sigmoid", "channel_softmax", "possibility_sigmoid", "hard_onehot",
                        "hard_heaviside"};
    return {{"type", "activation"}, {"function", fs[rng() % 7]}};
  }
  return {{"type", "proto_conv"},
          {"prototypes", 1 + rng() % 3},
          {"kernel", 1 + rng() % 7},
          {"stride", 1 + rng() % 3},
          {"padding", rng() % 2 ? "same" : "valid"},
          {"radii", rng() % 2 == 0}};
}

}  // namespace

TEST_CASE("chain fuzz: every malformed chain is refused before any computation") {
  std::mt19937_64 rng(2024);
  std::size_t valid = 0, invalid = 0;
  for (int trial = 0; trial < 1500; ++trial) {
    json model = json::array();
    const std::size_t len = rng() % 5;
    for (std::size_t i = 0; i < len; ++i) model.push_back(random_layer(rng));
    if (rng() % 2 && !model.empty()) model.back() = {{"type", "lvq_head"}};
    const bool flat_input = rng() % 4 == 0;
    const Shape sample = flat_input ? Shape{6} : Shape{6, 5, 2};
    const bool want = !model.empty() && simulate(model, {sample, 0});

    bool ok = true;
    try {
      auto j = base_config();
      j["model"] = model;
      const auto c = parse_config(j.dump());
      assemble_network(c, sample, {0, 1});
    } catch (const ConfigError&) {
      ok = false;
    } catch (const ShapeError&) {
      ok = false;
    }
    CAPTURE(model.dump());
    CHECK(ok == want);
    (want ? valid : invalid) += 1;
  }
  // the generator must exercise both outcomes
  CHECK(valid > 100);
  CHECK(invalid > 100);
}
