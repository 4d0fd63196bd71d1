#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "oracles.hpp"
#include "protolayer/dissimilarity.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/proto_conv.hpp"
#include "protolayer/train_kit.hpp"

using namespace protolayer;
using oracle::Vec;

namespace {

KernelPrototypeBank random_bank(std::mt19937_64& rng, std::size_t n, std::size_t kr, std::size_t kc, std::size_t ch) {
  KernelPrototypeBank b;
  b.kernels = oracle::random_tensor(rng, {n, kr, kc, ch});
  return b;
}

DissimilarityStack stack_of(Vec v, StackKind kind) {
  const std::size_t n = v.size();
  return {Tensor({1, 1, n}, std::move(v)), kind};
}

}  // namespace

TEST_CASE("proto_conv examples") {
  std::mt19937_64 rng(1);
  const auto img = oracle::random_tensor(rng, {6, 5, 2});

  KernelPrototypeBank zero;
  zero.kernels = Tensor({3, 2, 2, 2});
  const auto s = proto_conv(img, zero);
  const auto norms = squared_window_norms(img, {2, 2});
  CHECK(s.kind == StackKind::distance);
  for (std::size_t p = 0; p < s.pixels(); ++p)
    for (std::size_t k = 0; k < 3; ++k) CHECK(s.pixel(p)[k] == doctest::Approx(norms[p]).epsilon(1e-14));

  // kernel equal to the window at output (2, 1)
  KernelPrototypeBank copy;
  const auto win = oracle::all_windows(img, 2, 2, 1, 1, false)[2 * 4 + 1];
  copy.kernels = Tensor({1, 2, 2, 2}, win);
  CHECK(proto_conv(img, copy).values.at(2, 1, 0) == 0.0);

  KernelPrototypeBank wrong;
  wrong.kernels = Tensor({1, 2, 2, 3});
  CHECK_THROWS_AS(proto_conv(img, wrong), ShapeError);
}

TEST_CASE("proto_conv matches windows plus euclidean_sq") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto img = oracle::random_tensor(rng, {8, 8, 2});
    auto bank = random_bank(rng, 5, 3, 3, 2);
    bank.stride = {1 + trial % 2u, 1 + trial % 3u};
    bank.padding = trial % 2 ? Padding::same : Padding::valid;
    const auto s = proto_conv(img, bank);
    const auto windows = oracle::all_windows(img, 3, 3, bank.stride.rows, bank.stride.cols, trial % 2);
    REQUIRE(s.pixels() == windows.size());
    Vec want, got(s.values.values());
    for (const auto& w : windows)
      for (std::size_t k = 0; k < 5; ++k) want.push_back(oracle::sq_dist(w, oracle::row_of(bank.kernels, k)));
    CHECK(oracle::rel_err(got, want) <= 1e-10);
    for (double v : got) CHECK(v >= 0.0);
  }
}

TEST_CASE("1x1 kernels on a 1x1 image reduce to the prototype response") {
  std::mt19937_64 rng(3);
  const std::size_t c = 7, n = 4;
  const auto x = oracle::random_vec(rng, c);
  auto bank = random_bank(rng, n, 1, 1, c);
  const auto s = proto_conv(Tensor({1, 1, c}, x), bank);
  const PrototypeSet protos(bank.kernels.reshaped({n, c}));
  const auto d = response_efficient(x, protos, DissimilaritySpec::euclidean());
  CHECK(oracle::rel_err(s.values.values(), d) <= 1e-12);

  const auto u = oracle::random_vec(rng, n);
  const auto g = proto_conv_backward(Tensor({1, 1, c}, x), bank, Tensor({1, 1, n}, u));
  const auto r = response_backward(x, protos, DissimilaritySpec::euclidean(), u);
  CHECK(oracle::rel_err(g.input.values(), r.input) <= 1e-12);
  CHECK(oracle::rel_err(g.kernels.values(), r.prototypes.values()) <= 1e-12);
}

TEST_CASE("nball_score examples") {
  const auto s = nball_score(stack_of({25, 0}, StackKind::distance), Vec{4, 4});
  CHECK(s.kind == StackKind::nball_score);
  CHECK(s.values[0] == -21.0);
  CHECK(s.values[1] == 4.0);
  CHECK_THROWS_AS(nball_score(s, Vec{4, 4}), ArgumentError);
  CHECK_THROWS_AS(nball_score(stack_of({1, 2}, StackKind::distance), Vec{4}), ShapeError);

  // relu(score): zero outside, at most r^2 inside
  std::mt19937_64 rng(4);
  const auto img = oracle::random_tensor(rng, {5, 5, 1});
  auto bank = random_bank(rng, 3, 2, 2, 1);
  bank.radii_sq = Vec{0.5, 1.0, 2.0};
  const auto d = proto_conv(img, bank);
  const auto sc = proto_conv_output(img, bank);
  CHECK(sc.kind == StackKind::nball_score);
  for (std::size_t p = 0; p < d.pixels(); ++p) {
    for (std::size_t k = 0; k < 3; ++k) {
      const double relu = std::max(0.0, sc.pixel(p)[k]);
      if (d.pixel(p)[k] > (*bank.radii_sq)[k]) CHECK(relu == 0.0);
      CHECK(relu <= (*bank.radii_sq)[k]);
    }
  }
}

TEST_CASE("soft_assign_softmax examples") {
  const auto eq = soft_assign_softmax(stack_of({3, 3, 3, 3}, StackKind::distance), 0.7);
  for (double v : eq.values.values()) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(eq.kind == StackKind::soft_prob);

  const double sigma = 1.3;
  // the temperature is sigma^2
  const auto p = soft_assign_softmax(stack_of({0, sigma * sigma * std::log(3.0)}, StackKind::distance), sigma);
  CHECK(p.values[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p.values[1] == doctest::Approx(0.25).epsilon(1e-14));
  const auto q = soft_assign_softmax(stack_of({0, 2 * sigma * sigma * std::log(3.0)}, StackKind::distance), sigma);
  CHECK(q.values[0] == doctest::Approx(0.9).epsilon(1e-14));

  const auto sharp = soft_assign_softmax(stack_of({0.4, 0.3, 0.9}, StackKind::distance), 1e-3);
  CHECK(sharp.values[1] >= 1 - 1e-9);

  CHECK_THROWS_AS(soft_assign_softmax(stack_of({1}, StackKind::distance), 0.0), ArgumentError);
  CHECK_THROWS_AS(soft_assign_softmax(stack_of({1}, StackKind::distance), -1.0), ArgumentError);
  CHECK_THROWS_AS(soft_assign_softmax(stack_of({1}, StackKind::nball_score), 1.0), ArgumentError);

  std::mt19937_64 rng(5);
  const auto img = oracle::random_tensor(rng, {6, 6, 2});
  const auto s = soft_assign_softmax(proto_conv(img, random_bank(rng, 4, 3, 3, 2)), 0.5);
  for (std::size_t q = 0; q < s.pixels(); ++q) {
    double sum = 0.0;
    for (double v : s.pixel(q)) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("soft_assign_sigmoid examples") {
  const auto s = soft_assign_sigmoid(stack_of({0, 1e6, -3}, StackKind::nball_score), 1.0);
  CHECK(s.kind == StackKind::soft_possibility);
  CHECK(s.values[0] == 0.5);
  CHECK(s.values[1] == 1.0);
  CHECK(s.values[2] == doctest::Approx(oracle::sigmoid(-3)).epsilon(1e-15));
  CHECK_THROWS_AS(soft_assign_sigmoid(stack_of({1}, StackKind::distance), 1.0), ArgumentError);
  CHECK_THROWS_AS(soft_assign_sigmoid(stack_of({1}, StackKind::nball_score), 0.0), ArgumentError);

  std::mt19937_64 rng(6);
  Vec scores = oracle::random_vec(rng, 200, -5, 5);
  std::sort(scores.begin(), scores.end());
  const auto out = soft_assign_sigmoid(stack_of(scores, StackKind::nball_score), 0.8);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (i > 0) CHECK(out.values[i] >= out.values[i - 1]);
    CHECK((out.values[i] > 0.5) == (scores[i] > 0));
  }
}

TEST_CASE("hard_assign examples") {
  const auto one = hard_assign(stack_of({1, 2, 3}, StackKind::distance), HardMode::onehot);
  CHECK(one.kind == StackKind::hard_onehot);
  CHECK(one.values.values() == Vec{1, 0, 0});
  CHECK(hard_assign(stack_of({2, 1, 1}, StackKind::distance), HardMode::onehot).values.values() == Vec{0, 1, 0});
  const auto bin = hard_assign(stack_of({-1, 0, 0.5}, StackKind::nball_score), HardMode::heaviside);
  CHECK(bin.kind == StackKind::hard_binary);
  CHECK(bin.values.values() == Vec{0, 0, 1});
  CHECK_THROWS_AS(hard_assign(stack_of({1}, StackKind::nball_score), HardMode::onehot), ArgumentError);
  CHECK_THROWS_AS(hard_assign(stack_of({1}, StackKind::distance), HardMode::heaviside), ArgumentError);
}

TEST_CASE("hard backward is the soft surrogate gradient") {
  std::mt19937_64 rng(7);
  const auto img = oracle::random_tensor(rng, {5, 5, 1});
  auto bank = random_bank(rng, 3, 2, 2, 1);
  const auto d = proto_conv(img, bank);
  const auto u = oracle::random_tensor(rng, d.values.shape());
  const auto h = hard_assign_backward(d, HardMode::onehot, 0.4, u);
  const auto s = soft_assign_softmax_backward(d, 0.4, u);
  CHECK(h.values() == s.values());

  bank.radii_sq = Vec{1, 1, 1};
  const auto sc = proto_conv_output(img, bank);
  CHECK(hard_assign_backward(sc, HardMode::heaviside, 0.4, u).values() ==
        soft_assign_sigmoid_backward(sc, 0.4, u).values());
  CHECK_THROWS_AS(hard_assign_backward(sc, HardMode::heaviside, 0.0, u), ArgumentError);
}

TEST_CASE("encoding counts: N_W one-hot codes, up to 2^N_W binary codes") {
  // Exhaustive over a grid of 1x1 single-channel pixels: every code reachable
  // by some pixel value is collected.
  for (std::size_t nw = 1; nw <= 3; ++nw) {
    KernelPrototypeBank bank;
    bank.kernels = Tensor({nw, 1, 1, 1});
    for (std::size_t k = 0; k < nw; ++k) bank.kernels[k] = static_cast<double>(k);
    std::set<Vec> onehot;
    for (int i = -40; i <= 80; ++i) {
      const auto d = proto_conv(Tensor({1, 1, 1}, static_cast<double>(i) / 20.0), bank);
      onehot.insert(hard_assign(d, HardMode::onehot).values.values());
    }
    CHECK(onehot.size() == nw);

    // Binary: unit-vector kernels over {-1,1}^nw pixels; ball k contains the
    // pixel iff its coordinate k is +1 (distance nw-1 vs nw+3).
    KernelPrototypeBank cube;
    cube.kernels = Tensor({nw, 1, 1, nw});
    for (std::size_t k = 0; k < nw; ++k) cube.kernels[k * nw + k] = 1.0;
    cube.radii_sq = Vec(nw, static_cast<double>(nw) - 0.5);
    std::set<Vec> binary;
    for (std::size_t mask = 0; mask < (1u << nw); ++mask) {
      Vec px(nw);
      for (std::size_t k = 0; k < nw; ++k) px[k] = (mask >> k) & 1 ? 1.0 : -1.0;
      const auto out = hard_assign(proto_conv_output(Tensor({1, 1, nw}, px), cube), HardMode::heaviside);
      for (double v : out.values.values()) CHECK((v == 0.0 || v == 1.0));
      binary.insert(out.values.values());
    }
    CHECK(binary.size() == (1u << nw));
  }
}

TEST_CASE("softmax approaches onehot as sigma shrinks") {
  std::mt19937_64 rng(8);
  for (int t = 0; t < 200; ++t) {
    Vec d(4);
    double base = 0.0;
    for (auto& v : d) v = (base += 0.1 + std::uniform_real_distribution<double>(0, 1)(rng));
    std::shuffle(d.begin(), d.end(), rng);
    const auto s = stack_of(d, StackKind::distance);
    const auto soft = soft_assign_softmax(s, 1e-3).values.values();
    const auto hard = hard_assign(s, HardMode::onehot).values.values();
    CHECK(oracle::max_abs([&] {
            Vec diff(4);
            for (std::size_t i = 0; i < 4; ++i) diff[i] = soft[i] - hard[i];
            return diff;
          }()) < 1e-6);
  }
}

TEST_CASE("proto_conv_backward") {
  std::mt19937_64 rng(9);
  const auto img = oracle::random_tensor(rng, {5, 4, 2});
  auto bank = random_bank(rng, 3, 2, 2, 2);
  bank.radii_sq = Vec{0.5, 1.0, 1.5};
  const auto shape = proto_conv_output(img, bank).values.shape();

  const auto z = proto_conv_backward(img, bank, Tensor(shape));
  CHECK(oracle::max_abs(z.input.values()) == 0.0);
  CHECK(oracle::max_abs(z.kernels.values()) == 0.0);
  CHECK(oracle::max_abs(*z.radii_sq) == 0.0);

  // radii gradient is the per-channel sum of upstream
  const auto u = oracle::random_tensor(rng, shape);
  const auto g = proto_conv_backward(img, bank, u);
  for (std::size_t k = 0; k < 3; ++k) {
    double s = 0.0;
    for (std::size_t p = 0; p < u.size() / 3; ++p) s += u[p * 3 + k];
    CHECK((*g.radii_sq)[k] == doctest::Approx(s).epsilon(1e-13));
  }

  const auto f_img = [&](std::span<const double> x) {
    return dot(proto_conv_output(Tensor(img.shape(), Vec(x.begin(), x.end())), bank).values.data(), u.data());
  };
  CHECK(gradcheck(f_img, g.input.data(), img.data()).max_relative_error < 1e-5);
  const auto f_k = [&](std::span<const double> k) {
    auto b = bank;
    b.kernels = Tensor(bank.kernels.shape(), Vec(k.begin(), k.end()));
    return dot(proto_conv_output(img, b).values.data(), u.data());
  };
  CHECK(gradcheck(f_k, g.kernels.data(), bank.kernels.data()).max_relative_error < 1e-5);

  // rank weights of one reproduce the plain gradient
  const Tensor ones(shape, 1.0);
  CHECK(proto_conv_backward(img, bank, u, &ones).kernels == g.kernels);
  CHECK_THROWS_AS(proto_conv_backward(img, bank, Tensor({1, 1, 3})), ShapeError);
}

TEST_CASE("clamp_radii and validation") {
  KernelPrototypeBank b;
  b.kernels = Tensor({2, 1, 1, 1});
  b.radii_sq = Vec{-0.5, 2.0};
  b.clamp_radii();
  CHECK(*b.radii_sq == Vec{0.0, 2.0});
  b.radii_sq = Vec{1.0};
  CHECK_THROWS_AS(b.validate(), ShapeError);
  b.radii_sq.reset();
  b.stride = {0, 1};
  CHECK_THROWS_AS(b.validate(), ArgumentError);
}
