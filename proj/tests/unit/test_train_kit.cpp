#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "protolayer/data.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/train_kit.hpp"

using namespace protolayer;
using oracle::Vec;

namespace {

bool has_row(const Tensor& data, std::span<const double> row) {
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto r = data.row(i);
    if (std::equal(r.begin(), r.end(), row.begin())) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("init_from_samples") {
  const Tensor one_each = Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6});
  const std::vector<int> labels{2, 0, 1};
  const auto p = init_from_samples(one_each, labels, 1, 11);
  CHECK(p.labels() == std::vector<int>{0, 1, 2});
  CHECK(Vec(p.prototype(0).begin(), p.prototype(0).end()) == Vec{3, 4});
  CHECK(Vec(p.prototype(2).begin(), p.prototype(2).end()) == Vec{1, 2});

  const auto blobs = gen_blobs(3, 40, 4, 1.0, 5);
  const auto a = init_from_samples(blobs.inputs, blobs.labels, 3, 99);
  const auto b = init_from_samples(blobs.inputs, blobs.labels, 3, 99);
  CHECK(a.weights() == b.weights());
  CHECK(a.labels() == b.labels());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(has_row(blobs.inputs, a.prototype(k)));
  const auto c = init_from_samples(blobs.inputs, {}, 5, 1);
  CHECK(c.size() == 5);
  CHECK_FALSE(c.has_labels());

  CHECK_THROWS_AS(init_from_samples(one_each, labels, 2, 1), DataError);
  CHECK_THROWS_AS(init_from_samples(Tensor::matrix(2, 1, {1, 1}), {}, 2, 1), DataError);
  CHECK_THROWS_AS(init_from_samples(one_each, labels, 0, 1), ArgumentError);
}

TEST_CASE("init_kmeans") {
  std::mt19937_64 rng(1);
  const auto data = oracle::random_tensor(rng, {50, 3});
  const auto one = init_kmeans(data, 1, 10, 3);
  Vec mean(3, 0.0);
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 3; ++j) mean[j] += data.at(i, j) / 50.0;
  CHECK(oracle::rel_err(Vec(one.centers.prototype(0).begin(), one.centers.prototype(0).end()), mean) < 1e-14);

  const Tensor pairs = Tensor::matrix(4, 1, {0, 1, 100, 101});
  const auto two = init_kmeans(pairs, 2, 10, 4);
  Vec centers{two.centers.weights()[0], two.centers.weights()[1]};
  std::sort(centers.begin(), centers.end());
  CHECK(centers == Vec{0.5, 100.5});
  CHECK(two.converged);

  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto blobs = gen_blobs(4, 50, 2, 1.0, seed);
    const auto km = init_kmeans(blobs.inputs, 6, 50, seed);
    for (std::size_t i = 1; i < km.errors.size(); ++i) CHECK(km.errors[i] <= km.errors[i - 1] + 1e-12);
    const auto init = init_from_samples(blobs.inputs, {}, 6, seed);
    CHECK(quantization_error(blobs.inputs, km.centers.weights()) <= quantization_error(blobs.inputs, init.weights()));
  }
  CHECK_THROWS_AS(init_kmeans(pairs, 5, 10, 1), DataError);
}

TEST_CASE("neural gas rank weights") {
  const auto w = neural_gas_rank_weights(Vec{3, 1, 2, 1}, 2.0);
  // ranks: index1 -> 0, index3 -> 1 (tie, index order), index2 -> 2, index0 -> 3
  CHECK(w[1] == 1.0);
  CHECK(w[3] == doctest::Approx(std::exp(-0.5)));
  CHECK(w[2] == doctest::Approx(std::exp(-1.0)));
  CHECK(w[0] == doctest::Approx(std::exp(-1.5)));
  const auto sharp = neural_gas_rank_weights(Vec{3, 1, 2}, 1e-3);
  CHECK(sharp[1] == 1.0);
  CHECK(sharp[0] < 1e-300);
  CHECK(sharp[2] < 1e-300);
  CHECK_THROWS_AS(neural_gas_rank_weights(Vec{1}, 0.0), ArgumentError);

  std::mt19937_64 rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto d = oracle::random_vec(rng, 8);
    const auto g = neural_gas_rank_weights(d, 1.5);
    std::vector<std::size_t> order(8);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return d[a] < d[b]; });
    CHECK(g[order[0]] == 1.0);
    for (std::size_t r = 1; r < 8; ++r) {
      CHECK(g[order[r]] < g[order[r - 1]]);
      CHECK(g[order[r]] > 0.0);
    }
  }

  NeighborhoodSchedule s{2.0, 0.5};
  CHECK(s.lambda_at(0) == 2.0);
  CHECK(s.lambda_at(3) == 0.25);
  CHECK_THROWS_AS((NeighborhoodSchedule{1.0, 1.5}.validate()), ConfigError);
  CHECK_THROWS_AS((NeighborhoodSchedule{0.0, 0.5}.validate()), ConfigError);
}

TEST_CASE("l1 bias penalty") {
  CHECK(l1_bias_penalty(Vec{0, 0}, 1.0).value == 0.0);
  const auto p = l1_bias_penalty(Vec{1, 3}, 0.1);
  CHECK(p.value == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(p.gradient == Vec{0.1, 0.1});
  CHECK_THROWS_AS(l1_bias_penalty(Vec{1}, -1.0), ArgumentError);
  CHECK_THROWS_AS(l1_bias_penalty(Vec{-1}, 1.0), ArgumentError);
}

TEST_CASE("debiased moving average") {
  MovingAverage m{0.9};
  CHECK(debiased_average(m, 3.7) == 3.7);
  MovingAverage c{0.99};
  for (int t = 0; t < 200; ++t) CHECK(debiased_average(c, -2.5) == doctest::Approx(-2.5).epsilon(1e-12));

  MovingAverage s{0.99};
  std::mt19937_64 rng(3);
  std::normal_distribution<double> noise(4.0, 1.0);
  double est = 0.0;
  for (int t = 0; t < 2000; ++t) est = debiased_average(s, noise(rng));
  // effective window (1+beta)/(1-beta) = 199
  CHECK(std::abs(est - 4.0) < 3.0 / std::sqrt(199.0));

  MovingAverage bad{1.0};
  CHECK_THROWS_AS(debiased_average(bad, 1.0), ArgumentError);
}

TEST_CASE("adam") {
  Vec p{1.0, -2.0};
  Vec g{0.0, 0.0};
  Adam opt;
  std::vector<ParameterRef> refs{{"p", p, g}};
  for (int i = 0; i < 10; ++i) opt.step(refs);
  CHECK(p == Vec{1.0, -2.0});
  CHECK(opt.steps() == 10);

  // f(p) = p^2
  Vec x{1.0}, gx{0.0};
  Adam descent(AdamConfig{0.01});
  std::vector<ParameterRef> rx{{"x", x, gx}};
  double prev = x[0];
  for (int i = 0; i < 50; ++i) {
    gx[0] = 2 * x[0];
    descent.step(rx);
    CHECK(x[0] < prev);
    prev = x[0];
  }

  // convex toy: f = sum (p_i - c_i)^2 within 2000 steps
  Vec q{5.0, -3.0, 0.5}, gq(3);
  const Vec target{1.0, 2.0, -1.0};
  Adam toy(AdamConfig{0.05});
  std::vector<ParameterRef> rq{{"q", q, gq}};
  for (int i = 0; i < 2000; ++i) {
    for (int j = 0; j < 3; ++j) gq[j] = 2 * (q[j] - target[j]);
    toy.step(rq);
  }
  for (int j = 0; j < 3; ++j) CHECK(std::abs(q[j] - target[j]) < 1e-3);

  Vec r{0.01}, gr{5.0};
  Adam clamp(AdamConfig{0.1});
  std::vector<ParameterRef> rr{{"r", r, gr, true}};
  clamp.step(rr);
  CHECK(r[0] == 0.0);

  Vec short_grad{1.0};
  std::vector<ParameterRef> mismatch{{"p", p, short_grad}};
  CHECK_THROWS_AS(Adam().step(mismatch), ShapeError);
  CHECK_THROWS_AS(AdamConfig{0.0}.validate(), ConfigError);
}

TEST_CASE("gradcheck") {
  const Vec x{1.0, 2.0};
  const auto r = gradcheck([](std::span<const double> v) { return v[0] * v[0] + v[1] * v[1]; }, Vec{2.0, 4.0}, x);
  CHECK(r.max_relative_error < 1e-9);
  const auto lin = gradcheck([](std::span<const double> v) { return 3 * v[0] - 7 * v[1]; }, Vec{3.0, -7.0}, x);
  CHECK(lin.max_relative_error < 1e-9);
  const auto wrong = gradcheck([](std::span<const double> v) { return v[0] * v[0]; }, Vec{3.0, 0.0}, x);
  CHECK(wrong.max_relative_error > 0.1);
  CHECK(wrong.worst_index == 0);
  CHECK_THROWS_AS(gradcheck([](std::span<const double> v) { return std::log(v[0]); }, Vec{1.0}, Vec{0.0}),
                  NumericError);
  CHECK_THROWS_AS(gradcheck([](std::span<const double>) { return 0.0; }, Vec{1.0}, x), ShapeError);
}
