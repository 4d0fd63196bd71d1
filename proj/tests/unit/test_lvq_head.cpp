#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "oracles.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/lvq_head.hpp"
#include "protolayer/train_kit.hpp"

using namespace protolayer;
using oracle::Vec;
using Labels = std::vector<int>;

namespace {

std::size_t scan_argmin(const Vec& d) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < d.size(); ++i)
    if (d[i] < d[best]) best = i;
  return best;
}

// d+ and d- by plain scans
std::pair<double, double> dplus_dminus(const Vec& d, const Labels& labels, int y) {
  double p = std::numeric_limits<double>::infinity(), m = p;
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (labels[i] == y) {
      p = std::min(p, d[i]);
    } else {
      m = std::min(m, d[i]);
    }
  }
  return {p, m};
}

// -log of the summed softmax mass of class y, without max-shifting
double rslvq_oracle(const Vec& d, const Labels& labels, int y) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    den += std::exp(-d[i]);
    if (labels[i] == y) num += std::exp(-d[i]);
  }
  return -std::log(num / den);
}

}  // namespace

TEST_CASE("wta examples") {
  CHECK(wta(Vec{3, 1, 2}) == 1);
  CHECK(wta(Vec{5}) == 0);
  CHECK(wta(Vec{2, 1, 1}) == 1);
  CHECK_THROWS_AS(wta(Vec{}), ArgumentError);
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> small(0, 5);
  for (int t = 0; t < 1000; ++t) {
    Vec d(1 + t % 12);
    for (auto& v : d) v = small(rng);  // many ties
    CHECK(wta(d) == scan_argmin(d));
  }
}

TEST_CASE("classify examples") {
  CHECK(classify(Vec{0.1, 0.9}, Labels{2, 7}) == 2);
  CHECK(classify(Vec{5, 0.1, 9}, Labels{4, 4, 4}) == 4);
  CHECK_THROWS_AS(classify(Vec{1, 2}, Labels{1}), ShapeError);
  std::mt19937_64 rng(2);
  for (int t = 0; t < 200; ++t) {
    const auto d = oracle::random_vec(rng, 6, 0, 1);
    const Labels labels{0, 1, 2, 0, 1, 2};
    CHECK(classify(d, labels) == labels[scan_argmin(d)]);
  }
}

TEST_CASE("voronoi_assign") {
  const PrototypeSet protos(Tensor::matrix(2, 1, {0, 10}));
  const auto spec = DissimilaritySpec::euclidean();
  CHECK(voronoi_assign(Tensor::matrix(3, 1, {3, 7, 5}), protos, spec) == std::vector<std::size_t>{0, 1, 0});
  CHECK_THROWS_AS(voronoi_assign(Tensor::matrix(1, 2, {3, 7}), protos, spec), ShapeError);

  std::mt19937_64 rng(3);
  const auto cloud = oracle::random_tensor(rng, {300, 3});
  const PrototypeSet p(oracle::random_tensor(rng, {7, 3}));
  const auto cells = voronoi_assign(cloud, p, spec);
  REQUIRE(cells.size() == 300);
  for (std::size_t i = 0; i < 300; ++i) {
    Vec d(7);
    for (std::size_t k = 0; k < 7; ++k) d[k] = oracle::sq_dist(oracle::row_of(cloud, i), oracle::row_of(p.weights(), k));
    CHECK(cells[i] == scan_argmin(d));
  }
}

TEST_CASE("glvq_loss examples") {
  const Labels labels{0, 1};
  CHECK(glvq_loss(Vec{1, 3}, labels, 0) == -0.5);
  CHECK(glvq_loss(Vec{2, 2}, labels, 0) == 0.0);
  CHECK(glvq_loss(Vec{0, 4}, labels, 0) == -1.0);
  CHECK(glvq_loss(Vec{0, 0}, labels, 0) == 0.0);
  CHECK(glvq_backward(Vec{0, 0}, labels, 0) == Vec{0, 0});
  CHECK_THROWS_AS(glvq_loss(Vec{1, 2}, Labels{3, 3}, 3), ConfigError);
  CHECK_THROWS_AS(glvq_loss(Vec{1, 2}, Labels{3, 4}, 5), ConfigError);
}

TEST_CASE("glvq_backward examples") {
  const auto g = glvq_backward(Vec{1, 3, 5}, Labels{0, 1, 1}, 0);
  CHECK(g[0] == doctest::Approx(0.375).epsilon(1e-15));
  CHECK(g[1] == doctest::Approx(-0.125).epsilon(1e-15));
  CHECK(g[2] == 0.0);
  const double t = 2.5;
  const auto h = glvq_backward(Vec{t, t}, Labels{0, 1}, 1, 2.0);
  CHECK(h[1] == doctest::Approx(2.0 / (2 * t)));
  CHECK(h[0] == doctest::Approx(-2.0 / (2 * t)));

  std::mt19937_64 rng(4);
  const Labels labels{0, 1, 2, 0, 1, 2};
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = oracle::random_vec(rng, 6, 0.1, 3.0);
    const int y = trial % 3;
    const auto r = gradcheck([&](std::span<const double> p) { return glvq_loss(p, labels, y); },
                             glvq_backward(d, labels, y), d);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("glvq invariants under fuzzing") {
  std::mt19937_64 rng(5);
  const Labels labels{0, 0, 1, 1, 2};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto d = oracle::random_vec(rng, 5, 0.0, 4.0);
    const int y = trial % 3;
    const double l = glvq_loss(d, labels, y);
    const auto [p, m] = dplus_dminus(d, labels, y);
    CHECK(l == doctest::Approx((p - m) / (p + m)).epsilon(1e-14));
    CHECK(l >= -1.0);
    CHECK(l <= 1.0);
    CHECK((l > 0) == (classify(d, labels) != y));
    for (double lambda : {0.5, 2.0, 10.0}) {
      Vec s(d);
      for (auto& v : s) v *= lambda;
      CHECK(std::abs(glvq_loss(s, labels, y) - l) <= 1e-12);
    }
    // shrinking every correct-class distance cannot raise the loss
    Vec closer(d);
    for (std::size_t i = 0; i < 5; ++i)
      if (labels[i] == y) closer[i] *= 0.5;
    CHECK(glvq_loss(closer, labels, y) <= l + 1e-15);
  }
}

TEST_CASE("rslvq_probs examples") {
  for (double t : {0.0, 1.0, 700.0}) {
    const auto p = rslvq_probs(Vec{t, t}, Labels{0, 1});
    CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));
  }
  const auto p = rslvq_probs(Vec{0, std::log(3.0)}, Labels{0, 1});
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-14));
  CHECK_THROWS_AS(rslvq_probs(Vec{}, Labels{}), ArgumentError);
  // several prototypes per class add their masses; classes come out sorted
  const auto q = rslvq_probs(Vec{0, 0, 0, 0}, Labels{9, 3, 9, 9});
  CHECK(q == Vec{0.25, 0.75});
}

TEST_CASE("rslvq probability invariants") {
  std::mt19937_64 rng(6);
  const Labels one_each{0, 1, 2, 3};
  for (int trial = 0; trial < 2000; ++trial) {
    const auto d = oracle::random_vec(rng, 4, 0.0, 50.0);
    const auto p = rslvq_probs(d, one_each);
    double s = 0.0;
    for (double v : p) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      s += v;
    }
    CHECK(std::abs(s - 1.0) <= 1e-9);
    const auto top = std::max_element(p.begin(), p.end()) - p.begin();
    CHECK(static_cast<int>(top) == classify(d, one_each));
    Vec shifted(d);
    for (auto& v : shifted) v += 123.0;
    CHECK(oracle::rel_err(rslvq_probs(shifted, one_each), p) <= 1e-12);
  }
}

TEST_CASE("rslvq_loss examples") {
  CHECK(rslvq_loss(Vec{2, 2, 2}, Labels{0, 1, 2}, 1) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  CHECK(rslvq_loss(Vec{0, 500, 500}, Labels{0, 1, 2}, 0) < 1e-100);
  // the clamp keeps a hopeless case finite
  CHECK(rslvq_loss(Vec{5000, 0}, Labels{0, 1}, 0) == doctest::Approx(-std::log(kProbabilityFloor)));
  CHECK_THROWS_AS(rslvq_loss(Vec{1, 2}, Labels{0, 1}, 4), ArgumentError);

  std::mt19937_64 rng(7);
  const Labels labels{0, 1, 1, 2, 0};
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = oracle::random_vec(rng, 5, 0.0, 5.0);
    const int y = trial % 3;
    CHECK(rslvq_loss(d, labels, y) == doctest::Approx(rslvq_oracle(d, labels, y)).epsilon(1e-12));
    const auto r = gradcheck([&](std::span<const double> x) { return rslvq_loss(x, labels, y); },
                             rslvq_backward(d, labels, y), d);
    CHECK(r.max_relative_error < 1e-6);
  }
}

TEST_CASE("decide attaches consistent probabilities") {
  const auto dec = decide(Vec{3, 1, 2}, Labels{5, 6, 5}, true);
  CHECK(dec.winner_index == 1);
  CHECK(dec.predicted_class == 6);
  CHECK(dec.classes == Labels{5, 6});
  REQUIRE(dec.probabilities);
  CHECK((*dec.probabilities)[1] > (*dec.probabilities)[0]);
  CHECK_FALSE(dec.rejected());
  CHECK_FALSE(decide(Vec{1, 2}, Labels{0, 1}).probabilities.has_value());
}

TEST_CASE("apply_reject examples") {
  const Labels labels{0, 1};
  auto far = decide(Vec{25, 30}, labels);
  CHECK(apply_reject(far, RejectPolicy::nball({4, 4})).rejected());
  CHECK_FALSE(apply_reject(decide(Vec{25, 3}, labels), RejectPolicy::nball({4, 4})).rejected());
  // boundary: d == r^2 is inside
  CHECK_FALSE(apply_reject(decide(Vec{4, 30}, labels), RejectPolicy::nball({4, 4})).rejected());

  const double inf = std::numeric_limits<double>::infinity();
  std::mt19937_64 rng(8);
  for (int t = 0; t < 100; ++t) {
    const auto d = oracle::random_vec(rng, 2, 0, 1e6);
    const auto out = apply_reject(decide(d, labels), RejectPolicy::nball({inf, inf}));
    CHECK(out.predicted_class == classify(d, labels));
  }

  // lambda_r / lambda_e = 0.5, max prob 0.9 -> accept
  const Vec d{0, std::log(9.0)};  // probabilities 0.9, 0.1
  const auto chow = RejectPolicy::cost_ratio(1.0, 0.5);
  CHECK(chow.confidence_threshold() == 0.5);
  CHECK_FALSE(apply_reject(decide(d, labels, true), chow).rejected());
  CHECK(apply_reject(decide(Vec{0, 0.01}, labels, true), RejectPolicy::cost_ratio(1.0, 0.1)).rejected());

  CHECK_THROWS_AS(apply_reject(decide(d, labels), chow), ConfigError);
  CHECK_THROWS_AS(apply_reject(decide(d, labels), RejectPolicy::nball({1})), ConfigError);
  CHECK_THROWS_AS(RejectPolicy::cost_ratio(1.0, 1.0).validate(), ConfigError);
  CHECK_THROWS_AS(RejectPolicy::nball({-1.0, 1.0}).validate(), ConfigError);
  CHECK(apply_reject(far, RejectPolicy::none()).predicted_class == 0);
}

TEST_CASE("calibrate_nball_radii uses winners of their own class") {
  // prototypes 0 (class 0) and 1 (class 1); prototype 2 (class 1) never wins
  const Tensor d = Tensor::matrix(5, 3, {1, 9, 9,   //
                                         2, 9, 9,   //
                                         3, 9, 9,   //
                                         9, 5, 9,   //
                                         0.5, 9, 9});  // won by proto 0 but labelled 1: ignored
  const Labels samples{0, 0, 0, 1, 1};
  const Labels protos{0, 1, 1};
  const auto r = calibrate_nball_radii(d, samples, protos, 1.0);
  CHECK(r == Vec{3, 5, 5});
  const auto low = calibrate_nball_radii(d, samples, protos, 0.34);
  CHECK(low[0] == 2.0);  // nearest rank: ceil(0.34 * 3) = 2nd smallest
  CHECK_THROWS_AS(calibrate_nball_radii(d, samples, protos, 0.0), ArgumentError);
}
