#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "protolayer/conv.hpp"
#include "protolayer/errors.hpp"
#include "protolayer/tensor.hpp"

using namespace protolayer;

TEST_CASE("tensor construction checks extents") {
  CHECK_THROWS_AS(Tensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 1.5);
  CHECK(t.all_finite());
  t.at(0, 0) = std::nan("");
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("extract_windows enumerates a 3x3 image") {
  Tensor img({3, 3, 1}, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto w = extract_windows(img, {2, 2});
  REQUIRE(w.n_positions() == 4);
  REQUIRE(w.window_len() == 4);
  const std::vector<std::vector<double>> want{{1, 2, 4, 5}, {2, 3, 5, 6}, {4, 5, 7, 8}, {5, 6, 8, 9}};
  for (std::size_t p = 0; p < 4; ++p) {
    const auto r = w.rows.row(p);
    CHECK(std::vector<double>(r.begin(), r.end()) == want[p]);
  }
  CHECK(w.origin[3] == std::pair<long, long>{1, 1});
}

TEST_CASE("kernel as large as the image gives one window") {
  std::mt19937_64 rng(1);
  const auto img = oracle::random_tensor(rng, {4, 3, 2});
  const auto w = extract_windows(img, {4, 3});
  REQUIRE(w.n_positions() == 1);
  CHECK(w.rows.values() == img.values());
}

TEST_CASE("extract_windows matches the nested-loop slicer") {
  std::mt19937_64 rng(2);
  const auto img = oracle::random_tensor(rng, {7, 5, 3});
  for (bool same : {false, true}) {
    const auto w = extract_windows(img, {3, 3}, {2, 2}, same ? Padding::same : Padding::valid);
    const auto ref = oracle::all_windows(img, 3, 3, 2, 2, same);
    REQUIRE(w.n_positions() == ref.size());
    for (std::size_t p = 0; p < ref.size(); ++p) {
      const auto r = w.rows.row(p);
      CHECK(std::vector<double>(r.begin(), r.end()) == ref[p]);
    }
  }
}

TEST_CASE("kernel larger than the padded input is a shape error") {
  Tensor img({3, 3, 1});
  CHECK_THROWS_AS(extract_windows(img, {4, 1}), ShapeError);
  CHECK_THROWS_AS(conv2d(img, Tensor({1, 4, 4, 1})), ShapeError);
}

TEST_CASE("output extent formula holds for every stride and padding") {
  for (std::size_t in = 1; in <= 16; ++in) {
    for (std::size_t f = 1; f <= 16; ++f) {
      for (std::size_t s = 1; s <= 4; ++s) {
        if (f <= in) CHECK(conv_output_extent(in, f, s, Padding::valid) == (in - f) / s + 1);
        const auto same = oracle::pads(in, f, s, true);
        if (f <= in + same.before + same.after) {
          CHECK(conv_output_extent(in, f, s, Padding::same) == (in + s - 1) / s);
        }
      }
    }
  }
}

TEST_CASE("conv2d with a unit 1x1 filter sums channels") {
  std::mt19937_64 rng(3);
  const auto img = oracle::random_tensor(rng, {4, 5, 3});
  const auto out = conv2d(img, Tensor({1, 1, 1, 3}, 1.0));
  REQUIRE(out.shape() == Shape{4, 5, 1});
  for (std::size_t p = 0; p < 20; ++p) {
    const double want = img[p * 3] + img[p * 3 + 1] + img[p * 3 + 2];
    CHECK(out[p] == doctest::Approx(want).epsilon(1e-15));
  }
}

TEST_CASE("filter equal to the image gives its squared norm") {
  std::mt19937_64 rng(4);
  const auto img = oracle::random_tensor(rng, {3, 4, 2});
  const auto out = conv2d(img, img.reshaped({1, 3, 4, 2}));
  REQUIRE(out.size() == 1);
  double s = 0.0;
  for (double v : img.data()) s += v * v;
  CHECK(out[0] == doctest::Approx(s).epsilon(1e-14));
}

TEST_CASE("conv2d matches the brute-force sliding dot product, with bias") {
  std::mt19937_64 rng(5);
  const auto img = oracle::random_tensor(rng, {8, 8, 2});
  const auto bank = oracle::random_tensor(rng, {4, 3, 3, 2});
  const std::vector<double> bias{0.5, -1.0, 2.0, 0.0};
  for (bool same : {false, true}) {
    for (std::size_t s : {1u, 2u}) {
      const auto out = conv2d(img, bank, bias, {s, s}, same ? Padding::same : Padding::valid);
      const auto windows = oracle::all_windows(img, 3, 3, s, s, same);
      REQUIRE(out.size() == windows.size() * 4);
      for (std::size_t p = 0; p < windows.size(); ++p) {
        for (std::size_t l = 0; l < 4; ++l) {
          const auto k = oracle::row_of(bank, l);
          double d = bias[l];
          for (std::size_t i = 0; i < k.size(); ++i) d += windows[p][i] * k[i];
          CHECK(std::abs(out[p * 4 + l] - d) <= 1e-12 * (1.0 + std::abs(d)));
        }
      }
    }
  }
}

TEST_CASE("conv2d rejects channel and bias mismatches") {
  Tensor img({4, 4, 2});
  CHECK_THROWS_AS(conv2d(img, Tensor({1, 2, 2, 3})), ShapeError);
  std::vector<double> bias{1.0, 2.0};
  CHECK_THROWS_AS(conv2d(img, Tensor({1, 2, 2, 2}), bias), ShapeError);
}

TEST_CASE("windows times filters equals conv2d") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const auto img = oracle::random_tensor(rng, {6, 7, 2});
    const auto bank = oracle::random_tensor(rng, {3, 2, 3, 2});
    const auto w = extract_windows(img, {2, 3}, {1, 2}, Padding::same);
    const auto prod = matmul_transposed(w.rows, bank.reshaped({3, 12}));
    const auto out = conv2d(img, bank, std::nullopt, {1, 2}, Padding::same);
    CHECK(normwise_relative_error(prod.data(), out.data()) <= 1e-12);
  }
}

TEST_CASE("squared window norms") {
  Tensor zero({5, 5, 1});
  const auto zn = squared_window_norms(zero, {2, 2});
  for (double v : zn.data()) CHECK(v == 0.0);

  Tensor img({2, 2, 1}, std::vector<double>{3, 4, 0, 0});
  const auto n = squared_window_norms(img, {2, 2});
  REQUIRE(n.size() == 1);
  CHECK(n[0] == 25.0);

  std::mt19937_64 rng(7);
  auto r = oracle::random_tensor(rng, {6, 5, 2});
  for (std::size_t i = 0; i < 10; ++i) r[i] = 0.0;  // some all-zero windows at the top
  const auto norms = squared_window_norms(r, {2, 2}, {1, 1}, Padding::same);
  const auto windows = oracle::all_windows(r, 2, 2, 1, 1, true);
  for (std::size_t p = 0; p < windows.size(); ++p) {
    double s = 0.0;
    for (double v : windows[p]) s += v * v;
    CHECK(norms[p] == doctest::Approx(s).epsilon(1e-13));
    CHECK(norms[p] >= 0.0);
    CHECK((norms[p] == 0.0) == (oracle::max_abs(windows[p]) == 0.0));
  }
}

TEST_CASE("accumulate_windows is the adjoint of extract_windows") {
  std::mt19937_64 rng(8);
  const auto img = oracle::random_tensor(rng, {5, 6, 2});
  const auto w = extract_windows(img, {3, 2}, {2, 1}, Padding::same);
  const auto y = oracle::random_tensor(rng, w.rows.shape());
  const auto back = accumulate_windows(y, w.geometry);
  // <extract(x), y> == <x, accumulate(y)>
  CHECK(dot(w.rows.data(), y.data()) == doctest::Approx(dot(img.data(), back.data())).epsilon(1e-13));
}
