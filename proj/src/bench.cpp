#include "protolayer/bench.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <random>

#include "protolayer/alloc_tracker.hpp"
#include "protolayer/errors.hpp"

namespace protolayer {

namespace {

constexpr double kAgreement = 1e-10;

template <class Fn>
std::size_t transient_peak(Fn&& fn) {
  namespace at = alloc_tracker;
  at::reset_peak();
  const auto base = at::live_bytes();
  fn();
  return at::peak_bytes() - base;
}

}  // namespace

std::vector<BenchRow> run_bench(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& prototype_counts,
                                std::size_t repeats, std::uint64_t seed) {
  if (dims.empty() || prototype_counts.empty()) throw ArgumentError("bench: need at least one dim and prototype count");
  if (repeats == 0) throw ArgumentError("bench: repeats must be >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  const auto spec = DissimilaritySpec::euclidean();

  std::vector<BenchRow> rows;
  for (auto n : dims) {
    for (auto nw : prototype_counts) {
      if (n == 0 || nw == 0) throw ArgumentError("bench: dims and prototype counts must be positive");
      Tensor w({nw, n});
      for (auto& v : w.data()) v = unif(rng);
      const PrototypeSet protos(std::move(w));
      std::vector<double> x(n);
      for (auto& v : x) v = unif(rng);

      BenchRow row{n, nw, repeats};
      const auto naive = response_naive(x, protos, spec);
      const auto fast = response_efficient(x, protos, spec);
      row.relative_error = normwise_relative_error(fast, naive);
      if (!(row.relative_error <= kAgreement)) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "bench: paths disagree at dim %zu, %zu prototypes (relative error %.3g)", n, nw,
                      row.relative_error);
        throw NumericError(buf);
      }

      row.naive_peak_bytes = transient_peak([&] { (void)response_naive(x, protos, spec); });
      row.efficient_peak_bytes = transient_peak([&] { (void)response_efficient(x, protos, spec); });

      using clock = std::chrono::steady_clock;
      double sink = 0.0;
      auto t0 = clock::now();
      for (std::size_t r = 0; r < repeats; ++r) sink += response_naive(x, protos, spec)[0];
      auto t1 = clock::now();
      for (std::size_t r = 0; r < repeats; ++r) sink += response_efficient(x, protos, spec)[0];
      auto t2 = clock::now();
      if (sink == -1.0) std::puts("");  // keeps the calls observable
      row.naive_seconds = std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(repeats);
      row.efficient_seconds = std::chrono::duration<double>(t2 - t1).count() / static_cast<double>(repeats);
      rows.push_back(row);
    }
  }
  return rows;
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << kBenchHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.9g,%.9g,%zu,%zu,%.3g", r.dim, r.prototypes, r.repeats, r.naive_seconds,
                  r.efficient_seconds, r.naive_peak_bytes, r.efficient_peak_bytes, r.relative_error);
    out << buf << '\n';
  }
}

}  // namespace protolayer
