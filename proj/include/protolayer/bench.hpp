#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "protolayer/dissimilarity.hpp"

namespace protolayer {

struct BenchRow {
  std::size_t dim = 0;
  std::size_t prototypes = 0;
  std::size_t repeats = 0;
  double naive_seconds = 0.0;      // mean per call
  double efficient_seconds = 0.0;  // mean per call
  std::size_t naive_peak_bytes = 0;      // transient heap above the live baseline
  std::size_t efficient_peak_bytes = 0;  // 0 when allocation tracking is not linked in
  double relative_error = 0.0;           // normwise, efficient vs naive
};

/// Times response_naive against response_efficient (euclidean) for every
/// (dim, prototype count) pair. Agreement to relative 1e-10 is checked before
/// any timing; a mismatch raises NumericError.
std::vector<BenchRow> run_bench(const std::vector<std::size_t>& dims, const std::vector<std::size_t>& prototype_counts,
                                std::size_t repeats, std::uint64_t seed);

inline constexpr const char* kBenchHeader =
    "dim,prototypes,repeats,naive_seconds,efficient_seconds,naive_peak_bytes,efficient_peak_bytes,relative_error";

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRow>& rows);

}  // namespace protolayer
