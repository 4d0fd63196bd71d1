#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "protolayer/config.hpp"
#include "protolayer/data.hpp"
#include "protolayer/model.hpp"

namespace protolayer {

struct OpReport {
  std::string op;
  std::size_t points = 0;
  double max_relative_error = 0.0;
};

/// Every backward rule of the library, scalarized with a random upstream
/// vector and compared to central differences at `points` random points.
std::vector<OpReport> run_gradient_suite(std::uint64_t seed, std::size_t points);

struct NetworkCheckOptions {
  std::size_t points = 3;
  std::size_t max_coords = 64;  // per parameter and point, chosen at random
  double fault = 0.0;           // > 0 corrupts every analytic gradient (negative control)
};

/// Checks each layer of a network at inputs taken from real samples: the
/// input gradient and every parameter gradient of <u, layer(x)>, then the
/// loss gradient at the head output. Neural-gas scaling is switched off for
/// the duration since it deliberately departs from the true gradient.
std::vector<OpReport> check_network(Network& net, const Dataset& data, LossKind loss, std::uint64_t seed,
                                    const NetworkCheckOptions& options = {});

}  // namespace protolayer
