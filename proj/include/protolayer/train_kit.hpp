#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "protolayer/dissimilarity.hpp"
#include "protolayer/tensor.hpp"

namespace protolayer {

/// Prototypes copied from distinct randomly chosen rows of data. With labels,
/// per_class rows are drawn from every class (classes in ascending order) and
/// the labels are inherited; without labels, per_class rows are drawn overall.
PrototypeSet init_from_samples(const Tensor& data, std::span<const int> labels, std::size_t per_class,
                               std::uint64_t seed);

struct KMeansResult {
  PrototypeSet centers;
  std::vector<double> errors;  // quantization error after each assignment step
  std::size_t iterations = 0;
  bool converged = false;
};

/// Mean squared distance of every row to its nearest center.
double quantization_error(const Tensor& data, const Tensor& centers);

/// Lloyd iterations from the init_from_samples centers (same seed) until the
/// assignment stops changing or max_iters is reached. An empty cluster is
/// reseeded at the point farthest from its current center.
KMeansResult init_kmeans(const Tensor& data, std::size_t k, std::size_t max_iters, std::uint64_t seed);

/// exp(-rank_k / lambda) with rank_k the 0-based ascending rank of d_k (ties
/// in index order).
std::vector<double> neural_gas_rank_weights(std::span<const double> distances, double lambda);

/// lambda(epoch) = lambda0 * decay^epoch.
struct NeighborhoodSchedule {
  double lambda0 = 1.0;
  double decay = 1.0;

  double lambda_at(std::size_t epoch) const;
  void validate() const;
};

struct PenaltyResult {
  double value = 0.0;
  std::vector<double> gradient;
};

/// strength * sum r_k^2 for nonnegative squared radii.
PenaltyResult l1_bias_penalty(std::span<const double> radii_sq, double strength);

/// Exponential moving average with zero de-biasing.
struct MovingAverage {
  double beta = 0.9;
  double mean = 0.0;
  std::size_t steps = 0;
};

/// m <- beta m + (1 - beta) value; returns m / (1 - beta^(t+1)) and advances t.
double debiased_average(MovingAverage& state, double value);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// A trainable buffer and its accumulated gradient.
struct ParameterRef {
  std::string name;
  std::span<double> values;
  std::span<const double> grads;
  bool nonnegative = false;  // clamp to >= 0 after each step (squared radii)
};

/// Adaptive-moment optimizer; both moments go through debiased_average.
class Adam {
 public:
  explicit Adam(AdamConfig config = {});

  void step(std::span<const ParameterRef> params);
  std::size_t steps() const { return steps_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Slot {
    std::vector<MovingAverage> first;
    std::vector<MovingAverage> second;
  };
  AdamConfig config_;
  std::vector<Slot> slots_;
  std::size_t steps_ = 0;
};

struct GradcheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
};

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckFloor = 1e-8;

/// Compares analytic to central differences (f(x+he) - f(x-he)) / 2h per
/// coordinate; error is |a - n| / max(|a|, |n|, floor).
GradcheckResult gradcheck(const std::function<double(std::span<const double>)>& f,
                          std::span<const double> analytic, std::span<const double> point,
                          double step = kGradcheckStep, double floor = kGradcheckFloor);

}  // namespace protolayer
