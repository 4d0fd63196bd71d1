#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "protolayer/dissimilarity.hpp"
#include "protolayer/tensor.hpp"

namespace protolayer {

/// Predicted-class sentinel for rejected inputs.
inline constexpr int kReject = -1;

/// Index of the smallest response; ties go to the lowest index.
std::size_t wta(std::span<const double> distances);

/// Label of the winning prototype.
int classify(std::span<const double> distances, std::span<const int> labels);

/// Winning prototype of every row of inputs (batch x n).
std::vector<std::size_t> voronoi_assign(const Tensor& inputs, const PrototypeSet& protos,
                                        const DissimilaritySpec& spec);

/// Closest correct-class and closest incorrect-class prototypes.
struct GlvqPair {
  std::size_t correct = 0;
  std::size_t incorrect = 0;
  double d_correct = 0.0;
  double d_incorrect = 0.0;
};
GlvqPair glvq_pair(std::span<const double> distances, std::span<const int> labels, int true_class);

/// (d+ - d-) / (d+ + d-); zero when both distances vanish.
double glvq_loss(std::span<const double> distances, std::span<const int> labels, int true_class);
/// Gradient of upstream * glvq_loss with respect to the distances. Only the two
/// active components are non-zero.
std::vector<double> glvq_backward(std::span<const double> distances, std::span<const int> labels, int true_class,
                                  double upstream = 1.0);

/// Softmax of the negated distances, stabilized by subtracting the maximum.
std::vector<double> softmax_negated(std::span<const double> distances, double temperature = 1.0);

/// Class probabilities: softmax(-d) over prototypes, summed per class. The
/// result is indexed like classes (the sorted distinct labels).
std::vector<double> rslvq_probs(std::span<const double> distances, std::span<const int> labels,
                                std::span<const int> classes);
std::vector<double> rslvq_probs(std::span<const double> distances, std::span<const int> labels);

inline constexpr double kProbabilityFloor = 1e-12;

/// -log p(true_class), with the probability clamped at kProbabilityFloor.
double rslvq_loss(std::span<const double> distances, std::span<const int> labels, int true_class);
std::vector<double> rslvq_backward(std::span<const double> distances, std::span<const int> labels, int true_class,
                                   double upstream = 1.0);

struct ClassificationDecision {
  std::size_t winner_index = 0;
  int predicted_class = kReject;
  std::vector<double> distances;
  std::optional<std::vector<double>> probabilities;  // indexed like classes
  std::vector<int> classes;

  bool rejected() const { return predicted_class == kReject; }
};

/// WTA decision; probabilities are attached when with_probabilities is set.
ClassificationDecision decide(std::span<const double> distances, std::span<const int> labels,
                              bool with_probabilities = false);

enum class RejectKind { none, nball, cost_ratio };

struct RejectPolicy {
  RejectKind kind = RejectKind::none;
  std::vector<double> radii_sq;  // nball: per-prototype squared radius, +inf disables
  double lambda_error = 1.0;     // cost_ratio: misclassification cost
  double lambda_reject = 0.5;    // cost_ratio: reject cost, < lambda_error

  static RejectPolicy none() { return {}; }
  static RejectPolicy nball(std::vector<double> radii_sq);
  static RejectPolicy cost_ratio(double lambda_error, double lambda_reject);

  /// Chow threshold: reject when max probability < 1 - lambda_r / lambda_e.
  double confidence_threshold() const;
  void validate() const;
};

/// nball rejects when every distance exceeds its prototype's squared radius;
/// cost_ratio rejects when the top class probability is below the threshold.
ClassificationDecision apply_reject(ClassificationDecision decision, const RejectPolicy& policy);

/// Per-prototype squared radii at the given quantile of the distances of
/// correctly-labelled samples won by that prototype. Prototypes that win no
/// such sample get the largest calibrated radius.
std::vector<double> calibrate_nball_radii(const Tensor& distances, std::span<const int> sample_labels,
                                          std::span<const int> prototype_labels, double quantile);

}  // namespace protolayer
