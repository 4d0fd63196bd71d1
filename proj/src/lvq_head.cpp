#include "protolayer/lvq_head.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "protolayer/errors.hpp"

namespace protolayer {

std::size_t wta(std::span<const double> distances) {
  if (distances.empty()) throw ArgumentError("wta: empty response vector");
  std::size_t best = 0;
  for (std::size_t k = 1; k < distances.size(); ++k) {
    if (distances[k] < distances[best]) best = k;
  }
  return best;
}

int classify(std::span<const double> distances, std::span<const int> labels) {
  if (distances.size() != labels.size()) {
    throw ShapeError("classify: " + std::to_string(distances.size()) + " distances vs " +
                     std::to_string(labels.size()) + " labels");
  }
  return labels[wta(distances)];
}

std::vector<std::size_t> voronoi_assign(const Tensor& inputs, const PrototypeSet& protos,
                                        const DissimilaritySpec& spec) {
  const Tensor d = response_efficient(inputs, protos, spec);
  std::vector<std::size_t> cells(inputs.rows());
  for (std::size_t i = 0; i < inputs.rows(); ++i) cells[i] = wta(d.row(i));
  return cells;
}

GlvqPair glvq_pair(std::span<const double> distances, std::span<const int> labels, int true_class) {
  if (distances.size() != labels.size()) throw ShapeError("glvq: distances and labels differ in length");
  constexpr double inf = std::numeric_limits<double>::infinity();
  GlvqPair p;
  p.d_correct = inf;
  p.d_incorrect = inf;
  bool has_correct = false;
  bool has_incorrect = false;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    if (labels[k] == true_class) {
      if (!has_correct || distances[k] < p.d_correct) {
        p.d_correct = distances[k];
        p.correct = k;
      }
      has_correct = true;
    } else {
      if (!has_incorrect || distances[k] < p.d_incorrect) {
        p.d_incorrect = distances[k];
        p.incorrect = k;
      }
      has_incorrect = true;
    }
  }
  if (!has_correct || !has_incorrect) {
    throw ConfigError("glvq needs prototypes of the true class " + std::to_string(true_class) +
                      " and of at least one other class");
  }
  return p;
}

double glvq_loss(std::span<const double> distances, std::span<const int> labels, int true_class) {
  const auto p = glvq_pair(distances, labels, true_class);
  const double denom = p.d_correct + p.d_incorrect;
  if (denom == 0.0) return 0.0;
  return (p.d_correct - p.d_incorrect) / denom;
}

std::vector<double> glvq_backward(std::span<const double> distances, std::span<const int> labels, int true_class,
                                  double upstream) {
  const auto p = glvq_pair(distances, labels, true_class);
  std::vector<double> grad(distances.size(), 0.0);
  const double denom = p.d_correct + p.d_incorrect;
  if (denom == 0.0) return grad;
  const double denom_sq = denom * denom;
  grad[p.correct] = upstream * 2.0 * p.d_incorrect / denom_sq;
  grad[p.incorrect] = -upstream * 2.0 * p.d_correct / denom_sq;
  return grad;
}

std::vector<double> softmax_negated(std::span<const double> distances, double temperature) {
  if (distances.empty()) throw ArgumentError("softmax: empty input");
  double top = -std::numeric_limits<double>::infinity();
  for (double d : distances) top = std::max(top, -d / temperature);
  std::vector<double> p(distances.size());
  double sum = 0.0;
  for (std::size_t k = 0; k < distances.size(); ++k) {
    p[k] = std::exp(-distances[k] / temperature - top);
    sum += p[k];
  }
  for (auto& v : p) v /= sum;
  return p;
}

namespace {

std::size_t class_slot(std::span<const int> classes, int label) {
  const auto it = std::lower_bound(classes.begin(), classes.end(), label);
  if (it == classes.end() || *it != label) {
    throw ArgumentError("label " + std::to_string(label) + " is not among the prototype classes");
  }
  return static_cast<std::size_t>(it - classes.begin());
}

std::vector<int> sorted_classes(std::span<const int> labels) {
  std::vector<int> c(labels.begin(), labels.end());
  std::sort(c.begin(), c.end());
  c.erase(std::unique(c.begin(), c.end()), c.end());
  return c;
}

}  // namespace

std::vector<double> rslvq_probs(std::span<const double> distances, std::span<const int> labels,
                                std::span<const int> classes) {
  if (distances.size() != labels.size()) throw ShapeError("rslvq: distances and labels differ in length");
  const auto p = softmax_negated(distances);
  std::vector<double> out(classes.size(), 0.0);
  for (std::size_t k = 0; k < p.size(); ++k) out[class_slot(classes, labels[k])] += p[k];
  return out;
}

std::vector<double> rslvq_probs(std::span<const double> distances, std::span<const int> labels) {
  const auto classes = sorted_classes(labels);
  return rslvq_probs(distances, labels, classes);
}

double rslvq_loss(std::span<const double> distances, std::span<const int> labels, int true_class) {
  if (distances.size() != labels.size()) throw ShapeError("rslvq: distances and labels differ in length");
  const auto p = softmax_negated(distances);
  double p_true = 0.0;
  bool present = false;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (labels[k] == true_class) {
      p_true += p[k];
      present = true;
    }
  }
  if (!present) throw ArgumentError("rslvq: true class " + std::to_string(true_class) + " has no prototype");
  return -std::log(std::max(p_true, kProbabilityFloor));
}

std::vector<double> rslvq_backward(std::span<const double> distances, std::span<const int> labels, int true_class,
                                   double upstream) {
  if (distances.size() != labels.size()) throw ShapeError("rslvq: distances and labels differ in length");
  const auto p = softmax_negated(distances);
  double p_true = 0.0;
  bool present = false;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (labels[k] == true_class) {
      p_true += p[k];
      present = true;
    }
  }
  if (!present) throw ArgumentError("rslvq: true class " + std::to_string(true_class) + " has no prototype");
  std::vector<double> grad(distances.size(), 0.0);
  // Clamped region: the loss is constant, so is its gradient.
  if (p_true < kProbabilityFloor) return grad;
  // L = -log sum_{k in c} p_k with p = softmax(-d):
  // dL/dd_j = [j in c] p_j / p_c - p_j
  for (std::size_t j = 0; j < p.size(); ++j) {
    const double own = labels[j] == true_class ? p[j] / p_true : 0.0;
    grad[j] = upstream * (own - p[j]);
  }
  return grad;
}

ClassificationDecision decide(std::span<const double> distances, std::span<const int> labels,
                              bool with_probabilities) {
  ClassificationDecision d;
  d.winner_index = wta(distances);
  if (labels.size() != distances.size()) throw ShapeError("decide: distances and labels differ in length");
  d.predicted_class = labels[d.winner_index];
  d.distances.assign(distances.begin(), distances.end());
  d.classes = sorted_classes(labels);
  if (with_probabilities) d.probabilities = rslvq_probs(distances, labels, d.classes);
  return d;
}

RejectPolicy RejectPolicy::nball(std::vector<double> radii_sq) {
  RejectPolicy p;
  p.kind = RejectKind::nball;
  p.radii_sq = std::move(radii_sq);
  p.validate();
  return p;
}

RejectPolicy RejectPolicy::cost_ratio(double lambda_error, double lambda_reject) {
  RejectPolicy p;
  p.kind = RejectKind::cost_ratio;
  p.lambda_error = lambda_error;
  p.lambda_reject = lambda_reject;
  p.validate();
  return p;
}

double RejectPolicy::confidence_threshold() const { return 1.0 - lambda_reject / lambda_error; }

void RejectPolicy::validate() const {
  switch (kind) {
    case RejectKind::none: return;
    case RejectKind::nball:
      if (radii_sq.empty()) throw ConfigError("nball reject needs per-prototype radii");
      for (double r : radii_sq) {
        if (!(r >= 0.0)) throw ConfigError("nball radii must be nonnegative");
      }
      return;
    case RejectKind::cost_ratio:
      if (!(lambda_error > 0.0) || !(lambda_reject > 0.0) || !(lambda_reject < lambda_error)) {
        throw ConfigError("cost_ratio reject needs 0 < lambda_r < lambda_e");
      }
      return;
  }
}

ClassificationDecision apply_reject(ClassificationDecision decision, const RejectPolicy& policy) {
  policy.validate();
  switch (policy.kind) {
    case RejectKind::none: break;
    case RejectKind::nball: {
      if (policy.radii_sq.size() != decision.distances.size()) {
        throw ConfigError("nball reject: " + std::to_string(policy.radii_sq.size()) + " radii for " +
                          std::to_string(decision.distances.size()) + " prototypes");
      }
      bool inside_any = false;
      for (std::size_t k = 0; k < decision.distances.size(); ++k) {
        if (decision.distances[k] <= policy.radii_sq[k]) {
          inside_any = true;
          break;
        }
      }
      if (!inside_any) decision.predicted_class = kReject;
      break;
    }
    case RejectKind::cost_ratio: {
      if (!decision.probabilities) throw ConfigError("cost_ratio reject needs class probabilities");
      const auto& p = *decision.probabilities;
      const double top = p.empty() ? 0.0 : *std::max_element(p.begin(), p.end());
      if (top < policy.confidence_threshold()) decision.predicted_class = kReject;
      break;
    }
  }
  return decision;
}

std::vector<double> calibrate_nball_radii(const Tensor& distances, std::span<const int> sample_labels,
                                          std::span<const int> prototype_labels, double quantile) {
  if (distances.rank() != 2 || distances.rows() != sample_labels.size() ||
      distances.cols() != prototype_labels.size()) {
    throw ShapeError("calibrate_nball_radii: distances must be samples x prototypes");
  }
  if (!(quantile > 0.0 && quantile <= 1.0)) throw ArgumentError("quantile must lie in (0, 1]");
  std::vector<std::vector<double>> won(prototype_labels.size());
  for (std::size_t i = 0; i < distances.rows(); ++i) {
    const auto k = wta(distances.row(i));
    if (prototype_labels[k] == sample_labels[i]) won[k].push_back(distances.at(i, k));
  }
  std::vector<double> radii(prototype_labels.size(), -1.0);
  double largest = 0.0;
  for (std::size_t k = 0; k < won.size(); ++k) {
    auto& v = won[k];
    if (v.empty()) continue;
    std::sort(v.begin(), v.end());
    // nearest-rank quantile
    const auto rank = static_cast<std::size_t>(std::ceil(quantile * static_cast<double>(v.size())));
    radii[k] = v[std::clamp<std::size_t>(rank, 1, v.size()) - 1];
    largest = std::max(largest, radii[k]);
  }
  for (auto& r : radii) {
    if (r < 0.0) r = largest;
  }
  return radii;
}

}  // namespace protolayer
