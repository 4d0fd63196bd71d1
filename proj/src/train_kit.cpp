#include "protolayer/train_kit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "protolayer/errors.hpp"

namespace protolayer {

namespace {

std::vector<std::size_t> shuffled_indices(std::vector<std::size_t> idx, std::mt19937_64& rng) {
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

bool rows_equal(std::span<const double> a, std::span<const double> b) { return std::equal(a.begin(), a.end(), b.begin()); }

// First `count` rows (in shuffled order) that differ from every row taken so far.
std::vector<std::size_t> pick_distinct(const Tensor& data, const std::vector<std::size_t>& order, std::size_t count) {
  std::vector<std::size_t> picked;
  for (auto i : order) {
    if (picked.size() == count) break;
    const bool dup = std::any_of(picked.begin(), picked.end(),
                                 [&](std::size_t j) { return rows_equal(data.row(i), data.row(j)); });
    if (!dup) picked.push_back(i);
  }
  return picked;
}

}  // namespace

PrototypeSet init_from_samples(const Tensor& data, std::span<const int> labels, std::size_t per_class,
                               std::uint64_t seed) {
  if (data.rank() != 2) throw ShapeError("init_from_samples: data must be a samples x n matrix");
  if (per_class == 0) throw ArgumentError("init_from_samples: per_class must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> chosen;
  std::vector<int> proto_labels;

  if (labels.empty()) {
    std::vector<std::size_t> all(data.rows());
    std::iota(all.begin(), all.end(), 0);
    chosen = pick_distinct(data, shuffled_indices(std::move(all), rng), per_class);
    if (chosen.size() < per_class) {
      throw DataError("init_from_samples: need " + std::to_string(per_class) + " distinct samples, found " +
                      std::to_string(chosen.size()));
    }
  } else {
    if (labels.size() != data.rows()) throw ShapeError("init_from_samples: one label per sample required");
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (auto& [cls, members] : by_class) {
      auto picked = pick_distinct(data, shuffled_indices(members, rng), per_class);
      if (picked.size() < per_class) {
        throw DataError("init_from_samples: class " + std::to_string(cls) + " has " + std::to_string(picked.size()) +
                        " distinct samples, need " + std::to_string(per_class));
      }
      for (auto i : picked) {
        chosen.push_back(i);
        proto_labels.push_back(cls);
      }
    }
  }

  Tensor w({chosen.size(), data.cols()});
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto src = data.row(chosen[k]);
    std::copy(src.begin(), src.end(), w.row(k).begin());
  }
  return PrototypeSet(std::move(w), std::move(proto_labels));
}

double quantization_error(const Tensor& data, const Tensor& centers) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centers.rows(); ++k) best = std::min(best, squared_distance(data.row(i), centers.row(k)));
    total += best;
  }
  return total / static_cast<double>(data.rows());
}

KMeansResult init_kmeans(const Tensor& data, std::size_t k, std::size_t max_iters, std::uint64_t seed) {
  if (data.rank() != 2) throw ShapeError("init_kmeans: data must be a samples x n matrix");
  if (k == 0) throw ArgumentError("init_kmeans: k must be >= 1");
  Tensor centers = init_from_samples(data, {}, k, seed).weights();
  const std::size_t n = data.rows();
  const std::size_t dim = data.cols();

  KMeansResult result;
  std::vector<std::size_t> assign(n, k);
  std::vector<double> dist(n);
  for (std::size_t it = 0; it < max_iters; ++it) {
    bool changed = false;
    double err = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = squared_distance(data.row(i), centers.row(0));
      for (std::size_t c = 1; c < k; ++c) {
        const double d = squared_distance(data.row(i), centers.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[i] != best) changed = true;
      assign[i] = best;
      dist[i] = best_d;
      err += best_d;
    }
    result.errors.push_back(err / static_cast<double>(n));
    result.iterations = it + 1;
    if (!changed) {
      result.converged = true;
      break;
    }

    Tensor sums({k, dim});
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      axpy(1.0, data.row(i), sums.row(assign[i]));
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        // Reseed at the point currently worst served by its center.
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        const auto src = data.row(far);
        std::copy(src.begin(), src.end(), centers.row(c).begin());
        dist[far] = 0.0;
        continue;
      }
      auto row = centers.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) row[j] = s[j] / static_cast<double>(counts[c]);
    }
  }
  result.centers = PrototypeSet(std::move(centers));
  return result;
}

std::vector<double> neural_gas_rank_weights(std::span<const double> distances, double lambda) {
  if (!(lambda > 0.0)) throw ArgumentError("neural gas: lambda must be positive");
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return distances[a] < distances[b]; });
  std::vector<double> w(distances.size());
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    w[order[rank]] = std::exp(-static_cast<double>(rank) / lambda);
  }
  return w;
}

double NeighborhoodSchedule::lambda_at(std::size_t epoch) const {
  return lambda0 * std::pow(decay, static_cast<double>(epoch));
}

void NeighborhoodSchedule::validate() const {
  if (!(lambda0 > 0.0)) throw ConfigError("neighborhood lambda must be positive");
  if (!(decay > 0.0 && decay <= 1.0)) throw ConfigError("neighborhood decay must lie in (0, 1]");
}

PenaltyResult l1_bias_penalty(std::span<const double> radii_sq, double strength) {
  if (!(strength >= 0.0)) throw ArgumentError("l1 penalty strength must be nonnegative");
  PenaltyResult r;
  r.gradient.assign(radii_sq.size(), strength);
  for (double v : radii_sq) {
    if (v < 0.0) throw ArgumentError("l1 penalty expects nonnegative squared radii");
    r.value += v;
  }
  r.value *= strength;
  return r;
}

double debiased_average(MovingAverage& state, double value) {
  if (!(state.beta > 0.0 && state.beta < 1.0)) throw ArgumentError("moving average beta must lie in (0, 1)");
  state.mean = state.beta * state.mean + (1.0 - state.beta) * value;
  ++state.steps;
  // (1 - beta) v / (1 - beta) is v; skip the rounding of that round trip.
  if (state.steps == 1) return value;
  return state.mean / (1.0 - std::pow(state.beta, static_cast<double>(state.steps)));
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

Adam::Adam(AdamConfig config) : config_(config) { config_.validate(); }

void Adam::step(std::span<const ParameterRef> params) {
  if (slots_.empty()) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots_[i].first.assign(params[i].values.size(), MovingAverage{config_.beta1});
      slots_[i].second.assign(params[i].values.size(), MovingAverage{config_.beta2});
    }
  }
  if (slots_.size() != params.size()) throw ShapeError("adam: parameter list changed between steps");
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    auto& slot = slots_[i];
    if (p.values.size() != p.grads.size() || p.values.size() != slot.first.size()) {
      throw ShapeError("adam: shape mismatch for parameter '" + p.name + "'");
    }
    for (std::size_t j = 0; j < p.values.size(); ++j) {
      const double g = p.grads[j];
      const double m_hat = debiased_average(slot.first[j], g);
      const double v_hat = debiased_average(slot.second[j], g * g);
      p.values[j] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
      if (p.nonnegative && p.values[j] < 0.0) p.values[j] = 0.0;
    }
  }
  ++steps_;
}

GradcheckResult gradcheck(const std::function<double(std::span<const double>)>& f, std::span<const double> analytic,
                          std::span<const double> point, double step, double floor) {
  if (analytic.size() != point.size()) throw ShapeError("gradcheck: gradient and point differ in length");
  if (!(step > 0.0)) throw ArgumentError("gradcheck: step must be positive");
  GradcheckResult r;
  std::vector<double> x(point.begin(), point.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + step;
    const double fp = f(x);
    x[i] = orig - step;
    const double fm = f(x);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("gradcheck: non-finite evaluation at coordinate " + std::to_string(i));
    }
    const double numeric = (fp - fm) / (2.0 * step);
    const double scale = std::max({std::abs(analytic[i]), std::abs(numeric), floor});
    const double err = std::abs(analytic[i] - numeric) / scale;
    if (i == 0 || err > r.max_relative_error) {
      r.max_relative_error = err;
      r.worst_index = i;
      r.analytic_at_worst = analytic[i];
      r.numeric_at_worst = numeric;
    }
  }
  return r;
}

}  // namespace protolayer
