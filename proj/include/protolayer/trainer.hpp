#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "protolayer/checkpoint.hpp"
#include "protolayer/config.hpp"
#include "protolayer/data.hpp"
#include "protolayer/lvq_head.hpp"
#include "protolayer/model.hpp"

namespace protolayer {

struct DataSplits {
  Dataset train;
  Dataset test;
};

/// Generates or reads the configured train and test sets.
DataSplits load_datasets(const RunConfig& config);

/// Independent stream seed for one purpose (layer index, epoch, ...).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

/// Layer chain for samples of sample_shape with a head holding per_class
/// prototypes for each of classes. Parameters are zero; the chain is
/// shape-checked before this returns.
Network assemble_network(const RunConfig& config, const Shape& sample_shape, const std::vector<int>& classes);

/// Sets every parameter from training data: kernels by k-means or sampled
/// windows, radii from the window distances, head prototypes from sampled
/// (transformed) features.
void initialize_network(Network& net, const RunConfig& config, const Dataset& train);

/// assemble_network + initialize_network with the classes of train.
Network build_network(const RunConfig& config, const Dataset& train);

/// Prototype responses of the head for every sample, samples x N_W.
Tensor head_responses(const Network& net, const Dataset& data);

double sample_loss(LossKind loss, std::span<const double> d, std::span<const int> labels, int true_class);
std::vector<double> sample_loss_backward(LossKind loss, std::span<const double> d, std::span<const int> labels,
                                         int true_class);

/// Reject policy from a config; nball radii come from the config or, failing
/// that, are calibrated on the given training responses.
RejectPolicy make_reject_policy(const RejectConfig& reject, const Tensor& train_responses,
                                std::span<const int> train_labels, std::span<const int> prototype_labels);

struct Evaluation {
  double loss = 0.0;         // mean over samples whose label the head knows
  double accuracy = 0.0;     // correct / accepted, 0 when nothing is accepted
  double reject_rate = 0.0;  // rejected / samples
  std::size_t samples = 0, accepted = 0, correct = 0;
  std::vector<int> true_classes;                   // row labels of confusion
  std::vector<int> predicted_classes;              // column labels; last column counts rejects
  std::vector<std::vector<std::size_t>> confusion;
};

Evaluation evaluate_responses(const Tensor& responses, std::span<const int> labels,
                              std::span<const int> prototype_labels, LossKind loss, const RejectPolicy& policy);
Evaluation evaluate(const Network& net, const Dataset& data, LossKind loss, const RejectPolicy& policy);

/// Parameters, head metadata and nball radii (when present) as named tensors.
Checkpoint make_checkpoint(const Network& net, const Shape& sample_shape, const RejectPolicy& policy);
/// Copies checkpoint tensors into a network assembled from the same config.
/// Throws FormatError when shapes disagree.
void load_checkpoint(Network& net, const Checkpoint& ck);
/// Network for a checkpoint: assembles from config using the checkpoint's
/// sample shape and head labels, then loads the parameters.
Network network_from_checkpoint(const RunConfig& config, const Checkpoint& ck);
/// Reject policy for evaluating a checkpoint: explicit config radii win over
/// stored calibrated radii.
RejectPolicy checkpoint_reject_policy(const RunConfig& config, const Checkpoint& ck, const Network& net);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double accuracy = 0.0;
  double reject_rate = 0.0;
  double wall_time_s = 0.0;
};

inline constexpr const char* kMetricsHeader = "epoch,split,loss,accuracy,reject_rate,wall_time_s";
std::string to_csv_row(const MetricsRecord& r);

struct TrainResult {
  Network network;
  RejectPolicy reject;
  std::vector<MetricsRecord> metrics;
  Checkpoint checkpoint;
};

struct TrainOptions {
  std::function<void(const MetricsRecord&)> on_record;
};

/// Epoch loop: shuffled mini-batches, averaged gradients, l1 penalty on radii,
/// Adam step. Records train and test metrics before the first epoch and after
/// every epoch.
TrainResult train(const RunConfig& config, const DataSplits& data, const TrainOptions& options = {});

/// train() plus metrics.csv, checkpoint.bin and config.json in output_dir.
TrainResult train_and_save(const RunConfig& config, const TrainOptions& options = {});

void write_metrics_csv(const std::filesystem::path& path, const std::vector<MetricsRecord>& records);

}  // namespace protolayer
