#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "protolayer/conv.hpp"
#include "protolayer/dissimilarity.hpp"
#include "protolayer/lvq_head.hpp"
#include "protolayer/model.hpp"
#include "protolayer/train_kit.hpp"

namespace protolayer {

enum class DatasetKind { synthetic_blobs, idx_images };

struct BlobsConfig {
  std::size_t n_classes = 3;
  std::size_t dim = 2;
  std::size_t train_per_class = 300;
  std::size_t test_per_class = 100;
  double spread = 1.0;
};

struct IdxConfig {
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::size_t train_limit = 0;  // 0 keeps everything
  std::size_t test_limit = 0;
};

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic_blobs;
  BlobsConfig blobs;
  IdxConfig idx;
};

enum class InitKind { samples, kmeans };

struct ProtoConvConfig {
  std::size_t prototypes = 8;
  Extent2 kernel{3, 3};
  Stride2 stride{1, 1};
  Padding padding = Padding::valid;
  bool radii = false;
  InitKind init = InitKind::kmeans;
  std::size_t init_samples = 200;  // images whose windows feed the initializer
  std::size_t kmeans_iters = 25;
  std::optional<double> radius_init;  // unset: median nearest-kernel distance
  std::optional<NeighborhoodSchedule> neural_gas;
  double l1_radii = 0.0;
};

struct ActivationConfig {
  ActivationKind function = ActivationKind::relu;
  double sigma = 1.0;
  double sigma_decay = 1.0;
};

struct LvqHeadConfig {
  std::size_t per_class = 1;
  DissimilarityKind dissimilarity = DissimilarityKind::euclidean;
  std::size_t projection_dim = 0;  // 0: same as the input dimension
  Activation activation = Activation::identity;
  InitKind init = InitKind::samples;
};

using LayerConfig = std::variant<ProtoConvConfig, ActivationConfig, LvqHeadConfig>;

enum class LossKind { glvq, rslvq };
LossKind parse_loss_kind(const std::string& name);
const char* to_string(LossKind k);

struct RejectConfig {
  RejectKind kind = RejectKind::none;
  double quantile = 0.99;                        // nball, calibrated on training data
  std::optional<std::vector<double>> radii_sq;  // nball, explicit radii instead
  double lambda_error = 1.0;
  double lambda_reject = 0.5;
};

struct RunConfig {
  std::uint64_t seed = 0;
  DatasetConfig dataset;
  std::vector<LayerConfig> model;
  LossKind loss = LossKind::glvq;
  AdamConfig optimizer;
  RejectConfig reject;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  std::filesystem::path output_dir = "runs/default";
};

/// Parses a JSON document. Unknown keys, wrong types and out-of-range values
/// raise ConfigError naming the offending key path.
RunConfig parse_config(const std::string& json_text);
/// Reads and parses a file, then applies the PROTOLAYER_SEED override.
RunConfig load_config(const std::filesystem::path& path);
/// Replaces config.seed with PROTOLAYER_SEED when that variable is set.
void apply_seed_override(RunConfig& config);

/// Canonical JSON text of a config (all keys, defaults filled in).
std::string dump_config(const RunConfig& config);

}  // namespace protolayer
