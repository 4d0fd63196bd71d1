#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "protolayer/tensor.hpp"

namespace protolayer {

inline constexpr char kCheckpointMagic[8] = {'P', 'L', 'C', 'K', 'P', 'T', '\0', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named tensors in insertion order. The byte layout is documented in
/// docs/checkpoint_format.md; every integer and double is little-endian.
class Checkpoint {
 public:
  void put(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  /// Throws FormatError when the entry is absent.
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const std::string& source = "checkpoint");

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

}  // namespace protolayer
