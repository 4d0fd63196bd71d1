#include "protolayer/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <random>

#include "protolayer/errors.hpp"

namespace protolayer {

Tensor Dataset::sample(std::size_t i) const {
  const auto row = inputs.row(i);
  return Tensor(sample_shape, std::vector<double>(row.begin(), row.end()));
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  Dataset out;
  out.sample_shape = sample_shape;
  out.inputs = Tensor({indices.size(), inputs.cols()});
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), out.inputs.row(i).begin());
    out.labels.push_back(labels[indices[i]]);
  }
  return out;
}

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) {
    throw FormatError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
  }
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

void expect_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
  if (got != want) {
    char buf[96];
    std::snprintf(buf, sizeof buf, ": bad magic 0x%08x at byte offset 0 (expected 0x%08x)", got, want);
    throw FormatError(path.string() + buf);
  }
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  expect_magic(read_be32(bytes, 0, path), kIdxImagesMagic, path);
  IdxImages img;
  img.count = read_be32(bytes, 4, path);
  img.rows = read_be32(bytes, 8, path);
  img.cols = read_be32(bytes, 12, path);
  const std::size_t expected = img.count * img.rows * img.cols;
  if (bytes.size() - 16 < expected) {
    throw FormatError(path.string() + ": truncated pixel data at byte offset " + std::to_string(bytes.size()) +
                      " (expected " + std::to_string(16 + expected) + " bytes)");
  }
  img.pixels.assign(bytes.begin() + 16, bytes.begin() + 16 + static_cast<std::ptrdiff_t>(expected));
  return img;
}

std::vector<std::uint8_t> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  expect_magic(read_be32(bytes, 0, path), kIdxLabelsMagic, path);
  const std::size_t count = read_be32(bytes, 4, path);
  if (bytes.size() - 8 < count) {
    throw FormatError(path.string() + ": truncated label data at byte offset " + std::to_string(bytes.size()) +
                      " (expected " + std::to_string(8 + count) + " bytes)");
  }
  return {bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

void write_idx_images(const std::filesystem::path& path, const IdxImages& images) {
  if (images.pixels.size() != images.count * images.rows * images.cols) {
    throw ShapeError("write_idx_images: pixel buffer does not match count x rows x cols");
  }
  std::vector<std::uint8_t> out;
  out.reserve(16 + images.pixels.size());
  put_be32(out, kIdxImagesMagic);
  put_be32(out, static_cast<std::uint32_t>(images.count));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  out.insert(out.end(), images.pixels.begin(), images.pixels.end());
  write_file(path, out);
}

void write_idx_labels(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(8 + labels.size());
  put_be32(out, kIdxLabelsMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.insert(out.end(), labels.begin(), labels.end());
  write_file(path, out);
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                 std::size_t limit, std::uint64_t seed) {
  const auto images = read_idx_images(images_path);
  const auto labels = read_idx_labels(labels_path);
  if (images.count != labels.size()) {
    throw FormatError(labels_path.string() + ": label count " + std::to_string(labels.size()) +
                      " at byte offset 4 does not match image count " + std::to_string(images.count));
  }
  std::vector<std::size_t> order(images.count);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  if (limit != 0 && limit < order.size()) order.resize(limit);

  const std::size_t pix = images.rows * images.cols;
  Dataset ds;
  ds.sample_shape = {images.rows, images.cols, 1};
  ds.inputs = Tensor({order.size(), pix});
  ds.labels.reserve(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto* src = images.pixels.data() + order[i] * pix;
    auto dst = ds.inputs.row(i);
    for (std::size_t j = 0; j < pix; ++j) dst[j] = static_cast<double>(src[j]) / 255.0;
    ds.labels.push_back(labels[order[i]]);
  }
  return ds;
}

Tensor blob_means(std::size_t n_classes, std::size_t dim, double spread, std::uint64_t seed) {
  if (n_classes == 0 || dim == 0) throw ArgumentError("blobs: class count and dimension must be positive");
  if (!(spread >= 0.0)) throw ArgumentError("blobs: spread must be nonnegative");
  const double sep = std::max(8.0 * spread, 1.0);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-sep, sep);
  std::vector<double> offset(dim);
  for (auto& o : offset) o = unif(rng);

  std::vector<std::size_t> perm(std::max(n_classes, dim));
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);

  Tensor means({n_classes, dim});
  for (std::size_t c = 0; c < n_classes; ++c) {
    auto m = means.row(c);
    std::copy(offset.begin(), offset.end(), m.begin());
    if (n_classes == 1) continue;
    if (dim >= n_classes) {
      // scaled simplex vertices: pairwise distance sep
      m[perm[c]] += sep / std::numbers::sqrt2;
    } else if (dim >= 2) {
      // regular polygon with side sep in a random pair of axes
      const double radius = sep / (2.0 * std::sin(std::numbers::pi / static_cast<double>(n_classes)));
      const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(n_classes);
      const std::size_t axis = perm[0] % dim;
      m[axis] += radius * std::cos(angle);
      m[(axis + 1) % dim] += radius * std::sin(angle);
    } else {
      m[0] += sep * static_cast<double>(perm[c]);
    }
  }
  return means;
}

Dataset gen_blobs(std::size_t n_classes, std::size_t n_per_class, std::size_t dim, double spread, std::uint64_t seed,
                  std::uint64_t stream) {
  if (n_per_class == 0) throw ArgumentError("blobs: n_per_class must be positive");
  const Tensor means = blob_means(n_classes, dim, spread, seed);
  std::seed_seq seq{seed, stream, std::uint64_t{0x9e3779b97f4a7c15ULL}};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.sample_shape = {dim};
  ds.inputs = Tensor({n_classes * n_per_class, dim});
  ds.labels.reserve(n_classes * n_per_class);
  std::size_t i = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    const auto m = means.row(c);
    for (std::size_t s = 0; s < n_per_class; ++s, ++i) {
      auto row = ds.inputs.row(i);
      for (std::size_t j = 0; j < dim; ++j) row[j] = m[j] + spread * normal(rng);
      ds.labels.push_back(static_cast<int>(c));
    }
  }
  return ds;
}

Dataset gen_outliers(const Tensor& means, std::size_t count, double min_distance, std::uint64_t seed) {
  if (means.rank() != 2) throw ShapeError("gen_outliers: means must be a matrix");
  const std::size_t dim = means.cols();
  std::vector<double> lo(dim, std::numeric_limits<double>::infinity());
  std::vector<double> hi(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t c = 0; c < means.rows(); ++c) {
    for (std::size_t j = 0; j < dim; ++j) {
      lo[j] = std::min(lo[j], means.at(c, j));
      hi[j] = std::max(hi[j], means.at(c, j));
    }
  }
  std::mt19937_64 rng(seed);
  Dataset ds;
  ds.sample_shape = {dim};
  ds.inputs = Tensor({count, dim});
  ds.labels.assign(count, -1);
  std::vector<double> p(dim);
  const double min_sq = min_distance * min_distance;
  for (std::size_t i = 0; i < count;) {
    for (std::size_t j = 0; j < dim; ++j) {
      std::uniform_real_distribution<double> u(lo[j] - 2.0 * min_distance, hi[j] + 2.0 * min_distance);
      p[j] = u(rng);
    }
    bool far = true;
    for (std::size_t c = 0; c < means.rows() && far; ++c) far = squared_distance(p, means.row(c)) >= min_sq;
    if (!far) continue;
    std::copy(p.begin(), p.end(), ds.inputs.row(i).begin());
    ++i;
  }
  return ds;
}

}  // namespace protolayer
