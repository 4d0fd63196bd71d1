#include "protolayer/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "protolayer/dissimilarity.hpp"
#include "protolayer/errors.hpp"

namespace protolayer {

std::vector<std::uint8_t> normalize_to_gray(std::span<const double> values) {
  if (values.empty()) return {};
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<std::uint8_t> out(values.size(), 128);
  if (!(hi > lo)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(255.0 * (values[i] - lo) / (hi - lo)));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != image.rows * image.cols) throw ShapeError("write_pgm: pixel count does not match extent");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "P5\n" << image.cols << ' ' << image.rows << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::string magic;
  std::size_t cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (!in || magic != "P5") throw FormatError(path.string() + ": not a binary graymap at byte offset 0");
  if (maxval != 255) throw FormatError(path.string() + ": only maxval 255 is supported");
  in.get();  // single whitespace before the raster
  GrayImage img{rows, cols, std::vector<std::uint8_t>(rows * cols)};
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw FormatError(path.string() + ": truncated raster");
  }
  return img;
}

namespace {

std::string numbered(const char* fmt, std::size_t idx, const std::string& tail) {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, idx);
  return buf + tail;
}

}  // namespace

std::vector<std::filesystem::path> export_prototypes(const Checkpoint& ck, const std::filesystem::path& out_dir,
                                                     bool csv) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written;
  const auto& w = ck.get("head.prototypes");
  const auto& labels = ck.get("head.labels");

  if (csv) {
    for (const auto& [name, t] : ck.entries()) {
      if (name != "head.prototypes" && name.find(".kernels") == std::string::npos) continue;
      const auto path = out_dir / (name + ".csv");
      std::ofstream out(path, std::ios::trunc);
      if (!out) throw DataError("cannot write '" + path.string() + "'");
      const std::size_t per = t.size() / t.dim(0);
      char buf[32];
      for (std::size_t k = 0; k < t.dim(0); ++k) {
        if (name == "head.prototypes") out << static_cast<int>(labels[k]) << ',';
        for (std::size_t j = 0; j < per; ++j) {
          std::snprintf(buf, sizeof buf, "%.17g", t[k * per + j]);
          out << buf << (j + 1 < per ? "," : "\n");
        }
      }
      written.push_back(path);
    }
    return written;
  }

  // Head prototypes count as images when they live in the head's input space
  // and that space is {rows, cols, 1}.
  const auto kind = static_cast<DissimilarityKind>(static_cast<int>(ck.get("head.kind")[0]));
  const auto& in_shape = ck.get("head.input_shape");
  const bool input_space = kind == DissimilarityKind::euclidean || kind == DissimilarityKind::omega;
  if (input_space && in_shape.size() == 3 && in_shape[2] == 1.0) {
    const auto rows = static_cast<std::size_t>(in_shape[0]), cols = static_cast<std::size_t>(in_shape[1]);
    for (std::size_t k = 0; k < w.rows(); ++k) {
      GrayImage img{rows, cols, normalize_to_gray(w.row(k))};
      const auto path =
          out_dir / numbered("head_proto_%04zu", k, "_class_" + std::to_string(static_cast<int>(labels[k])) + ".pgm");
      write_pgm(path, img);
      written.push_back(path);
    }
  }
  for (const auto& [name, t] : ck.entries()) {
    const auto dot = name.find(".kernels");
    if (dot == std::string::npos || t.rank() != 4 || t.dim(3) != 1) continue;
    const std::string layer = name.substr(0, dot);
    for (std::size_t k = 0; k < t.dim(0); ++k) {
      GrayImage img{t.dim(1), t.dim(2), normalize_to_gray(t.row(k))};
      const auto path = out_dir / numbered((layer + "_kernel_%04zu").c_str(), k, "_unlabeled.pgm");
      write_pgm(path, img);
      written.push_back(path);
    }
  }
  if (written.empty()) {
    throw UsageError("no prototype in this checkpoint is image-shaped (head prototypes are " +
                     shape_to_string(w.shape()) + "); use --format csv for a raw export");
  }
  return written;
}

}  // namespace protolayer
