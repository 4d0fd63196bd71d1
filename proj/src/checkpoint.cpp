#include "protolayer/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "protolayer/errors.hpp"

namespace protolayer {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

void Checkpoint::put(std::string name, Tensor value) {
  for (auto& [n, t] : entries_) {
    if (n == name) {
      t = std::move(value);
      return;
    }
  }
  entries_.emplace_back(std::move(name), std::move(value));
}

bool Checkpoint::contains(const std::string& name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const auto& e) { return e.first == name; });
}

const Tensor& Checkpoint::get(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no entry '" + name + "'");
}

namespace {

template <class T>
void put_raw(std::vector<std::uint8_t>& out, T v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(T));
}

class Cursor {
 public:
  Cursor(const std::vector<std::uint8_t>& bytes, const std::string& source) : bytes_(bytes), source_(source) {}

  template <class T>
  T take(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw FormatError(source_ + ": truncated " + what + " at byte offset " + std::to_string(pos_));
    }
  }

  const std::uint8_t* here() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }
  std::size_t offset() const { return pos_; }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::vector<std::uint8_t>& bytes_;
  const std::string& source_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Checkpoint::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kCheckpointMagic), std::end(kCheckpointMagic));
  put_raw(out, kCheckpointVersion);
  put_raw(out, static_cast<std::uint32_t>(entries_.size()));
  for (const auto& [name, t] : entries_) {
    put_raw(out, static_cast<std::uint32_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_raw(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_raw(out, static_cast<std::uint64_t>(d));
    for (double v : t.data()) put_raw(out, v);
  }
  return out;
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes, const std::string& source) {
  Cursor c(bytes, source);
  c.need(sizeof kCheckpointMagic, "magic");
  if (std::memcmp(c.here(), kCheckpointMagic, sizeof kCheckpointMagic) != 0) {
    throw FormatError(source + ": bad magic at byte offset 0 (not a checkpoint file)");
  }
  c.skip(sizeof kCheckpointMagic);
  const auto version_at = c.offset();
  const auto version = c.take<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported version " + std::to_string(version) + " at byte offset " +
                      std::to_string(version_at));
  }
  const auto count = c.take<std::uint32_t>("entry count");
  Checkpoint ck;
  for (std::uint32_t e = 0; e < count; ++e) {
    const auto name_len = c.take<std::uint32_t>("entry name length");
    c.need(name_len, "entry name");
    std::string name(reinterpret_cast<const char*>(c.here()), name_len);
    c.skip(name_len);
    const auto rank_at = c.offset();
    const auto rank = c.take<std::uint32_t>("rank");
    if (rank == 0 || rank > 8) {
      throw FormatError(source + ": entry '" + name + "' has rank " + std::to_string(rank) + " at byte offset " +
                        std::to_string(rank_at));
    }
    Shape shape;
    std::size_t total = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto dim_at = c.offset();
      const auto d = c.take<std::uint64_t>("dimension");
      if (d == 0 || d > (bytes.size() / sizeof(double))) {
        throw FormatError(source + ": entry '" + name + "' has implausible extent " + std::to_string(d) +
                          " at byte offset " + std::to_string(dim_at));
      }
      shape.push_back(static_cast<std::size_t>(d));
      total *= static_cast<std::size_t>(d);
    }
    c.need(total * sizeof(double), "tensor data");
    std::vector<double> data(total);
    std::memcpy(data.data(), c.here(), total * sizeof(double));
    c.skip(total * sizeof(double));
    ck.entries_.emplace_back(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!c.done()) throw FormatError(source + ": trailing bytes at byte offset " + std::to_string(c.offset()));
  return ck;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write to '" + path.string() + "'");
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return deserialize(bytes, path.string());
}

}  // namespace protolayer
