#include "rtgnn/serialize.hpp"

#include <algorithm>
#include <bit>
#include <fstream>
#include <iterator>

namespace rtgnn {
namespace {

constexpr std::uint8_t kTensorMagic[4] = {'R', 'T', 'N', 'S'};
constexpr std::uint8_t kCheckpointMagic[8] = {'R', 'T', 'G', 'N', 'N', 'C', 'K', 'P'};

class Writer {
 public:
  void bytes(std::span<const std::uint8_t> b) { out_.insert(out_.end(), b.begin(), b.end()); }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::span<const std::uint8_t> bytes(std::size_t n) {
    need(n);
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(in_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) {
      throw FormatError("truncated stream: needed " + std::to_string(n) + " byte(s) at offset " +
                        std::to_string(pos_) + ", " + std::to_string(in_.size() - pos_) +
                        " available");
    }
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

void write_tensor(Writer& w, const Tensor& t) {
  w.bytes(kTensorMagic);
  w.uint<std::uint16_t>(kTensorFormatVersion);
  w.uint<std::uint16_t>(static_cast<std::uint16_t>(t.rank()));
  for (const std::size_t d : t.shape()) w.uint<std::uint64_t>(d);
  for (const double v : t.values()) w.f64(v);
}

Tensor read_tensor(Reader& r) {
  const auto magic = r.bytes(4);
  const std::uint16_t version = r.uint<std::uint16_t>();
  if (!std::equal(magic.begin(), magic.end(), std::begin(kTensorMagic)) ||
      version != kTensorFormatVersion) {
    throw FormatError("tensor record: unsupported version or bad magic (version " +
                      std::to_string(version) + ")");
  }
  const std::uint16_t rank = r.uint<std::uint16_t>();
  Shape shape(rank);
  std::size_t count = 1;
  for (auto& d : shape) {
    d = static_cast<std::size_t>(r.uint<std::uint64_t>());
    count *= d;
  }
  if (count > r.remaining() / 8) {
    throw FormatError("truncated stream: tensor " + shape_string(shape) + " needs " +
                      std::to_string(count * 8) + " bytes, " +
                      std::to_string(r.remaining()) + " available");
  }
  std::vector<double> values(count);
  for (double& v : values) v = r.f64();
  return Tensor(std::move(shape), std::move(values));
}

}  // namespace

std::vector<std::uint8_t> tensor_serialize(const Tensor& t) {
  Writer w;
  write_tensor(w, t);
  return w.take();
}

Tensor tensor_deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  Tensor t = read_tensor(r);
  if (r.remaining() != 0) {
    throw FormatError("tensor record: " + std::to_string(r.remaining()) + " trailing byte(s)");
  }
  return t;
}

const Tensor& CheckpointContainer::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no tensor named '" + name + "'");
}

std::vector<std::uint8_t> encode_container(const CheckpointContainer& c) {
  Writer w;
  w.bytes(kCheckpointMagic);
  w.uint<std::uint32_t>(c.format_version);
  w.uint<std::uint64_t>(c.model_digest);
  w.uint<std::uint64_t>(c.train_digest);
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
    w.bytes(std::span(reinterpret_cast<const std::uint8_t*>(name.data()), name.size()));
    write_tensor(w, t);
  }
  return w.take();
}

CheckpointContainer decode_container(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto magic = r.bytes(8);
  if (!std::equal(magic.begin(), magic.end(), std::begin(kCheckpointMagic))) {
    throw FormatError("not a checkpoint file (bad magic)");
  }
  CheckpointContainer c;
  c.format_version = r.uint<std::uint32_t>();
  if (c.format_version != kCheckpointFormatVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(c.format_version));
  }
  c.model_digest = r.uint<std::uint64_t>();
  c.train_digest = r.uint<std::uint64_t>();
  const std::uint32_t n = r.uint<std::uint32_t>();
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t len = r.uint<std::uint32_t>();
    const auto name_bytes = r.bytes(len);
    std::string name(name_bytes.begin(), name_bytes.end());
    c.tensors.emplace_back(std::move(name), read_tensor(r));
  }
  if (r.remaining() != 0) {
    throw FormatError("checkpoint: " + std::to_string(r.remaining()) + " trailing byte(s)");
  }
  return c;
}

void write_container(const std::filesystem::path& path, const CheckpointContainer& c) {
  const auto bytes = encode_container(c);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

CheckpointContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_container(bytes);
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const char ch : text) {
    h ^= static_cast<std::uint8_t>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace rtgnn
