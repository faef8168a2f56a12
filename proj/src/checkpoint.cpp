#include "dnr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace dnr {

const Tensor<float>* Checkpoint::find(std::string_view name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <class U>
  void le(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void str(const std::string& s) {
    le<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::span<const std::uint8_t> bytes(std::size_t n) {
    if (n > in_.size() - pos_) throw IoError("checkpoint truncated at byte " + std::to_string(pos_));
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }
  template <class U>
  U le() {
    auto b = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<U>(b[i]) << (8 * i));
    return v;
  }
  std::string str() {
    const auto n = le<std::uint32_t>();
    auto b = bytes(n);
    return std::string(b.begin(), b.end());
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(Checkpoint::kMagic, 4);
  w.le<std::uint32_t>(Checkpoint::kVersion);
  w.str(ckpt.config);
  w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    w.str(name);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) w.le<std::uint64_t>(e);
    for (float v : t.data()) w.le<std::uint32_t>(std::bit_cast<std::uint32_t>(v));
  }
  return w.take();
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  auto magic = r.bytes(4);
  if (std::memcmp(magic.data(), Checkpoint::kMagic, 4) != 0) throw IoError("not a checkpoint (bad magic)");
  const auto version = r.le<std::uint32_t>();
  if (version != Checkpoint::kVersion) {
    throw IoError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  ckpt.config = r.str();
  const auto count = r.le<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str();
    const auto rank = r.le<std::uint32_t>();
    if (rank > bytes.size() / 8) throw IoError("checkpoint tensor '" + name + "' has an impossible rank");
    Shape shape(rank);
    // Element count must fit in the file; checking each factor keeps the
    // product from overflowing.
    std::size_t n = 1;
    for (auto& e : shape) {
      const std::uint64_t extent = r.le<std::uint64_t>();
      if (extent != 0 && n > (bytes.size() / 4) / extent) {
        throw IoError("checkpoint tensor '" + name + "' larger than file");
      }
      e = static_cast<std::size_t>(extent);
      n *= e;
    }
    std::vector<float> data(n);
    for (auto& v : data) v = std::bit_cast<float>(r.le<std::uint32_t>());
    try {
      ckpt.tensors.emplace_back(std::move(name), Tensor<float>(std::move(shape), std::move(data)));
    } catch (const DimensionError& e) {
      throw IoError(std::string("checkpoint tensor malformed: ") + e.what());
    }
  }
  if (!r.done()) throw IoError("trailing bytes after checkpoint");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write checkpoint '" + path.string() + "'");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace dnr
