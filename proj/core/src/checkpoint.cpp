#include "gapfill/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "gapfill/version.hpp"

namespace gapfill {

namespace {

constexpr char kMagic[8] = {'G', 'F', 'C', 'K', 'P', 'T', '0', '1'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}

class Reader {
 public:
  explicit Reader(std::string bytes) : bytes_(std::move(bytes)) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    return v;
  }

  double f64() {
    const std::uint64_t bits = u64();
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
  }

  std::string str() {
    const std::uint64_t len = u64();
    need(len);
    std::string s = bytes_.substr(pos_, len);
    pos_ += len;
    return s;
  }

  void raw(char* dst, std::size_t len) {
    need(len);
    std::memcpy(dst, bytes_.data() + pos_, len);
    pos_ += len;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::uint64_t n) {
    if (pos_ + n > bytes_.size()) throw std::runtime_error("checkpoint: truncated file");
  }
  std::string bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t fnv1a_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

void Checkpoint::add(const std::string& name, const Tensor& t) {
  entries.push_back({name, t.shape(), std::vector<double>(t.data().begin(), t.data().end())});
}

const CheckpointEntry* Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries)
    if (e.name == name) return &e;
  return nullptr;
}

Tensor Checkpoint::tensor(const std::string& name, bool requires_grad) const {
  const CheckpointEntry* e = find(name);
  if (!e) throw std::runtime_error("checkpoint: missing entry '" + name + "'");
  Tensor t(e->shape, e->data, requires_grad);
  t.set_name(name);
  return t;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::string out;
  out.append(kMagic, sizeof(kMagic));
  const std::string version = ckpt.engine_version.empty() ? kVersion : ckpt.engine_version;
  put_u64(out, version.size());
  out.append(version);
  put_u64(out, ckpt.config_hash);
  put_u64(out, ckpt.metadata.size());
  out.append(ckpt.metadata);
  put_u64(out, ckpt.entries.size());
  for (const auto& e : ckpt.entries) {
    put_u64(out, e.name.size());
    out.append(e.name);
    put_u64(out, e.shape.size());
    for (std::size_t d : e.shape) put_u64(out, d);
    if (e.data.size() != shape_numel(e.shape)) {
      throw std::runtime_error("checkpoint: entry '" + e.name + "' shape/payload mismatch");
    }
    if constexpr (std::endian::native == std::endian::little) {
      const std::size_t off = out.size();
      out.resize(off + e.data.size() * 8);
      std::memcpy(out.data() + off, e.data.data(), e.data.size() * 8);
    } else {
      for (double d : e.data) put_f64(out, d);
    }
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "' for writing");
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("checkpoint: write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));
  char magic[8];
  r.raw(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    throw std::runtime_error("checkpoint: bad magic in '" + path.string() + "'");
  }
  Checkpoint ckpt;
  ckpt.engine_version = r.str();
  ckpt.config_hash = r.u64();
  ckpt.metadata = r.str();
  const std::uint64_t n = r.u64();
  ckpt.entries.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    CheckpointEntry e;
    e.name = r.str();
    const std::uint64_t ndim = r.u64();
    e.shape.resize(ndim);
    for (auto& d : e.shape) d = r.u64();
    e.data.resize(shape_numel(e.shape));
    if constexpr (std::endian::native == std::endian::little) {
      r.raw(reinterpret_cast<char*>(e.data.data()), e.data.size() * 8);
    } else {
      for (auto& d : e.data) d = r.f64();
    }
    ckpt.entries.push_back(std::move(e));
  }
  if (!r.done()) throw std::runtime_error("checkpoint: trailing bytes in '" + path.string() + "'");
  return ckpt;
}

}  // namespace gapfill
