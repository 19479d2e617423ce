#include "pixelstack/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pixelstack/error.hpp"

namespace pixelstack {

namespace {

constexpr char kMagic[4] = {'P', 'X', 'S', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  void need(std::size_t count, const std::string& what) const {
    if (bytes_.size() - pos_ < count) {
      throw FormatError(FormatError::Kind::truncated, "PXS1: truncated " + what + " at offset " + std::to_string(pos_));
    }
  }
  std::uint32_t u32(const std::string& what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return std::bit_cast<double>(v);
  }
  std::string str(std::size_t len) {
    need(len, "record name");
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), len);
    pos_ += len;
    return s;
  }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void violation(const std::string& msg) {
  throw FormatError(FormatError::Kind::invariant_violation, "PXS1: " + msg);
}

}  // namespace

const CheckpointRecord* Checkpoint::find(const std::string& name) const {
  for (const auto& r : records)
    if (r.name == name) return &r;
  return nullptr;
}

const CheckpointRecord& Checkpoint::at(const std::string& name) const {
  const auto* r = find(name);
  if (!r) violation("missing record '" + name + "'");
  return *r;
}

void Checkpoint::add(std::string name, Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) violation("record '" + name + "' payload does not match its shape");
  if (find(name)) violation("duplicate record '" + name + "'");
  records.push_back({std::move(name), std::move(shape), std::move(values)});
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, ckpt.layers);
  put_u32(out, ckpt.hidden);
  put_u32(out, ckpt.bins);
  put_u32(out, ckpt.groups);
  put_u32(out, static_cast<std::uint32_t>(ckpt.records.size()));
  for (const auto& r : ckpt.records) {
    put_u32(out, static_cast<std::uint32_t>(r.name.size()));
    out.insert(out.end(), r.name.begin(), r.name.end());
    put_u32(out, static_cast<std::uint32_t>(r.shape.size()));
    for (auto d : r.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : r.values) put_f64(out, v);
  }
  return out;
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw FormatError(FormatError::Kind::bad_magic, "PXS1: bad magic (not a checkpoint)");
  }
  (void)r.str(4);
  const auto version = r.u32("version");
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::bad_version, "PXS1: unsupported version " + std::to_string(version));
  }
  Checkpoint c;
  c.layers = r.u32("config");
  c.hidden = r.u32("config");
  c.bins = r.u32("config");
  c.groups = r.u32("config");
  const auto count = r.u32("record count");
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointRecord rec;
    rec.name = r.str(r.u32("record header"));
    const auto rank = r.u32("record rank");
    for (std::uint32_t d = 0; d < rank; ++d) rec.shape.push_back(r.u32("record dims"));
    const std::size_t n = shape_numel(rec.shape);
    if (n > r.remaining() / 8) {
      throw FormatError(FormatError::Kind::truncated, "PXS1: truncated payload of record '" + rec.name + "'");
    }
    rec.values.resize(n);
    for (auto& v : rec.values) v = r.f64();
    if (c.find(rec.name)) violation("duplicate record '" + rec.name + "'");
    c.records.push_back(std::move(rec));
  }
  if (r.remaining() != 0) violation(std::to_string(r.remaining()) + " trailing bytes");
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_checkpoint(bytes);
}

void store_parameters(Checkpoint& ckpt, const ParameterList& params, const std::string& prefix) {
  for (const auto* p : params) {
    const auto d = p->value.data();
    ckpt.add(prefix + p->name, p->value.shape(), {d.begin(), d.end()});
  }
}

void restore_parameters(const Checkpoint& ckpt, const ParameterList& params, const std::string& prefix) {
  for (auto* p : params) {
    const auto& rec = ckpt.at(prefix + p->name);
    if (rec.shape != p->value.shape()) {
      violation("record '" + rec.name + "' has shape " + shape_string(rec.shape) + ", model expects " +
                shape_string(p->value.shape()));
    }
    std::ranges::copy(rec.values, p->value.mutable_data().begin());
  }
}

void store_codebook(Checkpoint& ckpt, const Codebook& cb, const std::string& prefix) {
  const auto e = cb.embeddings.value.data();
  ckpt.add(prefix + "vq.e", {cb.k(), cb.d()}, {e.begin(), e.end()});
  ckpt.add(prefix + "vq.N", {cb.k()}, cb.counts);
  ckpt.add(prefix + "vq.m", {cb.k(), cb.d()}, cb.sums);
}

void restore_codebook(const Checkpoint& ckpt, Codebook& cb, const std::string& prefix) {
  const auto& e = ckpt.at(prefix + "vq.e");
  const auto& n = ckpt.at(prefix + "vq.N");
  const auto& m = ckpt.at(prefix + "vq.m");
  const Shape kd{cb.k(), cb.d()};
  if (e.shape != kd || m.shape != kd || n.shape != Shape{cb.k()}) {
    violation("codebook records do not match a " + std::to_string(cb.k()) + "x" + std::to_string(cb.d()) +
              " codebook");
  }
  cb.set_embeddings(e.values);
  cb.counts = n.values;
  cb.sums = m.values;
}

}  // namespace pixelstack
