#include "pixelstack/dataset.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "pixelstack/error.hpp"

namespace pixelstack {

namespace {

constexpr std::array<std::uint8_t, 4> kMagic{'I', 'D', 'T', '1'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 * 4 + 1 + 2;

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  void need(std::size_t count, const char* what) const {
    if (bytes_.size() - pos_ < count) {
      throw FormatError(FormatError::Kind::truncated, std::string("IDT1: truncated ") + what + " (need " +
                                                           std::to_string(count) + " bytes at offset " +
                                                           std::to_string(pos_) + ", file has " +
                                                           std::to_string(bytes_.size()) + ")");
    }
  }
  std::uint8_t u8() { return bytes_[pos_++]; }
  std::uint16_t u16() {
    const auto v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  [[nodiscard]] std::size_t pos() const { return pos_; }
  [[nodiscard]] std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] void invariant(const std::string& msg) {
  throw FormatError(FormatError::Kind::invariant_violation, "IDT1: " + msg);
}

int clamp_u8(int v) { return std::clamp(v, 0, 255); }

}  // namespace

void ImageDataset::validate() const {
  if (bits == 0 || bits > 16) invariant("bits per value must be in [1, 16], got " + std::to_string(bits));
  if (data.values.size() != data.n * data.item_size()) invariant("payload size does not match geometry");
  if (labels.size() != data.n) {
    invariant("expected " + std::to_string(data.n) + " labels, got " + std::to_string(labels.size()));
  }
  const auto limit = static_cast<std::int64_t>(bins());
  for (std::size_t i = 0; i < data.values.size(); ++i) {
    const auto v = data.values[i];
    if (v < 0 || v >= limit) {
      invariant("value " + std::to_string(v) + " at index " + std::to_string(i) + " is outside [0, " +
                std::to_string(limit) + ")");
    }
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= class_count && !(class_count == 0 && labels[i] == 0)) {
      invariant("label " + std::to_string(labels[i]) + " of item " + std::to_string(i) + " is not below class count " +
                std::to_string(class_count));
    }
  }
}

ImageDataset ImageDataset::subset(const std::vector<std::size_t>& items) const {
  ImageDataset out;
  out.data = data.gather(items);
  out.bits = bits;
  out.class_count = class_count;
  out.split = split;
  out.labels.reserve(items.size());
  for (auto i : items) out.labels.push_back(labels.at(i));
  return out;
}

std::vector<std::uint8_t> serialize_dataset(const ImageDataset& ds) {
  ds.validate();
  const auto& m = ds.data;
  const bool wide = ds.bits > 8;
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 2 * m.n + m.values.size() * (wide ? 2 : 1));
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(m.n));
  put_u32(out, static_cast<std::uint32_t>(m.height));
  put_u32(out, static_cast<std::uint32_t>(m.width));
  put_u32(out, static_cast<std::uint32_t>(m.channels));
  out.push_back(static_cast<std::uint8_t>(ds.bits));
  put_u16(out, ds.class_count);
  for (auto l : ds.labels) put_u16(out, l);
  for (std::size_t b = 0; b < m.n; ++b) {
    for (std::size_t y = 0; y < m.height; ++y) {
      for (std::size_t x = 0; x < m.width; ++x) {
        for (std::size_t g = 0; g < m.channels; ++g) {
          const auto v = static_cast<std::uint16_t>(m.at(b, g, y, x));
          if (wide) {
            put_u16(out, v);
          } else {
            out.push_back(static_cast<std::uint8_t>(v));
          }
        }
      }
    }
  }
  return out;
}

ImageDataset parse_dataset(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  r.need(4, "magic");
  for (auto c : kMagic) {
    if (r.u8() != c) throw FormatError(FormatError::Kind::bad_magic, "IDT1: bad magic (not an IDT1 container)");
  }
  r.need(kHeaderBytes - 4, "header");
  const auto version = r.u32();
  if (version != kVersion) {
    throw FormatError(FormatError::Kind::bad_version, "IDT1: unsupported version " + std::to_string(version));
  }
  const std::size_t n = r.u32(), h = r.u32(), w = r.u32(), g = r.u32();
  ImageDataset ds;
  ds.bits = r.u8();
  ds.class_count = r.u16();
  if (ds.bits == 0 || ds.bits > 16) invariant("bits per value must be in [1, 16], got " + std::to_string(ds.bits));

  r.need(2 * n, "labels");
  ds.labels.resize(n);
  for (auto& l : ds.labels) l = r.u16();

  const bool wide = ds.bits > 8;
  const std::size_t count = n * h * w * g;
  if (h * w * g != 0 && count / (h * w * g) != n) invariant("geometry overflows");
  r.need(count * (wide ? 2 : 1), "payload");
  ds.data = IntMap(n, g, h, w);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t c = 0; c < g; ++c) ds.data.at(b, c, y, x) = wide ? r.u16() : r.u8();
      }
    }
  }
  if (r.remaining() != 0) {
    invariant(std::to_string(r.remaining()) + " trailing bytes after payload at offset " + std::to_string(r.pos()));
  }
  ds.validate();
  return ds;
}

void save_dataset(const ImageDataset& ds, const std::filesystem::path& path) {
  const auto bytes = serialize_dataset(ds);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + path.string() + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw FormatError(FormatError::Kind::io, "write failed: " + path.string());
}

ImageDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open dataset " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return parse_dataset(bytes);
}

// ---------------------------------------------------------------------------

ImageDataset synth_textures(std::size_t n, std::size_t height, std::size_t width, std::size_t classes,
                            std::uint64_t seed) {
  if (classes == 0) throw ValueError("synth_textures: need at least one class");
  if (classes > 0xFFFF) throw ValueError("synth_textures: too many classes");
  if (n > 0 && (height < 2 || width < 2)) throw ValueError("synth_textures: images must be at least 2x2");
  Rng rng(seed);
  ImageDataset ds;
  ds.bits = 8;
  ds.class_count = static_cast<std::uint16_t>(classes);
  ds.data = IntMap(n, 1, height, width);
  ds.labels.resize(n);

  const auto H = static_cast<int>(height), W = static_cast<int>(width);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<int>(i % classes);
    ds.labels[i] = static_cast<std::uint16_t>(c);
    const int layout = c % 6;
    const int bg = 40 + 16 * (c % 4);
    const int fg = 170 + 12 * (c % 3);
    const int jitter = static_cast<int>(rng.below(41)) - 20;
    const int shift_y = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, H / 4)))) - H / 8;
    const int shift_x = static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(1, W / 4)))) - W / 8;
    const int texture = (c / 6 + c) % 3;
    const int phase = static_cast<int>(rng.below(2));
    const int amplitude = 24;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const int yy = y - shift_y, xx = x - shift_x;
        bool front = false;
        switch (layout) {
          case 0: front = xx >= W / 2; break;                          // vertical half split
          case 1: front = ((yy + H) / std::max(1, H / 4)) % 2 == 1; break;  // wide horizontal stripes
          case 2: {                                                      // centred disk
            const int dy = 2 * yy - (H - 1), dx = 2 * xx - (W - 1);
            front = dy * dy + dx * dx <= H * W / 4;
            break;
          }
          case 3: front = yy >= H / 2; break;                                // horizontal half split
          case 4: front = ((yy >= H / 2) != (xx >= W / 2)); break;           // quadrant checker
          default: front = xx * H > yy * W; break;                           // diagonal
        }
        int v = (front ? fg : bg) + jitter;
        bool on = false;
        switch (texture) {
          case 0: on = ((x + phase) % 2) == 0; break;
          case 1: on = ((x + y + phase) % 2) == 0; break;
          default: on = ((y + phase) % 2) == 0; break;
        }
        v += on ? amplitude / 2 : -amplitude / 2;
        v += static_cast<int>(rng.below(13)) - 6;
        ds.data.at(i, 0, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = clamp_u8(v);
      }
    }
  }
  return ds;
}

IntMap bit_depth_reduce(const IntMap& x, unsigned from_bits, unsigned to_bits) {
  if (from_bits == 0 || from_bits > 16 || to_bits == 0 || to_bits > from_bits) {
    throw ValueError("bit_depth_reduce: need 1 <= to_bits <= from_bits <= 16, got from=" + std::to_string(from_bits) +
                     " to=" + std::to_string(to_bits));
  }
  IntMap out = x;
  const unsigned shift = from_bits - to_bits;
  const std::int32_t limit = 1 << from_bits;
  for (auto& v : out.values) {
    if (v < 0 || v >= limit) throw ValueError("bit_depth_reduce: value " + std::to_string(v) + " exceeds source depth");
    v >>= shift;
  }
  return out;
}

ImageDataset bit_depth_reduce(const ImageDataset& ds, unsigned to_bits) {
  ImageDataset out = ds;
  out.data = bit_depth_reduce(ds.data, ds.bits, to_bits);
  out.bits = to_bits;
  return out;
}

CropOffset draw_crop(std::size_t height, std::size_t width, std::size_t crop_to, Rng& rng) {
  if (crop_to > std::min(height, width)) {
    throw ValueError("crop " + std::to_string(crop_to) + " larger than image " + std::to_string(height) + "x" +
                     std::to_string(width));
  }
  if (crop_to == 0) return {};
  CropOffset o;
  o.top = static_cast<std::size_t>(rng.below(height - crop_to + 1));
  o.left = static_cast<std::size_t>(rng.below(width - crop_to + 1));
  return o;
}

IntMap augment(const IntMap& images, Rng& rng, const AugmentFlags& flags) {
  if (flags.crop_to > std::min(images.height, images.width)) {
    throw ValueError("crop " + std::to_string(flags.crop_to) + " larger than image " + std::to_string(images.height) +
                     "x" + std::to_string(images.width));
  }
  const std::size_t oh = flags.crop_to ? flags.crop_to : images.height;
  const std::size_t ow = flags.crop_to ? flags.crop_to : images.width;
  IntMap out(images.n, images.channels, oh, ow);
  for (std::size_t b = 0; b < images.n; ++b) {
    bool flip = flags.force_flip;
    if (!flip && flags.flip) flip = rng.below(2) == 1;
    const auto crop = draw_crop(images.height, images.width, flags.crop_to, rng);
    for (std::size_t c = 0; c < images.channels; ++c) {
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x) {
          const std::size_t sx = crop.left + x;
          const std::size_t src_x = flip ? images.width - 1 - sx : sx;
          out.at(b, c, y, x) = images.at(b, c, crop.top + y, src_x);
        }
      }
    }
  }
  return out;
}

bool is_validation_index(std::size_t index) {
  std::uint64_t state = static_cast<std::uint64_t>(index) ^ 0x5EED5EEDULL;
  return splitmix64(state) % 10 == 0;
}

}  // namespace pixelstack
