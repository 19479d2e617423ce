#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "pixelstack/nn.hpp"
#include "pixelstack/rng.hpp"

namespace pixelstack {

enum class Split { unspecified, train, validation };

/// Integer images (or code maps) with labels and a bit depth.
struct ImageDataset {
  IntMap data;  // [N, G, H, W]
  unsigned bits = 8;
  std::uint16_t class_count = 0;
  std::vector<std::uint16_t> labels;  // one per item
  Split split = Split::unspecified;   // in-memory only, not serialized

  [[nodiscard]] std::size_t size() const noexcept { return data.n; }
  [[nodiscard]] std::size_t bins() const noexcept { return std::size_t{1} << bits; }
  [[nodiscard]] std::vector<std::int32_t> labels_i32() const { return {labels.begin(), labels.end()}; }

  /// Throws FormatError(invariant_violation) naming the first bad value or label.
  void validate() const;

  /// Items picked by index (labels follow).
  [[nodiscard]] ImageDataset subset(const std::vector<std::size_t>& items) const;
};

/// IDT1 container: "IDT1", u32 version, u32 N, H, W, G, u8 bits, u16
/// class_count, N x u16 labels, then the values in (n, h, w, g) order as u8
/// (bits <= 8) or u16. Little-endian throughout.
[[nodiscard]] std::vector<std::uint8_t> serialize_dataset(const ImageDataset& ds);
[[nodiscard]] ImageDataset parse_dataset(std::span<const std::uint8_t> bytes);

void save_dataset(const ImageDataset& ds, const std::filesystem::path& path);
[[nodiscard]] ImageDataset load_dataset(const std::filesystem::path& path);

/// Synthetic grayscale corpus at 8 bits. Each class has its own global
/// layout and its own fine texture; every image gets a random layout shift,
/// a global brightness offset, texture phase and pixel noise. Integer-only
/// arithmetic, so the output is identical on every platform.
[[nodiscard]] ImageDataset synth_textures(std::size_t n, std::size_t height, std::size_t width, std::size_t classes,
                                          std::uint64_t seed);

/// value -> floor(value / 2^(from - to)).
[[nodiscard]] IntMap bit_depth_reduce(const IntMap& x, unsigned from_bits, unsigned to_bits);
[[nodiscard]] ImageDataset bit_depth_reduce(const ImageDataset& ds, unsigned to_bits);

struct AugmentFlags {
  bool flip = false;        // horizontal flip with probability 0.5
  bool force_flip = false;  // always flip (overrides `flip`)
  std::size_t crop_to = 0;  // 0 keeps the full image
};

struct CropOffset {
  std::size_t top = 0, left = 0;
};

/// Uniform top-left corner for a crop_to x crop_to window.
[[nodiscard]] CropOffset draw_crop(std::size_t height, std::size_t width, std::size_t crop_to, Rng& rng);

/// Applies flip then crop independently to every item.
[[nodiscard]] IntMap augment(const IntMap& images, Rng& rng, const AugmentFlags& flags);

/// 90/10 train/validation split by a hash of the item index.
[[nodiscard]] bool is_validation_index(std::size_t index);

}  // namespace pixelstack
