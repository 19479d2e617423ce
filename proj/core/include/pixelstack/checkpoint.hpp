#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "pixelstack/optim.hpp"
#include "pixelstack/vq.hpp"

namespace pixelstack {

struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// PXS1 container: "PXS1", u32 version, config block of four u32 (layers,
/// hidden, bins, groups), u32 record count, then per record u32 name length,
/// name bytes, u32 rank, rank x u32 dims, float64 payload. Little-endian.
struct Checkpoint {
  std::uint32_t layers = 0, hidden = 0, bins = 0, groups = 0;
  std::vector<CheckpointRecord> records;

  [[nodiscard]] const CheckpointRecord* find(const std::string& name) const;
  /// Throws FormatError naming the record if it is missing.
  [[nodiscard]] const CheckpointRecord& at(const std::string& name) const;
  void add(std::string name, Shape shape, std::vector<double> values);
};

[[nodiscard]] std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
[[nodiscard]] Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
[[nodiscard]] Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Appends every parameter under `prefix + name`.
void store_parameters(Checkpoint& ckpt, const ParameterList& params, const std::string& prefix = {});
/// Copies records into matching parameters; a missing record or a shape
/// mismatch is a FormatError(invariant_violation).
void restore_parameters(const Checkpoint& ckpt, const ParameterList& params, const std::string& prefix = {});

/// "vq.e", "vq.N", "vq.m" (with prefix).
void store_codebook(Checkpoint& ckpt, const Codebook& cb, const std::string& prefix = {});
void restore_codebook(const Checkpoint& ckpt, Codebook& cb, const std::string& prefix = {});

}  // namespace pixelstack
