#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pixelstack/aux_decoders.hpp"
#include "pixelstack/dataset.hpp"
#include "pixelstack/pixelcnn.hpp"

namespace pixelstack {

enum class AuxStrategy { feed_forward, msp };

/// Shape of the integer map a level consumes.
struct MapGeometry {
  std::size_t channels = 1;
  std::size_t bins = 16;
  std::size_t height = 0;
  std::size_t width = 0;

  friend bool operator==(const MapGeometry&, const MapGeometry&) = default;
};

[[nodiscard]] MapGeometry geometry_of(const IntMap& x, std::size_t bins);

/// One encoder/decoder level. The decoder's groups/bins and the modulator's
/// code geometry follow from the encoder; resolve_level() fills them in.
struct LevelSpec {
  EncoderSpec encoder;
  AuxStrategy aux = AuxStrategy::feed_forward;
  FFAuxSpec ff;
  MSPSpec msp;
  PixelCNNConfig decoder;
  ModulatorSpec modulator;
  TrainOptions encoder_train;
  TrainOptions decoder_train;
};

struct PriorSpec {
  PixelCNNConfig net;
  TrainOptions train;
};

/// Copies the input geometry into the encoder, decoder and modulator fields.
[[nodiscard]] LevelSpec resolve_level(LevelSpec spec, const MapGeometry& input);

/// resolve_level() applied down the chain; the prior gets the top geometry.
[[nodiscard]] std::vector<LevelSpec> resolve_levels(const MapGeometry& pixels, std::vector<LevelSpec> specs);
[[nodiscard]] PriorSpec resolve_prior(PriorSpec prior, const MapGeometry& pixels, const std::vector<LevelSpec>& specs);

/// Geometry of every level input, pixels first and the prior input last.
/// Throws ShapeError if a spec disagrees with the geometry it receives or a
/// stride does not divide the map.
[[nodiscard]] std::vector<MapGeometry> chain_geometry(const MapGeometry& pixels, const std::vector<LevelSpec>& specs,
                                                      const PriorSpec& prior);

struct HierarchyLevel {
  Encoder encoder;
  Codebook codebook;
  AutoregressiveNet decoder;  // p(x_l | x_{l+1})
  double code_perplexity = 1.0;
};

/// Decoders D_1..D_{L-1}, encoders E_1..E_{L-1} and the top prior P.
struct HierarchicalModel {
  std::vector<MapGeometry> geometry;  // L entries: pixels, codes of level 1, ...
  std::vector<HierarchyLevel> levels;
  std::optional<AutoregressiveNet> prior;

  [[nodiscard]] std::size_t depth() const noexcept { return levels.size() + 1; }
};

/// Untrained model with the given architecture (for loading checkpoints).
[[nodiscard]] HierarchicalModel build_hierarchy(const MapGeometry& pixels, const std::vector<LevelSpec>& specs,
                                                const PriorSpec& prior);

/// Teacher-forced maximum likelihood for an autoregressive net. `codes`
/// feeds the modulator, `labels` the class biases; either may be null.
/// Returns the per-step loss in nats.
std::vector<double> fit_autoregressive(AutoregressiveNet& net, const IntMap& x, const IntMap* codes,
                                       const std::vector<std::int32_t>* labels, const TrainOptions& opts);

/// Mean NLL in bits per value, evaluated in chunks without gradients.
[[nodiscard]] double evaluate_bits(const AutoregressiveNet& net, const IntMap& x, const IntMap* codes = nullptr,
                                   const std::vector<std::int32_t>* labels = nullptr);

/// x_{l+1} = E_l(x_l): deterministic code maps with labels carried over.
[[nodiscard]] ImageDataset encode_dataset(const Encoder& encoder, const Codebook& codebook, const ImageDataset& data);

/// Trains every level in order, then the prior on the top codes (with class
/// labels when prior.net.classes > 0). Within a level the encoder and the
/// decoder take alternating steps; the decoder sees discrete codes only, so
/// no gradient reaches the encoder from it. Metric rows carry one global
/// step counter across all stages.
[[nodiscard]] HierarchicalModel train_hierarchy(const ImageDataset& data, const std::vector<LevelSpec>& specs,
                                                const PriorSpec& prior, const MetricSink& sink = {});

/// Top codes from the prior, then each decoder in turn down to pixels. The
/// same temperature is used at every level. With L = 1 this is exactly
/// sample() on the prior.
[[nodiscard]] IntMap ancestral_sample(const HierarchicalModel& model, std::size_t n,
                                      std::optional<std::int32_t> label, const SamplerConfig& cfg);

/// Encodes through `levels_to_encode` levels and samples back down.
[[nodiscard]] IntMap reconstruct(const HierarchicalModel& model, const IntMap& x, std::size_t levels_to_encode,
                                 const SamplerConfig& cfg);

/// Default sampling temperature for reconstructions.
inline constexpr double kReconstructionTemperature = 0.99;

struct JointNLLReport {
  std::vector<double> level_nats;  // -log p(x_l | x_{l+1}) for l = 1..L-1
  double prior_nats = 0.0;         // -log p(x_L)
  double total_nats = 0.0;
  double pixel_dims = 0.0;
  double bits_per_dim = 0.0;

  [[nodiscard]] static JointNLLReport from_components(std::vector<double> level_nats, double prior_nats,
                                                      double pixel_dims);
};

/// Per-image joint NLL with every code fixed by the deterministic encoders.
[[nodiscard]] std::vector<JointNLLReport> joint_nll(const HierarchicalModel& model, const IntMap& x,
                                                    const std::vector<std::int32_t>& labels = {});

// ---------------------------------------------------------------------------
// Code predictability

struct SweepRow {
  std::string setting;
  double perplexity = 1.0;
  double nll_bits_per_position = 0.0;  // prior NLL on validation codes
};

struct PredictabilitySpec {
  LevelSpec level;  // encoder + aux strategy under test
  PriorSpec prior;  // fixed small prior trained on the resulting codes
  std::size_t repeats = 1;  // independently seeded runs averaged per setting
};

/// Trains the level's encoder on the training split, fits the prior on the
/// training codes and reports its NLL on the validation codes. With
/// repeats > 1 the encoder and prior seeds are re-derived per run and the
/// rows averaged.
[[nodiscard]] SweepRow measure_code_predictability(const ImageDataset& data, const PredictabilitySpec& spec,
                                                   const std::string& setting);

enum class SweepAxis { aux_depth, mask_side };

/// One row per value: aux_depth varies the FF decoder depth, mask_side the
/// MSP mask side.
[[nodiscard]] std::vector<SweepRow> code_predictability_sweep(const ImageDataset& data, PredictabilitySpec base,
                                                              SweepAxis axis, const std::vector<std::size_t>& values);

/// Train/validation partition by is_validation_index().
struct DataSplit {
  ImageDataset train, validation;
};
[[nodiscard]] DataSplit split_dataset(const ImageDataset& data);

// ---------------------------------------------------------------------------
// Persistence

/// Text manifest: resolved config file name, geometry per level, level
/// checkpoints and the prior checkpoint.
struct Manifest {
  std::string config_file;
  std::vector<MapGeometry> geometry;
  std::vector<std::string> level_checkpoints;
  std::string prior_checkpoint;

  [[nodiscard]] std::string to_text() const;
  [[nodiscard]] static Manifest parse(const std::string& text);
};

/// Writes level<l>.pxs, prior.pxs and manifest.txt into `dir`.
Manifest save_hierarchy(const HierarchicalModel& model, const std::filesystem::path& dir,
                        const std::string& config_file);
[[nodiscard]] Manifest read_manifest(const std::filesystem::path& dir);
/// Restores weights into a model built with the same architecture.
void load_hierarchy_weights(HierarchicalModel& model, const std::filesystem::path& dir, const Manifest& manifest);

}  // namespace pixelstack
