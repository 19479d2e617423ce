#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pixelstack/gradcheck.hpp"
#include "pixelstack/hierarchy.hpp"
#include "run_config.hpp"

namespace pixelstack::harness {

/// Process exit codes.
enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2 };

/// Loads an IDT1 file and reduces it to the configured pixel depth.
[[nodiscard]] ImageDataset load_pixels(const std::filesystem::path& path, const RunConfig& cfg);

struct TrainedRun {
  HierarchicalModel model;
  std::vector<MetricRow> metrics;
};

[[nodiscard]] TrainedRun train_run(const RunConfig& cfg, const ImageDataset& pixels);

/// config.cfg (resolved), manifest.txt, level/prior checkpoints, metrics.csv.
void write_run(const std::filesystem::path& dir, const RunConfig& cfg, const TrainedRun& run);

struct LoadedRun {
  RunConfig config;
  HierarchicalModel model;
};

/// Rebuilds the architecture from the saved config, then loads the weights.
[[nodiscard]] LoadedRun load_run(const std::filesystem::path& dir);

/// Per-image |mean(original) - mean(reconstruction)| in pixel units.
struct DriftReport {
  std::vector<double> drift;
  double mean = 0.0;
  double stdev = 0.0;
};

[[nodiscard]] DriftReport drift_report(const IntMap& originals, const IntMap& reconstructions);

struct PathologyResult {
  DriftReport baseline;
  DriftReport aux;
  double baseline_bits = 0.0;  // teacher-forced NLL, bits/dim
  double aux_bits = 0.0;
  IntMap originals;
  IntMap baseline_reconstructions;
  IntMap aux_reconstructions;
};

/// Trains the end-to-end baseline and a feed-forward-aux level with the same
/// encoder, decoder and modulator sizes ([level.1]), then reconstructs the
/// first `images` items of `pixels` with both.
[[nodiscard]] PathologyResult run_pathology(const RunConfig& cfg, const ImageDataset& pixels, std::size_t images);

/// Originals and reconstructions interleaved for a 2-column grid.
[[nodiscard]] IntMap side_by_side(const IntMap& left, const IntMap& right);

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

/// Gradient checks of every differentiable op plus a gated block + NLL
/// composite, at h = 1e-5.
[[nodiscard]] std::vector<NamedGradCheck> gradcheck_suite(std::uint64_t seed, double tolerance = 1e-4);

// ---------------------------------------------------------------------------
// Commands. Each returns an ExitCode and writes a short report to `out`.

struct TrainArgs {
  std::filesystem::path config, dataset, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> levels;
};
int cmd_train(const TrainArgs& args, std::ostream& out);

struct SampleArgs {
  std::filesystem::path run, out;
  std::optional<std::int32_t> label;
  std::size_t n = 1;
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;
};
int cmd_sample(const SampleArgs& args, std::ostream& out);

struct ReconstructArgs {
  std::filesystem::path run, dataset, out;
  std::size_t samples = 2;  // reconstructions per image
  std::size_t n = 8;        // images
  std::optional<std::size_t> levels;
  std::optional<double> temperature;
  std::optional<std::uint64_t> seed;
};
int cmd_reconstruct(const ReconstructArgs& args, std::ostream& out);

struct EvalArgs {
  std::filesystem::path run, dataset, out;
};
int cmd_eval(const EvalArgs& args, std::ostream& out);

struct SweepArgs {
  std::filesystem::path config, dataset, out;
  std::string axis;  // aux_depth | mask_side
  std::vector<std::size_t> values;
  std::optional<std::uint64_t> seed;
  std::filesystem::path check;  // when set, only check this CSV's trend
};
int cmd_sweep(const SweepArgs& args, std::ostream& out);

struct PathologyArgs {
  std::filesystem::path config, dataset, out;
  std::size_t images = 20;
  std::optional<std::uint64_t> seed;
};
int cmd_pathology(const PathologyArgs& args, std::ostream& out);

struct GradcheckArgs {
  std::optional<std::uint64_t> seed;
};
int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out);

struct SynthArgs {
  std::filesystem::path out;
  std::size_t n = 64, height = 16, width = 16, classes = 2;
  std::uint64_t seed = 0;
};
int cmd_synth(const SynthArgs& args, std::ostream& out);

}  // namespace pixelstack::harness
