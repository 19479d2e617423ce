#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

#include "pixelstack/metrics.hpp"
#include "pixelstack/nn.hpp"
#include "pixelstack/pixelcnn.hpp"
#include "pixelstack/vq.hpp"

namespace pixelstack {

// ---------------------------------------------------------------------------
// Encoder

struct EncoderSpec {
  std::size_t in_channels = 1;  // channel groups of the level input
  std::size_t in_bins = 16;     // value range of the level input
  std::size_t layers = 2;       // residual blocks
  std::size_t hidden = 32;
  std::size_t stride = 2;  // spatial downsampling factor
  std::size_t code_channels = 1;
  std::size_t code_dim = 8;   // d, width of one code vector
  std::size_t code_bits = 4;  // k = 2^bits codes

  [[nodiscard]] std::size_t code_bins() const { return std::size_t{1} << code_bits; }
};

/// One-hot input -> strided conv -> residual stack -> 1x1 conv to c*d channels.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderSpec& spec, Rng& rng);

  /// Continuous pre-quantization features [N, c*d, ceil(H/r), ceil(W/r)].
  [[nodiscard]] Tensor operator()(const IntMap& x) const;
  void collect(ParameterList& out);
  [[nodiscard]] const EncoderSpec& spec() const noexcept { return spec_; }

 private:
  EncoderSpec spec_;
  Conv2d down_;
  ResidualStack body_;
  Conv2d out_;
};

/// Deterministic code map [N, c, ceil(H/r), ceil(W/r)], computed in chunks.
[[nodiscard]] IntMap encode_codes(const Encoder& encoder, const Codebook& codebook, const IntMap& x,
                                  std::size_t chunk = 64);

// ---------------------------------------------------------------------------
// Feed-forward auxiliary decoder

enum class AuxLossKind { mse_pixels, categorical_codes };

/// Loss kind implied by the level: pixels (level 1) are continuous, codes categorical.
[[nodiscard]] AuxLossKind aux_loss_for_level(std::size_t level);

struct FFAuxSpec {
  std::size_t layers = 2;  // residual blocks after upsampling
  std::size_t hidden = 32;
  std::size_t upsample = 2;
};

/// Maps quantized codes back to the level input resolution. 1x1 convolutions
/// around the subpixel step keep the receptive field of a depth-0 decoder
/// to a single code.
///
/// mse_pixels output: [N, groups, H, W] intensities in [0, 1] scale.
/// categorical_codes output: logits [N, bins, groups, H, W].
class AuxDecoder {
 public:
  AuxDecoder() = default;
  AuxDecoder(const std::string& name, const FFAuxSpec& spec, AuxLossKind kind, std::size_t in_channels,
             std::size_t groups, std::size_t bins, Rng& rng);

  [[nodiscard]] Tensor operator()(const Tensor& codes) const;
  void collect(ParameterList& out);
  [[nodiscard]] AuxLossKind kind() const noexcept { return kind_; }

 private:
  FFAuxSpec spec_;
  AuxLossKind kind_ = AuxLossKind::mse_pixels;
  std::size_t groups_ = 1, bins_ = 2;
  Conv2d expand_;
  ResidualStack body_;
  Conv2d out_;
};

/// Level 1: MSE between x / (bins - 1) and `reconstruction` [N, G, H, W].
/// Level > 1: mean categorical NLL (nats) of x under logits [N, bins, G, H, W].
/// A reconstruction whose shape belongs to the other kind is a ShapeError.
[[nodiscard]] Tensor ff_aux_loss(std::size_t level, const IntMap& x, std::size_t bins, const Tensor& reconstruction);

// ---------------------------------------------------------------------------
// Masked self-prediction

struct MSPMask {
  std::size_t offset = 0;  // s; the masked square has side 2s + 1
  std::size_t height = 0, width = 0;
  std::vector<std::pair<std::size_t, std::size_t>> positions;
  std::vector<std::uint8_t> input_mask;   // [H, W]; 0 = hidden from the teacher
  std::vector<std::uint8_t> output_mask;  // [H, W]; 1 = prediction target
};

/// Zeros of the input mask are the union of the (2s+1)^2 squares centred on
/// each position, clipped at the border.
[[nodiscard]] MSPMask make_msp_mask(const std::vector<std::pair<std::size_t, std::size_t>>& positions,
                                    std::size_t s, std::size_t height, std::size_t width);

/// Number of masked regions per image for a mask side, scaled from a 64x64
/// reference by (H*W)/4096 and floored at 1.
[[nodiscard]] std::size_t positions_per_image(std::size_t mask_side, std::size_t height = 64,
                                              std::size_t width = 64);

/// Mask with positions_per_image() distinct uniformly drawn positions.
[[nodiscard]] MSPMask random_msp_mask(std::size_t mask_side, std::size_t height, std::size_t width, Rng& rng);

struct TeacherSpec {
  std::size_t layers = 3;
  std::size_t hidden = 32;
};

/// Feed-forward residual net predicting every position from the masked input.
class MSPTeacher {
 public:
  MSPTeacher() = default;
  MSPTeacher(const TeacherSpec& spec, std::size_t groups, std::size_t bins, Rng& rng);

  /// Logits [N, bins, G, H, W]; masked positions enter as all-zero one-hot vectors.
  [[nodiscard]] Tensor operator()(const IntMap& x, const std::vector<MSPMask>& masks) const;
  void collect(ParameterList& out);

 private:
  std::size_t groups_ = 1, bins_ = 2;
  Conv2d in_;
  ResidualStack body_;
  Conv2d out_;
};

/// Per-position selection [N * G * H * W] from the output masks.
[[nodiscard]] std::vector<std::uint8_t> output_positions(const std::vector<MSPMask>& masks, std::size_t groups);

/// Mean NLL (nats) of x at the selected positions.
[[nodiscard]] Tensor teacher_loss(const Tensor& teacher_logits, const IntMap& x, const std::vector<MSPMask>& masks);

/// Mean KL(teacher || student) over the selected positions; `teacher_probs`
/// [N, bins, G, H, W] is a constant.
[[nodiscard]] Tensor distill_loss(const Tensor& teacher_probs, const Tensor& student_logits,
                                  const std::vector<MSPMask>& masks);

struct MSPSpec {
  TeacherSpec teacher;
  std::size_t mask_side = 3;
  FFAuxSpec head;  // student head, categorical over the level input
};

// ---------------------------------------------------------------------------
// Training

struct TrainOptions {
  std::size_t steps = 1000;
  std::size_t batch = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  VQLossConfig vq;
  double gamma = 0.99;
  std::size_t reseed_every = 0;  // 0 disables dead-code reseeding
  std::size_t log_every = 50;
  MetricSink on_metrics;
};

struct TrainedEncoder {
  Encoder encoder;
  Codebook codebook;
  std::vector<double> loss_history;
  double perplexity = 1.0;  // code usage over the training set after training
};

/// Step-wise encoder training, so that a caller can interleave it with
/// other work (the hierarchy trains each level's decoder alongside).
class EncoderTrainer {
 public:
  virtual ~EncoderTrainer() = default;
  /// One optimisation step on a fresh minibatch; returns the total loss.
  virtual double step() = 0;
  [[nodiscard]] virtual std::size_t steps_taken() const = 0;
  [[nodiscard]] virtual const Encoder& encoder() const = 0;
  [[nodiscard]] virtual const Codebook& codebook() const = 0;
  /// Drops the auxiliary networks and returns the encoder and codebook.
  [[nodiscard]] virtual TrainedEncoder finish() = 0;
};

/// Encoder, codebook and FF auxiliary decoder trained jointly. `x` must
/// outlive the trainer.
[[nodiscard]] std::unique_ptr<EncoderTrainer> make_ff_trainer(const IntMap& x, std::size_t level,
                                                              const EncoderSpec& encoder, const FFAuxSpec& aux,
                                                              const TrainOptions& opts);

/// Teacher and student (encoder, codebook, head) trained simultaneously.
[[nodiscard]] std::unique_ptr<EncoderTrainer> make_msp_trainer(const IntMap& x, const EncoderSpec& encoder,
                                                               const MSPSpec& msp, const TrainOptions& opts);

/// Runs make_ff_trainer for opts.steps steps; the aux decoder is discarded.
[[nodiscard]] TrainedEncoder train_encoder_ff(const IntMap& x, std::size_t level, const EncoderSpec& encoder,
                                              const FFAuxSpec& aux, const TrainOptions& opts);

/// Runs make_msp_trainer for opts.steps steps; teacher and head are discarded.
[[nodiscard]] TrainedEncoder train_encoder_msp(const IntMap& x, const EncoderSpec& encoder, const MSPSpec& msp,
                                               const TrainOptions& opts);

/// Encoder + VQ + autoregressive decoder trained jointly with teacher forcing.
struct Autoencoder {
  Encoder encoder;
  Codebook codebook;
  AutoregressiveNet decoder;
};

/// `decoder.modulator` is set to read the quantized feature map.
[[nodiscard]] Autoencoder train_end_to_end_baseline(const IntMap& x, const EncoderSpec& encoder,
                                                    PixelCNNConfig decoder, const ModulatorSpec& modulator,
                                                    const TrainOptions& opts);

/// Teacher-forced NLL of x in bits/dim under the autoencoder.
[[nodiscard]] double teacher_forced_bits(const Autoencoder& model, const IntMap& x);

/// Sampled reconstruction: quantize E(x) and draw from the decoder.
[[nodiscard]] IntMap reconstruct_baseline(const Autoencoder& model, const IntMap& x, const SamplerConfig& cfg);

}  // namespace pixelstack
