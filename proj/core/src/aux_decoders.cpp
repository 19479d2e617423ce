#include "pixelstack/aux_decoders.hpp"

#include <algorithm>
#include <string>

#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"
#include "training.hpp"

namespace pixelstack {

namespace {

void check_level_input(const IntMap& x, std::size_t channels, std::size_t bins, const char* who) {
  if (x.channels != channels) {
    throw ShapeError(std::string(who) + ": input has " + std::to_string(x.channels) + " channels, expected " +
                     std::to_string(channels));
  }
  for (auto v : x.values) {
    if (v < 0 || static_cast<std::size_t>(v) >= bins) {
      throw ValueError(std::string(who) + ": input value " + std::to_string(v) + " outside [0, " +
                       std::to_string(bins) + ")");
    }
  }
}

std::vector<std::uint8_t> input_keep(const std::vector<MSPMask>& masks, const IntMap& x) {
  if (masks.size() != x.n) throw ShapeError("expected one mask per image");
  std::vector<std::uint8_t> keep;
  keep.reserve(x.n * x.plane());
  for (const auto& m : masks) {
    if (m.height != x.height || m.width != x.width) throw ShapeError("mask geometry does not match input");
    keep.insert(keep.end(), m.input_mask.begin(), m.input_mask.end());
  }
  return keep;
}

}  // namespace

// ---------------------------------------------------------------------------

Encoder::Encoder(const EncoderSpec& spec, Rng& rng) : spec_(spec) {
  if (spec.stride == 0) throw ConfigError("encoder stride must be positive");
  if (spec.code_bits == 0 || spec.code_bits > 16) throw ConfigError("code bits must lie in [1, 16]");
  if (spec.code_channels == 0 || spec.code_dim == 0) throw ConfigError("encoder needs code channels and dimension");
  const std::size_t kernel = std::max<std::size_t>(3, 2 * spec.stride - 1);
  down_ = Conv2d("enc.down", spec.in_channels * spec.in_bins, spec.hidden, kernel, rng, spec.stride);
  body_ = ResidualStack("enc.res", spec.layers, spec.hidden, spec.hidden, rng);
  out_ = Conv2d("enc.out", spec.hidden, spec.code_channels * spec.code_dim, 1, rng);
}

Tensor Encoder::operator()(const IntMap& x) const {
  check_level_input(x, spec_.in_channels, spec_.in_bins, "encoder");
  const Tensor onehot = one_hot_nchw(x.values, x.n, x.channels, x.height, x.width, spec_.in_bins);
  return out_(relu(body_(down_(onehot))));
}

void Encoder::collect(ParameterList& out) {
  down_.collect(out);
  body_.collect(out);
  out_.collect(out);
}

IntMap encode_codes(const Encoder& encoder, const Codebook& codebook, const IntMap& x, std::size_t chunk) {
  if (chunk == 0) throw ValueError("encode chunk must be positive");
  const auto& s = encoder.spec();
  const std::size_t h = (x.height + s.stride - 1) / s.stride, w = (x.width + s.stride - 1) / s.stride;
  IntMap codes(x.n, s.code_channels, h, w);
  for (std::size_t first = 0; first < x.n; first += chunk) {
    const std::size_t count = std::min(chunk, x.n - first);
    const auto q = quantize(encoder(x.slice(first, count)).detach(), codebook);
    std::copy(q.indices.values.begin(), q.indices.values.end(),
              codes.values.begin() + static_cast<std::ptrdiff_t>(first * codes.item_size()));
  }
  return codes;
}

// ---------------------------------------------------------------------------

AuxLossKind aux_loss_for_level(std::size_t level) {
  if (level == 0) throw ValueError("levels are numbered from 1");
  return level == 1 ? AuxLossKind::mse_pixels : AuxLossKind::categorical_codes;
}

AuxDecoder::AuxDecoder(const std::string& name, const FFAuxSpec& spec, AuxLossKind kind, std::size_t in_channels,
                       std::size_t groups, std::size_t bins, Rng& rng)
    : spec_(spec), kind_(kind), groups_(groups), bins_(bins) {
  if (spec.upsample == 0) throw ConfigError("aux decoder upsample factor must be positive");
  const std::size_t r2 = spec.upsample * spec.upsample;
  expand_ = Conv2d(name + ".expand", in_channels, spec.hidden * r2, 1, rng);
  body_ = ResidualStack(name + ".res", spec.layers, spec.hidden, spec.hidden, rng);
  const std::size_t out = kind == AuxLossKind::mse_pixels ? groups : groups * bins;
  out_ = Conv2d(name + ".out", spec.hidden, out, 1, rng);
}

Tensor AuxDecoder::operator()(const Tensor& codes) const {
  Tensor h = expand_(codes);
  if (spec_.upsample > 1) h = subpixel_upsample(h, spec_.upsample);
  h = out_(relu(body_(h)));
  if (kind_ == AuxLossKind::mse_pixels) return h;
  return reshape(h, {h.dim(0), bins_, groups_, h.dim(2), h.dim(3)});
}

void AuxDecoder::collect(ParameterList& out) {
  expand_.collect(out);
  body_.collect(out);
  out_.collect(out);
}

Tensor ff_aux_loss(std::size_t level, const IntMap& x, std::size_t bins, const Tensor& reconstruction) {
  if (aux_loss_for_level(level) == AuxLossKind::mse_pixels) {
    if (reconstruction.rank() != 4) {
      throw ShapeError("level 1 expects a pixel reconstruction [N, G, H, W], got " +
                       shape_string(reconstruction.shape()));
    }
    return mse(reconstruction, intensities_to_unit(x, bins));
  }
  if (reconstruction.rank() != 5 || reconstruction.dim(1) != bins) {
    throw ShapeError("level " + std::to_string(level) + " expects code logits [N, " + std::to_string(bins) +
                     ", G, H, W], got " + shape_string(reconstruction.shape()));
  }
  return nll(reconstruction, x);
}

// ---------------------------------------------------------------------------

MSPMask make_msp_mask(const std::vector<std::pair<std::size_t, std::size_t>>& positions, std::size_t s,
                      std::size_t height, std::size_t width) {
  MSPMask m;
  m.offset = s;
  m.height = height;
  m.width = width;
  m.positions = positions;
  m.input_mask.assign(height * width, 1);
  m.output_mask.assign(height * width, 0);
  for (const auto& [i, j] : positions) {
    if (i >= height || j >= width) {
      throw ValueError("mask position (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
                       std::to_string(height) + "x" + std::to_string(width));
    }
    m.output_mask[i * width + j] = 1;
    for (std::size_t y = i >= s ? i - s : 0; y <= std::min(height - 1, i + s); ++y)
      for (std::size_t x = j >= s ? j - s : 0; x <= std::min(width - 1, j + s); ++x) m.input_mask[y * width + x] = 0;
  }
  return m;
}

std::size_t positions_per_image(std::size_t mask_side, std::size_t height, std::size_t width) {
  if (mask_side == 0 || mask_side % 2 == 0) {
    throw ValueError("mask side must be odd, got " + std::to_string(mask_side));
  }
  std::size_t base = 1;
  if (mask_side <= 3) {
    base = 30;
  } else if (mask_side <= 7) {
    base = 10;
  } else if (mask_side <= 15) {
    base = 3;
  }
  return std::max<std::size_t>(1, base * height * width / (64 * 64));
}

MSPMask random_msp_mask(std::size_t mask_side, std::size_t height, std::size_t width, Rng& rng) {
  const std::size_t count = std::min(positions_per_image(mask_side, height, width), height * width);
  std::vector<std::size_t> cells(height * width);
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = i;
  std::vector<std::pair<std::size_t, std::size_t>> picks;
  for (std::size_t k = 0; k < count; ++k) {
    const auto j = k + static_cast<std::size_t>(rng.below(cells.size() - k));
    std::swap(cells[k], cells[j]);
    picks.emplace_back(cells[k] / width, cells[k] % width);
  }
  return make_msp_mask(picks, mask_side / 2, height, width);
}

MSPTeacher::MSPTeacher(const TeacherSpec& spec, std::size_t groups, std::size_t bins, Rng& rng)
    : groups_(groups), bins_(bins) {
  in_ = Conv2d("teacher.in", groups * bins, spec.hidden, 3, rng);
  body_ = ResidualStack("teacher.res", spec.layers, spec.hidden, spec.hidden, rng);
  out_ = Conv2d("teacher.out", spec.hidden, groups * bins, 1, rng);
}

Tensor MSPTeacher::operator()(const IntMap& x, const std::vector<MSPMask>& masks) const {
  check_level_input(x, groups_, bins_, "teacher");
  const auto keep = input_keep(masks, x);
  const Tensor h = out_(relu(body_(in_(one_hot_nchw(x.values, x.n, x.channels, x.height, x.width, bins_, keep)))));
  return reshape(h, {x.n, bins_, groups_, x.height, x.width});
}

void MSPTeacher::collect(ParameterList& out) {
  in_.collect(out);
  body_.collect(out);
  out_.collect(out);
}

std::vector<std::uint8_t> output_positions(const std::vector<MSPMask>& masks, std::size_t groups) {
  std::vector<std::uint8_t> sel;
  for (const auto& m : masks)
    for (std::size_t g = 0; g < groups; ++g) sel.insert(sel.end(), m.output_mask.begin(), m.output_mask.end());
  return sel;
}

Tensor teacher_loss(const Tensor& teacher_logits, const IntMap& x, const std::vector<MSPMask>& masks) {
  if (masks.size() != x.n) throw ShapeError("expected one mask per image");
  return masked_softmax_cross_entropy(teacher_logits, x.values, 1, output_positions(masks, x.channels));
}

Tensor distill_loss(const Tensor& teacher_probs, const Tensor& student_logits, const std::vector<MSPMask>& masks) {
  if (student_logits.rank() != 5 || masks.size() != student_logits.dim(0)) {
    throw ShapeError("distill_loss expects logits [N, B, G, H, W] and one mask per image");
  }
  return kl_divergence_with_logits(teacher_probs, student_logits, 1, output_positions(masks, student_logits.dim(2)));
}

// ---------------------------------------------------------------------------

namespace {

Codebook make_codebook(const EncoderSpec& spec, const TrainOptions& opts) {
  return Codebook(spec.code_bins(), spec.code_dim, opts.gamma, 1e-5, opts.vq.use_ema_codebook);
}

void check_divisible(const IntMap& x, const EncoderSpec& spec) {
  if (x.height % spec.stride != 0 || x.width % spec.stride != 0) {
    throw ShapeError("input size " + std::to_string(x.height) + "x" + std::to_string(x.width) +
                     " must be divisible by the encoder stride " + std::to_string(spec.stride));
  }
}

/// State shared by both strategies: data, encoder, codebook, optimizer.
class TrainerBase : public EncoderTrainer {
 public:
  TrainerBase(const IntMap& x, const EncoderSpec& espec, const TrainOptions& opts, const char* name)
      : x_(x),
        opts_(opts),
        name_(name),
        rng_(opts.seed),
        out_{Encoder(espec, rng_), make_codebook(espec, opts), {}, 1.0},
        adam_({opts.lr}),
        batches_(x.n, opts.batch, rng_.split()) {
    check_level_input(x, espec.in_channels, espec.in_bins, name);
    check_divisible(x, espec);
    out_.encoder.collect(params_);
    if (!out_.codebook.use_ema()) params_.push_back(&out_.codebook.embeddings);
  }

  double step() final {
    ++step_;
    const IntMap xb = x_.gather(batches_.next());
    std::vector<std::pair<std::string, double>> metrics;
    const double loss = detail::guarded(name_, step_, [&] { return run(xb, metrics); });
    out_.loss_history.push_back(loss);
    metrics.insert(metrics.begin(), {"loss", loss});
    detail::emit(opts_.on_metrics, step_, opts_.log_every, opts_.steps, clock_, std::move(metrics));
    return loss;
  }

  [[nodiscard]] std::size_t steps_taken() const final { return step_; }
  [[nodiscard]] const Encoder& encoder() const final { return out_.encoder; }
  [[nodiscard]] const Codebook& codebook() const final { return out_.codebook; }

  TrainedEncoder finish() final {
    const auto codes = encode_codes(out_.encoder, out_.codebook, x_);
    out_.perplexity = perplexity(codes.values, out_.codebook.k());
    return std::move(out_);
  }

 protected:
  virtual double run(const IntMap& xb, std::vector<std::pair<std::string, double>>& metrics) = 0;

  QuantizeResult quantize_batch(const Tensor& z) {
    if (!out_.codebook.initialized()) out_.codebook.init_from(z.detach(), rng_);
    return quantize(z, out_.codebook);
  }

  void update(const Tensor& total, const Tensor& z, const QuantizeResult& q) {
    zero_grad(params_);
    backward(total);
    adam_.step(params_);
    if (out_.codebook.use_ema()) ema_update(out_.codebook, z.detach(), q.indices);
    if (opts_.reseed_every > 0 && step_ % opts_.reseed_every == 0) out_.codebook.reseed_dead(z.detach(), 0.03, rng_);
  }

  const IntMap& x_;
  TrainOptions opts_;
  const char* name_;
  Rng rng_;
  TrainedEncoder out_;
  ParameterList params_;
  Adam adam_;
  detail::BatchSampler batches_;
  detail::StepClock clock_;
  std::size_t step_ = 0;
};

class FFTrainer final : public TrainerBase {
 public:
  FFTrainer(const IntMap& x, std::size_t level, const EncoderSpec& espec, const FFAuxSpec& aux,
            const TrainOptions& opts)
      : TrainerBase(x, espec, opts, "train_encoder_ff"), level_(level), bins_(espec.in_bins) {
    if (aux.upsample != espec.stride) throw ConfigError("aux decoder upsampling must equal the encoder stride");
    decoder_ = AuxDecoder("aux", aux, aux_loss_for_level(level), espec.code_channels * espec.code_dim,
                          espec.in_channels, espec.in_bins, rng_);
    decoder_.collect(params_);
  }

 private:
  double run(const IntMap& xb, std::vector<std::pair<std::string, double>>& metrics) override {
    const Tensor z = out_.encoder(xb);
    const auto q = quantize_batch(z);
    const Tensor recon = ff_aux_loss(level_, xb, bins_, decoder_(straight_through(z, q)));
    const Tensor total = vq_loss(recon, q, opts_.vq);
    update(total, z, q);
    metrics = {{"aux_loss", recon.item()}, {"perplexity", q.perplexity}};
    return total.item();
  }

  std::size_t level_, bins_;
  AuxDecoder decoder_;
};

class MSPTrainer final : public TrainerBase {
 public:
  MSPTrainer(const IntMap& x, const EncoderSpec& espec, const MSPSpec& msp, const TrainOptions& opts)
      : TrainerBase(x, espec, opts, "train_encoder_msp"), side_(msp.mask_side), mask_rng_(rng_.split()) {
    (void)positions_per_image(msp.mask_side);  // validates the side
    if (msp.head.upsample != espec.stride) throw ConfigError("student head upsampling must equal the encoder stride");
    teacher_ = MSPTeacher(msp.teacher, espec.in_channels, espec.in_bins, rng_);
    head_ = AuxDecoder("student", msp.head, AuxLossKind::categorical_codes, espec.code_channels * espec.code_dim,
                       espec.in_channels, espec.in_bins, rng_);
    head_.collect(params_);
    teacher_.collect(params_);
  }

 private:
  double run(const IntMap& xb, std::vector<std::pair<std::string, double>>& metrics) override {
    std::vector<MSPMask> masks;
    for (std::size_t i = 0; i < xb.n; ++i) masks.push_back(random_msp_mask(side_, xb.height, xb.width, mask_rng_));
    const Tensor t_logits = teacher_(xb, masks);
    const Tensor t_loss = teacher_loss(t_logits, xb, masks);
    const Tensor z = out_.encoder(xb);
    const auto q = quantize_batch(z);
    const Tensor d_loss = distill_loss(softmax(t_logits.detach(), 1), head_(straight_through(z, q)), masks);
    const Tensor total = add(t_loss, vq_loss(d_loss, q, opts_.vq));
    update(total, z, q);
    metrics = {{"teacher_loss", t_loss.item()}, {"distill_loss", d_loss.item()}, {"perplexity", q.perplexity}};
    return total.item();
  }

  std::size_t side_;
  Rng mask_rng_;
  MSPTeacher teacher_;
  AuxDecoder head_;
};

TrainedEncoder run_trainer(EncoderTrainer& trainer, std::size_t steps) {
  for (std::size_t i = 0; i < steps; ++i) (void)trainer.step();
  return trainer.finish();
}

}  // namespace

std::unique_ptr<EncoderTrainer> make_ff_trainer(const IntMap& x, std::size_t level, const EncoderSpec& encoder,
                                                const FFAuxSpec& aux, const TrainOptions& opts) {
  return std::make_unique<FFTrainer>(x, level, encoder, aux, opts);
}

std::unique_ptr<EncoderTrainer> make_msp_trainer(const IntMap& x, const EncoderSpec& encoder, const MSPSpec& msp,
                                                 const TrainOptions& opts) {
  return std::make_unique<MSPTrainer>(x, encoder, msp, opts);
}

TrainedEncoder train_encoder_ff(const IntMap& x, std::size_t level, const EncoderSpec& encoder, const FFAuxSpec& aux,
                                const TrainOptions& opts) {
  auto trainer = make_ff_trainer(x, level, encoder, aux, opts);
  return run_trainer(*trainer, opts.steps);
}

TrainedEncoder train_encoder_msp(const IntMap& x, const EncoderSpec& encoder, const MSPSpec& msp,
                                 const TrainOptions& opts) {
  auto trainer = make_msp_trainer(x, encoder, msp, opts);
  return run_trainer(*trainer, opts.steps);
}

// ---------------------------------------------------------------------------

Autoencoder train_end_to_end_baseline(const IntMap& x, const EncoderSpec& espec, PixelCNNConfig dcfg,
                                      const ModulatorSpec& modulator, const TrainOptions& opts) {
  check_level_input(x, espec.in_channels, espec.in_bins, "train_end_to_end_baseline");
  check_divisible(x, espec);
  if (dcfg.groups != espec.in_channels || dcfg.bins != espec.in_bins) {
    throw ConfigError("decoder geometry must match the encoder input");
  }
  ModulatorSpec mod = modulator;
  mod.feature_channels = espec.code_channels * espec.code_dim;
  mod.upsample = espec.stride;
  dcfg.modulator = mod;
  dcfg.classes = 0;
  Rng rng(opts.seed);
  Encoder encoder(espec, rng);
  Codebook codebook = make_codebook(espec, opts);
  AutoregressiveNet decoder(dcfg, rng);
  Autoencoder out{std::move(encoder), std::move(codebook), std::move(decoder)};
  ParameterList params;
  out.encoder.collect(params);
  for (auto* p : out.decoder.parameters()) params.push_back(p);
  if (!out.codebook.use_ema()) params.push_back(&out.codebook.embeddings);
  Adam adam({opts.lr});
  detail::BatchSampler batches(x.n, opts.batch, rng.split());
  detail::StepClock clock;
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    const IntMap xb = x.gather(batches.next());
    double bits = 0.0, ppl = 0.0;
    const double loss = detail::guarded("train_end_to_end_baseline", step, [&] {
      const Tensor z = out.encoder(xb);
      if (!out.codebook.initialized()) out.codebook.init_from(z.detach(), rng);
      const auto q = quantize(z, out.codebook);
      Conditioning cond;
      cond.features = straight_through(z, q);
      const Tensor rec = nll(out.decoder.forward(xb, cond), xb);
      const Tensor total = vq_loss(rec, q, opts.vq);
      zero_grad(params);
      backward(total);
      adam.step(params);
      if (out.codebook.use_ema()) ema_update(out.codebook, z.detach(), q.indices);
      if (opts.reseed_every > 0 && step % opts.reseed_every == 0) out.codebook.reseed_dead(z.detach(), 0.03, rng);
      bits = nats_to_bits(rec.item());
      ppl = q.perplexity;
      return total.item();
    });
    detail::emit(opts.on_metrics, step, opts.log_every, opts.steps, clock,
                 {{"loss", loss}, {"bits_per_dim", bits}, {"perplexity", ppl}});
  }
  return out;
}

double teacher_forced_bits(const Autoencoder& model, const IntMap& x) {
  double total = 0.0;
  for (std::size_t first = 0; first < x.n; first += 32) {
    const IntMap xb = x.slice(first, std::min<std::size_t>(32, x.n - first));
    Conditioning cond;
    cond.features = quantize(model.encoder(xb).detach(), model.codebook).quantized.detach();
    for (double v : nll_per_item(model.decoder.forward(xb, cond), xb)) total += v;
  }
  return bits_per_dim(total, static_cast<double>(x.n * x.item_size()));
}

IntMap reconstruct_baseline(const Autoencoder& model, const IntMap& x, const SamplerConfig& cfg) {
  Conditioning cond;
  cond.features = quantize(model.encoder(x).detach(), model.codebook).quantized.detach();
  return sample(model.decoder, x.n, x.height, x.width, cond, cfg);
}

}  // namespace pixelstack
