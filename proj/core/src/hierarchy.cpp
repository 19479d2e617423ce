#include "pixelstack/hierarchy.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "pixelstack/checkpoint.hpp"
#include "pixelstack/error.hpp"
#include "pixelstack/ops.hpp"
#include "training.hpp"

namespace pixelstack {

namespace {

constexpr std::size_t kEvalChunk = 32;

std::string level_name(std::size_t l) { return "l" + std::to_string(l); }

std::uint64_t level_seed(std::uint64_t seed, std::size_t level) {
  std::uint64_t s = seed ^ (0xA5A5A5A5ULL * (level + 1));
  return splitmix64(s);
}

std::vector<std::int32_t> gather_labels(const std::vector<std::int32_t>* labels, const std::vector<std::size_t>& idx) {
  std::vector<std::int32_t> out;
  if (!labels || labels->empty()) return out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(labels->at(i));
  return out;
}

std::vector<std::int32_t> slice_labels(const std::vector<std::int32_t>* labels, std::size_t first, std::size_t count) {
  if (!labels || labels->empty()) return {};
  return {labels->begin() + static_cast<std::ptrdiff_t>(first),
          labels->begin() + static_cast<std::ptrdiff_t>(first + count)};
}

/// One Adam step of teacher-forced NLL per call.
class Fitter {
 public:
  Fitter(AutoregressiveNet& net, const TrainOptions& opts) : net_(net), params_(net.parameters()), adam_({opts.lr}) {}

  /// Returns the mean NLL of the batch in nats.
  double step(const IntMap& xb, const IntMap* codes, std::vector<std::int32_t> labels, std::size_t step) {
    return detail::guarded("fit_autoregressive", step, [&] {
      Conditioning cond;
      cond.codes = codes;
      cond.labels = std::move(labels);
      const Tensor loss = nll(net_.forward(xb, cond), xb);
      zero_grad(params_);
      backward(loss);
      adam_.step(params_);
      return loss.item();
    });
  }

 private:
  AutoregressiveNet& net_;
  ParameterList params_;
  Adam adam_;
};

PixelCNNConfig level_decoder_config(const LevelSpec& spec) {
  PixelCNNConfig cfg = spec.decoder;
  cfg.modulator = spec.modulator;
  cfg.classes = 0;
  return cfg;
}

PixelCNNConfig prior_config(const PriorSpec& prior, const MapGeometry& top) {
  PixelCNNConfig cfg = prior.net;
  cfg.groups = top.channels;
  cfg.bins = top.bins;
  cfg.modulator.reset();
  return cfg;
}

void check_prior(const PriorSpec& prior, const MapGeometry& top) {
  if (prior.net.modulator) throw ConfigError("the top prior takes no code conditioning");
  if (prior.net.groups != top.channels || prior.net.bins != top.bins) {
    throw ShapeError("prior expects " + std::to_string(prior.net.groups) + " channels x " +
                     std::to_string(prior.net.bins) + " bins, top level provides " + std::to_string(top.channels) +
                     " x " + std::to_string(top.bins));
  }
}

}  // namespace

MapGeometry geometry_of(const IntMap& x, std::size_t bins) { return {x.channels, bins, x.height, x.width}; }

LevelSpec resolve_level(LevelSpec spec, const MapGeometry& input) {
  spec.encoder.in_channels = input.channels;
  spec.encoder.in_bins = input.bins;
  spec.ff.upsample = spec.encoder.stride;
  spec.msp.head.upsample = spec.encoder.stride;
  spec.decoder.groups = input.channels;
  spec.decoder.bins = input.bins;
  spec.decoder.classes = 0;
  spec.modulator.code_channels = spec.encoder.code_channels;
  spec.modulator.code_bins = spec.encoder.code_bins();
  spec.modulator.upsample = spec.encoder.stride;
  spec.modulator.feature_channels = 0;
  return spec;
}

std::vector<LevelSpec> resolve_levels(const MapGeometry& pixels, std::vector<LevelSpec> specs) {
  MapGeometry g = pixels;
  for (auto& s : specs) {
    s = resolve_level(std::move(s), g);
    const std::size_t r = std::max<std::size_t>(1, s.encoder.stride);
    g = {s.encoder.code_channels, s.encoder.code_bins(), g.height / r, g.width / r};
  }
  return specs;
}

PriorSpec resolve_prior(PriorSpec prior, const MapGeometry& pixels, const std::vector<LevelSpec>& specs) {
  MapGeometry top = pixels;
  for (const auto& s : specs) top = {s.encoder.code_channels, s.encoder.code_bins(), 0, 0};
  prior.net.groups = top.channels;
  prior.net.bins = top.bins;
  prior.net.modulator.reset();
  return prior;
}

std::vector<MapGeometry> chain_geometry(const MapGeometry& pixels, const std::vector<LevelSpec>& specs,
                                        const PriorSpec& prior) {
  std::vector<MapGeometry> out{pixels};
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    const auto& in = out.back();
    const std::string who = "level " + std::to_string(i + 1) + ": ";
    if (s.encoder.in_channels != in.channels || s.encoder.in_bins != in.bins) {
      throw ShapeError(who + "encoder expects " + std::to_string(s.encoder.in_channels) + " channels x " +
                       std::to_string(s.encoder.in_bins) + " bins, input has " + std::to_string(in.channels) + " x " +
                       std::to_string(in.bins));
    }
    if (s.decoder.groups != in.channels || s.decoder.bins != in.bins) {
      throw ShapeError(who + "decoder geometry does not match the level input");
    }
    if (s.modulator.code_channels != s.encoder.code_channels || s.modulator.code_bins != s.encoder.code_bins() ||
        s.modulator.upsample != s.encoder.stride || s.modulator.feature_channels != 0) {
      throw ShapeError(who + "modulator does not read this level's codes");
    }
    if (s.encoder.stride == 0 || in.height % s.encoder.stride != 0 || in.width % s.encoder.stride != 0) {
      throw ShapeError(who + "stride " + std::to_string(s.encoder.stride) + " does not divide " +
                       std::to_string(in.height) + "x" + std::to_string(in.width));
    }
    out.push_back({s.encoder.code_channels, s.encoder.code_bins(), in.height / s.encoder.stride,
                   in.width / s.encoder.stride});
  }
  check_prior(prior, out.back());
  return out;
}

HierarchicalModel build_hierarchy(const MapGeometry& pixels, const std::vector<LevelSpec>& specs,
                                  const PriorSpec& prior) {
  HierarchicalModel model;
  model.geometry = chain_geometry(pixels, specs, prior);
  for (const auto& s : specs) {
    Rng rng(s.encoder_train.seed);
    Encoder enc(s.encoder, rng);
    Codebook cb(s.encoder.code_bins(), s.encoder.code_dim, s.encoder_train.gamma, 1e-5,
                s.encoder_train.vq.use_ema_codebook);
    Rng drng(s.decoder_train.seed);
    model.levels.push_back({std::move(enc), std::move(cb), AutoregressiveNet(level_decoder_config(s), drng), 1.0});
  }
  Rng prng(prior.train.seed);
  model.prior.emplace(prior_config(prior, model.geometry.back()), prng);
  return model;
}

std::vector<double> fit_autoregressive(AutoregressiveNet& net, const IntMap& x, const IntMap* codes,
                                       const std::vector<std::int32_t>* labels, const TrainOptions& opts) {
  if (codes && codes->n != x.n) throw ShapeError("expected one code map per item");
  if (labels && !labels->empty() && labels->size() != x.n) throw ShapeError("expected one label per item");
  Rng rng(opts.seed);
  detail::BatchSampler batches(x.n, opts.batch, rng.split());
  detail::StepClock clock;
  Fitter fitter(net, opts);
  std::vector<double> history;
  history.reserve(opts.steps);
  for (std::size_t step = 1; step <= opts.steps; ++step) {
    const auto idx = batches.next();
    const IntMap xb = x.gather(idx);
    IntMap cb;
    if (codes) cb = codes->gather(idx);
    const double loss = fitter.step(xb, codes ? &cb : nullptr, gather_labels(labels, idx), step);
    history.push_back(loss);
    detail::emit(opts.on_metrics, step, opts.log_every, opts.steps, clock,
                 {{"loss", loss}, {"bits_per_dim", nats_to_bits(loss)}});
  }
  return history;
}

double evaluate_bits(const AutoregressiveNet& net, const IntMap& x, const IntMap* codes,
                     const std::vector<std::int32_t>* labels) {
  if (x.n == 0) return 0.0;
  double total = 0.0;
  for (std::size_t first = 0; first < x.n; first += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, x.n - first);
    const IntMap xb = x.slice(first, count);
    IntMap cb;
    if (codes) cb = codes->slice(first, count);
    Conditioning cond;
    cond.codes = codes ? &cb : nullptr;
    cond.labels = slice_labels(labels, first, count);
    for (double v : nll_per_item(net.forward(xb, cond), xb)) total += v;
  }
  return bits_per_dim(total, static_cast<double>(x.n * x.item_size()));
}

ImageDataset encode_dataset(const Encoder& encoder, const Codebook& codebook, const ImageDataset& data) {
  if (data.data.channels != encoder.spec().in_channels || data.bins() != encoder.spec().in_bins) {
    throw ShapeError("encoder expects " + std::to_string(encoder.spec().in_channels) + " channels x " +
                     std::to_string(encoder.spec().in_bins) + " bins, dataset has " +
                     std::to_string(data.data.channels) + " x " + std::to_string(data.bins()));
  }
  ImageDataset out;
  out.data = encode_codes(encoder, codebook, data.data);
  out.bits = static_cast<unsigned>(encoder.spec().code_bits);
  out.class_count = data.class_count;
  out.labels = data.labels;
  out.split = data.split;
  return out;
}

HierarchicalModel train_hierarchy(const ImageDataset& data, const std::vector<LevelSpec>& specs,
                                  const PriorSpec& prior, const MetricSink& sink) {
  data.validate();
  HierarchicalModel model;
  model.geometry = chain_geometry(geometry_of(data.data, data.bins()), specs, prior);
  ImageDataset current = data;
  std::size_t offset = 0;
  detail::StepClock clock;

  for (std::size_t l = 1; l <= specs.size(); ++l) {
    const LevelSpec& s = specs[l - 1];
    TrainOptions eopts = s.encoder_train;
    eopts.on_metrics = {};
    auto trainer = s.aux == AuxStrategy::feed_forward ? make_ff_trainer(current.data, l, s.encoder, s.ff, eopts)
                                                      : make_msp_trainer(current.data, s.encoder, s.msp, eopts);
    Rng drng(s.decoder_train.seed);
    AutoregressiveNet decoder(level_decoder_config(s), drng);
    Fitter fitter(decoder, s.decoder_train);
    detail::BatchSampler batches(current.size(), s.decoder_train.batch, drng.split());

    const std::size_t iters = std::max(s.encoder_train.steps, s.decoder_train.steps);
    const std::size_t every = std::max<std::size_t>(1, s.decoder_train.log_every);
    for (std::size_t i = 1; i <= iters; ++i) {
      std::vector<std::pair<std::string, double>> row;
      if (i <= s.encoder_train.steps) row.emplace_back(level_name(l) + "_encoder_loss", trainer->step());
      if (i <= s.decoder_train.steps) {
        const IntMap xb = current.data.gather(batches.next());
        // Codes come from the encoder's current state as plain integers: the
        // decoder loss cannot send gradients back into the encoder.
        const IntMap codes = encode_codes(trainer->encoder(), trainer->codebook(), xb);
        const double nats = fitter.step(xb, &codes, {}, i);
        row.emplace_back(level_name(l) + "_decoder_bits", nats_to_bits(nats));
        row.emplace_back(level_name(l) + "_perplexity", perplexity(codes.values, trainer->codebook().k()));
      }
      if (sink && (i % every == 0 || i == iters)) sink(MetricRow{offset + i, clock.seconds(), std::move(row)});
    }
    offset += iters;

    TrainedEncoder trained = trainer->finish();
    current = encode_dataset(trained.encoder, trained.codebook, current);
    model.levels.push_back({std::move(trained.encoder), std::move(trained.codebook), std::move(decoder),
                            trained.perplexity});
  }

  Rng prng(prior.train.seed);
  model.prior.emplace(prior_config(prior, model.geometry.back()), prng);
  const auto labels = current.labels_i32();
  const bool conditional = prior.net.classes > 0;
  if (conditional && current.class_count > prior.net.classes) {
    throw ConfigError("prior has " + std::to_string(prior.net.classes) + " classes, dataset declares " +
                      std::to_string(current.class_count));
  }
  TrainOptions popts = prior.train;
  if (sink) {
    const std::size_t base = offset;
    popts.on_metrics = [&sink, base](const MetricRow& r) {
      sink(MetricRow{base + r.step, r.wall_seconds, {{"prior_loss", r.get("loss")}, {"prior_bits", r.get("bits_per_dim")}}});
    };
  } else {
    popts.on_metrics = {};
  }
  (void)fit_autoregressive(*model.prior, current.data, nullptr, conditional ? &labels : nullptr, popts);
  return model;
}

IntMap ancestral_sample(const HierarchicalModel& model, std::size_t n, std::optional<std::int32_t> label,
                        const SamplerConfig& cfg) {
  if (!model.prior) throw ValueError("hierarchy has no prior");
  const auto& top = model.geometry.back();
  Conditioning cond;
  if (label) cond.labels.assign(n, *label);
  IntMap x = sample(*model.prior, n, top.height, top.width, cond, cfg);
  for (std::size_t l = model.levels.size(); l >= 1; --l) {
    const auto& geo = model.geometry[l - 1];
    Conditioning cc;
    cc.codes = &x;
    SamplerConfig c = cfg;
    c.seed = level_seed(cfg.seed, l);
    x = sample(model.levels[l - 1].decoder, n, geo.height, geo.width, cc, c);
  }
  return x;
}

IntMap reconstruct(const HierarchicalModel& model, const IntMap& x, std::size_t levels_to_encode,
                   const SamplerConfig& cfg) {
  if (levels_to_encode > model.levels.size()) {
    throw ValueError("cannot encode " + std::to_string(levels_to_encode) + " levels, model has " +
                     std::to_string(model.levels.size()));
  }
  IntMap y = x;
  for (std::size_t l = 0; l < levels_to_encode; ++l) y = encode_codes(model.levels[l].encoder, model.levels[l].codebook, y);
  for (std::size_t l = levels_to_encode; l >= 1; --l) {
    const auto& geo = model.geometry[l - 1];
    Conditioning cc;
    cc.codes = &y;
    SamplerConfig c = cfg;
    c.seed = level_seed(cfg.seed, l);
    y = sample(model.levels[l - 1].decoder, x.n, geo.height, geo.width, cc, c);
  }
  return y;
}

JointNLLReport JointNLLReport::from_components(std::vector<double> level_nats, double prior_nats, double pixel_dims) {
  JointNLLReport r;
  r.level_nats = std::move(level_nats);
  r.prior_nats = prior_nats;
  r.total_nats = prior_nats;
  for (double v : r.level_nats) r.total_nats += v;
  r.pixel_dims = pixel_dims;
  r.bits_per_dim = pixelstack::bits_per_dim(r.total_nats, pixel_dims);
  return r;
}

std::vector<JointNLLReport> joint_nll(const HierarchicalModel& model, const IntMap& x,
                                      const std::vector<std::int32_t>& labels) {
  if (!model.prior) throw ValueError("hierarchy has no prior");
  if (!labels.empty() && labels.size() != x.n) throw ShapeError("expected one label per image");
  const std::size_t L = model.levels.size();
  std::vector<std::vector<double>> level_nats(x.n, std::vector<double>(L, 0.0));
  std::vector<double> prior_nats(x.n, 0.0);
  for (std::size_t first = 0; first < x.n; first += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, x.n - first);
    IntMap cur = x.slice(first, count);
    for (std::size_t l = 0; l < L; ++l) {
      const auto& lv = model.levels[l];
      IntMap codes = encode_codes(lv.encoder, lv.codebook, cur);
      Conditioning cond;
      cond.codes = &codes;
      const auto per = nll_per_item(lv.decoder.forward(cur, cond), cur);
      for (std::size_t i = 0; i < count; ++i) level_nats[first + i][l] = per[i];
      cur = std::move(codes);
    }
    Conditioning cond;
    cond.labels = slice_labels(&labels, first, count);
    const auto per = nll_per_item(model.prior->forward(cur, cond), cur);
    for (std::size_t i = 0; i < count; ++i) prior_nats[first + i] = per[i];
  }
  std::vector<JointNLLReport> out;
  out.reserve(x.n);
  const auto dims = static_cast<double>(x.item_size());
  for (std::size_t i = 0; i < x.n; ++i) out.push_back(JointNLLReport::from_components(level_nats[i], prior_nats[i], dims));
  return out;
}

// ---------------------------------------------------------------------------

DataSplit split_dataset(const ImageDataset& data) {
  std::vector<std::size_t> tr, va;
  for (std::size_t i = 0; i < data.size(); ++i) (is_validation_index(i) ? va : tr).push_back(i);
  DataSplit s{data.subset(tr), data.subset(va)};
  s.train.split = Split::train;
  s.validation.split = Split::validation;
  return s;
}

namespace {

SweepRow measure_once(const DataSplit& split, const PredictabilitySpec& spec) {
  const LevelSpec level = resolve_level(spec.level, geometry_of(split.train.data, split.train.bins()));
  const TrainedEncoder trained =
      level.aux == AuxStrategy::feed_forward
          ? train_encoder_ff(split.train.data, 1, level.encoder, level.ff, level.encoder_train)
          : train_encoder_msp(split.train.data, level.encoder, level.msp, level.encoder_train);
  const IntMap train_codes = encode_codes(trained.encoder, trained.codebook, split.train.data);
  const IntMap val_codes = encode_codes(trained.encoder, trained.codebook, split.validation.data);

  PixelCNNConfig pcfg = spec.prior.net;
  pcfg.groups = level.encoder.code_channels;
  pcfg.bins = level.encoder.code_bins();
  pcfg.classes = 0;
  pcfg.modulator.reset();
  Rng rng(spec.prior.train.seed);
  AutoregressiveNet prior(pcfg, rng);
  (void)fit_autoregressive(prior, train_codes, nullptr, nullptr, spec.prior.train);

  SweepRow row;
  row.perplexity = perplexity(train_codes.values, trained.codebook.k());
  row.nll_bits_per_position = evaluate_bits(prior, val_codes);
  return row;
}

std::uint64_t repeat_seed(std::uint64_t seed, std::size_t r) {
  std::uint64_t s = seed + 0x632BE59BD9B4E019ULL * r;
  return splitmix64(s);
}

}  // namespace

SweepRow measure_code_predictability(const ImageDataset& data, const PredictabilitySpec& spec,
                                     const std::string& setting) {
  if (spec.repeats == 0) throw ValueError("sweep repeats must be positive");
  const DataSplit split = split_dataset(data);
  if (split.validation.size() == 0) throw ValueError("dataset too small for a validation split");
  SweepRow row;
  row.setting = setting;
  row.perplexity = 0.0;
  for (std::size_t r = 0; r < spec.repeats; ++r) {
    PredictabilitySpec run = spec;
    if (r > 0) {
      run.level.encoder_train.seed = repeat_seed(spec.level.encoder_train.seed, r);
      run.prior.train.seed = repeat_seed(spec.prior.train.seed, r);
    }
    const SweepRow one = measure_once(split, run);
    row.perplexity += one.perplexity / static_cast<double>(spec.repeats);
    row.nll_bits_per_position += one.nll_bits_per_position / static_cast<double>(spec.repeats);
  }
  return row;
}

std::vector<SweepRow> code_predictability_sweep(const ImageDataset& data, PredictabilitySpec base, SweepAxis axis,
                                                const std::vector<std::size_t>& values) {
  if (values.size() < 3) throw ValueError("a sweep needs at least 3 values to define a trend");
  std::vector<SweepRow> rows;
  for (auto v : values) {
    PredictabilitySpec s = base;
    std::string setting;
    if (axis == SweepAxis::aux_depth) {
      s.level.aux = AuxStrategy::feed_forward;
      s.level.ff.layers = v;
      setting = "aux_depth=" + std::to_string(v);
    } else {
      s.level.aux = AuxStrategy::msp;
      s.level.msp.mask_side = v;
      setting = "mask_side=" + std::to_string(v);
    }
    rows.push_back(measure_code_predictability(data, s, setting));
  }
  return rows;
}

// ---------------------------------------------------------------------------

std::string Manifest::to_text() const {
  std::ostringstream os;
  os << "pixelstack-manifest 1\n";
  os << "config " << config_file << "\n";
  os << "levels " << geometry.size() << "\n";
  for (std::size_t i = 0; i < geometry.size(); ++i) {
    const auto& g = geometry[i];
    os << "geometry " << i << ' ' << g.channels << ' ' << g.bins << ' ' << g.height << ' ' << g.width << "\n";
  }
  for (std::size_t l = 0; l < level_checkpoints.size(); ++l) os << "level " << l + 1 << ' ' << level_checkpoints[l] << "\n";
  os << "prior " << prior_checkpoint << "\n";
  return os.str();
}

Manifest Manifest::parse(const std::string& text) {
  auto bad = [](const std::string& m) { return FormatError(FormatError::Kind::invariant_violation, "manifest: " + m); };
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "pixelstack-manifest 1") {
    throw FormatError(FormatError::Kind::bad_magic, "manifest: missing 'pixelstack-manifest 1' header");
  }
  Manifest m;
  std::size_t depth = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "config") {
      ls >> m.config_file;
    } else if (key == "levels") {
      ls >> depth;
    } else if (key == "geometry") {
      std::size_t i = 0;
      MapGeometry g;
      ls >> i >> g.channels >> g.bins >> g.height >> g.width;
      if (i != m.geometry.size()) throw bad("geometry entries out of order");
      m.geometry.push_back(g);
    } else if (key == "level") {
      std::size_t l = 0;
      std::string file;
      ls >> l >> file;
      if (l != m.level_checkpoints.size() + 1) throw bad("level entries out of order");
      m.level_checkpoints.push_back(file);
    } else if (key == "prior") {
      ls >> m.prior_checkpoint;
    } else {
      throw bad("unknown entry '" + key + "'");
    }
    if (ls.fail()) throw bad("malformed line '" + line + "'");
  }
  if (depth == 0 || m.geometry.size() != depth || m.level_checkpoints.size() + 1 != depth) {
    throw bad("level count does not match the listed geometry and checkpoints");
  }
  if (m.prior_checkpoint.empty()) throw bad("no prior checkpoint");
  return m;
}

Manifest save_hierarchy(const HierarchicalModel& model, const std::filesystem::path& dir,
                        const std::string& config_file) {
  if (!model.prior) throw ValueError("hierarchy has no prior");
  std::filesystem::create_directories(dir);
  Manifest m;
  m.config_file = config_file;
  m.geometry = model.geometry;
  // parameters() only collects pointers; nothing below writes through them.
  auto& mut = const_cast<HierarchicalModel&>(model);
  for (std::size_t l = 0; l < mut.levels.size(); ++l) {
    auto& lv = mut.levels[l];
    Checkpoint ck;
    const auto& dc = lv.decoder.config();
    ck.layers = static_cast<std::uint32_t>(dc.layers);
    ck.hidden = static_cast<std::uint32_t>(dc.hidden);
    ck.bins = static_cast<std::uint32_t>(dc.bins);
    ck.groups = static_cast<std::uint32_t>(dc.groups);
    ParameterList enc;
    lv.encoder.collect(enc);
    store_parameters(ck, enc);
    store_codebook(ck, lv.codebook);
    store_parameters(ck, lv.decoder.parameters());
    const std::string file = "level" + std::to_string(l + 1) + ".pxs";
    save_checkpoint(ck, dir / file);
    m.level_checkpoints.push_back(file);
  }
  Checkpoint pk;
  const auto& pc = mut.prior->config();
  pk.layers = static_cast<std::uint32_t>(pc.layers);
  pk.hidden = static_cast<std::uint32_t>(pc.hidden);
  pk.bins = static_cast<std::uint32_t>(pc.bins);
  pk.groups = static_cast<std::uint32_t>(pc.groups);
  store_parameters(pk, mut.prior->parameters());
  m.prior_checkpoint = "prior.pxs";
  save_checkpoint(pk, dir / m.prior_checkpoint);
  std::ofstream f(dir / "manifest.txt", std::ios::binary | std::ios::trunc);
  f << m.to_text();
  if (!f) throw FormatError(FormatError::Kind::io, "cannot write manifest in " + dir.string());
  return m;
}

Manifest read_manifest(const std::filesystem::path& dir) {
  std::ifstream f(dir / "manifest.txt", std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot open " + (dir / "manifest.txt").string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return Manifest::parse(ss.str());
}

void load_hierarchy_weights(HierarchicalModel& model, const std::filesystem::path& dir, const Manifest& manifest) {
  if (manifest.geometry != model.geometry) throw ShapeError("manifest geometry does not match the model");
  if (!model.prior) throw ValueError("hierarchy has no prior");
  for (std::size_t l = 0; l < model.levels.size(); ++l) {
    auto& lv = model.levels[l];
    const Checkpoint ck = load_checkpoint(dir / manifest.level_checkpoints[l]);
    ParameterList enc;
    lv.encoder.collect(enc);
    restore_parameters(ck, enc);
    restore_codebook(ck, lv.codebook);
    restore_parameters(ck, lv.decoder.parameters());
  }
  restore_parameters(load_checkpoint(dir / manifest.prior_checkpoint), model.prior->parameters());
}

}  // namespace pixelstack
