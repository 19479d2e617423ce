#include "commands.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "pixelstack/error.hpp"
#include "pixelstack/image_io.hpp"
#include "pixelstack/ops.hpp"
#include "pixelstack/stats.hpp"

namespace pixelstack::harness {

namespace {

constexpr const char* kConfigFile = "config.cfg";

void require_file(const std::filesystem::path& p, const char* what) {
  if (!std::filesystem::exists(p)) throw ConfigError(std::string(what) + " not found: " + p.string());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  f << text;
}

RunConfig config_with_seed(const std::filesystem::path& path, std::optional<std::uint64_t> seed) {
  require_file(path, "config file");
  RunConfig cfg = RunConfig::load(path);
  if (seed) cfg.set("global", "seed", std::to_string(*seed));
  return cfg;
}

std::size_t grid_cols(std::size_t n) {
  auto c = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  return std::max<std::size_t>(1, c);
}

double image_mean(const IntMap& x, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < x.item_size(); ++j) s += x.values[i * x.item_size() + j];
  return s / static_cast<double>(x.item_size());
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t j) {
  std::uint64_t s = seed + 0x51ED270BULL * (j + 1);
  return splitmix64(s);
}

Tensor random_leaf(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor::from_data(shape, std::move(v), true);
}

/// Values bounded away from zero, for ops with a kink there.
Tensor offset_leaf(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.0);
  return Tensor::from_data(shape, std::move(v), true);
}

Tensor constant(const Shape& shape, Rng& rng) {
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return Tensor::from_data(shape, std::move(v));
}

/// sum(y * w) for a fixed random w, so every output entry matters.
Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(y, constant(y.shape(), rng)));
}

std::vector<std::int32_t> random_ints(std::size_t n, std::size_t bound, Rng& rng) {
  std::vector<std::int32_t> v(n);
  for (auto& x : v) x = static_cast<std::int32_t>(rng.below(bound));
  return v;
}

}  // namespace

ImageDataset load_pixels(const std::filesystem::path& path, const RunConfig& cfg) {
  require_file(path, "dataset");
  ImageDataset ds = load_dataset(path);
  const unsigned bits = cfg.pixel_bits();
  if (bits > ds.bits) {
    throw ConfigError("pixel_bits " + std::to_string(bits) + " exceeds the dataset depth " + std::to_string(ds.bits));
  }
  return bits < ds.bits ? bit_depth_reduce(ds, bits) : ds;
}

TrainedRun train_run(const RunConfig& cfg, const ImageDataset& pixels) {
  const MapGeometry geo = geometry_of(pixels.data, pixels.bins());
  TrainedRun run{HierarchicalModel{}, {}};
  run.model = train_hierarchy(pixels, cfg.level_specs(geo), cfg.prior_spec(geo),
                              [&](const MetricRow& r) { run.metrics.push_back(r); });
  return run;
}

void write_run(const std::filesystem::path& dir, const RunConfig& cfg, const TrainedRun& run) {
  std::filesystem::create_directories(dir);
  write_text(dir / kConfigFile, cfg.to_text());
  (void)save_hierarchy(run.model, dir, kConfigFile);
  write_csv(metrics_table(run.metrics, false), dir / "metrics.csv");
}

LoadedRun load_run(const std::filesystem::path& dir) {
  require_file(dir / "manifest.txt", "manifest");
  const Manifest manifest = read_manifest(dir);
  RunConfig cfg = RunConfig::load(dir / manifest.config_file);
  const MapGeometry pixels = manifest.geometry.front();
  if (manifest.geometry.size() != cfg.level_count() + 1) {
    throw ConfigError("manifest lists " + std::to_string(manifest.geometry.size() - 1) + " levels, config has " +
                      std::to_string(cfg.level_count()));
  }
  HierarchicalModel model = build_hierarchy(pixels, cfg.level_specs(pixels), cfg.prior_spec(pixels));
  load_hierarchy_weights(model, dir, manifest);
  return {std::move(cfg), std::move(model)};
}

DriftReport drift_report(const IntMap& originals, const IntMap& reconstructions) {
  if (originals.n != reconstructions.n || originals.item_size() != reconstructions.item_size()) {
    throw ShapeError("drift needs matching originals and reconstructions");
  }
  DriftReport r;
  for (std::size_t i = 0; i < originals.n; ++i) {
    r.drift.push_back(std::abs(image_mean(originals, i) - image_mean(reconstructions, i)));
  }
  r.mean = mean(r.drift);
  r.stdev = stdev(r.drift);
  return r;
}

IntMap side_by_side(const IntMap& left, const IntMap& right) {
  if (left.n != right.n || left.item_size() != right.item_size()) throw ShapeError("side_by_side: size mismatch");
  IntMap out(2 * left.n, left.channels, left.height, left.width);
  const std::size_t sz = left.item_size();
  for (std::size_t i = 0; i < left.n; ++i) {
    std::copy_n(left.values.begin() + static_cast<std::ptrdiff_t>(i * sz), sz,
                out.values.begin() + static_cast<std::ptrdiff_t>(2 * i * sz));
    std::copy_n(right.values.begin() + static_cast<std::ptrdiff_t>(i * sz), sz,
                out.values.begin() + static_cast<std::ptrdiff_t>((2 * i + 1) * sz));
  }
  return out;
}

PathologyResult run_pathology(const RunConfig& cfg, const ImageDataset& pixels, std::size_t images) {
  if (images == 0 || images > pixels.size()) {
    throw ConfigError("pathology needs between 1 and " + std::to_string(pixels.size()) + " images");
  }
  RunConfig one = cfg;
  one.set_level_count(1);
  one.set("prior", "steps", "0");  // reconstructions never touch the prior
  const MapGeometry geo = geometry_of(pixels.data, pixels.bins());
  auto specs = one.level_specs(geo);
  specs.front().aux = AuxStrategy::feed_forward;
  const LevelSpec& level = specs.front();

  PathologyResult r;
  r.originals = pixels.data.slice(0, images);
  SamplerConfig sc = one.sampler();

  const HierarchicalModel aux = train_hierarchy(pixels, specs, one.prior_spec(geo));
  r.aux_reconstructions = reconstruct(aux, r.originals, 1, sc);
  const IntMap codes = encode_codes(aux.levels[0].encoder, aux.levels[0].codebook, pixels.data);
  r.aux_bits = evaluate_bits(aux.levels[0].decoder, pixels.data, &codes);

  TrainOptions bopts = level.decoder_train;
  bopts.steps = std::max(level.encoder_train.steps, level.decoder_train.steps);
  bopts.vq = level.encoder_train.vq;
  bopts.gamma = level.encoder_train.gamma;
  bopts.reseed_every = level.encoder_train.reseed_every;
  const Autoencoder baseline =
      train_end_to_end_baseline(pixels.data, level.encoder, level.decoder, level.modulator, bopts);
  r.baseline_reconstructions = reconstruct_baseline(baseline, r.originals, sc);
  r.baseline_bits = teacher_forced_bits(baseline, pixels.data);

  r.baseline = drift_report(r.originals, r.baseline_reconstructions);
  r.aux = drift_report(r.originals, r.aux_reconstructions);
  return r;
}

std::vector<NamedGradCheck> gradcheck_suite(std::uint64_t seed, double tolerance) {
  std::vector<NamedGradCheck> out;
  Rng rng(seed);
  auto run1 = [&](const std::string& name, const Tensor& x, const std::function<Tensor(const Tensor&)>& f) {
    out.push_back({name, gradient_check(f, x, 1e-5, tolerance)});
  };
  auto runn = [&](const std::string& name, const std::vector<Tensor>& leaves, const std::function<Tensor()>& f) {
    out.push_back({name, gradient_check(f, leaves, 1e-5, tolerance)});
  };
  const std::uint64_t ps = rng.next();

  {
    Tensor a = random_leaf({2, 3}, rng), b = random_leaf({2, 3}, rng);
    runn("add", {a, b}, [=] { return project(add(a, b), ps); });
    runn("sub", {a, b}, [=] { return project(sub(a, b), ps); });
    runn("mul", {a, b}, [=] { return project(mul(a, b), ps); });
    Tensor bias = random_leaf({3}, rng);
    runn("add_broadcast", {a, bias}, [=] { return project(add(a, bias), ps); });
  }
  run1("scale", random_leaf({4}, rng), [=](const Tensor& x) { return project(scale(x, -1.7), ps); });
  run1("relu", offset_leaf({6}, rng), [=](const Tensor& x) { return project(relu(x), ps); });
  run1("tanh", random_leaf({6}, rng), [=](const Tensor& x) { return project(tanh(x), ps); });
  run1("sigmoid", random_leaf({6}, rng), [=](const Tensor& x) { return project(sigmoid(x), ps); });
  run1("sum", random_leaf({2, 3}, rng), [](const Tensor& x) { return sum(x); });
  run1("mean", random_leaf({2, 3}, rng), [](const Tensor& x) { return mean(x); });
  run1("reshape", random_leaf({2, 3}, rng), [=](const Tensor& x) { return project(reshape(x, {3, 2}), ps); });
  {
    Tensor x = random_leaf({2, 2, 5, 5}, rng), w = random_leaf({3, 2, 3, 3}, rng), b = random_leaf({3}, rng);
    runn("conv2d", {x, w, b}, [=] { return project(conv2d(x, w, b), ps); });
    runn("conv2d_stride2", {x, w, b}, [=] { return project(conv2d(x, w, b, {}, 2), ps); });
    const Tensor mask = make_weight_mask({MaskKind::A, 3, 1, 2, 3});
    runn("conv2d_masked", {x, w, b}, [=] { return project(conv2d(x, w, b, mask), ps); });
  }
  run1("subpixel_upsample", random_leaf({1, 8, 2, 3}, rng),
       [=](const Tensor& x) { return project(subpixel_upsample(x, 2), ps); });
  run1("space_to_depth", random_leaf({1, 2, 4, 4}, rng),
       [=](const Tensor& x) { return project(space_to_depth(x, 2), ps); });
  {
    const auto targets = random_ints(2 * 3 * 2, 4, rng);
    run1("softmax_cross_entropy", random_leaf({2, 4, 3, 2}, rng),
         [=](const Tensor& x) { return softmax_cross_entropy(x, targets, 1); });
    const std::vector<std::uint8_t> sel{1, 0, 1, 1, 0, 1, 0, 0, 1, 1, 0, 1};
    run1("masked_softmax_cross_entropy", random_leaf({2, 4, 3, 2}, rng),
         [=](const Tensor& x) { return masked_softmax_cross_entropy(x, targets, 1, sel); });
    run1("softmax", random_leaf({2, 4, 3}, rng), [=](const Tensor& x) { return project(softmax(x, 1), ps); });
    run1("log_softmax", random_leaf({2, 4, 3}, rng), [=](const Tensor& x) { return project(log_softmax(x, 1), ps); });
    const Tensor target = softmax(constant({2, 4, 3}, rng), 1).detach();
    const std::vector<std::uint8_t> pos{1, 1, 0, 1, 0, 1};
    run1("kl_divergence_with_logits", random_leaf({2, 4, 3}, rng),
         [=](const Tensor& x) { return kl_divergence_with_logits(target, x, 1, pos); });
  }
  {
    Tensor a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng);
    runn("mse", {a, b}, [=] { return mse(a, b); });
    const auto idx = random_ints(5, 3, rng);
    run1("gather_rows", random_leaf({3, 4}, rng), [=](const Tensor& t) { return project(gather_rows(t, idx), ps); });
    const auto idx2 = random_ints(2 * 2 * 3, 3, rng);
    run1("gather_nchw", random_leaf({3, 4}, rng),
         [=](const Tensor& t) { return project(gather_nchw(t, idx2, 2, 2, 3), ps); });
  }
  {
    // The estimator's forward value does not depend on z, so central
    // differences cannot see it; its contract is that the incoming gradient
    // reaches z unchanged.
    const Tensor q = constant({3, 4}, rng);
    Tensor z = random_leaf({3, 4}, rng);
    Rng wrng(ps);
    const Tensor w = constant({3, 4}, wrng);
    backward(sum(mul(straight_through(z, q), w)));
    GradCheckReport r;
    r.tolerance = 0.0;
    r.checked = z.numel();
    for (std::size_t i = 0; i < z.numel(); ++i) {
      const double err = std::abs(z.grad()[i] - w.data()[i]);
      if (err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_index = i;
      }
    }
    r.passed = r.max_rel_error == 0.0;
    out.push_back({"straight_through (exact)", r});
  }
  {
    // Gated block stack + head + NLL, with codes feeding the modulator.
    PixelCNNConfig cfg;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.bins = 3;
    cfg.groups = 1;
    cfg.classes = 2;
    ModulatorSpec mod;
    mod.code_channels = 1;
    mod.code_bins = 2;
    mod.layers = 1;
    mod.hidden = 4;
    mod.upsample = 2;
    cfg.modulator = mod;
    Rng nrng(rng.next());
    auto net = std::make_shared<AutoregressiveNet>(cfg, nrng);
    IntMap x(2, 1, 4, 4), codes(2, 1, 2, 2);
    for (auto& v : x.values) v = static_cast<std::int32_t>(nrng.below(3));
    for (auto& v : codes.values) v = static_cast<std::int32_t>(nrng.below(2));
    std::vector<Tensor> leaves;
    for (auto* p : net->parameters()) {
      // Lift every parameter off zero so relu kinks are not hit at the start.
      for (auto& v : p->value.mutable_data()) v += nrng.uniform(-0.3, 0.3);
      leaves.push_back(p->value);
    }
    runn("gated_stack_nll", leaves, [net, x, codes] {
      Conditioning c;
      c.codes = &codes;
      c.labels = {0, 1};
      return nll(net->forward(x, c), x);
    });
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_train(const TrainArgs& args, std::ostream& out) {
  RunConfig cfg = config_with_seed(args.config, args.seed);
  if (args.levels) cfg.set_level_count(*args.levels);
  const ImageDataset pixels = load_pixels(args.dataset, cfg);
  std::filesystem::create_directories(args.out);
  TrainedRun run;
  try {
    run = train_run(cfg, pixels);
  } catch (const DivergenceError& e) {
    std::ostringstream snap;
    snap << "error: " << e.what() << "\n\nresolved config:\n" << cfg.to_text();
    write_text(args.out / "divergence.txt", snap.str());
    throw;
  }
  write_run(args.out, cfg, run);
  out << "trained " << cfg.level_count() << " level(s) + prior on " << pixels.size() << " images -> "
      << args.out.string() << "\n";
  if (!run.metrics.empty()) {
    out << "final:";
    for (const auto& [k, v] : run.metrics.back().values) out << " " << k << "=" << format_double(v);
    out << "\n";
  }
  return kExitOk;
}

int cmd_sample(const SampleArgs& args, std::ostream& out) {
  const LoadedRun run = load_run(args.run);
  SamplerConfig sc = run.config.sampler();
  if (args.temperature) sc.temperature = *args.temperature;
  if (args.seed) sc.seed = *args.seed;
  if (args.n == 0) throw ConfigError("--n must be positive");
  const auto& prior_cfg = run.model.prior->config();
  if (args.label) {
    if (prior_cfg.classes == 0) throw ConfigError("--class given but the prior is not class-conditional");
    if (*args.label < 0 || static_cast<std::size_t>(*args.label) >= prior_cfg.classes) {
      throw ConfigError("class " + std::to_string(*args.label) + " out of range; valid classes are 0.." +
                        std::to_string(prior_cfg.classes - 1));
    }
  }
  const IntMap images = ancestral_sample(run.model, args.n, args.label, sc);
  const std::string cls = args.label ? std::to_string(*args.label) : "none";
  const std::string t = format_double(sc.temperature);
  const std::string meta = "class=" + cls + " seed=" + std::to_string(sc.seed) + " temperature=" + t;
  std::filesystem::create_directories(args.out);
  const auto file = args.out / ("sample_class-" + cls + "_seed-" + std::to_string(sc.seed) + "_t-" + t + ".pgm");
  write_pgm_grid(images, grid_cols(args.n), run.config.pixel_bits(), file, meta);
  out << "wrote " << file.string() << " (" << meta << ")\n";
  return kExitOk;
}

int cmd_reconstruct(const ReconstructArgs& args, std::ostream& out) {
  const LoadedRun run = load_run(args.run);
  const ImageDataset pixels = load_pixels(args.dataset, run.config);
  const std::size_t n = std::min(args.n, pixels.size());
  if (n == 0) throw ConfigError("no images to reconstruct");
  const std::size_t levels = args.levels.value_or(run.model.levels.size());
  SamplerConfig sc = run.config.sampler();
  sc.temperature = args.temperature.value_or(kReconstructionTemperature);
  if (args.seed) sc.seed = *args.seed;
  const IntMap originals = pixels.data.slice(0, n);
  std::vector<IntMap> recons;
  for (std::size_t j = 0; j < args.samples; ++j) {
    SamplerConfig c = sc;
    c.seed = sample_seed(sc.seed, j);
    recons.push_back(reconstruct(run.model, originals, levels, c));
  }
  const std::size_t cols = args.samples + 1;
  IntMap grid(n * cols, originals.channels, originals.height, originals.width);
  const std::size_t sz = originals.item_size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < cols; ++c) {
      const IntMap& src = c == 0 ? originals : recons[c - 1];
      std::copy_n(src.values.begin() + static_cast<std::ptrdiff_t>(i * sz), sz,
                  grid.values.begin() + static_cast<std::ptrdiff_t>((i * cols + c) * sz));
    }
  }
  std::filesystem::create_directories(args.out);
  const auto file = args.out / "reconstruct.pgm";
  const std::string meta = "levels=" + std::to_string(levels) + " samples=" + std::to_string(args.samples) +
                           " seed=" + std::to_string(sc.seed) + " temperature=" + format_double(sc.temperature);
  write_pgm_grid(grid, cols, run.config.pixel_bits(), file, meta);
  out << "wrote " << file.string() << " (" << meta << ")\n";
  return kExitOk;
}

int cmd_eval(const EvalArgs& args, std::ostream& out) {
  const LoadedRun run = load_run(args.run);
  const ImageDataset pixels = load_pixels(args.dataset, run.config);
  std::vector<std::int32_t> labels;
  if (run.model.prior->config().classes > 0) labels = pixels.labels_i32();
  const auto reports = joint_nll(run.model, pixels.data, labels);
  const std::size_t L = run.model.levels.size();
  std::vector<CsvRow> rows;
  CsvRow header{"image"};
  for (std::size_t l = 1; l <= L; ++l) header.push_back("level" + std::to_string(l) + "_nats");
  header.insert(header.end(), {"prior_nats", "total_nats", "bits_per_dim"});
  rows.push_back(header);
  std::vector<double> sums(L + 3, 0.0);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    CsvRow row{std::to_string(i)};
    std::vector<double> vals = r.level_nats;
    vals.insert(vals.end(), {r.prior_nats, r.total_nats, r.bits_per_dim});
    for (std::size_t k = 0; k < vals.size(); ++k) {
      row.push_back(format_double(vals[k]));
      sums[k] += vals[k];
    }
    rows.push_back(std::move(row));
  }
  CsvRow agg{"mean"};
  const double count = static_cast<double>(std::max<std::size_t>(1, reports.size()));
  for (double s : sums) agg.push_back(format_double(s / count));
  rows.push_back(agg);
  std::filesystem::create_directories(args.out);
  write_csv(rows, args.out / "eval.csv");
  out << "joint NLL over " << reports.size() << " images: " << agg.back() << " bits/dim -> "
      << (args.out / "eval.csv").string() << "\n";
  return kExitOk;
}

int cmd_sweep(const SweepArgs& args, std::ostream& out) {
  auto trend_for = [](const std::string& axis) {
    if (axis == "aux_depth") return Trend::non_decreasing;
    if (axis == "mask_side") return Trend::non_increasing;
    throw ConfigError("--axis must be aux_depth or mask_side, got '" + axis + "'");
  };
  std::vector<SweepRow> rows;
  std::string axis = args.axis;
  if (!args.check.empty()) {
    require_file(args.check, "sweep CSV");
    const auto csv = read_csv(args.check);
    if (csv.empty() || csv.front() != CsvRow{"setting", "perplexity", "nll_bits_per_position"}) {
      throw ConfigError("not a sweep CSV: " + args.check.string());
    }
    for (std::size_t i = 1; i < csv.size(); ++i) {
      if (csv[i].size() != 3) throw ConfigError("malformed sweep CSV row " + std::to_string(i));
      rows.push_back({csv[i][0], std::stod(csv[i][1]), std::stod(csv[i][2])});
    }
    if (axis.empty() && !rows.empty()) axis = rows.front().setting.substr(0, rows.front().setting.find('='));
  } else {
    const Trend t = trend_for(axis);
    (void)t;
    if (args.values.size() < 3) throw ConfigError("a sweep needs at least 3 values");
    const RunConfig cfg = config_with_seed(args.config, args.seed);
    const ImageDataset pixels = load_pixels(args.dataset, cfg);
    rows = code_predictability_sweep(pixels, cfg.sweep_spec(geometry_of(pixels.data, pixels.bins())),
                                     axis == "aux_depth" ? SweepAxis::aux_depth : SweepAxis::mask_side, args.values);
    std::vector<CsvRow> csv{{"setting", "perplexity", "nll_bits_per_position"}};
    for (const auto& r : rows) csv.push_back({r.setting, format_double(r.perplexity), format_double(r.nll_bits_per_position)});
    std::filesystem::create_directories(args.out);
    write_csv(csv, args.out / "sweep.csv");
    out << "wrote " << (args.out / "sweep.csv").string() << "\n";
  }
  const Trend trend = trend_for(axis);
  if (rows.size() < 3) throw ConfigError("trend needs at least 3 sweep rows");
  std::vector<double> nll;
  for (const auto& r : rows) {
    out << "  " << r.setting << "  perplexity=" << format_double(r.perplexity)
        << "  nll_bits_per_position=" << format_double(r.nll_bits_per_position) << "\n";
    nll.push_back(r.nll_bits_per_position);
  }
  const TrendCheck check = check_trend(nll, trend);
  out << "trend " << (trend == Trend::non_decreasing ? "non-decreasing" : "non-increasing") << ": "
      << (check.passed ? "held" : "violated") << " (monotone=" << (check.monotone ? "yes" : "no")
      << ", spearman=" << format_double(check.rho) << ")\n";
  return check.passed ? kExitOk : kExitFailure;
}

int cmd_pathology(const PathologyArgs& args, std::ostream& out) {
  const RunConfig cfg = config_with_seed(args.config, args.seed);
  const ImageDataset pixels = load_pixels(args.dataset, cfg);
  const PathologyResult r = run_pathology(cfg, pixels, std::min(args.images, pixels.size()));
  std::filesystem::create_directories(args.out);
  std::vector<CsvRow> csv{{"image", "baseline_drift", "aux_drift"}};
  for (std::size_t i = 0; i < r.baseline.drift.size(); ++i) {
    csv.push_back({std::to_string(i), format_double(r.baseline.drift[i]), format_double(r.aux.drift[i])});
  }
  csv.push_back({"mean", format_double(r.baseline.mean), format_double(r.aux.mean)});
  csv.push_back({"stdev", format_double(r.baseline.stdev), format_double(r.aux.stdev)});
  csv.push_back({"teacher_forced_bits_per_dim", format_double(r.baseline_bits), format_double(r.aux_bits)});
  write_csv(csv, args.out / "drift.csv");
  const unsigned bits = cfg.pixel_bits();
  write_pgm_grid(side_by_side(r.originals, r.baseline_reconstructions), 2, bits, args.out / "pathology_baseline.pgm");
  write_pgm_grid(side_by_side(r.originals, r.aux_reconstructions), 2, bits, args.out / "pathology_aux.pgm");
  const bool held = r.baseline.mean >= r.aux.mean;
  out << "mean drift: baseline " << format_double(r.baseline.mean) << ", aux " << format_double(r.aux.mean)
      << " -> " << (held ? "baseline drifts at least as much" : "aux model drifts more") << "\n";
  out << "teacher-forced bits/dim: baseline " << format_double(r.baseline_bits) << ", aux "
      << format_double(r.aux_bits) << "\n";
  return held ? kExitOk : kExitFailure;
}

int cmd_gradcheck(const GradcheckArgs& args, std::ostream& out) {
  const auto results = gradcheck_suite(args.seed.value_or(0));
  bool ok = true;
  for (const auto& [name, r] : results) {
    out << std::left << std::setw(30) << name << (r.passed ? "PASS" : "FAIL") << "  max_rel_error=" << std::scientific
        << std::setprecision(3) << r.max_rel_error << std::defaultfloat << "  (" << r.checked << " entries)\n";
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_synth(const SynthArgs& args, std::ostream& out) {
  const ImageDataset ds = synth_textures(args.n, args.height, args.width, args.classes, args.seed);
  if (args.out.has_parent_path()) std::filesystem::create_directories(args.out.parent_path());
  save_dataset(ds, args.out);
  out << "wrote " << ds.size() << " images (" << args.height << "x" << args.width << ", " << args.classes
      << " classes) -> " << args.out.string() << "\n";
  return kExitOk;
}

}  // namespace pixelstack::harness
