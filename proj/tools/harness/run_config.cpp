#include "run_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "pixelstack/error.hpp"
#include "pixelstack/image_io.hpp"

namespace pixelstack::harness {

namespace {

enum class Kind { uint, real, positive_real, aux, mode };

struct KeyDef {
  const char* key;
  Kind kind;
  const char* fallback;  // default value, or the [global] key it inherits when `inherits`
  bool inherits = false;
};

const std::vector<KeyDef> kGlobal = {
    {"seed", Kind::uint, "0"},      {"steps", Kind::uint, "1000"},    {"lr", Kind::positive_real, "0.001"},
    {"batch", Kind::uint, "8"},     {"log_every", Kind::uint, "50"},  {"pixel_bits", Kind::uint, "4"},
};

const std::vector<KeyDef> kLevel = {
    {"stride", Kind::uint, "2"},
    {"code_channels", Kind::uint, "1"},
    {"code_dim", Kind::uint, "8"},
    {"code_bits", Kind::uint, "4"},
    {"encoder_layers", Kind::uint, "2"},
    {"encoder_hidden", Kind::uint, "32"},
    {"aux", Kind::aux, "feed_forward"},
    {"aux_layers", Kind::uint, "2"},
    {"aux_hidden", Kind::uint, "32"},
    {"mask_side", Kind::uint, "3"},
    {"teacher_layers", Kind::uint, "3"},
    {"teacher_hidden", Kind::uint, "32"},
    {"decoder_layers", Kind::uint, "4"},
    {"decoder_hidden", Kind::uint, "32"},
    {"decoder_kernel", Kind::uint, "3"},
    {"modulator_layers", Kind::uint, "2"},
    {"modulator_hidden", Kind::uint, "32"},
    {"beta", Kind::real, "0.25"},
    {"gamma", Kind::real, "0.99"},
    {"reseed_every", Kind::uint, "0"},
    {"encoder_steps", Kind::uint, "steps", true},
    {"decoder_steps", Kind::uint, "steps", true},
    {"lr", Kind::positive_real, "lr", true},
    {"batch", Kind::uint, "batch", true},
};

const std::vector<KeyDef> kPrior = {
    {"layers", Kind::uint, "4"},        {"hidden", Kind::uint, "32"},          {"kernel", Kind::uint, "3"},
    {"classes", Kind::uint, "0"},       {"steps", Kind::uint, "steps", true},  {"lr", Kind::positive_real, "lr", true},
    {"batch", Kind::uint, "batch", true},
};

const std::vector<KeyDef> kSampler = {
    {"temperature", Kind::positive_real, "1"},
    {"mode", Kind::mode, "incremental"},
};

const std::vector<KeyDef> kSweep = {
    {"prior_layers", Kind::uint, "8"},
    {"prior_hidden", Kind::uint, "32"},
    {"prior_steps", Kind::uint, "steps", true},
    {"prior_lr", Kind::positive_real, "lr", true},
    {"prior_batch", Kind::uint, "batch", true},
    {"repeats", Kind::uint, "1"},
};

bool is_level(const std::string& section) { return section.rfind("level.", 0) == 0; }

std::size_t level_index(const std::string& section) {
  const std::string digits = section.substr(6);
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
  if (digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size() || v == 0) {
    throw ConfigError("bad section name [" + section + "]: levels are numbered from 1");
  }
  return v;
}

const std::vector<KeyDef>& schema(const std::string& section) {
  if (section == "global") return kGlobal;
  if (section == "prior") return kPrior;
  if (section == "sampler") return kSampler;
  if (section == "sweep") return kSweep;
  if (is_level(section)) {
    (void)level_index(section);
    return kLevel;
  }
  throw ConfigError("unknown section [" + section + "]");
}

const KeyDef& key_def(const std::string& section, const std::string& key) {
  for (const auto& d : schema(section))
    if (key == d.key) return d;
  throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

/// Canonical text of a value, or ConfigError.
std::string normalize(const std::string& section, const std::string& key, Kind kind, const std::string& raw) {
  auto fail = [&](const std::string& what) {
    return ConfigError("[" + section + "] " + key + " = '" + raw + "': " + what);
  };
  switch (kind) {
    case Kind::uint: {
      std::uint64_t v = 0;
      auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (raw.empty() || ec != std::errc{} || ptr != raw.data() + raw.size()) throw fail("expected an unsigned integer");
      return std::to_string(v);
    }
    case Kind::real:
    case Kind::positive_real: {
      double v = 0;
      auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
      if (raw.empty() || ec != std::errc{} || ptr != raw.data() + raw.size() || !std::isfinite(v)) {
        throw fail("expected a finite number");
      }
      if (kind == Kind::positive_real && v <= 0) throw fail("must be positive");
      return format_double(v);
    }
    case Kind::aux:
      if (raw != "feed_forward" && raw != "msp") throw fail("expected feed_forward or msp");
      return raw;
    case Kind::mode:
      if (raw != "incremental" && raw != "naive") throw fail("expected incremental or naive");
      return raw;
  }
  return raw;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t s = seed ^ (tag * 0x9E3779B97F4A7C15ULL);
  return splitmix64(s);
}

}  // namespace

RunConfig::RunConfig() = default;

RunConfig RunConfig::parse(const std::string& text) {
  RunConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  std::size_t lineno = 0, max_level = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    line = trim(cut == std::string::npos ? line : line.substr(0, cut));
    if (line.empty()) continue;
    try {
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError("unterminated section header");
        section = trim(line.substr(1, line.size() - 2));
        (void)schema(section);
        cfg.values_[section];
        if (is_level(section)) max_level = std::max(max_level, level_index(section));
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError("expected key = value");
      if (section.empty()) throw ConfigError("key outside of any section");
      cfg.set(section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  for (std::size_t l = 1; l <= max_level; ++l) {
    if (!cfg.values_.contains("level." + std::to_string(l))) {
      throw ConfigError("missing section [level." + std::to_string(l) + "]: levels must be numbered contiguously");
    }
  }
  cfg.levels_ = max_level;
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

void RunConfig::set(const std::string& section, const std::string& key, const std::string& value) {
  const auto& def = key_def(section, key);
  values_[section][key] = normalize(section, key, def.kind, value);
  if (is_level(section)) levels_ = std::max(levels_, level_index(section));
}

std::string RunConfig::resolved(const std::string& section, const std::string& key) const {
  if (auto s = values_.find(section); s != values_.end()) {
    if (auto k = s->second.find(key); k != s->second.end()) return k->second;
  }
  const auto& def = key_def(section, key);
  if (def.inherits) return resolved("global", def.fallback);
  return normalize(section, key, def.kind, def.fallback);
}

std::string RunConfig::get(const std::string& section, const std::string& key) const { return resolved(section, key); }

std::size_t RunConfig::get_size(const std::string& section, const std::string& key) const {
  return static_cast<std::size_t>(std::stoull(resolved(section, key)));
}

double RunConfig::get_double(const std::string& section, const std::string& key) const {
  const auto s = resolved(section, key);
  double v = 0;
  std::from_chars(s.data(), s.data() + s.size(), v);
  return v;
}

void RunConfig::set_level_count(std::size_t n) {
  for (std::size_t l = n + 1; l <= levels_; ++l) values_.erase("level." + std::to_string(l));
  for (std::size_t l = levels_ + 1; l <= n; ++l) values_["level." + std::to_string(l)];
  levels_ = n;
}

std::uint64_t RunConfig::seed() const { return std::stoull(resolved("global", "seed")); }

unsigned RunConfig::pixel_bits() const {
  const auto b = get_size("global", "pixel_bits");
  if (b == 0 || b > 16) throw ConfigError("[global] pixel_bits must be in [1, 16]");
  return static_cast<unsigned>(b);
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  auto emit = [&](const std::string& section) {
    os << "[" << section << "]\n";
    for (const auto& d : schema(section)) os << d.key << " = " << resolved(section, d.key) << "\n";
  };
  emit("global");
  for (std::size_t l = 1; l <= levels_; ++l) {
    os << "\n";
    emit("level." + std::to_string(l));
  }
  for (const char* s : {"prior", "sampler", "sweep"}) {
    os << "\n";
    emit(s);
  }
  return os.str();
}

TrainOptions RunConfig::train_options(const std::string& section, const std::string& steps_key,
                                      const std::string& prefix, std::uint64_t seed) const {
  TrainOptions o;
  o.steps = get_size(section, steps_key);
  o.lr = get_double(section, prefix + "lr");
  o.batch = get_size(section, prefix + "batch");
  o.log_every = get_size("global", "log_every");
  o.seed = seed;
  return o;
}

std::vector<LevelSpec> RunConfig::level_specs(const MapGeometry& pixels) const {
  std::vector<LevelSpec> specs;
  for (std::size_t l = 1; l <= levels_; ++l) {
    const std::string sec = "level." + std::to_string(l);
    LevelSpec s;
    s.encoder.stride = get_size(sec, "stride");
    s.encoder.code_channels = get_size(sec, "code_channels");
    s.encoder.code_dim = get_size(sec, "code_dim");
    s.encoder.code_bits = get_size(sec, "code_bits");
    s.encoder.layers = get_size(sec, "encoder_layers");
    s.encoder.hidden = get_size(sec, "encoder_hidden");
    if (s.encoder.code_bits == 0 || s.encoder.code_bits > 16) throw ConfigError("[" + sec + "] code_bits must be in [1, 16]");
    if (s.encoder.stride == 0) throw ConfigError("[" + sec + "] stride must be positive");
    s.aux = resolved(sec, "aux") == "msp" ? AuxStrategy::msp : AuxStrategy::feed_forward;
    s.ff.layers = get_size(sec, "aux_layers");
    s.ff.hidden = get_size(sec, "aux_hidden");
    s.msp.mask_side = get_size(sec, "mask_side");
    s.msp.teacher.layers = get_size(sec, "teacher_layers");
    s.msp.teacher.hidden = get_size(sec, "teacher_hidden");
    s.msp.head = s.ff;
    s.decoder.layers = get_size(sec, "decoder_layers");
    s.decoder.hidden = get_size(sec, "decoder_hidden");
    s.decoder.kernel = get_size(sec, "decoder_kernel");
    s.decoder.first_kernel = s.decoder.kernel;
    s.modulator.layers = get_size(sec, "modulator_layers");
    s.modulator.hidden = get_size(sec, "modulator_hidden");
    s.encoder_train = train_options(sec, "encoder_steps", "", derive_seed(seed(), 10 * l + 1));
    s.encoder_train.vq.beta = get_double(sec, "beta");
    s.encoder_train.gamma = get_double(sec, "gamma");
    s.encoder_train.reseed_every = get_size(sec, "reseed_every");
    s.decoder_train = train_options(sec, "decoder_steps", "", derive_seed(seed(), 10 * l + 2));
    specs.push_back(s);
  }
  return resolve_levels(pixels, std::move(specs));
}

PriorSpec RunConfig::prior_spec(const MapGeometry& pixels) const {
  PriorSpec p;
  p.net.layers = get_size("prior", "layers");
  p.net.hidden = get_size("prior", "hidden");
  p.net.kernel = get_size("prior", "kernel");
  p.net.first_kernel = p.net.kernel;
  p.net.classes = get_size("prior", "classes");
  p.train = train_options("prior", "steps", "", derive_seed(seed(), 3));
  return resolve_prior(p, pixels, level_specs(pixels));
}

SamplerConfig RunConfig::sampler() const {
  SamplerConfig s;
  s.temperature = get_double("sampler", "temperature");
  s.mode = resolved("sampler", "mode") == "naive" ? SamplerMode::naive : SamplerMode::incremental;
  s.seed = seed();
  return s;
}

PredictabilitySpec RunConfig::sweep_spec(const MapGeometry& pixels) const {
  RunConfig one = *this;
  if (one.levels_ == 0) one.set_level_count(1);
  PredictabilitySpec spec;
  spec.level = one.level_specs(pixels).front();
  spec.prior.net.layers = get_size("sweep", "prior_layers");
  spec.prior.net.hidden = get_size("sweep", "prior_hidden");
  spec.prior.train = train_options("sweep", "prior_steps", "prior_", derive_seed(seed(), 4));
  spec.repeats = get_size("sweep", "repeats");
  if (spec.repeats == 0) throw ConfigError("[sweep] repeats must be at least 1");
  return spec;
}

}  // namespace pixelstack::harness
