#include "tokvc/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "tokvc/errors.hpp"

namespace tokvc {

namespace {

struct Field {
  std::string key;
  std::function<std::string(const Config&)> get;
  std::function<void(Config&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw InvalidArgument("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  long out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw InvalidArgument("config key '" + key + "': expected an integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("config key '" + key + "': expected true/false, got '" + v + "'");
}

std::string fmt_list(const std::vector<long>& xs) {
  std::string s;
  for (size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

std::vector<long> to_list(const std::string& key, const std::string& v) {
  std::vector<long> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_long(key, trim(item)));
  if (out.empty()) throw InvalidArgument("config key '" + key + "': empty list");
  return out;
}

template <typename Get>
Field dbl(std::string key, Get get) {
  return {key, [get](const Config& c) { return fmt_double(get(const_cast<Config&>(c))); },
          [get, key](Config& c, const std::string& v) { get(c) = to_double(key, v); }};
}

template <typename Get>
Field lng(std::string key, Get get) {
  return {key, [get](const Config& c) { return std::to_string(get(const_cast<Config&>(c))); },
          [get, key](Config& c, const std::string& v) {
            get(c) = static_cast<std::remove_reference_t<decltype(get(c))>>(to_long(key, v));
          }};
}

template <typename Get>
Field u64(std::string key, Get get) {
  return {key, [get](const Config& c) { return std::to_string(get(const_cast<Config&>(c))); },
          [get, key](Config& c, const std::string& v) {
            try {
              size_t pos = 0;
              get(c) = std::stoull(v, &pos);
              if (pos != v.size()) throw std::invalid_argument(v);
            } catch (const std::exception&) {
              throw InvalidArgument("config key '" + key + "': expected an unsigned integer");
            }
          }};
}

template <typename Get>
Field boolean(std::string key, Get get) {
  return {key, [get](const Config& c) { return get(const_cast<Config&>(c)) ? std::string("true") : "false"; },
          [get, key](Config& c, const std::string& v) { get(c) = to_bool(key, v); }};
}

template <typename Get>
Field list(std::string key, Get get) {
  return {key, [get](const Config& c) { return fmt_list(get(const_cast<Config&>(c))); },
          [get, key](Config& c, const std::string& v) { get(c) = to_list(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    // mel analysis (shared by tokenizer, losses and evaluation)
    f.push_back(lng("mel.sample_rate", [](Config& c) -> auto& { return c.model.mel.sample_rate; }));
    f.push_back(lng("mel.n_fft", [](Config& c) -> auto& { return c.model.mel.n_fft; }));
    f.push_back(lng("mel.hop", [](Config& c) -> auto& { return c.model.mel.hop; }));
    f.push_back(lng("mel.win", [](Config& c) -> auto& { return c.model.mel.win; }));
    f.push_back(lng("mel.n_mels", [](Config& c) -> auto& { return c.model.mel.n_mels; }));
    f.push_back(dbl("mel.fmin", [](Config& c) -> auto& { return c.model.mel.fmin; }));
    f.push_back(dbl("mel.fmax", [](Config& c) -> auto& { return c.model.mel.fmax; }));
    f.push_back(dbl("mel.log_floor", [](Config& c) -> auto& { return c.model.mel.log_floor; }));
    // features
    f.push_back(lng("features.groups", [](Config& c) -> auto& { return c.model.tokenizer.groups; }));
    f.push_back(lng("features.codebook_size", [](Config& c) -> auto& { return c.model.tokenizer.codebook_size; }));
    f.push_back(lng("features.content_dim", [](Config& c) -> auto& { return c.model.tokenizer.content_dim; }));
    f.push_back(lng("features.prompt_dim", [](Config& c) -> auto& { return c.model.tokenizer.prompt_dim; }));
    f.push_back(boolean("features.normalize_bands", [](Config& c) -> auto& { return c.model.tokenizer.normalize_bands; }));
    f.push_back(u64("features.seed", [](Config& c) -> auto& { return c.model.tokenizer.seed; }));
    // frontend
    f.push_back(lng("frontend.n_blocks", [](Config& c) -> auto& { return c.model.frontend.n_blocks; }));
    f.push_back(lng("frontend.attn_dim", [](Config& c) -> auto& { return c.model.frontend.attn_dim; }));
    f.push_back(lng("frontend.n_heads", [](Config& c) -> auto& { return c.model.frontend.n_heads; }));
    f.push_back(lng("frontend.ff_mult", [](Config& c) -> auto& { return c.model.frontend.ff_mult; }));
    f.push_back(lng("frontend.conv_kernel", [](Config& c) -> auto& { return c.model.frontend.conv_kernel; }));
    f.push_back(list("frontend.prenet_dims", [](Config& c) -> auto& { return c.model.frontend.prenet_dims; }));
    f.push_back(lng("frontend.prenet_kernel", [](Config& c) -> auto& { return c.model.frontend.prenet_kernel; }));
    f.push_back(dbl("frontend.dropout", [](Config& c) -> auto& { return c.model.frontend.dropout; }));
    // generator
    f.push_back(lng("generator.base_channels", [](Config& c) -> auto& { return c.model.generator.base_channels; }));
    f.push_back(list("generator.upsample_factors", [](Config& c) -> auto& { return c.model.generator.upsample_factors; }));
    f.push_back(list("generator.upsample_kernels", [](Config& c) -> auto& { return c.model.generator.upsample_kernels; }));
    f.push_back(list("generator.amp_kernel_sizes", [](Config& c) -> auto& { return c.model.generator.amp_kernel_sizes; }));
    f.push_back(list("generator.amp_dilations", [](Config& c) -> auto& { return c.model.generator.amp_dilations; }));
    f.push_back(lng("generator.convs_per_dilation", [](Config& c) -> auto& { return c.model.generator.convs_per_dilation; }));
    f.push_back({"generator.activation", [](const Config& c) { return to_string(c.model.generator.activation); },
                 [](Config& c, const std::string& v) { c.model.generator.activation = parse_activation(v); }});
    f.push_back({"generator.architecture", [](const Config& c) { return to_string(c.model.generator.architecture); },
                 [](Config& c, const std::string& v) { c.model.generator.architecture = parse_architecture(v); }});
    f.push_back(dbl("generator.lp_transition", [](Config& c) -> auto& { return c.model.generator.lp_transition; }));
    f.push_back(dbl("generator.lp_atten_db", [](Config& c) -> auto& { return c.model.generator.lp_atten_db; }));
    // discriminators
    f.push_back(list("disc.periods", [](Config& c) -> auto& { return c.train.disc.periods; }));
    f.push_back(list("disc.mpd_channels", [](Config& c) -> auto& { return c.train.disc.mpd_channels; }));
    f.push_back(list("disc.msd_channels", [](Config& c) -> auto& { return c.train.disc.msd_channels; }));
    f.push_back(lng("disc.msd_scales", [](Config& c) -> auto& { return c.train.disc.msd_scales; }));
    // losses
    f.push_back(dbl("loss.adv", [](Config& c) -> auto& { return c.train.loss.adv; }));
    f.push_back(dbl("loss.feat_match", [](Config& c) -> auto& { return c.train.loss.feat_match; }));
    f.push_back(dbl("loss.mel", [](Config& c) -> auto& { return c.train.loss.mel; }));
    f.push_back(dbl("loss.aux_mel", [](Config& c) -> auto& { return c.train.loss.aux_mel; }));
    f.push_back(lng("loss.aux_warmup_steps", [](Config& c) -> auto& { return c.train.loss.aux_warmup_steps; }));
    // data
    f.push_back(dbl("data.min_duration_s", [](Config& c) -> auto& { return c.train.data.min_duration_s; }));
    f.push_back(dbl("data.max_duration_s", [](Config& c) -> auto& { return c.train.data.max_duration_s; }));
    f.push_back(lng("data.prompt_max_offset_frames", [](Config& c) -> auto& { return c.train.data.prompt_max_offset_frames; }));
    f.push_back(lng("data.prompt_min_frames", [](Config& c) -> auto& { return c.train.data.prompt_min_frames; }));
    f.push_back({"data.target", [](const Config& c) {
                   return std::string(c.train.data.target == TargetMode::kComplement ? "complement" : "full");
                 },
                 [](Config& c, const std::string& v) {
                   if (v == "complement") {
                     c.train.data.target = TargetMode::kComplement;
                   } else if (v == "full") {
                     c.train.data.target = TargetMode::kFull;
                   } else {
                     throw InvalidArgument("data.target must be complement or full");
                   }
                 }});
    f.push_back(lng("data.segment_frames", [](Config& c) -> auto& { return c.train.data.segment_frames; }));
    f.push_back(dbl("data.max_batch_s", [](Config& c) -> auto& { return c.train.data.max_batch_s; }));
    // training
    f.push_back(lng("train.steps", [](Config& c) -> auto& { return c.train.steps; }));
    f.push_back(dbl("train.lr_g", [](Config& c) -> auto& { return c.train.lr_g; }));
    f.push_back(dbl("train.lr_d", [](Config& c) -> auto& { return c.train.lr_d; }));
    f.push_back(dbl("train.beta1", [](Config& c) -> auto& { return c.train.beta1; }));
    f.push_back(dbl("train.beta2", [](Config& c) -> auto& { return c.train.beta2; }));
    f.push_back(dbl("train.weight_decay", [](Config& c) -> auto& { return c.train.weight_decay; }));
    f.push_back(dbl("train.lr_decay", [](Config& c) -> auto& { return c.train.lr_decay; }));
    f.push_back(dbl("train.grad_clip", [](Config& c) -> auto& { return c.train.grad_clip; }));
    f.push_back(u64("train.seed", [](Config& c) -> auto& { return c.train.seed; }));
    f.push_back(lng("train.checkpoint_every", [](Config& c) -> auto& { return c.train.checkpoint_every; }));
    f.push_back(lng("train.log_every", [](Config& c) -> auto& { return c.train.log_every; }));
    f.push_back(boolean("train.deterministic", [](Config& c) -> auto& { return c.train.deterministic; }));
    // inference
    f.push_back(dbl("vc.reference_floor_s", [](Config& c) -> auto& { return c.reference_floor_s; }));
    return f;
  }();
  return table;
}

}  // namespace

void ModelConfig::sync() {
  tokenizer.mel = mel;
  frontend.content_dim = tokenizer.content_dim;
  frontend.prompt_dim = tokenizer.prompt_dim;
  frontend.n_mels = mel.n_mels;
  generator.in_dim = frontend.attn_dim;
  generator.cond_dim = tokenizer.prompt_dim;
}

void ModelConfig::validate() const {
  mel.validate();
  frontend.validate();
  generator.validate(mel.sample_rate);
  if (generator.hop() != mel.hop) throw InvalidArgument("generator hop must equal mel hop");
  if (tokenizer.groups < 1 || tokenizer.content_dim % tokenizer.groups != 0) {
    throw InvalidArgument("features.content_dim must divide evenly across groups");
  }
  if (frontend.content_dim != tokenizer.content_dim || frontend.prompt_dim != tokenizer.prompt_dim ||
      generator.in_dim != frontend.attn_dim || generator.cond_dim != tokenizer.prompt_dim) {
    throw InvalidArgument("model sections disagree on shared dimensions (call sync())");
  }
}

void DataConfig::validate() const {
  if (!(min_duration_s >= 0 && min_duration_s <= max_duration_s)) throw InvalidArgument("bad duration filter");
  if (prompt_max_offset_frames < 0 || prompt_min_frames < 2 * prompt_max_offset_frames || prompt_min_frames < 2) {
    throw InvalidArgument("prompt sampler needs min_frames >= 2 * max_offset_frames");
  }
  if (segment_frames < 1 || !(max_batch_s > 0)) throw InvalidArgument("bad batching settings");
}

void TrainConfig::validate() const {
  if (steps < 1) throw InvalidArgument("train.steps must be >= 1");
  if (!(lr_g > 0 && lr_d > 0)) throw InvalidArgument("learning rates must be positive");
  if (checkpoint_every < 1 || log_every < 1) throw InvalidArgument("checkpoint/log intervals must be >= 1");
  loss.validate();
  disc.validate();
  data.validate();
}

void Config::validate() const {
  model.validate();
  train.validate();
  if (!(reference_floor_s > 0)) throw InvalidArgument("vc.reference_floor_s must be positive");
}

Config Config::paper_scale() {
  Config c;
  c.model.sync();
  return c;
}

Config Config::desk_scale() {
  Config c;
  c.model.tokenizer.codebook_size = 32;
  c.model.tokenizer.prompt_dim = 128;
  c.model.frontend.attn_dim = 96;
  c.model.frontend.conv_kernel = 15;
  c.model.frontend.prenet_dims = {64, 128, 128, 128};
  c.model.generator.base_channels = 64;
  c.model.generator.convs_per_dilation = 1;
  c.model.generator.lp_transition = 0.3;
  c.model.generator.lp_atten_db = 40.0;
  c.train.disc.mpd_channels = {16, 32, 64, 128, 128};
  c.train.disc.msd_channels = {16, 16, 32, 64, 128, 128, 128};
  c.train.steps = 2000;
  c.train.checkpoint_every = 500;
  c.train.loss.aux_warmup_steps = 2000;
  c.train.data.min_duration_s = 2.0;
  c.train.data.prompt_max_offset_frames = 20;
  c.train.data.prompt_min_frames = 200;
  c.train.data.segment_frames = 24;
  c.train.data.max_batch_s = 4.5;
  c.model.sync();
  return c;
}

std::string dump_config(const Config& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.key + " = " + f.get(cfg) + "\n";
  return out;
}

void set_config_value(Config& cfg, const std::string& key, const std::string& value) {
  const auto& table = fields();
  auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) { return f.key == key; });
  if (it == table.end()) throw InvalidArgument("unknown config key '" + key + "'");
  it->set(cfg, trim(value));
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& f : fields()) keys.push_back(f.key);
  return keys;
}

Config parse_config(const std::string& text, Config base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("config line " + std::to_string(lineno) + ": expected key = value");
    }
    set_config_value(base, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  base.model.sync();
  return base;
}

Config load_config_file(const std::string& path, Config base) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

}  // namespace tokvc
