#include "viewcraft/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>

#define TOML_HEADER_ONLY 1
#include <toml.hpp>

#include "viewcraft/errors.hpp"

namespace viewcraft {

std::string to_string(Objective o) { return o == Objective::kInstdisc ? "instdisc" : "simclr"; }

Objective parse_objective(std::string_view s) {
  if (s == "simclr") return Objective::kSimclr;
  if (s == "instdisc") return Objective::kInstdisc;
  throw ConfigInvalid("unknown objective '" + std::string(s) + "' (expected simclr or instdisc)");
}

int64_t DatasetSpec::default_channels() const {
  if (kind == "audio_manifest") return 1;
  if (kind == "pamap2") return 52;
  return 3;
}

void LinearEvalConfig::validate() const {
  if (optimizer.lr <= 0 || optimizer.momentum < 0 || optimizer.weight_decay < 0) {
    throw ConfigInvalid("linear_eval optimizer settings must be positive");
  }
  if (batch_size < 1 || epochs < 1) {
    throw ConfigInvalid("linear_eval.batch_size and linear_eval.epochs must be >= 1");
  }
  for (int64_t e : lr_drops) {
    if (e < 1 || e > epochs) {
      throw ConfigInvalid("linear_eval.lr_drops entries must lie in [1, epochs]");
    }
  }
  if (train_views != "pretrain" && train_views != "none") {
    throw ConfigInvalid("linear_eval.train_views must be 'pretrain' or 'none'");
  }
}

bool ExperimentConfig::uses_viewmaker() const {
  return view_source == ViewSource::kViewmaker || view_source == ViewSource::kCombined ||
         view_source == ViewSource::kDctViewmaker;
}

void ExperimentConfig::validate() const {
  if (view_source == ViewSource::kNone) {
    throw ConfigInvalid("view_source must name a view mechanism");
  }
  if (temperature <= 0 || !std::isfinite(temperature)) {
    throw ConfigInvalid("temperature must be > 0");
  }
  encoder.validate();
  viewmaker.validate();
  if (uses_viewmaker() && viewmaker.in_channels != encoder.input_channels) {
    throw ConfigInvalid("viewmaker and encoder channel counts differ");
  }
  if (view_source == ViewSource::kDctViewmaker && viewmaker.budget.domain != PerturbDomain::kDct) {
    throw ConfigInvalid("dct_viewmaker requires viewmaker.domain = \"dct\"");
  }
  if (view_source == ViewSource::kCombined && dataset.is_spectral() && expert.kind == "image") {
    throw ConfigInvalid("image expert views cannot be applied to spectrogram datasets");
  }
  for (const auto* o : {&optimizer, &viewmaker_optimizer}) {
    if (o->lr <= 0 || o->momentum < 0 || o->weight_decay < 0) {
      throw ConfigInvalid("optimizer lr must be > 0 and momentum / weight_decay >= 0");
    }
  }
  if (training.batch_size < 1 || training.epochs < 0 || training.checkpoint_every < 0 ||
      training.grad_clip < 0) {
    throw ConfigInvalid("training settings out of range");
  }
  if (objective == Objective::kSimclr && training.batch_size < 1) {
    throw ConfigInvalid("simclr needs batch_size >= 1");
  }
  if (memory_bank.update_rate < 0 || memory_bank.update_rate > 1 ||
      memory_bank.num_negatives < 1) {
    throw ConfigInvalid("memory_bank.update_rate must lie in [0, 1], num_negatives >= 1");
  }
  static const std::set<std::string> kKinds{"synthetic_images", "cifar10", "image_manifest",
                                            "audio_manifest", "pamap2"};
  if (!kKinds.count(dataset.kind)) {
    throw ConfigInvalid("unknown dataset.kind '" + dataset.kind + "'");
  }
  if (dataset.spectrogram != "small" && dataset.spectrogram != "large") {
    throw ConfigInvalid("dataset.spectrogram must be 'small' or 'large'");
  }
  if (dataset.num_train < 1 || dataset.num_val < 0 || dataset.num_classes < 2 ||
      dataset.image_size < 2 || dataset.noise_std < 0) {
    throw ConfigInvalid("synthetic dataset settings out of range");
  }
  static const std::set<std::string> kExpertKinds{"auto", "image", "spectral", "waveform"};
  if (!kExpertKinds.count(expert.kind)) {
    throw ConfigInvalid("expert.kind must be auto, image, spectral or waveform");
  }
  if (expert.kind == "waveform" && dataset.kind != "audio_manifest") {
    throw ConfigInvalid("waveform expert views need an audio_manifest dataset");
  }
  expert.image.validate();
  expert.spectral.validate();
  expert.waveform.validate();
  linear_eval.validate();
  if (semisup.patience < 1 || semisup.max_epochs < 1 || semisup.batch_size < 1) {
    throw ConfigInvalid("semisup settings must be >= 1");
  }
}

namespace {

/// One TOML table plus the dotted path used in diagnostics. Tracks which
/// keys were consumed so leftovers can be reported.
class Section {
 public:
  Section(const toml::table* table, std::string path, const std::string& source)
      : table_(table), path_(std::move(path)), source_(source) {}

  template <typename T>
  bool read(const std::string& key, T& out) {
    const toml::node* n = lookup(key);
    if (!n) return false;
    convert(*n, key, out);
    return true;
  }

  /// Reads and then checks with `ok`; `what` describes the constraint.
  template <typename T, typename Pred>
  bool read(const std::string& key, T& out, Pred ok, const std::string& what) {
    const toml::node* n = lookup(key);
    if (!n) return false;
    T value{};
    convert(*n, key, value);
    if (!ok(value)) fail(*n, key, what);
    out = value;
    return true;
  }

  /// Reads a string and maps it through `parse`, reporting its error.
  template <typename T, typename Parse>
  bool read_enum(const std::string& key, T& out, Parse parse) {
    const toml::node* n = lookup(key);
    if (!n) return false;
    std::string s;
    convert(*n, key, s);
    try {
      out = parse(s);
    } catch (const ConfigInvalid& e) {
      fail(*n, key, e.what());
    }
    return true;
  }

  Section child(const std::string& key) {
    const toml::node* n = lookup(key);
    const std::string path = path_.empty() ? key : path_ + "." + key;
    if (!n) return Section(nullptr, path, source_);
    if (!n->is_table()) fail(*n, key, "expected a table");
    return Section(n->as_table(), path, source_);
  }

  bool present() const { return table_ != nullptr; }

  void finish() const {
    if (!table_) return;
    for (const auto& [k, v] : *table_) {
      const std::string key(k.str());
      if (!seen_.count(key)) fail(v, key, "unknown field");
    }
  }

 private:
  const toml::node* lookup(const std::string& key) {
    if (!table_) return nullptr;
    seen_.insert(key);
    return table_->get(key);
  }

  std::string field(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  [[noreturn]] void fail(const toml::node& n, const std::string& key, const std::string& msg) const {
    std::ostringstream os;
    os << source_;
    if (n.source().begin.line > 0) os << ":" << n.source().begin.line;
    os << ": field '" << field(key) << "': " << msg;
    throw ConfigParseError(os.str());
  }

  void convert(const toml::node& n, const std::string& key, double& out) const {
    auto v = n.value<double>();
    if (!v || !(n.is_floating_point() || n.is_integer())) fail(n, key, "expected a number");
    out = *v;
  }
  void convert(const toml::node& n, const std::string& key, int64_t& out) const {
    if (!n.is_integer()) fail(n, key, "expected an integer");
    out = n.as_integer()->get();
  }
  void convert(const toml::node& n, const std::string& key, uint64_t& out) const {
    if (!n.is_integer() || n.as_integer()->get() < 0) fail(n, key, "expected an integer >= 0");
    out = static_cast<uint64_t>(n.as_integer()->get());
  }
  void convert(const toml::node& n, const std::string& key, bool& out) const {
    if (!n.is_boolean()) fail(n, key, "expected true or false");
    out = n.as_boolean()->get();
  }
  void convert(const toml::node& n, const std::string& key, std::string& out) const {
    if (!n.is_string()) fail(n, key, "expected a string");
    out = n.as_string()->get();
  }
  void convert(const toml::node& n, const std::string& key, std::pair<double, double>& out) const {
    const auto* a = n.as_array();
    if (!a || a->size() != 2) fail(n, key, "expected a two-element array");
    double lo = 0, hi = 0;
    convert(*a->get(0), key, lo);
    convert(*a->get(1), key, hi);
    out = {lo, hi};
  }
  void convert(const toml::node& n, const std::string& key, std::vector<int64_t>& out) const {
    const auto* a = n.as_array();
    if (!a) fail(n, key, "expected an array of integers");
    out.clear();
    for (const auto& e : *a) {
      int64_t v = 0;
      convert(e, key, v);
      out.push_back(v);
    }
  }

  const toml::table* table_;
  std::string path_;
  const std::string& source_;
  std::set<std::string> seen_;
};

auto positive = [](auto v) { return v > 0; };
auto non_negative = [](auto v) { return v >= 0; };
auto probability = [](double v) { return v >= 0.0 && v <= 1.0; };
auto unit_interval_pair = [](const std::pair<double, double>& v) {
  return v.first > 0.0 && v.first <= v.second && v.second <= 1.0;
};

void read_optimizer(Section s, OptimizerConfig& o) {
  s.read("lr", o.lr, positive, "must be > 0");
  s.read("momentum", o.momentum, non_negative, "must be >= 0");
  s.read("weight_decay", o.weight_decay, non_negative, "must be >= 0");
  s.finish();
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, const std::string& source) {
  toml::table doc;
  try {
    doc = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigParseError(os.str());
  }

  ExperimentConfig c;
  Section root(&doc, "", source);
  root.read("name", c.name);
  root.read("seed", c.seed);
  root.read_enum("view_source", c.view_source, parse_view_source);
  root.read_enum("objective", c.objective, parse_objective);
  root.read("temperature", c.temperature, positive, "must be > 0");

  {
    Section d = root.child("dataset");
    auto& ds = c.dataset;
    d.read("kind", ds.kind);
    d.read("path", ds.path);
    d.read("train_limit", ds.train_limit);
    d.read("val_limit", ds.val_limit);
    d.read("num_train", ds.num_train, positive, "must be >= 1");
    d.read("num_val", ds.num_val, non_negative, "must be >= 0");
    d.read("num_classes", ds.num_classes, [](int64_t v) { return v >= 2; }, "must be >= 2");
    d.read("image_size", ds.image_size, positive, "must be >= 1");
    d.read("noise_std", ds.noise_std, non_negative, "must be >= 0");
    d.read("spectrogram", ds.spectrogram);
    d.read("train_subjects", ds.train_subjects);
    d.read("val_subjects", ds.val_subjects);
    d.read("train_windows", ds.train_windows, positive, "must be >= 1");
    d.read("val_windows", ds.val_windows, non_negative, "must be >= 0");
    d.read("norm_samples", ds.norm_samples, positive, "must be >= 1");
    d.read("cache_dir", ds.cache_dir);
    d.finish();
  }

  const int64_t channels = c.dataset.default_channels();
  c.encoder.input_channels = channels;
  c.viewmaker.in_channels = channels;
  c.viewmaker.budget.clamp = !c.dataset.is_spectral();
  if (c.view_source == ViewSource::kCombined) c.viewmaker.budget.epsilon = 0.01;
  if (c.view_source == ViewSource::kDctViewmaker) {
    c.viewmaker.budget.domain = PerturbDomain::kDct;
    c.viewmaker.budget.epsilon = 1.0;
  }

  {
    Section e = root.child("encoder");
    e.read_enum("variant", c.encoder.variant, parse_encoder_variant);
    e.read("embedding_dim", c.encoder.embedding_dim, positive, "must be >= 1");
    e.read("mlp_hidden", c.encoder.mlp_hidden, positive, "must be >= 1");
    e.read("input_channels", c.encoder.input_channels, positive, "must be >= 1");
    e.finish();
  }
  c.viewmaker.in_channels = c.encoder.input_channels;

  {
    Section v = root.child("viewmaker");
    auto& b = c.viewmaker.budget;
    v.read("num_residual_blocks", c.viewmaker.num_residual_blocks, positive, "must be >= 1");
    v.read("noise_dim", c.viewmaker.noise_dim, positive, "must be >= 1");
    v.read("epsilon", b.epsilon, [](double x) { return std::isfinite(x) && x >= 0.0; },
           "must be a finite value >= 0");
    v.read_enum("p", b.p, parse_norm_order);
    v.read("clamp", b.clamp);
    v.read_enum("domain", b.domain, parse_perturb_domain);
    v.finish();
  }

  read_optimizer(root.child("optimizer"), c.optimizer);
  c.viewmaker_optimizer = c.optimizer;
  read_optimizer(root.child("viewmaker_optimizer"), c.viewmaker_optimizer);

  {
    Section t = root.child("training");
    t.read("batch_size", c.training.batch_size, positive, "must be >= 1");
    t.read("epochs", c.training.epochs, non_negative, "must be >= 0");
    t.read("checkpoint_every", c.training.checkpoint_every, non_negative, "must be >= 0");
    t.read("grad_clip", c.training.grad_clip, non_negative, "must be >= 0");
    t.finish();
  }
  {
    Section m = root.child("memory_bank");
    m.read("update_rate", c.memory_bank.update_rate, probability, "must lie in [0, 1]");
    m.read("num_negatives", c.memory_bank.num_negatives, positive, "must be >= 1");
    m.finish();
  }
  {
    Section x = root.child("expert");
    x.read("kind", c.expert.kind);
    {
      Section i = x.child("image");
      auto& p = c.expert.image;
      if (i.present()) {
        std::string preset = "simclr";
        i.read("preset", preset, [](const std::string& v) {
          return v == "simclr" || v == "crop_flip" || v == "identity";
        }, "must be simclr, crop_flip or identity");
        if (preset == "crop_flip") p = ImageExpertPolicy::crop_flip();
        else if (preset == "identity") p = ImageExpertPolicy::identity();
      }
      i.read("crop_scale", p.crop_scale, unit_interval_pair, "must satisfy 0 < lo <= hi <= 1");
      i.read("crop_ratio", p.crop_ratio);
      i.read("flip_prob", p.flip_prob, probability, "must lie in [0, 1]");
      i.read("jitter_prob", p.jitter_prob, probability, "must lie in [0, 1]");
      i.read("brightness", p.brightness, non_negative, "must be >= 0");
      i.read("contrast", p.contrast, non_negative, "must be >= 0");
      i.read("saturation", p.saturation, non_negative, "must be >= 0");
      i.read("hue", p.hue, [](double h) { return h >= 0 && h <= 0.5; }, "must lie in [0, 0.5]");
      i.read("grayscale_prob", p.grayscale_prob, probability, "must lie in [0, 1]");
      i.read("blur_prob", p.blur_prob, probability, "must lie in [0, 1]");
      i.read("blur_kernel", p.blur_kernel, [](int64_t k) { return k > 0 && k % 2 == 1; },
             "must be a positive odd integer");
      i.read("blur_sigma", p.blur_sigma);
      i.finish();
    }
    {
      Section s = x.child("spectral");
      auto& p = c.expert.spectral;
      s.read("mask_factor", p.mask_factor, non_negative, "must be >= 0");
      s.read("apply_noise", p.apply_noise);
      s.read("noise_std", p.noise_std, non_negative, "must be >= 0");
      s.read("shared_mask_across_channels", p.shared_mask_across_channels);
      s.finish();
    }
    {
      Section w = x.child("waveform");
      auto& p = c.expert.waveform;
      w.read("crop_scale", p.crop_scale, unit_interval_pair, "must satisfy 0 < lo <= hi <= 1");
      w.read("noise_scale", p.noise_scale, non_negative, "must be >= 0");
      w.finish();
    }
    x.finish();
  }
  {
    Section l = root.child("linear_eval");
    auto& le = c.linear_eval;
    read_optimizer(l.child("optimizer"), le.optimizer);
    l.read("batch_size", le.batch_size, positive, "must be >= 1");
    l.read("epochs", le.epochs, positive, "must be >= 1");
    l.read("lr_drops", le.lr_drops);
    l.read("lr_drop_factor", le.lr_drop_factor, positive, "must be > 0");
    l.read("train_views", le.train_views);
    l.finish();
  }
  {
    Section s = root.child("semisup");
    auto& ss = c.semisup;
    s.read("labeled_subjects", ss.labeled_subjects);
    read_optimizer(s.child("optimizer"), ss.optimizer);
    s.read("batch_size", ss.batch_size, positive, "must be >= 1");
    s.read("patience", ss.patience, positive, "must be >= 1");
    s.read("max_epochs", ss.max_epochs, positive, "must be >= 1");
    s.finish();
  }
  root.finish();

  try {
    c.validate();
  } catch (const ConfigInvalid& e) {
    throw ConfigParseError(source + ": " + e.what());
  }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IOFailure("cannot open config " + path.string());
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

namespace {

std::string num(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, end);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"' || ch == '\\') out += '\\';
    out += ch;
  }
  return out + "\"";
}

std::string pair(const std::pair<double, double>& p) {
  return "[" + num(p.first) + ", " + num(p.second) + "]";
}

std::string ints(const std::vector<int64_t>& v) {
  std::string s = "[";
  for (size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + std::to_string(v[i]);
  return s + "]";
}

std::string boolean(bool b) { return b ? "true" : "false"; }

void write_optimizer(std::ostream& os, const std::string& table, const OptimizerConfig& o) {
  os << "\n[" << table << "]\nlr = " << num(o.lr) << "\nmomentum = " << num(o.momentum)
     << "\nweight_decay = " << num(o.weight_decay) << "\n";
}

}  // namespace

std::string to_toml(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "name = " << quote(c.name) << "\n"
     << "seed = " << c.seed << "\n"
     << "view_source = " << quote(to_string(c.view_source)) << "\n"
     << "objective = " << quote(to_string(c.objective)) << "\n"
     << "temperature = " << num(c.temperature) << "\n";

  const auto& d = c.dataset;
  os << "\n[dataset]\nkind = " << quote(d.kind) << "\npath = " << quote(d.path)
     << "\ntrain_limit = " << d.train_limit << "\nval_limit = " << d.val_limit
     << "\nnum_train = " << d.num_train << "\nnum_val = " << d.num_val
     << "\nnum_classes = " << d.num_classes << "\nimage_size = " << d.image_size
     << "\nnoise_std = " << num(d.noise_std) << "\nspectrogram = " << quote(d.spectrogram)
     << "\ntrain_subjects = " << ints(d.train_subjects)
     << "\nval_subjects = " << ints(d.val_subjects) << "\ntrain_windows = " << d.train_windows
     << "\nval_windows = " << d.val_windows << "\nnorm_samples = " << d.norm_samples
     << "\ncache_dir = " << quote(d.cache_dir) << "\n";

  os << "\n[encoder]\nvariant = " << quote(to_string(c.encoder.variant))
     << "\nembedding_dim = " << c.encoder.embedding_dim << "\nmlp_hidden = " << c.encoder.mlp_hidden
     << "\ninput_channels = " << c.encoder.input_channels << "\n";

  const auto& b = c.viewmaker.budget;
  os << "\n[viewmaker]\nnum_residual_blocks = " << c.viewmaker.num_residual_blocks
     << "\nnoise_dim = " << c.viewmaker.noise_dim << "\nepsilon = " << num(b.epsilon)
     << "\np = " << quote(to_string(b.p)) << "\nclamp = " << boolean(b.clamp)
     << "\ndomain = " << quote(to_string(b.domain)) << "\n";

  write_optimizer(os, "optimizer", c.optimizer);
  write_optimizer(os, "viewmaker_optimizer", c.viewmaker_optimizer);

  os << "\n[training]\nbatch_size = " << c.training.batch_size
     << "\nepochs = " << c.training.epochs
     << "\ncheckpoint_every = " << c.training.checkpoint_every
     << "\ngrad_clip = " << num(c.training.grad_clip) << "\n";

  os << "\n[memory_bank]\nupdate_rate = " << num(c.memory_bank.update_rate)
     << "\nnum_negatives = " << c.memory_bank.num_negatives << "\n";

  const auto& i = c.expert.image;
  os << "\n[expert]\nkind = " << quote(c.expert.kind) << "\n"
     << "\n[expert.image]\ncrop_scale = " << pair(i.crop_scale)
     << "\ncrop_ratio = " << pair(i.crop_ratio) << "\nflip_prob = " << num(i.flip_prob)
     << "\njitter_prob = " << num(i.jitter_prob) << "\nbrightness = " << num(i.brightness)
     << "\ncontrast = " << num(i.contrast) << "\nsaturation = " << num(i.saturation)
     << "\nhue = " << num(i.hue) << "\ngrayscale_prob = " << num(i.grayscale_prob)
     << "\nblur_prob = " << num(i.blur_prob) << "\nblur_kernel = " << i.blur_kernel
     << "\nblur_sigma = " << pair(i.blur_sigma) << "\n";
  const auto& s = c.expert.spectral;
  os << "\n[expert.spectral]\nmask_factor = " << s.mask_factor
     << "\napply_noise = " << boolean(s.apply_noise) << "\nnoise_std = " << num(s.noise_std)
     << "\nshared_mask_across_channels = " << boolean(s.shared_mask_across_channels) << "\n";
  const auto& w = c.expert.waveform;
  os << "\n[expert.waveform]\ncrop_scale = " << pair(w.crop_scale)
     << "\nnoise_scale = " << num(w.noise_scale) << "\n";

  const auto& le = c.linear_eval;
  os << "\n[linear_eval]\nbatch_size = " << le.batch_size << "\nepochs = " << le.epochs
     << "\nlr_drops = " << ints(le.lr_drops) << "\nlr_drop_factor = " << num(le.lr_drop_factor)
     << "\ntrain_views = " << quote(le.train_views) << "\n";
  write_optimizer(os, "linear_eval.optimizer", le.optimizer);

  const auto& ss = c.semisup;
  os << "\n[semisup]\nlabeled_subjects = " << ints(ss.labeled_subjects)
     << "\nbatch_size = " << ss.batch_size << "\npatience = " << ss.patience
     << "\nmax_epochs = " << ss.max_epochs << "\n";
  write_optimizer(os, "semisup.optimizer", ss.optimizer);
  return os.str();
}

uint64_t config_hash(const ExperimentConfig& config) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : to_toml(config)) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace viewcraft
