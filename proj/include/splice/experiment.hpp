#pragma once

// Config-driven pipeline: gen -> step1 -> [step2] -> baselines -> metrics -> export.

#include "splice/checkpoint.hpp"
#include "splice/metrics.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <cstdio>

namespace splice {

using Json = nlohmann::json;

inline constexpr int kConfigFormatVersion = 1;

enum class DataSource { LgnV1, RotatedDigits, LinearToy, CsvPair };

inline std::string source_name(DataSource s) {
  switch (s) {
    case DataSource::LgnV1: return "lgnv1";
    case DataSource::RotatedDigits: return "rotated_digits";
    case DataSource::LinearToy: return "linear_toy";
    case DataSource::CsvPair: return "csv_pair";
  }
  return "?";
}

struct DataSection {
  DataSource source = DataSource::LinearToy;
  LgnV1Config lgnv1;
  RotatedDigitsConfig digits;
  std::string mnist_dir;
  LinearToyConfig toy;
  std::string csv_view_a, csv_view_b;
  double csv_train_fraction = 0.8;
  bool write_csv = true;
};

struct ModelSection {
  std::size_t m_zA = 1, m_zB = 1, m_s = 2;
  NetworkLayout layout;
};

struct BaselineSection {
  std::vector<std::size_t> rrr_dims{1, 2, 3, 4, 6, 8, 12};
  std::vector<std::size_t> splice_dims;  // empty = no SPLICE sweep
  double fraction = 0.95;
  ClassifierRecipe classifier;
};

struct MetricsSection {
  PredictorConfig predictor;
  std::vector<int> higher_order;
  std::size_t probe_digits = 100;
  bool membership = true;
  bool pixel_baseline = true;
};

struct ExperimentConfig {
  int format_version = kConfigFormatVersion;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  DataSection data;
  ModelSection model;
  Step1Config step1;
  bool step2_enabled = false;
  Step2Config step2;
  BaselineSection baselines;
  MetricsSection metrics;
};

// ---------------------------------------------------------------------------
// Strict JSON reading: every key must be known, every value well-typed.

namespace detail {

class JsonReader {
 public:
  JsonReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }
  ~JsonReader() = default;

  bool has(const std::string& key) const { return j_.contains(key); }

  JsonReader child(const std::string& key) {
    seen_.push_back(key);
    static const Json empty = Json::object();
    return JsonReader(j_.contains(key) ? j_.at(key) : empty, at(key));
  }

  double num(const std::string& key, double def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number()) throw ConfigError(at(key) + ": expected a number");
    const double d = v->get<double>();
    if (!std::isfinite(d)) throw ConfigError(at(key) + ": must be finite");
    return d;
  }
  double positive(const std::string& key, double def) {
    const double d = num(key, def);
    if (!(d > 0)) throw ConfigError(at(key) + ": must be > 0");
    return d;
  }
  double nonneg(const std::string& key, double def) {
    const double d = num(key, def);
    if (d < 0) throw ConfigError(at(key) + ": must be >= 0");
    return d;
  }
  long integer(const std::string& key, long def, long min_value) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number_integer()) throw ConfigError(at(key) + ": expected an integer");
    const long x = v->get<long>();
    if (x < min_value) throw ConfigError(at(key) + ": must be >= " + std::to_string(min_value));
    return x;
  }
  std::uint64_t seed(const std::string& key, std::uint64_t def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<long>() >= 0))
      throw ConfigError(at(key) + ": expected a non-negative integer");
    return v->get<std::uint64_t>();
  }
  bool boolean(const std::string& key, bool def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_boolean()) throw ConfigError(at(key) + ": expected true or false");
    return v->get<bool>();
  }
  std::string str(const std::string& key, const std::string& def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_string()) throw ConfigError(at(key) + ": expected a string");
    return v->get<std::string>();
  }
  std::vector<std::size_t> sizes(const std::string& key, std::vector<std::size_t> def, std::size_t min_value) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_array()) throw ConfigError(at(key) + ": expected an array of integers");
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
      const Json& e = (*v)[i];
      if (!e.is_number_integer() || e.get<long>() < static_cast<long>(min_value))
        throw ConfigError(at(key) + "[" + std::to_string(i) + "]: expected an integer >= " + std::to_string(min_value));
      out.push_back(e.get<std::size_t>());
    }
    return out;
  }
  std::optional<std::vector<std::size_t>> optional_sizes(const std::string& key) {
    if (!has(key)) {
      seen_.push_back(key);
      return std::nullopt;
    }
    return sizes(key, {}, 1);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError(at(it.key()) + ": unknown key");
  }

  std::string at(const std::string& key) const { return path_ + "." + key; }

 private:
  const Json* take(const std::string& key) {
    seen_.push_back(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  const Json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

inline std::string default_mnist_dir() {
  if (const char* env = std::getenv("SPLICE_MNIST_DIR"); env && *env) return env;
  return "data/mnist";
}

inline void require_file(const std::string& path, const std::string& field) {
  if (!std::filesystem::is_regular_file(path)) throw ConfigError(field + ": file not found: " + path);
}

inline StandardizeMode parse_standardize(JsonReader& r, StandardizeMode def) {
  const char* names[] = {"per_dim", "global", "none"};
  const std::string s = r.str("standardize", names[static_cast<int>(def)]);
  try {
    return standardize_mode_from(s);
  } catch (const ConfigError&) {
    throw ConfigError(r.at("standardize") + ": expected per_dim, global or none");
  }
}

inline std::string standardize_name(StandardizeMode m) {
  switch (m) {
    case StandardizeMode::PerDim: return "per_dim";
    case StandardizeMode::Global: return "global";
    case StandardizeMode::None: return "none";
  }
  return "?";
}

inline std::string activation_name(Activation a) {
  switch (a) {
    case Activation::Linear: return "linear";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j) {
  detail::JsonReader root(j, "config");
  ExperimentConfig c;
  c.format_version = static_cast<int>(root.integer("format_version", -1, -1));
  if (c.format_version != kConfigFormatVersion)
    throw ConfigError("config.format_version: expected " + std::to_string(kConfigFormatVersion));
  c.seed = root.seed("seed", 0);
  c.output_dir = root.str("output_dir", c.output_dir);

  {
    auto d = root.child("data");
    const std::string src = d.str("source", "linear_toy");
    bool known = false;
    for (DataSource s : {DataSource::LgnV1, DataSource::RotatedDigits, DataSource::LinearToy, DataSource::CsvPair})
      if (source_name(s) == src) {
        c.data.source = s;
        known = true;
      }
    if (!known) throw ConfigError(d.at("source") + ": expected lgnv1, rotated_digits, linear_toy or csv_pair");
    c.data.write_csv = d.boolean("write_csv", c.data.source != DataSource::RotatedDigits);
    // Only the selected source's section may appear.
    for (DataSource s : {DataSource::LgnV1, DataSource::RotatedDigits, DataSource::LinearToy, DataSource::CsvPair})
      if (s != c.data.source && d.has(source_name(s)))
        throw ConfigError(d.at(source_name(s)) + ": section does not match data.source");
    auto p = d.child(source_name(c.data.source));
    switch (c.data.source) {
      case DataSource::LgnV1: {
        LgnV1Config& g = c.data.lgnv1;
        g.field_px = static_cast<int>(p.integer("field_px", g.field_px, 1));
        g.rf_px = static_cast<int>(p.integer("rf_px", g.rf_px, 1));
        g.grid = static_cast<int>(p.integer("grid", g.grid, 2));
        g.n_trials = p.integer("n_trials", g.n_trials, 2);
        g.private_ratio = p.nonneg("private_ratio", g.private_ratio);
        g.noise_level = p.nonneg("noise_level", g.noise_level);
        g.train_fraction = p.positive("train_fraction", g.train_fraction);
        g.bar_width = p.positive("bar_width", g.bar_width);
        g.bar_height = p.positive("bar_height", g.bar_height);
        g.place_width = p.positive("place_width", g.place_width);
        g.sigma_center = p.nonneg("sigma_center", g.sigma_center);
        g.sigma_surround = p.nonneg("sigma_surround", g.sigma_surround);
        g.gabor_sigma = p.nonneg("gabor_sigma", g.gabor_sigma);
        g.gabor_wavelength = p.nonneg("gabor_wavelength", g.gabor_wavelength);
        try {
          g.validate();
        } catch (const ConfigError& e) {
          throw ConfigError(d.at("lgnv1") + ": " + e.what());
        }
        break;
      }
      case DataSource::RotatedDigits: {
        RotatedDigitsConfig& r = c.data.digits;
        c.data.mnist_dir = p.str("mnist_dir", detail::default_mnist_dir());
        r.images_path = c.data.mnist_dir + "/" + p.str("images", "train-images-idx3-ubyte");
        r.labels_path = c.data.mnist_dir + "/" + p.str("labels", "train-labels-idx1-ubyte");
        r.n_train = p.integer("n_train", r.n_train, 1);
        r.n_val = p.integer("n_val", r.n_val, 0);
        r.n_test = p.integer("n_test", r.n_test, 1);
        detail::require_file(r.images_path, d.at("rotated_digits.images"));
        detail::require_file(r.labels_path, d.at("rotated_digits.labels"));
        break;
      }
      case DataSource::LinearToy: {
        LinearToyConfig& t = c.data.toy;
        t.n_A = static_cast<std::size_t>(p.integer("n_A", static_cast<long>(t.n_A), 1));
        t.n_B = static_cast<std::size_t>(p.integer("n_B", static_cast<long>(t.n_B), 1));
        t.m_zA = static_cast<std::size_t>(p.integer("m_zA", static_cast<long>(t.m_zA), 0));
        t.m_s = static_cast<std::size_t>(p.integer("m_s", static_cast<long>(t.m_s), 1));
        t.m_zB = static_cast<std::size_t>(p.integer("m_zB", static_cast<long>(t.m_zB), 0));
        t.noise = p.nonneg("noise", t.noise);
        t.n = p.integer("n", t.n, 2);
        t.train_fraction = p.positive("train_fraction", t.train_fraction);
        t.val_fraction = p.nonneg("val_fraction", t.val_fraction);
        if (t.m_s + t.m_zA > t.n_A || t.m_s + t.m_zB > t.n_B)
          throw ConfigError(d.at("linear_toy") + ": latent width exceeds observed width");
        break;
      }
      case DataSource::CsvPair: {
        c.data.csv_view_a = p.str("view_a", "");
        c.data.csv_view_b = p.str("view_b", "");
        c.data.csv_train_fraction = p.positive("train_fraction", c.data.csv_train_fraction);
        detail::require_file(c.data.csv_view_a, d.at("csv_pair.view_a"));
        detail::require_file(c.data.csv_view_b, d.at("csv_pair.view_b"));
        break;
      }
    }
    p.finish();
    d.finish();
  }

  {
    auto m = root.child("model");
    c.model.m_zA = static_cast<std::size_t>(m.integer("m_zA", static_cast<long>(c.model.m_zA), 0));
    c.model.m_zB = static_cast<std::size_t>(m.integer("m_zB", static_cast<long>(c.model.m_zB), 0));
    c.model.m_s = static_cast<std::size_t>(m.integer("m_s", static_cast<long>(c.model.m_s), 1));
    c.model.layout.encoder_hidden = m.sizes("encoder_hidden", c.model.layout.encoder_hidden, 1);
    c.model.layout.decoder_hidden = m.optional_sizes("decoder_hidden");
    c.model.layout.measurement_hidden = m.optional_sizes("measurement_hidden");
    const std::string act = m.str("activation", "leaky_relu");
    if (act == "leaky_relu")
      c.model.layout.activation.kind = Activation::LeakyRelu;
    else if (act == "tanh")
      c.model.layout.activation.kind = Activation::Tanh;
    else if (act == "linear")
      c.model.layout.activation.kind = Activation::Linear;
    else
      throw ConfigError(m.at("activation") + ": expected leaky_relu, tanh or linear");
    c.model.layout.activation.slope = m.num("leaky_slope", c.model.layout.activation.slope);
    m.finish();
  }

  {
    auto s = root.child("step1");
    Step1Config& t = c.step1;
    t.n_epochs = s.integer("n_epochs", t.n_epochs, 1);
    t.minibatch_size = static_cast<std::size_t>(s.integer("minibatch_size", static_cast<long>(t.minibatch_size), 0));
    t.n_msr_inner = static_cast<int>(s.integer("n_msr_inner", t.n_msr_inner, 1));
    t.n_msr_restart = static_cast<int>(s.integer("n_msr_restart", t.n_msr_restart, 1));
    t.T_restart = s.integer("T_restart", t.T_restart, 1);
    t.disentangle_weight = s.nonneg("disentangle_weight", t.disentangle_weight);
    t.base_lr = s.positive("base_lr", t.base_lr);
    t.final_lr = s.positive("final_lr", t.final_lr);
    t.standardize = detail::parse_standardize(
        s, c.data.source == DataSource::RotatedDigits ? StandardizeMode::Global : StandardizeMode::PerDim);
    t.log_every = s.integer("log_every", 0, 0);
    s.finish();
  }

  {
    auto s = root.child("step2");
    Step2Config& t = c.step2;
    c.step2_enabled = s.boolean("enabled", false);
    t.k_graph = static_cast<std::size_t>(s.integer("k_graph", static_cast<long>(t.k_graph), 1));
    t.k_avg = static_cast<std::size_t>(s.integer("k_avg", static_cast<long>(t.k_avg), 1));
    t.n_landmarks = static_cast<std::size_t>(s.integer("n_landmarks", static_cast<long>(t.n_landmarks), 0));
    if (t.n_landmarks == 1) throw ConfigError(s.at("n_landmarks") + ": must be 0 (auto) or >= 2");
    t.n_epochs = s.integer("n_epochs", t.n_epochs, 1);
    t.minibatch_size = static_cast<std::size_t>(s.integer("minibatch_size", static_cast<long>(t.minibatch_size), 0));
    t.n_msr_inner = static_cast<int>(s.integer("n_msr_inner", t.n_msr_inner, 1));
    t.n_msr_restart = static_cast<int>(s.integer("n_msr_restart", t.n_msr_restart, 1));
    t.T_restart = s.integer("T_restart", t.T_restart, 1);
    t.disentangle_weight = s.nonneg("disentangle_weight", t.disentangle_weight);
    t.base_lr = s.positive("base_lr", t.base_lr);
    t.final_lr = s.positive("final_lr", t.final_lr);
    t.log_every = s.integer("log_every", 0, 0);
    auto w = s.child("geo_weight");
    for (LatentGroup g : kAllGroups) t.geo_weight[g] = w.nonneg(std::string(group_name(g)), 1.0);
    w.finish();
    s.finish();
  }

  {
    auto b = root.child("baselines");
    c.baselines.rrr_dims = b.sizes("rrr_dims", c.baselines.rrr_dims, 1);
    c.baselines.splice_dims = b.sizes("splice_dims", c.baselines.splice_dims, 1);
    c.baselines.fraction = b.positive("saturation_fraction", c.baselines.fraction);
    auto k = b.child("classifier");
    c.baselines.classifier.lr = k.positive("lr", c.baselines.classifier.lr);
    c.baselines.classifier.epochs = static_cast<int>(k.integer("epochs", c.baselines.classifier.epochs, 1));
    c.baselines.classifier.l2 = k.nonneg("l2", c.baselines.classifier.l2);
    k.finish();
    for (auto* dims : {&c.baselines.rrr_dims, &c.baselines.splice_dims})
      for (std::size_t i = 1; i < dims->size(); ++i)
        if ((*dims)[i] <= (*dims)[i - 1]) throw ConfigError(b.at("rrr_dims/splice_dims") + ": must be strictly increasing");
    b.finish();
  }

  {
    auto m = root.child("metrics");
    auto p = m.child("predictor");
    PredictorConfig& pc = c.metrics.predictor;
    pc.hidden = p.sizes("hidden", pc.hidden, 1);
    pc.steps = p.integer("steps", pc.steps, 1);
    pc.batch = static_cast<std::size_t>(p.integer("batch", static_cast<long>(pc.batch), 1));
    pc.base_lr = p.positive("base_lr", pc.base_lr);
    pc.final_lr = p.positive("final_lr", pc.final_lr);
    p.finish();
    for (std::size_t n : m.sizes("higher_order", {}, 1)) c.metrics.higher_order.push_back(static_cast<int>(n));
    c.metrics.probe_digits = static_cast<std::size_t>(m.integer("probe_digits", static_cast<long>(c.metrics.probe_digits), 1));
    c.metrics.membership = m.boolean("membership", c.metrics.membership);
    c.metrics.pixel_baseline = m.boolean("pixel_baseline", c.metrics.pixel_baseline);
    m.finish();
  }
  root.finish();
  return c;
}

/// Fully resolved config (defaults filled in). The output directory is left
/// out so that the hash identifies the experiment, not where it was written.
inline Json resolved_json(const ExperimentConfig& c) {
  Json j;
  j["format_version"] = c.format_version;
  j["seed"] = c.seed;
  Json d;
  d["source"] = source_name(c.data.source);
  d["write_csv"] = c.data.write_csv;
  switch (c.data.source) {
    case DataSource::LgnV1: {
      const LgnV1Config& g = c.data.lgnv1;
      d["lgnv1"] = {{"field_px", g.field_px},         {"rf_px", g.rf_px},
                    {"grid", g.grid},                 {"n_trials", g.n_trials},
                    {"private_ratio", g.private_ratio}, {"noise_level", g.noise_level},
                    {"train_fraction", g.train_fraction}, {"bar_width", g.bar_width},
                    {"bar_height", g.bar_height},     {"place_width", g.place_width},
                    {"sigma_center", g.sc()},         {"sigma_surround", g.ss()},
                    {"gabor_sigma", g.gs()},          {"gabor_wavelength", g.gl()}};
      break;
    }
    case DataSource::RotatedDigits: {
      const RotatedDigitsConfig& r = c.data.digits;
      d["rotated_digits"] = {{"images", std::filesystem::path(r.images_path).filename().string()},
                             {"labels", std::filesystem::path(r.labels_path).filename().string()},
                             {"n_train", r.n_train},
                             {"n_val", r.n_val},
                             {"n_test", r.n_test}};
      break;
    }
    case DataSource::LinearToy: {
      const LinearToyConfig& t = c.data.toy;
      d["linear_toy"] = {{"n_A", t.n_A},   {"n_B", t.n_B},     {"m_zA", t.m_zA},
                         {"m_s", t.m_s},   {"m_zB", t.m_zB},   {"noise", t.noise},
                         {"n", t.n},       {"train_fraction", t.train_fraction},
                         {"val_fraction", t.val_fraction}};
      break;
    }
    case DataSource::CsvPair:
      d["csv_pair"] = {{"view_a", c.data.csv_view_a},
                       {"view_b", c.data.csv_view_b},
                       {"train_fraction", c.data.csv_train_fraction}};
      break;
  }
  j["data"] = d;
  Json m = {{"m_zA", c.model.m_zA},
            {"m_zB", c.model.m_zB},
            {"m_s", c.model.m_s},
            {"encoder_hidden", c.model.layout.encoder_hidden},
            {"decoder_hidden", c.model.layout.decoder()},
            {"measurement_hidden", c.model.layout.measurement()},
            {"activation", detail::activation_name(c.model.layout.activation.kind)},
            {"leaky_slope", c.model.layout.activation.slope}};
  j["model"] = m;
  const Step1Config& s1 = c.step1;
  j["step1"] = {{"n_epochs", s1.n_epochs},
                {"minibatch_size", s1.minibatch_size},
                {"n_msr_inner", s1.n_msr_inner},
                {"n_msr_restart", s1.n_msr_restart},
                {"T_restart", s1.T_restart},
                {"disentangle_weight", s1.disentangle_weight},
                {"base_lr", s1.base_lr},
                {"final_lr", s1.final_lr},
                {"standardize", detail::standardize_name(s1.standardize)}};
  const Step2Config& s2 = c.step2;
  Json gw;
  for (const auto& [g, w] : s2.geo_weight) gw[std::string(group_name(g))] = w;
  j["step2"] = {{"enabled", c.step2_enabled},
                {"k_graph", s2.k_graph},
                {"k_avg", s2.k_avg},
                {"n_landmarks", s2.n_landmarks},
                {"n_epochs", s2.n_epochs},
                {"minibatch_size", s2.minibatch_size},
                {"n_msr_inner", s2.n_msr_inner},
                {"n_msr_restart", s2.n_msr_restart},
                {"T_restart", s2.T_restart},
                {"disentangle_weight", s2.disentangle_weight},
                {"base_lr", s2.base_lr},
                {"final_lr", s2.final_lr},
                {"geo_weight", gw}};
  const BaselineSection& b = c.baselines;
  j["baselines"] = {{"rrr_dims", b.rrr_dims},
                    {"splice_dims", b.splice_dims},
                    {"saturation_fraction", b.fraction},
                    {"classifier", {{"lr", b.classifier.lr}, {"epochs", b.classifier.epochs}, {"l2", b.classifier.l2}}}};
  const PredictorConfig& p = c.metrics.predictor;
  j["metrics"] = {{"predictor",
                   {{"hidden", p.hidden},
                    {"steps", p.steps},
                    {"batch", p.batch},
                    {"base_lr", p.base_lr},
                    {"final_lr", p.final_lr}}},
                  {"higher_order", c.metrics.higher_order},
                  {"probe_digits", c.metrics.probe_digits},
                  {"membership", c.metrics.membership},
                  {"pixel_baseline", c.metrics.pixel_baseline}};
  return j;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(resolved_json(c).dump())));
  return buf;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(j);
}

// ---------------------------------------------------------------------------
// Stage helpers shared by `run` and the standalone subcommands.

/// Seeds for each consumer, derived from the experiment seed.
struct SeedPlan {
  std::uint64_t data, init, step1, step2, metrics, baselines;
  explicit SeedPlan(std::uint64_t s)
      : data(s), init(derive_seed(s, 1001)), step1(derive_seed(s, 1002)), step2(derive_seed(s, 1003)),
        metrics(derive_seed(s, 1004)), baselines(derive_seed(s, 1005)) {}
};

inline PairedDataset load_data(const ExperimentConfig& c) {
  const SeedPlan seeds(c.seed);
  switch (c.data.source) {
    case DataSource::LgnV1: {
      LgnV1Config g = c.data.lgnv1;
      g.seed = seeds.data;
      return gen_lgnv1(g);
    }
    case DataSource::RotatedDigits: {
      RotatedDigitsConfig r = c.data.digits;
      r.seed = seeds.data;
      return gen_rotated_digits(r);
    }
    case DataSource::LinearToy: {
      LinearToyConfig t = c.data.toy;
      t.seed = seeds.data;
      return gen_linear_toy(t);
    }
    case DataSource::CsvPair:
      return read_csv_pair(c.data.csv_view_a, c.data.csv_view_b, c.data.csv_train_fraction, 0.0, seeds.data);
  }
  throw ConfigError("unknown data source");
}

inline SpliceDims dims_for(const ExperimentConfig& c, const PairedDataset& d, std::size_t m_s) {
  SpliceDims dims{static_cast<std::size_t>(d.x_A.cols()), static_cast<std::size_t>(d.x_B.cols()), c.model.m_zA,
                  c.model.m_zB, m_s};
  dims.validate();
  return dims;
}

inline Step1Config step1_config(const ExperimentConfig& c, const std::function<void(const std::string&)>& log) {
  Step1Config s = c.step1;
  s.seed = SeedPlan(c.seed).step1;
  s.log = log;
  return s;
}

inline Step2Config step2_config(const ExperimentConfig& c, const std::function<void(const std::string&)>& log) {
  Step2Config s = c.step2;
  s.seed = SeedPlan(c.seed).step2;
  s.log = log;
  return s;
}

/// Builds and Step-1-trains a model with shared width m_s.
inline std::pair<SpliceModel, LossTrace> train_step1(const ExperimentConfig& c, const PairedDataset& d, std::size_t m_s,
                                                     const std::function<void(const std::string&)>& log) {
  SpliceModel m = make_model(dims_for(c, d, m_s), c.model.layout, derive_seed(SeedPlan(c.seed).init, m_s));
  LossTrace t = step1_train(m, d, step1_config(c, log));
  return {std::move(m), std::move(t)};
}

inline void write_trace_csv(const std::string& path, const LossTrace& t, const std::string& hash) {
  std::vector<std::string> header{"iteration", "rec_A", "rec_B", "var_AtoB", "var_BtoA", "pred"};
  std::vector<LatentGroup> groups;
  for (const auto& [g, v] : t.geo)
    if (!v.empty()) {
      groups.push_back(g);
      header.push_back("geo_" + std::string(group_name(g)));
    }
  header.emplace_back("config_hash");
  CsvWriter w(path, header);
  for (std::size_t i = 0; i < t.iterations(); ++i) {
    std::vector<std::string> row{std::to_string(i + 1), format_double(t.rec_A[i]), format_double(t.rec_B[i]),
                                 format_double(t.var_AtoB[i]), format_double(t.var_BtoA[i]), format_double(t.pred[i])};
    for (LatentGroup g : groups) row.push_back(format_double(t.geo.at(g)[i]));
    row.push_back(hash);
    w.row(row);
  }
}

/// Held-out reconstruction of both views in model space.
struct ReconScores {
  double loss_A = 0, loss_B = 0, r2_A = 0, r2_B = 0;
  double loss() const { return loss_A + loss_B; }
  double r2() const { return 0.5 * (r2_A + r2_B); }
};

inline ReconScores recon_scores(const SpliceModel& m, const PairedDataset& d, Split s = Split::Test) {
  const auto [xa, xb] = model_space(m, d, s);
  const auto [ya, yb] = decode(m, encode(m, xa, xb));
  return {recon_loss(xa, ya), recon_loss(xb, yb), r_squared(xa, ya), r_squared(xb, yb)};
}

/// Each row of the saturation CSV: method, dim, score.
struct SaturationRow {
  std::string method;
  std::size_t dim;
  double score;
};

inline std::vector<SaturationRow> read_saturation_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const auto cm = t.column("method"), cd = t.column("dim"), cs = t.column("score");
  if (!cm || !cd || !cs) throw FormatError(path + ": expected method, dim and score columns", 0);
  std::vector<SaturationRow> rows;
  for (std::size_t r = 0; r < t.rows.size(); ++r)
    rows.push_back({t.rows[r][*cm], static_cast<std::size_t>(parse_double(t.rows[r][*cd], path, r + 2)),
                    parse_double(t.rows[r][*cs], path, r + 2)});
  return rows;
}

inline void write_saturation_csv(const std::string& path, const std::vector<SaturationRow>& rows,
                                 const std::string& hash) {
  CsvWriter w(path, {"method", "dim", "score", "config_hash"});
  for (const auto& r : rows) w.row({r.method, std::to_string(r.dim), format_double(r.score), hash});
}

/// Standardisation fitted on the training rows alone, without a model.
inline Standardizer data_standardizer(const PairedDataset& d, StandardizeMode mode) {
  const auto train = d.indices(Split::Train);
  Standardizer s;
  fit_view_stats(take_rows(d.x_A, train), mode, s.mean_A, s.std_A);
  fit_view_stats(take_rows(d.x_B, train), mode, s.mean_B, s.std_B);
  return s;
}

inline std::vector<SaturationRow> rrr_rows(const PairedDataset& d, StandardizeMode mode, std::vector<std::size_t> dims,
                                           double f) {
  const Standardizer st = data_standardizer(d, mode);
  const auto tr = d.indices(Split::Train), te = d.indices(Split::Test);
  const Mat xa_tr = st.to_model_A(take_rows(d.x_A, tr)), xb_tr = st.to_model_B(take_rows(d.x_B, tr));
  const Mat xa_te = st.to_model_A(take_rows(d.x_A, te)), xb_te = st.to_model_B(take_rows(d.x_B, te));
  const std::size_t cap = static_cast<std::size_t>(std::min(xa_tr.cols(), xb_tr.cols()));
  std::erase_if(dims, [&](std::size_t k) { return k > cap; });
  if (dims.empty()) throw ConfigError("baselines.rrr_dims: no dim <= min(n_A, n_B)");
  const SaturationCurve curve = rrr_saturation(xa_tr, xb_tr, xa_te, xb_te, dims, f);
  std::vector<SaturationRow> rows;
  for (std::size_t i = 0; i < curve.dims.size(); ++i) rows.push_back({"rrr", curve.dims[i], curve.scores[i]});
  return rows;
}

/// Long-format metric record.
struct MetricRow {
  std::string metric, group;
  double value;
};

inline void write_metrics_csv(const std::string& path, const std::vector<MetricRow>& rows, const std::string& hash,
                              std::uint64_t seed) {
  CsvWriter w(path, {"metric", "group", "value", "config_hash", "seed"});
  for (const auto& r : rows) w.row({r.metric, r.group, format_double(r.value), hash, std::to_string(seed)});
}

/// Spearman |rho| between latent axes and truth columns after choosing the
/// axis-to-truth pairing that maximises the summed |rho|. Returns one value
/// per truth column. `align` first rotates the latent onto its principal axes.
inline std::vector<double> paired_spearman(const Mat& latent, const Mat& truth, bool align) {
  const Mat z = align ? Mat((latent.rowwise() - latent.colwise().mean()) * principal_axes(latent)) : latent;
  const Index k = truth.cols();
  if (z.cols() < k) throw DegenerateInputError("paired_spearman: fewer latent axes than truth columns");
  Mat rho(z.cols(), k);
  for (Index i = 0; i < z.cols(); ++i)
    for (Index j = 0; j < k; ++j) rho(i, j) = std::abs(spearman(z.col(i), truth.col(j)));
  std::vector<Index> axes(static_cast<std::size_t>(z.cols()));
  std::iota(axes.begin(), axes.end(), Index{0});
  std::vector<double> best;
  double best_sum = -1;
  do {
    double s = 0;
    for (Index j = 0; j < k; ++j) s += rho(axes[static_cast<std::size_t>(j)], j);
    if (s > best_sum + 1e-15) {
      best_sum = s;
      best.clear();
      for (Index j = 0; j < k; ++j) best.push_back(rho(axes[static_cast<std::size_t>(j)], j));
    }
  } while (std::next_permutation(axes.begin(), axes.end()));
  return best;
}

/// Canonical correlations on held-out rows of projections fitted on training rows.
inline std::vector<double> heldout_cca(const Mat& a_tr, const Mat& b_tr, const Mat& a_te, const Mat& b_te) {
  const std::size_t k = static_cast<std::size_t>(std::min(a_tr.cols(), b_tr.cols()));
  const CcaResult r = fit_linear_cca(a_tr, b_tr, k);
  const Mat pa = r.project_A(a_te), pb = r.project_B(b_te);
  std::vector<double> out;
  for (Index i = 0; i < static_cast<Index>(k); ++i) out.push_back(std::abs(pearson(pa.col(i), pb.col(i))));
  return out;
}

struct MetricsOutput {
  std::vector<MetricRow> rows;
  std::vector<Mat> angle_curves;
  std::vector<int> angle_offsets;
  std::vector<int> probe_labels;
  std::map<std::string, std::vector<double>> distances;  // kind -> values
};

/// Every metric that applies to the dataset at hand. `before_step2` (may be
/// null) is the Step-1 model that Step 2 started from.
inline MetricsOutput compute_metrics(const ExperimentConfig& c, const SpliceModel& m, const PairedDataset& d,
                                     const SpliceModel* before_step2, const std::vector<SaturationRow>& saturation) {
  const SeedPlan seeds(c.seed);
  MetricsOutput out;
  auto add = [&](std::string metric, std::string group, double v) {
    out.rows.push_back({std::move(metric), std::move(group), v});
  };
  const ReconScores rs = recon_scores(m, d);
  add("recon_loss", "A", rs.loss_A);
  add("recon_loss", "B", rs.loss_B);
  add("recon_r2", "A", rs.r2_A);
  add("recon_r2", "B", rs.r2_B);
  if (before_step2) {
    const ReconScores pre = recon_scores(*before_step2, d);
    add("recon_loss_step1", "A", pre.loss_A);
    add("recon_loss_step1", "B", pre.loss_B);
    add("recon_loss_rel_change", "step2", (rs.loss() - pre.loss()) / pre.loss());
  }

  LeakageConfig lc;
  lc.predictor = c.metrics.predictor;
  lc.predictor.seed = seeds.metrics;
  lc.classifier = c.baselines.classifier;
  lc.classifier.seed = seeds.metrics;
  lc.pixel_baseline = c.metrics.pixel_baseline;
  for (const auto& [k, v] : leakage_scores(m, d, lc)) add(k, "leakage", v);

  const auto tr = d.indices(Split::Train), te = d.indices(Split::Test);
  const auto [xa_tr, xb_tr] = model_space(m, d, Split::Train);
  const auto [xa_te, xb_te] = model_space(m, d, Split::Test);
  const LatentBundle l_tr = encode(m, xa_tr, xb_tr), l_te = encode(m, xa_te, xb_te);

  if (d.truth) {
    const Truth& t = *d.truth;
    auto cca = [&](const Mat& est_tr, const Mat& est_te, const Mat& truth, const std::string& group) {
      if (est_tr.cols() == 0 || truth.cols() == 0 || truth.rows() != d.size()) return;
      const auto corr = heldout_cca(est_tr, take_rows(truth, tr), est_te, take_rows(truth, te));
      for (std::size_t i = 0; i < corr.size(); ++i) add("cca_corr_" + std::to_string(i), group, corr[i]);
      add("cca_corr_min", group, *std::min_element(corr.begin(), corr.end()));
    };
    cca(l_tr.z_A, l_te.z_A, t.z_A, "z_A");
    cca(l_tr.z_B, l_te.z_B, t.z_B, "z_B");
    cca(l_tr.s_AtoB, l_te.s_AtoB, t.s, "s_AtoB");
    cca(l_tr.s_BtoA, l_te.s_BtoA, t.s, "s_BtoA");
    if (c.data.source == DataSource::LgnV1 && t.s.rows() == d.size()) {
      const Mat s_te = take_rows(t.s, te);
      for (auto [name, lat] : {std::pair{"s_AtoB", &l_te.s_AtoB}, std::pair{"s_BtoA", &l_te.s_BtoA}}) {
        if (lat->cols() < s_te.cols()) continue;
        const auto raw = paired_spearman(*lat, s_te, false);
        const auto aligned = paired_spearman(*lat, s_te, true);
        for (std::size_t j = 0; j < raw.size(); ++j) {
          const std::string axis = j == 0 ? "x" : (j == 1 ? "y" : std::to_string(j));
          add("spearman_abs", std::string(name) + "_" + axis, raw[j]);
          add("spearman_abs_principal", std::string(name) + "_" + axis, aligned[j]);
        }
      }
    }
  }

  for (int order : c.metrics.higher_order) {
    PredictorConfig pc = c.metrics.predictor;
    pc.seed = derive_seed(seeds.metrics, 100 + static_cast<std::uint64_t>(order));
    for (const auto& [dir, v] : higher_order_check(m, d, order, pc))
      add("higher_order_ratio", dir + "_N" + std::to_string(order), v);
  }

  if (c.data.source == DataSource::RotatedDigits && m.dims.m_zB > 0) {
    // Angle analysis on probe test digits rotated through every degree.
    const std::size_t n_probe = std::min(c.metrics.probe_digits, te.size());
    std::vector<Index> probe(te.begin(), te.begin() + static_cast<std::ptrdiff_t>(n_probe));
    out.angle_curves = private_angle_curves(m, take_rows(d.x_A, probe));
    Rng ref_rng(derive_seed(seeds.metrics, 7));
    out.angle_offsets = angle_offset_correct(out.angle_curves, ref_rng);
    for (Index i : probe) out.probe_labels.push_back(d.truth->label[static_cast<std::size_t>(i)]);
    const AngleVarianceReport av = angle_conditioned_variance(out.angle_curves, out.angle_offsets);
    add("angle_fraction_explained", "z_B", av.fraction_explained);

    if (c.metrics.membership && d.has_labels()) {
      // Submanifold projections of the held-out rows against the raw training images.
      const Mat ref = take_rows(d.x_B, tr);
      std::vector<int> ref_labels;
      for (Index i : tr) ref_labels.push_back(d.truth->label[static_cast<std::size_t>(i)]);
      Rng fix_rng(derive_seed(seeds.metrics, 8));
      double within = 0;
      for (LatentGroup g : {LatentGroup::ZB, LatentGroup::SAtoB}) {
        const auto proj = project_submanifold(m, xa_te, xb_te, g, 1, fix_rng);
        const MembershipReport mr = manifold_membership(m.standardizer.to_raw_B(proj.points), ref, &ref_labels);
        within = mr.mean_within_class;
        const std::string gname(group_name(g));
        add("membership_below_within_class", gname, mr.fraction_below_within_class);
        const auto sorted = [](std::vector<double> v) {
          std::sort(v.begin(), v.end());
          return v;
        };
        const auto pn = sorted(mr.projection_nn);
        add("projection_nn_median", gname, pn[pn.size() / 2]);
        out.distances["projection_" + gname] = mr.projection_nn;
        if (!out.distances.count("data_nn")) {
          const auto dn = sorted(mr.data_nn);
          add("data_nn_median", "x_B", dn[dn.size() / 2]);
          out.distances["data_nn"] = mr.data_nn;
        }
      }
      add("mean_within_class_distance", "x_B", within);
    }
  }

  std::map<std::string, std::pair<std::vector<std::size_t>, std::vector<double>>> curves;
  for (const auto& r : saturation) {
    curves[r.method].first.push_back(r.dim);
    curves[r.method].second.push_back(r.score);
  }
  for (const auto& [method, cv] : curves)
    add("saturation_dim", method, static_cast<double>(saturation_dim(cv.first, cv.second, c.baselines.fraction)));
  return out;
}

/// latents.csv: every sample's four latent groups, the first two principal
/// components of each shared latent, and any ground truth.
inline void write_latents_csv(const std::string& path, const SpliceModel& m, const PairedDataset& d,
                              const std::string& hash) {
  const Mat xa = m.standardizer.to_model_A(d.x_A), xb = m.standardizer.to_model_B(d.x_B);
  const LatentBundle b = encode(m, xa, xb);
  const auto train = d.indices(Split::Train);
  std::vector<std::pair<std::string, Mat>> blocks{
      {"s_AtoB", b.s_AtoB}, {"s_BtoA", b.s_BtoA}, {"z_A", b.z_A}, {"z_B", b.z_B}};
  for (const char* g : {"s_AtoB", "s_BtoA"}) {
    const Mat& s = g[2] == 'A' ? b.s_AtoB : b.s_BtoA;
    const Mat fit = take_rows(s, train);
    const RowVec mu = fit.colwise().mean();
    const Mat pcs = ((s.rowwise() - mu) * principal_axes(fit)).leftCols(std::min<Index>(2, s.cols()));
    blocks.emplace_back(std::string("pca_") + g + "_", pcs);
  }
  if (d.truth) {
    if (d.truth->s.rows() == d.size()) blocks.emplace_back("true_s", d.truth->s);
    if (d.truth->z_A.rows() == d.size()) blocks.emplace_back("true_z_A", d.truth->z_A);
    if (d.truth->z_B.rows() == d.size()) blocks.emplace_back("true_z_B", d.truth->z_B);
  }
  std::vector<std::string> header{"sample", "split"};
  for (const auto& [name, mat] : blocks)
    for (auto& h : numbered(name, mat.cols())) header.push_back(h);
  const bool theta = d.has_theta(), label = d.has_labels();
  if (theta) header.emplace_back("theta_deg");
  if (label) header.emplace_back("label");
  header.emplace_back("config_hash");
  CsvWriter w(path, header);
  for (Index i = 0; i < d.size(); ++i) {
    std::vector<std::string> row{std::to_string(i), split_name(d.split[static_cast<std::size_t>(i)])};
    for (const auto& [name, mat] : blocks)
      for (Index k = 0; k < mat.cols(); ++k) row.push_back(format_double(mat(i, k)));
    if (theta) row.push_back(format_double(d.truth->theta_deg[static_cast<std::size_t>(i)]));
    if (label) row.push_back(std::to_string(d.truth->label[static_cast<std::size_t>(i)]));
    row.push_back(hash);
    w.row(row);
  }
}

inline void write_receptive_fields_csv(const std::string& path, const LgnV1Config& cfg, const std::string& hash) {
  const LgnV1Population pop = make_lgnv1_population(cfg);
  CsvWriter w(path, {"neuron", "view", "kind", "center_x", "center_y", "place_center", "config_hash"});
  for (std::size_t i = 0; i < pop.lgn.size(); ++i)
    w.row({std::to_string(i), "A", "center_surround", format_double(pop.lgn[i].center_x),
           format_double(pop.lgn[i].center_y), format_double(pop.place_A(static_cast<Index>(i))), hash});
  const std::size_t half = pop.v1.size() / 2;
  for (std::size_t i = 0; i < pop.v1.size(); ++i)
    w.row({std::to_string(i), "B", i < half ? "gabor_vertical" : "gabor_horizontal", format_double(pop.v1[i].center_x),
           format_double(pop.v1[i].center_y), format_double(pop.place_B(static_cast<Index>(i))), hash});
}

inline void write_angle_curves_csv(const std::string& path, const MetricsOutput& mo, const std::string& hash) {
  if (mo.angle_curves.empty()) return;
  std::vector<std::string> header{"digit", "label", "theta_deg", "offset_deg"};
  for (auto& h : numbered("z", mo.angle_curves.front().cols())) header.push_back(h);
  header.emplace_back("config_hash");
  CsvWriter w(path, header);
  for (std::size_t i = 0; i < mo.angle_curves.size(); ++i)
    for (Index t = 0; t < 360; ++t) {
      std::vector<std::string> row{std::to_string(i), std::to_string(mo.probe_labels[i]), std::to_string(t),
                                   std::to_string(mo.angle_offsets[i])};
      for (Index k = 0; k < mo.angle_curves[i].cols(); ++k) row.push_back(format_double(mo.angle_curves[i](t, k)));
      row.push_back(hash);
      w.row(row);
    }
}

inline void write_distances_csv(const std::string& path, const MetricsOutput& mo, const std::string& hash) {
  if (mo.distances.empty()) return;
  CsvWriter w(path, {"kind", "value", "config_hash"});
  for (const auto& [kind, values] : mo.distances)
    for (double v : values) w.row({kind, format_double(v), hash});
}

// ---------------------------------------------------------------------------
// Pipeline.

enum class Stage { Gen = 0, Step1, Step2, Baselines, Metrics, Export };

inline constexpr std::array<Stage, 6> kStages{Stage::Gen,       Stage::Step1,   Stage::Step2,
                                              Stage::Baselines, Stage::Metrics, Stage::Export};

inline std::string stage_name(Stage s) {
  switch (s) {
    case Stage::Gen: return "gen";
    case Stage::Step1: return "step1";
    case Stage::Step2: return "step2";
    case Stage::Baselines: return "baselines";
    case Stage::Metrics: return "metrics";
    case Stage::Export: return "export";
  }
  return "?";
}

inline Stage stage_from_name(const std::string& s) {
  for (Stage st : kStages)
    if (stage_name(st) == s) return st;
  throw ConfigError("--stage: expected one of gen, step1, step2, baselines, metrics, export");
}

/// Exclusive lock on an output directory, released on destruction.
class DirLock {
 public:
  explicit DirLock(const std::string& dir) : path_(dir + "/.splice.lock") {
    f_ = std::fopen(path_.c_str(), "wx");  // exclusive create
    if (!f_) throw IoError("output directory is locked by another run (remove " + path_ + " if no run is active)");
  }
  ~DirLock() {
    if (f_) {
      std::fclose(f_);
      std::remove(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::string path_;
  std::FILE* f_ = nullptr;
};

struct RunOptions {
  Stage start = Stage::Gen;
  Stage stop = Stage::Export;
  std::string resume;  // checkpoint standing in for step1.ckpt
  std::function<void(const std::string&)> log;
};

class Experiment {
 public:
  Experiment(ExperimentConfig cfg, RunOptions opt)
      : cfg_(std::move(cfg)), opt_(std::move(opt)), hash_(config_hash(cfg_)), out_(cfg_.output_dir) {}

  const std::string& hash() const { return hash_; }
  std::string path(const std::string& name) const { return out_ + "/" + name; }

  void run() {
    std::error_code ec;
    std::filesystem::create_directories(out_, ec);
    if (ec) throw IoError("cannot create output directory '" + out_ + "': " + ec.message());
    DirLock lock(out_);
    {
      std::ofstream cfg_out(path("config.resolved.json"));
      if (!cfg_out) throw IoError("cannot write " + path("config.resolved.json"));
      cfg_out << resolved_json(cfg_).dump(2) << "\n";
    }
    if (!opt_.resume.empty() && opt_.start <= Stage::Step1)
      throw ConfigError("--resume supplies a Step-1 checkpoint; combine it with --stage step2 or later");
    for (Stage s : kStages) {
      if (s < opt_.start || s > opt_.stop) continue;
      if (s == Stage::Step2 && !cfg_.step2_enabled) continue;
      const auto t0 = std::chrono::steady_clock::now();
      say("stage=" + stage_name(s) + " status=start config_hash=" + hash_);
      run_stage(s);
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      manifest(s, secs);
      say("stage=" + stage_name(s) + " status=done seconds=" + format_double(secs));
    }
  }

 private:
  void say(const std::string& s) const {
    if (opt_.log) opt_.log(s);
  }

  void manifest(Stage s, double secs) const {
    const std::string p = path("manifest.csv");
    const bool fresh = !std::filesystem::exists(p);
    std::ofstream out(p, std::ios::app);
    if (!out) throw IoError("cannot append to " + p);
    if (fresh) out << "stage,wall_seconds,config_hash\n";
    out << stage_name(s) << ',' << format_double(secs) << ',' << hash_ << '\n';
  }

  const PairedDataset& data() {
    if (!data_) data_ = load_data(cfg_);
    return *data_;
  }

  std::string step1_path() const { return opt_.resume.empty() ? path("step1.ckpt") : opt_.resume; }

  static SpliceModel load_required(const std::string& p, const char* stage) {
    if (!std::filesystem::exists(p))
      throw IoError(std::string("stage ") + stage + " needs " + p + " (run the earlier stages first)");
    return load_checkpoint(p);
  }

  SpliceModel final_model(std::unique_ptr<SpliceModel>& step1_out, const char* stage) const {
    if (cfg_.step2_enabled) {
      step1_out = std::make_unique<SpliceModel>(load_required(step1_path(), stage));
      return load_required(path("step2.ckpt"), stage);
    }
    return load_required(step1_path(), stage);
  }

  void check_model_fits(const SpliceModel& m) {
    const SpliceDims want = dims_for(cfg_, data(), cfg_.model.m_s);
    if (!(m.dims == want)) throw ConfigError("checkpoint dims do not match the config and data");
  }

  void run_stage(Stage s) {
    switch (s) {
      case Stage::Gen: {
        const PairedDataset& d = data();
        if (cfg_.data.write_csv) write_dataset_dir(d, path("data"), hash_);
        break;
      }
      case Stage::Step1: {
        auto [m, trace] = train_step1(cfg_, data(), cfg_.model.m_s, opt_.log);
        save_checkpoint(m, path("step1.ckpt"));
        write_trace_csv(path("trace_step1.csv"), trace, hash_);
        break;
      }
      case Stage::Step2: {
        SpliceModel m = load_required(step1_path(), "step2");
        check_model_fits(m);
        const Step2Config s2 = step2_config(cfg_, opt_.log);
        const GeometryBuild geo = build_geodesic_tables(m, data(), s2);
        for (const auto& [g, idx] : geo.fixed_index)
          say("stage=step2 group=" + std::string(group_name(g)) + " fixed_index=" + std::to_string(idx) +
              " bridges=" + std::to_string(geo.bridges.at(g)));
        const LossTrace trace = step2_train(m, data(), geo.tables, s2);
        save_checkpoint(m, path("step2.ckpt"), geo.tables);
        write_trace_csv(path("trace_step2.csv"), trace, hash_);
        break;
      }
      case Stage::Baselines: {
        std::vector<SaturationRow> rows =
            rrr_rows(data(), cfg_.step1.standardize, cfg_.baselines.rrr_dims, cfg_.baselines.fraction);
        for (std::size_t k : cfg_.baselines.splice_dims) {
          if (k == cfg_.model.m_s && std::filesystem::exists(step1_path())) {
            const SpliceModel base = load_checkpoint(step1_path());
            check_model_fits(base);
            rows.push_back({"splice", k, recon_scores(base, data()).r2()});
            continue;
          }
          say("stage=baselines splice_m_s=" + std::to_string(k));
          auto [m, trace] = train_step1(cfg_, data(), k, opt_.log);
          rows.push_back({"splice", k, recon_scores(m, data()).r2()});
        }
        write_saturation_csv(path("saturation.csv"), rows, hash_);
        break;
      }
      case Stage::Metrics: {
        std::unique_ptr<SpliceModel> before;
        const SpliceModel m = final_model(before, "metrics");
        check_model_fits(m);
        std::vector<SaturationRow> sat;
        if (std::filesystem::exists(path("saturation.csv"))) sat = read_saturation_csv(path("saturation.csv"));
        const MetricsOutput mo = compute_metrics(cfg_, m, data(), before.get(), sat);
        write_metrics_csv(path("metrics.csv"), mo.rows, hash_, cfg_.seed);
        write_angle_curves_csv(path("angle_curves.csv"), mo, hash_);
        write_distances_csv(path("distances.csv"), mo, hash_);
        break;
      }
      case Stage::Export: {
        std::unique_ptr<SpliceModel> before;
        const SpliceModel m = final_model(before, "export");
        check_model_fits(m);
        write_latents_csv(path("latents.csv"), m, data(), hash_);
        if (cfg_.data.source == DataSource::LgnV1) {
          LgnV1Config g = cfg_.data.lgnv1;
          g.seed = SeedPlan(cfg_.seed).data;
          write_receptive_fields_csv(path("receptive_fields.csv"), g, hash_);
        }
        break;
      }
    }
  }

  ExperimentConfig cfg_;
  RunOptions opt_;
  std::string hash_;
  std::string out_;
  std::optional<PairedDataset> data_;
};

}  // namespace splice
