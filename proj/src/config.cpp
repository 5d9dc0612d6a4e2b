#include "fedseq/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace fedseq {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front()) {
    return s.substr(1, s.size() - 2);
  }
  return s;
}

// strips a trailing comment that is not inside quotes
std::string strip_comment(const std::string& line) {
  char quote = 0;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quote) {
      if (c == quote) quote = 0;
    } else if (c == '"' || c == '\'') {
      quote = c;
    } else if (c == '#') {
      return line.substr(0, i);
    }
  }
  return line;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  unsigned long long out = 0;
  try {
    if (!v.empty() && v.front() == '-') throw std::invalid_argument("negative");
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("key '" + key + "': expected a non-negative integer, got '" + v + "'");
  return static_cast<std::size_t>(out);
}

double parse_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::size_t> parse_size_list(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<std::size_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    out.push_back(parse_size(key, item));
  }
  return out;
}

template <typename Enum>
Enum parse_choice(const std::string& key, const std::string& v, const std::vector<std::pair<std::string, Enum>>& opts) {
  for (const auto& [name, value] : opts)
    if (name == v) return value;
  std::string valid;
  for (const auto& o : opts) valid += (valid.empty() ? "" : ", ") + o.first;
  throw ConfigError("key '" + key + "': unknown value '" + v + "' (valid: " + valid + ")");
}

template <typename Enum>
std::string choice_name(Enum v, const std::vector<std::pair<std::string, Enum>>& opts) {
  for (const auto& [name, value] : opts)
    if (value == v) return name;
  return "?";
}

const std::vector<std::pair<std::string, Algorithm>> kAlgorithms{
    {"centralized", Algorithm::centralized},   {"fedavg", Algorithm::fedavg},
    {"fedprox", Algorithm::fedprox},           {"feddyn", Algorithm::feddyn},
    {"fedseq", Algorithm::fedseq},             {"fedseqinter", Algorithm::fedseqinter},
    {"fedseq+prox", Algorithm::fedseq_prox},   {"fedseq+dyn", Algorithm::fedseq_dyn},
    {"fedseqinter+prox", Algorithm::fedseqinter_prox}, {"fedseqinter+dyn", Algorithm::fedseqinter_dyn},
};
const std::vector<std::pair<std::string, Architecture>> kArchs{{"mlp", Architecture::mlp},
                                                                {"small-cnn", Architecture::small_cnn}};
const std::vector<std::pair<std::string, ApproximatorKind>> kApprox{
    {"conf", ApproximatorKind::conf}, {"clf", ApproximatorKind::clf}, {"oracle", ApproximatorKind::oracle}};
const std::vector<std::pair<std::string, ConfidenceMode>> kConfModes{
    {"global-mean", ConfidenceMode::global_mean}, {"per-class-diag", ConfidenceMode::per_class_diag}};
const std::vector<std::pair<std::string, ClassifierMode>> kClfModes{
    {"all", ClassifierMode::all}, {"last2", ClassifierMode::last2}, {"last", ClassifierMode::last}};
const std::vector<std::pair<std::string, Metric>> kMetrics{{"cosine", Metric::cosine},
                                                           {"euclidean", Metric::euclidean},
                                                           {"wasserstein", Metric::wasserstein},
                                                           {"kl", Metric::kl},
                                                           {"gini", Metric::gini}};
const std::vector<std::pair<std::string, GroupingMethod>> kMethods{
    {"random", GroupingMethod::random}, {"kmeans", GroupingMethod::kmeans}, {"greedy", GroupingMethod::greedy}};

struct KeyHandler {
  std::function<void(ExperimentConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (auto x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
  return s;
}

#define SIZE_KEY(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = parse_size(k, v); }, \
   [](const ExperimentConfig& c) { return std::to_string(c.field); }}
#define DOUBLE_KEY(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = parse_double(k, v); }, \
   [](const ExperimentConfig& c) { return format_double(c.field); }}
#define BOOL_KEY(field) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = parse_bool(k, v); }, \
   [](const ExperimentConfig& c) { return std::string(c.field ? "true" : "false"); }}
#define STRING_KEY(field) \
  {[](ExperimentConfig& c, const std::string&, const std::string& v) { c.field = v; }, \
   [](const ExperimentConfig& c) { return c.field; }}
#define CHOICE_KEY(field, table) \
  {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.field = parse_choice(k, v, table); }, \
   [](const ExperimentConfig& c) { return choice_name(c.field, table); }}

const std::map<std::string, KeyHandler>& handlers() {
  static const std::map<std::string, KeyHandler> table{
      {"preset", STRING_KEY(preset)},
      {"seed", {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.seed = parse_size(k, v); },
                [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
      {"data.source", STRING_KEY(data_source)},
      {"data.cifar_path", STRING_KEY(cifar_path)},
      {"data.num_classes", SIZE_KEY(num_classes)},
      {"data.train_per_class", SIZE_KEY(train_per_class)},
      {"data.test_per_class", SIZE_KEY(test_per_class)},
      {"data.dim", SIZE_KEY(dim)},
      {"data.separation", DOUBLE_KEY(separation)},
      {"partition.clients", SIZE_KEY(clients)},
      {"partition.alpha", DOUBLE_KEY(alpha)},
      {"model.arch", CHOICE_KEY(arch, kArchs)},
      {"model.hidden",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.hidden = parse_size_list(k, v); },
        [](const ExperimentConfig& c) { return join_sizes(c.hidden); }}},
      {"model.conv_filters", SIZE_KEY(conv_filters)},
      {"model.image_channels", SIZE_KEY(image.channels)},
      {"model.image_height", SIZE_KEY(image.height)},
      {"model.image_width", SIZE_KEY(image.width)},
      {"train.algorithm", CHOICE_KEY(algorithm, kAlgorithms)},
      {"train.rounds", SIZE_KEY(rounds)},
      {"train.fraction", DOUBLE_KEY(fraction)},
      {"train.local_epochs", SIZE_KEY(local_epochs)},
      {"train.superclient_epochs", SIZE_KEY(superclient_epochs)},
      {"train.lr", DOUBLE_KEY(hyper.lr)},
      {"train.momentum", DOUBLE_KEY(hyper.momentum)},
      {"train.weight_decay", DOUBLE_KEY(hyper.weight_decay)},
      {"train.batch_size", SIZE_KEY(hyper.batch_size)},
      {"train.mu",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.mu = parse_double(k, v); },
        [](const ExperimentConfig& c) { return format_double(c.resolved_mu()); }}},
      {"train.alpha_dyn",
       {[](ExperimentConfig& c, const std::string& k, const std::string& v) { c.alpha_dyn = parse_double(k, v); },
        [](const ExperimentConfig& c) { return format_double(c.resolved_alpha_dyn()); }}},
      {"train.threads", SIZE_KEY(threads)},
      {"centralized.epochs", SIZE_KEY(centralized_epochs)},
      {"centralized.lr", DOUBLE_KEY(centralized_lr)},
      {"centralized.momentum", DOUBLE_KEY(centralized_momentum)},
      {"grouping.method", CHOICE_KEY(grouping.method, kMethods)},
      {"grouping.metric", CHOICE_KEY(grouping.metric, kMetrics)},
      {"grouping.min_samples", SIZE_KEY(grouping.min_samples)},
      {"grouping.max_clients", SIZE_KEY(grouping.max_clients)},
      {"approximator.kind", CHOICE_KEY(approximator, kApprox)},
      {"approximator.pretrain_epochs", SIZE_KEY(pretrain_epochs)},
      {"approximator.exemplars_per_class", SIZE_KEY(exemplars_per_class)},
      {"approximator.conf_mode", CHOICE_KEY(conf_mode, kConfModes)},
      {"approximator.clf_mode", CHOICE_KEY(clf_mode, kClfModes)},
      {"approximator.explained_variance", DOUBLE_KEY(explained_variance)},
      {"output.dir", STRING_KEY(output_dir)},
      {"output.wall_time", BOOL_KEY(wall_time)},
      {"output.checkpoints", BOOL_KEY(checkpoints)},
      {"report.window", SIZE_KEY(target_window)},
  };
  return table;
}

#undef SIZE_KEY
#undef DOUBLE_KEY
#undef BOOL_KEY
#undef STRING_KEY
#undef CHOICE_KEY

std::string valid_keys_message() {
  std::string s;
  for (const auto& k : valid_config_keys()) s += (s.empty() ? "" : ", ") + k;
  return s;
}

void validate(const ExperimentConfig& c) {
  if (c.clients == 0) throw ConfigError("partition.clients must be >= 1");
  if (c.alpha < 0.0) throw ConfigError("partition.alpha must be >= 0");
  if (c.num_classes < 2) throw ConfigError("data.num_classes must be >= 2");
  if (c.data_source != "synthetic" && c.data_source != "cifar10") {
    throw ConfigError("data.source must be 'synthetic' or 'cifar10', got '" + c.data_source + "'");
  }
  if (c.data_source == "synthetic" && !(c.separation > 0.0)) throw ConfigError("data.separation must be > 0");
  if (!(c.fraction > 0.0 && c.fraction <= 1.0)) throw ConfigError("train.fraction must lie in (0, 1]");
  if (c.rounds == 0) throw ConfigError("train.rounds must be >= 1");
  if (c.local_epochs == 0 || c.superclient_epochs == 0) throw ConfigError("epoch counts must be >= 1");
  if (c.hyper.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (c.hyper.lr < 0.0 || c.centralized_lr < 0.0) throw ConfigError("learning rates must be >= 0");
  if (!(c.hyper.momentum >= 0.0 && c.hyper.momentum < 1.0) ||
      !(c.centralized_momentum >= 0.0 && c.centralized_momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (c.grouping.min_samples == 0 || c.grouping.max_clients == 0) {
    throw ConfigError("grouping.min_samples and grouping.max_clients must be >= 1");
  }
  if (c.pretrain_epochs == 0) throw ConfigError("approximator.pretrain_epochs must be >= 1");
  if (c.exemplars_per_class == 0) throw ConfigError("approximator.exemplars_per_class must be >= 1");
  if (!(c.explained_variance > 0.0 && c.explained_variance <= 1.0)) {
    throw ConfigError("approximator.explained_variance must lie in (0, 1]");
  }
  if (c.resolved_mu() < 0.0) throw ConfigError("train.mu must be >= 0");
  if (!(c.resolved_alpha_dyn() > 0.0)) throw ConfigError("train.alpha_dyn must be > 0");
  if (c.target_window == 0) throw ConfigError("report.window must be >= 1");
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap out;
  std::stringstream ss(text);
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out[key] = unquote(trim(line.substr(eq + 1)));
  }
  return out;
}

ConfigMap read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_overrides(ConfigMap& map, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form key=value");
    map[trim(o.substr(0, eq))] = unquote(trim(o.substr(eq + 1)));
  }
}

std::string to_string(Algorithm a) { return choice_name(a, kAlgorithms); }

Algorithm parse_algorithm(const std::string& s) { return parse_choice("train.algorithm", s, kAlgorithms); }

bool uses_superclients(Algorithm a) {
  switch (a) {
    case Algorithm::fedseq:
    case Algorithm::fedseqinter:
    case Algorithm::fedseq_prox:
    case Algorithm::fedseq_dyn:
    case Algorithm::fedseqinter_prox:
    case Algorithm::fedseqinter_dyn:
      return true;
    default:
      return false;
  }
}

double ExperimentConfig::resolved_mu() const {
  if (mu) return *mu;
  return algorithm == Algorithm::fedseqinter_prox ? 1.0 : 0.01;
}

double ExperimentConfig::resolved_alpha_dyn() const {
  if (alpha_dyn) return *alpha_dyn;
  return algorithm == Algorithm::fedseqinter_dyn ? 1.0 : 0.1;
}

ModelSpec ExperimentConfig::model_spec() const {
  ModelSpec spec;
  spec.arch = arch;
  spec.hidden = hidden;
  spec.num_classes = num_classes;
  spec.conv_filters = conv_filters;
  if (data_source == "cifar10") {
    spec.input_dim = kCifarPixels;
    spec.image = {3, 32, 32};
  } else {
    spec.input_dim = dim;
    spec.image = image;
  }
  return spec;
}

const std::vector<std::string>& valid_config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& [name, _] : handlers()) k.push_back(name);
    return k;
  }();
  return keys;
}

ConfigMap preset_values(const std::string& name) {
  if (name == "desk-synth") {
    // defaults of ExperimentConfig are the desk-synth preset
    return {};
  }
  if (name == "paper-cifar10") {
    return {
        {"data.source", "cifar10"},
        {"data.cifar_path", "data/cifar-10-batches-bin"},
        {"data.num_classes", "10"},
        {"partition.clients", "500"},
        {"model.arch", "small-cnn"},
        {"model.hidden", "120,84"},
        {"model.conv_filters", "6"},
        {"train.rounds", "10000"},
        {"centralized.epochs", "300"},
        {"grouping.min_samples", "800"},
        {"grouping.max_clients", "11"},
    };
  }
  throw ConfigError("unknown preset '" + name + "' (valid: desk-synth, paper-cifar10)");
}

std::string canonical_key(const std::string& key) {
  if (handlers().contains(key)) return key;
  // a bare name such as "algorithm" stands for the single dotted key ending in it
  std::string match;
  for (const auto& [name, _] : handlers()) {
    if (name.size() > key.size() && name.ends_with("." + key)) {
      if (!match.empty()) throw ConfigError("config key '" + key + "' is ambiguous ('" + match + "', '" + name + "')");
      match = name;
    }
  }
  if (match.empty()) throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid_keys_message());
  return match;
}

ExperimentConfig resolve_config(const ConfigMap& raw) {
  ConfigMap map;
  for (const auto& [key, value] : raw) map[canonical_key(key)] = value;
  ExperimentConfig cfg;
  const auto preset = map.contains("preset") ? map.at("preset") : std::string("desk-synth");
  ConfigMap merged = preset_values(preset);
  merged["preset"] = preset;
  for (const auto& [k, v] : map) merged[k] = v;
  // algorithm first: mu / alpha_dyn defaults depend on it
  if (merged.contains("train.algorithm")) handlers().at("train.algorithm").set(cfg, "train.algorithm", merged["train.algorithm"]);
  for (const auto& [k, v] : merged) handlers().at(k).set(cfg, k, v);
  cfg.grouping.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

ConfigMap to_config_map(const ExperimentConfig& config) {
  ConfigMap out;
  for (const auto& [k, h] : handlers()) out[k] = h.get(config);
  return out;
}

}  // namespace fedseq
