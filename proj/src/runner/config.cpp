#include "redssl/runner/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "redssl/error.hpp"

namespace redssl::runner {

namespace {

using nlohmann::json;

json sizes_json(const std::vector<std::size_t>& v) { return json(v); }

json component_json(const data::MixtureComponent& c) {
  json cov = json::array();
  for (Eigen::Index r = 0; r < c.covariance.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index k = 0; k < c.covariance.cols(); ++k) row.push_back(c.covariance(r, k));
    cov.push_back(row);
  }
  return {{"mean", c.mean}, {"covariance", cov}, {"label", c.label}};
}

json to_json(const TrainConfig& c, bool tau_resolved) {
  json components = json::array();
  for (const auto& comp : c.data.components) components.push_back(component_json(comp));
  const auto& l = c.loss;
  const auto& o = c.optimizer;
  return {
      {"version", kConfigVersion},
      {"seed", c.seed},
      {"data",
       {{"source", c.data.source},
        {"samples_per_class", c.data.samples_per_class},
        {"components", components},
        {"path", c.data.path}}},
      {"model",
       {{"input_dim", c.model.input_dim},
        {"encoder_layers", sizes_json(c.model.encoder_layers)},
        {"projector_layers", sizes_json(c.model.projector_layers)},
        {"predictor_layers", sizes_json(c.model.predictor_layers)},
        {"bias", c.model.bias}}},
      {"loss",
       {{"method", std::string(objectives::method_name(l.method))},
        {"tau", tau_resolved ? json(l.tau) : json(nullptr)},
        {"red", l.red_enabled},
        {"eta", l.eta},
        {"k_percent", l.k_percent},
        {"detach_weights", l.detach_weights},
        {"symmetrize", l.symmetrize},
        {"include_self", l.include_self},
        {"raw_representation_products", l.raw_representation_products},
        {"symmetric_weights", l.symmetric_weights}}},
      {"optimizer",
       {{"kind", std::string(objectives::optimizer_name(o.kind))},
        {"lr", o.lr},
        {"momentum", o.momentum},
        {"beta1", o.beta1},
        {"beta2", o.beta2},
        {"epsilon", o.epsilon},
        {"weight_decay", o.weight_decay}}},
      {"epochs", c.epochs},
      {"batch_size", c.batch_size},
      {"sigma_eps", c.sigma_eps},
      {"eval_every", c.eval_every},
      {"holdout_fraction", c.holdout_fraction},
      {"knn_k", c.knn_k},
      {"momentum_coefficient", c.momentum_coefficient},
      {"queue_capacity", c.queue_capacity},
      {"output_dir", c.output_dir},
  };
}

// Copies src into dst; every key of src must already exist in dst.
void strict_merge(json& dst, const json& src, const std::string& prefix) {
  if (!src.is_object()) throw ConfigError("config: '" + (prefix.empty() ? "<root>" : prefix) + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!dst.contains(key)) throw ConfigError("config: unknown field '" + path + "'");
    json& slot = dst[key];
    if (slot.is_object()) {
      strict_merge(slot, value, path);
    } else {
      slot = value;
    }
  }
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (!node->is_object() || !node->contains(part)) throw ConfigError("--set: unknown field '" + key + "'");
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  if (node->is_object()) throw ConfigError("--set: '" + key + "' names a section, not a field");
  *node = value;
}

std::string path_of(const std::string& section, const char* key) {
  return section.empty() ? std::string(key) : section + "." + key;
}

double get_double(const json& obj, const std::string& section, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError("config: '" + path_of(section, key) + "' must be a number");
  return v.get<double>();
}

std::size_t get_size(const json& obj, const std::string& section, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError("config: '" + path_of(section, key) + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool get_bool(const json& obj, const std::string& section, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_boolean()) throw ConfigError("config: '" + path_of(section, key) + "' must be true or false");
  return v.get<bool>();
}

std::string get_string(const json& obj, const std::string& section, const char* key) {
  const json& v = obj.at(key);
  if (!v.is_string()) throw ConfigError("config: '" + path_of(section, key) + "' must be a string");
  return v.get<std::string>();
}

std::vector<std::size_t> get_sizes(const json& obj, const std::string& section, const char* key) {
  const json& v = obj.at(key);
  const std::string p = path_of(section, key);
  if (!v.is_array()) throw ConfigError("config: '" + p + "' must be an array of positive integers");
  std::vector<std::size_t> out;
  for (const json& e : v) {
    if (!e.is_number_unsigned()) throw ConfigError("config: '" + p + "' must be an array of positive integers");
    out.push_back(e.get<std::size_t>());
  }
  return out;
}

data::MixtureComponent parse_component(const json& j, std::size_t index) {
  const std::string p = "data.components[" + std::to_string(index) + "]";
  if (!j.is_object() || !j.contains("mean") || !j.contains("covariance")) {
    throw ConfigError("config: '" + p + "' needs 'mean' and 'covariance'");
  }
  data::MixtureComponent c;
  for (const json& m : j.at("mean")) {
    if (!m.is_number()) throw ConfigError("config: '" + p + ".mean' must be numeric");
    c.mean.push_back(m.get<double>());
  }
  const json& cov = j.at("covariance");
  if (!cov.is_array()) throw ConfigError("config: '" + p + ".covariance' must be a matrix");
  const auto rows = static_cast<Eigen::Index>(cov.size());
  c.covariance = data::Matrix::Zero(rows, rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const json& row = cov[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != rows) {
      throw ConfigError("config: '" + p + ".covariance' must be square");
    }
    for (Eigen::Index k = 0; k < rows; ++k) {
      const json& v = row[static_cast<std::size_t>(k)];
      if (!v.is_number()) throw ConfigError("config: '" + p + ".covariance' must be numeric");
      c.covariance(r, k) = v.get<double>();
    }
  }
  if (j.contains("label")) {
    if (!j.at("label").is_number_integer()) throw ConfigError("config: '" + p + ".label' must be an integer");
    c.label = j.at("label").get<int>();
  } else {
    c.label = static_cast<int>(index);
  }
  return c;
}

TrainConfig from_json(const json& doc) {
  TrainConfig c;
  if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() != kConfigVersion) {
    throw ConfigError("config: unsupported version " + doc.at("version").dump() + " (expected " +
                      std::to_string(kConfigVersion) + ")");
  }
  if (!doc.at("seed").is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
  c.seed = doc.at("seed").get<std::uint64_t>();

  const json& d = doc.at("data");
  c.data.source = get_string(d, "data", "source");
  c.data.samples_per_class = get_size(d, "data", "samples_per_class");
  c.data.path = get_string(d, "data", "path");
  if (!d.at("components").is_array()) throw ConfigError("config: 'data.components' must be an array");
  for (std::size_t i = 0; i < d.at("components").size(); ++i) {
    c.data.components.push_back(parse_component(d.at("components")[i], i));
  }

  const json& m = doc.at("model");
  c.model.input_dim = get_size(m, "model", "input_dim");
  c.model.encoder_layers = get_sizes(m, "model", "encoder_layers");
  c.model.projector_layers = get_sizes(m, "model", "projector_layers");
  c.model.predictor_layers = get_sizes(m, "model", "predictor_layers");
  c.model.bias = get_bool(m, "model", "bias");

  const json& l = doc.at("loss");
  c.loss.method = objectives::parse_method(get_string(l, "loss", "method"));
  if (l.at("tau").is_null()) {
    c.loss.tau = c.loss.method == objectives::Method::NonContrastive ? 1.0 : 0.5;
  } else {
    c.loss.tau = get_double(l, "loss", "tau");
  }
  c.loss.red_enabled = get_bool(l, "loss", "red");
  c.loss.eta = get_double(l, "loss", "eta");
  c.loss.k_percent = get_double(l, "loss", "k_percent");
  c.loss.detach_weights = get_bool(l, "loss", "detach_weights");
  c.loss.symmetrize = get_bool(l, "loss", "symmetrize");
  c.loss.include_self = get_bool(l, "loss", "include_self");
  c.loss.raw_representation_products = get_bool(l, "loss", "raw_representation_products");
  c.loss.symmetric_weights = get_bool(l, "loss", "symmetric_weights");

  const json& o = doc.at("optimizer");
  c.optimizer.kind = objectives::parse_optimizer(get_string(o, "optimizer", "kind"));
  c.optimizer.lr = get_double(o, "optimizer", "lr");
  c.optimizer.momentum = get_double(o, "optimizer", "momentum");
  c.optimizer.beta1 = get_double(o, "optimizer", "beta1");
  c.optimizer.beta2 = get_double(o, "optimizer", "beta2");
  c.optimizer.epsilon = get_double(o, "optimizer", "epsilon");
  c.optimizer.weight_decay = get_double(o, "optimizer", "weight_decay");

  c.epochs = get_size(doc, "", "epochs");
  c.batch_size = get_size(doc, "", "batch_size");
  c.sigma_eps = get_double(doc, "", "sigma_eps");
  c.eval_every = get_size(doc, "", "eval_every");
  c.holdout_fraction = get_double(doc, "", "holdout_fraction");
  c.knn_k = get_size(doc, "", "knn_k");
  c.momentum_coefficient = get_double(doc, "", "momentum_coefficient");
  c.queue_capacity = get_size(doc, "", "queue_capacity");
  c.output_dir = get_string(doc, "", "output_dir");
  return c;
}

TrainConfig resolve(const json& user, const std::vector<std::string>& overrides,
                    std::optional<std::uint64_t> fallback_seed) {
  json doc = to_json(TrainConfig{}, false);
  strict_merge(doc, user, "");
  if (!user.contains("seed") && fallback_seed) doc["seed"] = *fallback_seed;
  for (const auto& o : overrides) apply_override(doc, o);
  TrainConfig c = from_json(doc);
  c.validate();
  return c;
}

}  // namespace

data::GaussianMixtureSpec DataConfig::mixture_spec() const {
  data::GaussianMixtureSpec spec = data::GaussianMixtureSpec::three_cluster(samples_per_class);
  if (!components.empty()) spec.components = components;
  return spec;
}

void TrainConfig::validate() const {
  if (data.source == "mixture") {
    if (data.samples_per_class == 0) throw ConfigError("config: data.samples_per_class must be >= 1");
    data.mixture_spec().validate();
  } else if (data.source == "csv") {
    if (data.path.empty()) throw ConfigError("config: data.path is required for csv data");
  } else {
    throw ConfigError("config: data.source must be 'mixture' or 'csv', got '" + data.source + "'");
  }
  model.validate();
  loss.validate();
  optimizer.validate();
  if (epochs < 1) throw ConfigError("config: epochs must be >= 1");
  if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
  if (!(sigma_eps >= 0.0)) throw ConfigError("config: sigma_eps must be >= 0");
  if (eval_every < 1) throw ConfigError("config: eval_every must be >= 1");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw ConfigError("config: holdout_fraction must lie in (0, 1)");
  }
  if (knn_k < 1) throw ConfigError("config: knn_k must be >= 1");
  if (!(momentum_coefficient >= 0.0 && momentum_coefficient <= 1.0)) {
    throw ConfigError("config: momentum_coefficient must lie in [0, 1]");
  }
  if (loss.method == objectives::Method::InfoNceMomentumQueue && queue_capacity < 1) {
    throw ConfigError("config: queue_capacity must be >= 1 for the momentum method");
  }
}

TrainConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides,
                         std::optional<std::uint64_t> fallback_seed) {
  json user = json::parse(json_text, nullptr, false);
  if (user.is_discarded()) throw ConfigError("config: not valid JSON");
  return resolve(user, overrides, fallback_seed);
}

TrainConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  try {
    return parse_config(buf.str(), overrides, env_seed());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

TrainConfig default_config(const std::vector<std::string>& overrides) {
  return resolve(json::object(), overrides, env_seed());
}

std::optional<std::uint64_t> env_seed() {
  const char* raw = std::getenv("RED_SSL_SEED");
  if (raw == nullptr || *raw == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(raw, &end, 10);
  if (*end != '\0' || raw[0] == '-') throw ConfigError("RED_SSL_SEED must be a non-negative integer");
  return static_cast<std::uint64_t>(v);
}

std::string config_to_string(const TrainConfig& config) { return to_json(config, true).dump(2) + "\n"; }

data::Dataset load_dataset(const DataConfig& config, std::uint64_t seed) {
  if (config.source == "csv") return data::load_csv(config.path);
  return data::generate_mixture(config.mixture_spec(), seed);
}

}  // namespace redssl::runner
