#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "redssl/error.hpp"
#include "redssl/model/mlp.hpp"

namespace redssl::model {

namespace {

using nlohmann::json;

constexpr int kCheckpointVersion = 1;

json flat(const Matrix& m) { return json(std::vector<double>(m.data(), m.data() + m.size())); }

json params_to_json(const ParamSet& p) {
  json out = json::object();
  auto put = [&](const std::vector<Linear>& layers, const std::string& prefix) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      out[prefix + "." + std::to_string(i)] = {{"w", flat(layers[i].weight)}, {"b", flat(layers[i].bias)}};
    }
  };
  put(p.encoder, "encoder");
  put(p.projector, "projector");
  put(p.predictor, "predictor");
  return out;
}

const json& field(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) throw ParseError("checkpoint: missing field '" + where + key + "'");
  return obj.at(key);
}

Matrix read_matrix(const json& arr, Eigen::Index rows, Eigen::Index cols, const std::string& name) {
  if (!arr.is_array()) throw ParseError("checkpoint: field '" + name + "' is not an array");
  if (static_cast<Eigen::Index>(arr.size()) != rows * cols) {
    throw ParseError("checkpoint: field '" + name + "' has " + std::to_string(arr.size()) + " values, spec needs " +
                     std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    const json& v = arr[static_cast<std::size_t>(i)];
    if (!v.is_number()) throw ParseError("checkpoint: field '" + name + "' holds a non-number");
    m.data()[i] = v.get<double>();
  }
  return m;
}

std::vector<Linear> read_stack(const json& params, std::size_t fan_in, const std::vector<std::size_t>& widths,
                               bool bias, const std::string& prefix, const std::string& where) {
  std::vector<Linear> out;
  std::size_t in = fan_in;
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string name = prefix + "." + std::to_string(i);
    const json& layer = field(params, name, where);
    const auto rows = static_cast<Eigen::Index>(in);
    const auto cols = static_cast<Eigen::Index>(widths[i]);
    out.push_back({read_matrix(field(layer, "w", where + name + "."), rows, cols, where + name + ".w"),
                   read_matrix(field(layer, "b", where + name + "."), 1, bias ? cols : 0, where + name + ".b")});
    in = widths[i];
  }
  return out;
}

ParamSet read_params(const json& params, const MlpSpec& spec, bool with_predictor, const std::string& where) {
  ParamSet p;
  p.encoder = read_stack(params, spec.input_dim, spec.encoder_layers, spec.bias, "encoder", where);
  p.projector = read_stack(params, spec.representation_dim(), spec.projector_layers, spec.bias, "projector", where);
  if (with_predictor) p.predictor = read_stack(params, spec.projection_dim(), spec.predictor_layers, spec.bias, "predictor", where);
  return p;
}

std::vector<std::size_t> widths(const json& spec, const std::string& key) {
  const json& arr = field(spec, key, "spec.");
  if (!arr.is_array()) throw ParseError("checkpoint: field 'spec." + key + "' is not an array");
  return arr.get<std::vector<std::size_t>>();
}

}  // namespace

std::string checkpoint_to_string(const SslModel& model) {
  json doc;
  doc["version"] = kCheckpointVersion;
  doc["spec"] = {{"input_dim", model.spec.input_dim},
                 {"encoder_layers", model.spec.encoder_layers},
                 {"projector_layers", model.spec.projector_layers},
                 {"predictor_layers", model.spec.predictor_layers},
                 {"bias", model.spec.bias}};
  doc["params"] = params_to_json(model.online);
  if (model.momentum) doc["momentum_params"] = params_to_json(*model.momentum);
  if (model.queue) {
    json rows = json::array();
    const Matrix q = model.queue->negatives();
    for (Eigen::Index r = 0; r < q.rows(); ++r) rows.push_back(flat(q.row(r)));
    doc["queue"] = {{"capacity", model.queue->capacity()}, {"rows", rows}};
  }
  return doc.dump(1) + "\n";
}

SslModel checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  const json& version = field(doc, "version", "");
  if (!version.is_number_integer() || version.get<int>() != kCheckpointVersion) {
    throw ParseError("checkpoint: field 'version' must be " + std::to_string(kCheckpointVersion));
  }
  const json& spec_json = field(doc, "spec", "");
  SslModel m;
  try {
    m.spec.input_dim = field(spec_json, "input_dim", "spec.").get<std::size_t>();
    m.spec.encoder_layers = widths(spec_json, "encoder_layers");
    m.spec.projector_layers = widths(spec_json, "projector_layers");
    m.spec.predictor_layers = widths(spec_json, "predictor_layers");
    m.spec.bias = field(spec_json, "bias", "spec.").get<bool>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: malformed field in 'spec': ") + e.what());
  }
  try {
    m.spec.validate();
  } catch (const ConfigError& e) {
    throw ParseError(std::string("checkpoint: field 'spec' invalid: ") + e.what());
  }
  m.online = read_params(field(doc, "params", ""), m.spec, true, "params.");
  if (doc.contains("momentum_params")) {
    m.momentum = read_params(doc.at("momentum_params"), m.spec, false, "momentum_params.");
  }
  if (doc.contains("queue")) {
    const json& q = doc.at("queue");
    const auto capacity = field(q, "capacity", "queue.").get<std::size_t>();
    m.queue.emplace(capacity, m.spec.projection_dim());
    const json& rows = field(q, "rows", "queue.");
    if (!rows.is_array() || rows.size() > capacity) throw ParseError("checkpoint: field 'queue.rows' invalid");
    for (std::size_t r = 0; r < rows.size(); ++r) {
      m.queue->push(read_matrix(rows[r], 1, static_cast<Eigen::Index>(m.spec.projection_dim()),
                                "queue.rows[" + std::to_string(r) + "]"));
    }
  }
  return m;
}

void save_checkpoint(const SslModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  out << checkpoint_to_string(model);
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

SslModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace redssl::model
