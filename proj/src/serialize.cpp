#include "cmde/serialize.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace cmde {

std::string format_double(double value) {
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view text, std::string_view where) {
  while (!text.empty() && text.front() == ' ') text.remove_prefix(1);
  while (!text.empty() && text.back() == ' ') text.remove_suffix(1);
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (!text.empty() && text.front() == '+') ++first;
  const auto res = std::from_chars(first, last, value);
  if (text.empty() || res.ec != std::errc() || res.ptr != last) {
    throw Error(ErrorKind::kParseError,
                std::string(where) + ": cannot parse '" + std::string(text) + "' as a number");
  }
  return value;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIoError, "cannot open '" + path + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIoError, "cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error(ErrorKind::kIoError, "failed writing '" + path + "'");
}

Json read_json_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorKind::kParseError, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& doc) {
  write_text_file(path, doc.dump(2) + "\n");
}

void write_matrix_csv(const std::string& path, const std::vector<std::string>& header,
                      const DenseMatrix& values) {
  if (header.size() != values.cols()) {
    throw Error(ErrorKind::kDimensionMismatch, "csv header and matrix widths differ");
  }
  std::string out;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j) out += ',';
    out += header[j];
  }
  out += '\n';
  for (std::size_t i = 0; i < values.rows(); ++i) {
    for (std::size_t j = 0; j < values.cols(); ++j) {
      if (j) out += ',';
      out += format_double(values(i, j));
    }
    out += '\n';
  }
  write_text_file(path, out);
}

namespace {

template <class T>
T field(const Json& doc, const char* name) {
  if (!doc.is_object() || !doc.contains(name)) {
    throw Error(ErrorKind::kSchemaError, std::string("missing field '") + name + "'");
  }
  try {
    return doc.at(name).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::kSchemaError, std::string("field '") + name + "': " + e.what());
  }
}

template <class T>
T field_or(const Json& doc, const char* name, T fallback) {
  if (!doc.is_object() || !doc.contains(name)) return fallback;
  return field<T>(doc, name);
}

}  // namespace

Json to_json(const MlpNetwork& net) {
  Json doc;
  doc["version"] = kFormatVersion;
  doc["widths"] = net.widths();
  doc["activation"] = std::string(to_string(net.activation()));
  doc["prior_variance"] = net.prior_variance();
  doc["init_mode"] = std::string(to_string(net.init_mode()));
  doc["parameters"] = net.flat_parameters();
  return doc;
}

MlpNetwork network_from_json(const Json& doc) {
  auto widths = field<std::vector<std::size_t>>(doc, "widths");
  const Activation act = parse_activation(field<std::string>(doc, "activation"));
  const double s2 = field<double>(doc, "prior_variance");
  const InitMode mode = parse_init_mode(field_or<std::string>(doc, "init_mode", "nngp"));
  validate_widths(widths, s2);
  std::vector<Layer> layers;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    layers.push_back({DenseMatrix(widths[l + 1], widths[l]), std::vector<double>(widths[l + 1])});
  }
  MlpNetwork net(std::move(widths), act, s2, mode, std::move(layers));
  const auto params = field<std::vector<double>>(doc, "parameters");
  if (params.size() != net.parameter_count()) {
    throw Error(ErrorKind::kSchemaError, "network parameter count does not match widths");
  }
  net.set_flat_parameters(params);
  return net;
}

Json to_json(const CoregionalizationSpec& spec) {
  Json doc;
  doc["variant"] = std::string(to_string(spec.variant));
  doc["components"] = spec.components;
  doc["treatments"] = spec.treatments;
  doc["coefficients"] = spec.coefficients;
  return doc;
}

CoregionalizationSpec spec_from_json(const Json& doc) {
  CoregionalizationSpec spec;
  spec.variant = parse_variant(field<std::string>(doc, "variant"));
  spec.components = field_or<std::size_t>(doc, "components", 1);
  spec.treatments = field_or<std::size_t>(doc, "treatments", 2);
  spec.coefficients = field<std::vector<double>>(doc, "coefficients");
  validate(spec);
  return spec;
}

Json to_json(const NetworkArchitecture& arch) {
  Json doc;
  doc["hidden_widths"] = arch.hidden_widths;
  doc["activation"] = std::string(to_string(arch.activation));
  doc["prior_variance"] = arch.prior_variance;
  doc["init_mode"] = std::string(to_string(arch.init_mode));
  return doc;
}

NetworkArchitecture architecture_from_json(const Json& doc) {
  NetworkArchitecture arch;
  arch.hidden_widths = field_or(doc, "hidden_widths", arch.hidden_widths);
  arch.activation = parse_activation(field_or<std::string>(doc, "activation", "relu"));
  arch.prior_variance = field_or(doc, "prior_variance", arch.prior_variance);
  arch.init_mode = parse_init_mode(field_or<std::string>(doc, "init_mode", "nngp"));
  return arch;
}

Json to_json(const ModalityPlan& plan) {
  Json doc;
  doc["block_dims"] = plan.block_dims;
  doc["fusion_dim"] = plan.fusion_dim;
  return doc;
}

ModalityPlan modality_plan_from_json(const Json& doc) {
  ModalityPlan plan;
  plan.block_dims = field<std::vector<std::size_t>>(doc, "block_dims");
  plan.fusion_dim = field_or<std::size_t>(doc, "fusion_dim", 16);
  return plan;
}

Json to_json(const TrainingConfig& config) {
  Json doc;
  doc["learning_rate"] = config.learning_rate;
  doc["epochs"] = config.epochs;
  doc["batch_size"] = config.batch_size;
  doc["weight_decay"] = config.weight_decay;
  doc["variance_weight"] = config.variance_weight;
  doc["mode"] = std::string(to_string(config.mode));
  return doc;
}

TrainingConfig training_config_from_json(const Json& doc) {
  TrainingConfig c;
  c.learning_rate = field_or(doc, "learning_rate", c.learning_rate);
  c.epochs = field_or(doc, "epochs", c.epochs);
  c.batch_size = field_or(doc, "batch_size", c.batch_size);
  c.weight_decay = field_or(doc, "weight_decay", c.weight_decay);
  c.variance_weight = field_or(doc, "variance_weight", c.variance_weight);
  c.mode = parse_training_mode(field_or<std::string>(doc, "mode", "joint"));
  return c;
}

Json to_json(const Baselearner& learner) {
  Json doc;
  doc["version"] = kFormatVersion;
  doc["spec"] = to_json(learner.spec());
  doc["input_dim"] = learner.input_dim();
  doc["modality_plan"] = learner.modality_plan() ? to_json(*learner.modality_plan()) : Json();
  doc["components"] = Json::array();
  const auto& info = learner.layout().components;
  for (std::size_t k = 0; k < info.size(); ++k) {
    Json comp;
    comp["name"] = info[k].name;
    comp["encoders"] = Json::array();
    for (const auto& net : learner.components()[k].encoders) comp["encoders"].push_back(to_json(net));
    doc["components"].push_back(comp);
  }
  return doc;
}

Baselearner baselearner_from_json(const Json& doc) {
  CoregionalizationSpec spec = spec_from_json(field<Json>(doc, "spec"));
  const auto input_dim = field<std::size_t>(doc, "input_dim");
  std::optional<ModalityPlan> plan;
  if (doc.contains("modality_plan") && !doc.at("modality_plan").is_null()) {
    plan = modality_plan_from_json(doc.at("modality_plan"));
  }
  std::vector<Component> components;
  for (const auto& comp : field<Json>(doc, "components")) {
    Component c;
    for (const auto& net : field<Json>(comp, "encoders")) c.encoders.push_back(network_from_json(net));
    components.push_back(std::move(c));
  }
  return Baselearner(std::move(spec), std::move(components), std::move(plan), input_dim);
}

Json to_json(const Cmde& cmde) {
  Json doc;
  doc["version"] = kFormatVersion;
  doc["config"] = to_json(cmde.config());
  doc["learners"] = Json::array();
  for (const auto& bl : cmde.learners()) doc["learners"].push_back(to_json(bl));
  return doc;
}

Cmde cmde_from_json(const Json& doc) {
  const auto version = field<int>(doc, "version");
  if (version != kFormatVersion) {
    throw Error(ErrorKind::kSchemaError, "unsupported checkpoint version " + std::to_string(version));
  }
  TrainingConfig config = training_config_from_json(field<Json>(doc, "config"));
  std::vector<Baselearner> learners;
  for (const auto& bl : field<Json>(doc, "learners")) learners.push_back(baselearner_from_json(bl));
  return Cmde(std::move(learners), config);
}

}  // namespace cmde
