#include "cmde/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "cmde/cmgp.hpp"
#include "cmde/datagen.hpp"
#include "cmde/ensemble.hpp"
#include "cmde/kernelcheck.hpp"
#include "cmde/metrics.hpp"
#include "cmde/parallel.hpp"
#include "cmde/serialize.hpp"
#include "cmde/svg.hpp"

namespace cmde::cli {
namespace {

namespace fs = std::filesystem;

const std::set<std::string, std::less<>> kCommands = {
    "gen", "train", "predict", "gp-fit", "eval", "kernel-check", "fig-synthetic"};

// Library error tagged with the config field it came from.
class FieldError : public Error {
 public:
  FieldError(ErrorKind kind, std::string field, const std::string& message)
      : Error(kind, "field '" + field + "': " + message), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

template <class F>
auto in_field(const std::string& field, F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const FieldError&) {
    throw;
  } catch (const Error& e) {
    throw FieldError(e.kind(), field, e.what());
  }
}

// Read-only view of one config object that knows its dotted path.
class Node {
 public:
  Node(const Json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw FieldError(ErrorKind::kSchemaError, display(), "expected an object");
  }

  std::string field(std::string_view key) const {
    return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
  }

  bool has(const char* key) const { return doc_.contains(key) && !doc_.at(key).is_null(); }

  void allow(std::initializer_list<std::string_view> keys) const {
    for (const auto& item : doc_.items()) {
      if (std::find(keys.begin(), keys.end(), item.key()) == keys.end()) {
        throw FieldError(ErrorKind::kConfigError, field(item.key()), "unknown field");
      }
    }
  }

  template <class T>
  T require(const char* key) const {
    if (!has(key)) throw FieldError(ErrorKind::kSchemaError, field(key), "required field is missing");
    return convert<T>(key);
  }

  template <class T>
  T get(const char* key, T fallback) const {
    return has(key) ? convert<T>(key) : fallback;
  }

  Node child(const char* key) const { return Node(doc_.at(key), field(key)); }
  const Json& raw(const char* key) const { return doc_.at(key); }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  template <class T>
  T convert(const char* key) const {
    try {
      return doc_.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw FieldError(ErrorKind::kSchemaError, field(key), e.what());
    }
  }

  const Json& doc_;
  std::string path_;
};

template <class T>
void require_positive(const std::string& field, T value) {
  if (!(value > T{0})) throw FieldError(ErrorKind::kConfigError, field, "must be positive");
}

// ---------------------------------------------------------------------------
// Resolvers: each turns a user document into its fully expanded form.

NetworkArchitecture resolve_architecture(const Node& n) {
  n.allow({"hidden_widths", "activation", "prior_variance", "init_mode"});
  NetworkArchitecture a;
  a.hidden_widths = n.get("hidden_widths", a.hidden_widths);
  if (a.hidden_widths.empty()) {
    throw FieldError(ErrorKind::kConfigError, n.field("hidden_widths"), "needs at least one layer");
  }
  for (std::size_t w : a.hidden_widths) require_positive(n.field("hidden_widths"), w);
  a.activation = in_field(n.field("activation"), [&] {
    return parse_activation(n.get<std::string>("activation", std::string(to_string(a.activation))));
  });
  a.prior_variance = n.get("prior_variance", a.prior_variance);
  require_positive(n.field("prior_variance"), a.prior_variance);
  a.init_mode = in_field(n.field("init_mode"), [&] {
    return parse_init_mode(n.get<std::string>("init_mode", std::string(to_string(a.init_mode))));
  });
  return a;
}

std::vector<NetworkArchitecture> resolve_architectures(const Node& parent, const char* key,
                                                       const NetworkArchitecture& fallback) {
  if (!parent.has(key)) return {fallback};
  const Json& list = parent.raw(key);
  if (!list.is_array() || list.empty()) {
    throw FieldError(ErrorKind::kSchemaError, parent.field(key), "expected a non-empty array");
  }
  std::vector<NetworkArchitecture> out;
  for (std::size_t i = 0; i < list.size(); ++i) {
    out.push_back(
        resolve_architecture(Node(list[i], parent.field(key) + "[" + std::to_string(i) + "]")));
  }
  return out;
}

CoregionalizationSpec resolve_spec(const Node& n) {
  n.allow({"variant", "coefficients", "treatments", "components"});
  CoregionalizationSpec spec;
  spec.variant = in_field(n.field("variant"), [&] {
    return parse_variant(n.get<std::string>("variant", "icm3"));
  });
  spec.coefficients = n.require<std::vector<double>>("coefficients");
  spec.treatments = n.get<std::size_t>("treatments", 2);
  const std::size_t inferred = spec.variant == Variant::kLmc ? spec.coefficients.size() / 3 : 1;
  spec.components = n.get<std::size_t>("components", std::max<std::size_t>(1, inferred));
  in_field(n.field("coefficients"), [&] { validate(spec); });
  return spec;
}

CoregionalizationSpec resolve_spec_or(const Node& parent, const char* key,
                                      const CoregionalizationSpec& fallback) {
  return parent.has(key) ? resolve_spec(parent.child(key)) : fallback;
}

std::optional<ModalityPlan> resolve_plan(const Node& parent) {
  if (!parent.has("modality_plan")) return std::nullopt;
  const Node n = parent.child("modality_plan");
  n.allow({"block_dims", "fusion_dim"});
  ModalityPlan plan;
  plan.block_dims = n.require<std::vector<std::size_t>>("block_dims");
  if (plan.block_dims.empty()) {
    throw FieldError(ErrorKind::kConfigError, n.field("block_dims"), "needs at least one block");
  }
  for (std::size_t b : plan.block_dims) require_positive(n.field("block_dims"), b);
  plan.fusion_dim = n.get<std::size_t>("fusion_dim", plan.fusion_dim);
  require_positive(n.field("fusion_dim"), plan.fusion_dim);
  return plan;
}

TrainingConfig resolve_training(const Node& parent, const TrainingConfig& fallback) {
  if (!parent.has("training")) return fallback;
  const Node n = parent.child("training");
  n.allow({"learning_rate", "epochs", "batch_size", "weight_decay", "variance_weight", "mode"});
  TrainingConfig c = fallback;
  c.learning_rate = n.get("learning_rate", c.learning_rate);
  if (!(c.learning_rate >= 0.0)) {
    throw FieldError(ErrorKind::kConfigError, n.field("learning_rate"), "must be non-negative");
  }
  c.epochs = n.get("epochs", c.epochs);
  c.batch_size = n.get("batch_size", c.batch_size);
  require_positive(n.field("batch_size"), c.batch_size);
  c.weight_decay = n.get("weight_decay", c.weight_decay);
  c.variance_weight = n.get("variance_weight", c.variance_weight);
  if (!(c.weight_decay >= 0.0)) {
    throw FieldError(ErrorKind::kConfigError, n.field("weight_decay"), "must be non-negative");
  }
  if (!(c.variance_weight >= 0.0)) {
    throw FieldError(ErrorKind::kConfigError, n.field("variance_weight"), "must be non-negative");
  }
  c.mode = in_field(n.field("mode"), [&] {
    return parse_training_mode(n.get<std::string>("mode", std::string(to_string(c.mode))));
  });
  return c;
}

// Query points: rows of a dataset CSV, an evenly spaced 1-D range, or explicit rows.
struct QuerySpec {
  std::string source = "dataset";
  std::string path;
  double min = -8.0;
  double max = 8.0;
  std::size_t count = 161;
  DenseMatrix points;
};

QuerySpec resolve_queries(const Node& parent, const std::string& default_dataset) {
  QuerySpec q;
  q.path = default_dataset;
  if (!parent.has("queries")) {
    if (q.path.empty()) {
      throw FieldError(ErrorKind::kSchemaError, parent.field("queries"), "required field is missing");
    }
    return q;
  }
  const Node n = parent.child("queries");
  n.allow({"source", "path", "min", "max", "count", "points"});
  q.source = n.get<std::string>("source", "dataset");
  if (q.source == "dataset") {
    q.path = n.get<std::string>("path", q.path);
    if (q.path.empty()) {
      throw FieldError(ErrorKind::kSchemaError, n.field("path"), "required field is missing");
    }
  } else if (q.source == "range") {
    q.min = n.get("min", q.min);
    q.max = n.get("max", q.max);
    q.count = n.get("count", q.count);
    if (!(q.max > q.min) || q.count < 2) {
      throw FieldError(ErrorKind::kConfigError, n.field("count"),
                       "range needs max > min and count >= 2");
    }
  } else if (q.source == "points") {
    const auto rows = n.require<std::vector<std::vector<double>>>("points");
    if (rows.empty() || rows.front().empty()) {
      throw FieldError(ErrorKind::kConfigError, n.field("points"), "needs at least one point");
    }
    q.points = DenseMatrix(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != rows.front().size()) {
        throw FieldError(ErrorKind::kConfigError, n.field("points"), "ragged rows");
      }
      for (std::size_t j = 0; j < rows[i].size(); ++j) q.points(i, j) = rows[i][j];
    }
  } else {
    throw FieldError(ErrorKind::kConfigError, n.field("source"),
                     "expected one of dataset, range, points; got '" + q.source + "'");
  }
  return q;
}

Json to_json(const QuerySpec& q) {
  Json doc;
  doc["source"] = q.source;
  if (q.source == "dataset") {
    doc["path"] = q.path;
  } else if (q.source == "range") {
    doc["min"] = q.min;
    doc["max"] = q.max;
    doc["count"] = q.count;
  } else {
    Json rows = Json::array();
    for (std::size_t i = 0; i < q.points.rows(); ++i) {
      const auto r = q.points.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    doc["points"] = rows;
  }
  return doc;
}

DenseMatrix range_grid(double lo, double hi, std::size_t count) {
  DenseMatrix g(count, 1);
  for (std::size_t i = 0; i < count; ++i) {
    g(i, 0) = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return g;
}

DenseMatrix materialize(const QuerySpec& q) {
  if (q.source == "dataset") return read_dataset(q.path).x;
  if (q.source == "range") return range_grid(q.min, q.max, q.count);
  return q.points;
}

// Oracle kernel: implied by a coregionalization spec and network architectures,
// or given explicitly as one scalar kernel and one coregionalization matrix.
struct OracleSpec {
  std::string type = "implied";
  CoregionalizationSpec spec = CoregionalizationSpec::icm3(1, 1, 1);
  std::vector<NetworkArchitecture> architectures;
  std::optional<ModalityPlan> plan;
  ScalarKernel scalar = ScalarKernel::erf_network(0.1);
  DenseMatrix coregionalization;
  double noise_variance = 0.0025;
};

NetworkArchitecture oracle_default_architecture() {
  NetworkArchitecture a;
  a.activation = Activation::kRelu;
  a.prior_variance = 0.1;
  return a;
}

OracleSpec resolve_oracle(const Node& parent, const char* key) {
  OracleSpec o;
  o.architectures = {oracle_default_architecture()};
  o.coregionalization = DenseMatrix{{2, 1}, {1, 2}};
  if (!parent.has(key)) return o;
  const Node n = parent.child(key);
  n.allow({"type", "spec", "architectures", "modality_plan", "scalar", "coregionalization",
           "noise_variance"});
  o.type = n.get<std::string>("type", o.type);
  o.noise_variance = n.get("noise_variance", o.noise_variance);
  if (!(o.noise_variance >= 0.0)) {
    throw FieldError(ErrorKind::kConfigError, n.field("noise_variance"), "must be non-negative");
  }
  if (o.type == "implied") {
    o.spec = resolve_spec_or(n, "spec", o.spec);
    o.architectures = resolve_architectures(n, "architectures", o.architectures.front());
    o.plan = resolve_plan(n);
    in_field(n.field("architectures"),
             [&] { (void)implied_matrix_kernel(o.spec, o.architectures, o.plan); });
  } else if (o.type == "explicit") {
    if (n.has("scalar")) {
      const Node s = n.child("scalar");
      s.allow({"kind", "prior_variance", "bias_variance", "depth"});
      const KernelKind kind = in_field(s.field("kind"), [&] {
        return parse_kernel_kind(s.get<std::string>("kind", "erfNetwork"));
      });
      if (kind == KernelKind::kMonteCarlo || kind == KernelKind::kProduct) {
        throw FieldError(ErrorKind::kConfigError, s.field("kind"),
                         "explicit oracle kernels must be closed-form");
      }
      o.scalar.kind = kind;
      o.scalar.prior_variance = s.get("prior_variance", 0.1);
      o.scalar.bias_variance = s.get("bias_variance", -1.0);
      o.scalar.depth = s.get<std::size_t>("depth", 1);
      require_positive(s.field("prior_variance"), o.scalar.prior_variance);
      require_positive(s.field("depth"), o.scalar.depth);
    }
    if (n.has("coregionalization")) {
      const auto rows = n.require<std::vector<std::vector<double>>>("coregionalization");
      o.coregionalization = DenseMatrix(rows.size(), rows.size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.size()) {
          throw FieldError(ErrorKind::kConfigError, n.field("coregionalization"),
                           "must be a square matrix");
        }
        for (std::size_t j = 0; j < rows.size(); ++j) o.coregionalization(i, j) = rows[i][j];
      }
    }
    in_field(n.field("coregionalization"),
             [&] { validate(MatrixKernel{{o.scalar}, {o.coregionalization}}); });
  } else {
    throw FieldError(ErrorKind::kConfigError, n.field("type"),
                     "expected implied or explicit; got '" + o.type + "'");
  }
  return o;
}

MatrixKernel oracle_kernel(const OracleSpec& o) {
  if (o.type == "implied") return implied_matrix_kernel(o.spec, o.architectures, o.plan);
  return MatrixKernel{{o.scalar}, {o.coregionalization}};
}

Json matrix_json(const DenseMatrix& m) {
  Json rows = Json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    const auto r = m.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Json architectures_json(const std::vector<NetworkArchitecture>& archs) {
  Json list = Json::array();
  for (const auto& a : archs) list.push_back(to_json(a));
  return list;
}

Json to_json(const OracleSpec& o) {
  Json doc;
  doc["type"] = o.type;
  if (o.type == "implied") {
    doc["spec"] = to_json(o.spec);
    doc["architectures"] = architectures_json(o.architectures);
    doc["modality_plan"] = o.plan ? to_json(*o.plan) : Json();
  } else {
    doc["scalar"] = {{"kind", std::string(to_string(o.scalar.kind))},
                     {"prior_variance", o.scalar.prior_variance},
                     {"bias_variance", o.scalar.bias_variance},
                     {"depth", o.scalar.depth}};
    doc["coregionalization"] = matrix_json(o.coregionalization);
  }
  doc["noise_variance"] = o.noise_variance;
  return doc;
}

std::vector<SparseEntry> resolve_sparse(const Node& n, const char* key,
                                        const std::vector<SparseEntry>& fallback) {
  if (!n.has(key)) return fallback;
  const auto pairs = n.require<std::vector<std::pair<std::size_t, double>>>(key);
  std::vector<SparseEntry> out;
  for (const auto& [i, v] : pairs) out.push_back({i, v});
  return out;
}

Json sparse_json(const std::vector<SparseEntry>& entries) {
  Json list = Json::array();
  for (const auto& e : entries) list.push_back(Json::array({e.index, e.value}));
  return list;
}

SemiSynthSpec resolve_semisynth(const Node& parent) {
  SemiSynthSpec s = clinical_preset();
  if (!parent.has("semisynthetic")) return s;
  const Node n = parent.child("semisynthetic");
  n.allow({"d_dim", "im_dim", "beta0", "beta1", "beta2", "beta3", "beta_t1", "beta_t2",
           "noise_variance", "assignment"});
  s.d_dim = n.get("d_dim", s.d_dim);
  s.im_dim = n.get("im_dim", s.im_dim);
  s.beta0 = n.get("beta0", s.beta0);
  s.beta1 = resolve_sparse(n, "beta1", s.beta1);
  s.beta2 = resolve_sparse(n, "beta2", s.beta2);
  s.beta3 = resolve_sparse(n, "beta3", s.beta3);
  s.beta_t1 = resolve_sparse(n, "beta_t1", s.beta_t1);
  s.beta_t2 = resolve_sparse(n, "beta_t2", s.beta_t2);
  s.noise_variance = n.get("noise_variance", s.noise_variance);
  if (n.has("assignment")) {
    const Node a = n.child("assignment");
    a.allow({"type", "p1", "beta_t", "p2"});
    const std::string type = a.require<std::string>("type");
    if (type == "randomized") {
      s.assignment = RandomizedAssignment{a.get("p1", 0.5)};
    } else if (type == "propensity") {
      s.assignment = PropensityAssignment{a.require<std::vector<double>>("beta_t"), a.get("p2", 0.1)};
    } else {
      throw FieldError(ErrorKind::kConfigError, a.field("type"),
                       "expected randomized or propensity; got '" + type + "'");
    }
  }
  in_field("semisynthetic", [&] { validate(s); });
  return s;
}

Json to_json(const SemiSynthSpec& s) {
  Json doc;
  doc["d_dim"] = s.d_dim;
  doc["im_dim"] = s.im_dim;
  doc["beta0"] = s.beta0;
  doc["beta1"] = sparse_json(s.beta1);
  doc["beta2"] = sparse_json(s.beta2);
  doc["beta3"] = sparse_json(s.beta3);
  doc["beta_t1"] = sparse_json(s.beta_t1);
  doc["beta_t2"] = sparse_json(s.beta_t2);
  doc["noise_variance"] = s.noise_variance;
  if (const auto* r = std::get_if<RandomizedAssignment>(&s.assignment)) {
    doc["assignment"] = {{"type", "randomized"}, {"p1", r->p1}};
  } else {
    const auto& p = std::get<PropensityAssignment>(s.assignment);
    doc["assignment"] = {{"type", "propensity"}, {"beta_t", p.beta_t}, {"p2", p.p2}};
  }
  return doc;
}

// ---------------------------------------------------------------------------
// Output helpers.

std::string sanitize(std::string name) {
  for (char& ch : name) {
    if (ch == '^') ch = '_';
  }
  return name;
}

std::vector<std::string> x_header(std::size_t d) {
  if (d == 1) return {"x"};
  std::vector<std::string> h;
  for (std::size_t j = 0; j < d; ++j) h.push_back("x_" + std::to_string(j));
  return h;
}

// Same column naming as the oracle CSV: x..., mean_c..., cate..., sd_c..., cate_sd...
void write_estimate_csv(const std::string& path, const DenseMatrix& x, const CateEstimate& est) {
  const std::size_t d = x.cols();
  const std::size_t cc = est.outcome_mean.cols();
  const bool two = cc == 2;
  std::vector<std::string> header = x_header(d);
  for (std::size_t c = 0; c < cc; ++c) header.push_back("mean" + std::to_string(c));
  for (std::size_t c = 1; c < cc; ++c) header.push_back(two ? "cate" : "cate" + std::to_string(c));
  for (std::size_t c = 0; c < cc; ++c) header.push_back("sd" + std::to_string(c));
  for (std::size_t c = 1; c < cc; ++c) {
    header.push_back(two ? "cate_sd" : "cate_sd" + std::to_string(c));
  }
  DenseMatrix table(x.rows(), header.size());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    std::size_t k = 0;
    for (std::size_t j = 0; j < d; ++j) table(i, k++) = x(i, j);
    for (std::size_t c = 0; c < cc; ++c) table(i, k++) = est.outcome_mean(i, c);
    for (std::size_t c = 1; c < cc; ++c) table(i, k++) = est.cate_mean(i, c - 1);
    for (std::size_t c = 0; c < cc; ++c) table(i, k++) = std::sqrt(est.outcome_variance(i, c));
    for (std::size_t c = 1; c < cc; ++c) table(i, k++) = std::sqrt(est.cate_variance(i, c - 1));
  }
  write_matrix_csv(path, header, table);
}

void write_training_csv(const std::string& path, const TrainingReport& report) {
  DenseMatrix table(report.epochs.size(), 4);
  for (std::size_t i = 0; i < report.epochs.size(); ++i) {
    const auto& e = report.epochs[i];
    table(i, 0) = static_cast<double>(e.epoch);
    table(i, 1) = e.risk;
    table(i, 2) = e.factual_mse;
    table(i, 3) = e.variance_term;
  }
  write_matrix_csv(path, {"epoch", "risk", "factual_mse", "variance_term"}, table);
}

// Named numeric columns of a CSV file.
std::map<std::string, std::vector<double>> read_csv_columns(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::kParseError, path + ": empty file");
  std::vector<std::string> names;
  {
    std::istringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) names.push_back(cell);
  }
  std::map<std::string, std::vector<double>> cols;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::size_t j = 0;
    while (std::getline(ls, cell, ',')) {
      if (j >= names.size()) {
        throw Error(ErrorKind::kParseError, path + ": too many cells on line " + std::to_string(line_no));
      }
      cols[names[j]].push_back(
          parse_double(cell, path + " line " + std::to_string(line_no) + " column " + names[j]));
      ++j;
    }
    if (j != names.size()) {
      throw Error(ErrorKind::kParseError, path + ": too few cells on line " + std::to_string(line_no));
    }
  }
  return cols;
}

const std::vector<double>& column(const std::map<std::string, std::vector<double>>& cols,
                                  const std::string& name, const std::string& path) {
  const auto it = cols.find(name);
  if (it == cols.end()) {
    throw Error(ErrorKind::kSchemaError, path + ": missing column '" + name + "'");
  }
  return it->second;
}

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> column_of(const DenseMatrix& m, std::size_t c) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = m(i, c);
  return out;
}

// ---------------------------------------------------------------------------
// Commands. Each has a resolve step (config errors only) and an execute step.

struct Context {
  fs::path out;
  std::uint64_t seed = 1;
};

class Command {
 public:
  virtual ~Command() = default;
  virtual Json resolve(const Node& root) = 0;
  virtual void execute(const Context& ctx) = 0;
};

class GenCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "generator", "n", "semisynthetic", "output"});
    generator_ = root.get<std::string>("generator", "synthetic");
    if (generator_ != "synthetic" && generator_ != "semisynthetic") {
      throw FieldError(ErrorKind::kConfigError, "generator",
                       "expected synthetic or semisynthetic; got '" + generator_ + "'");
    }
    n_ = root.get<std::size_t>("n", 3000);
    require_positive("n", n_);
    if (generator_ == "semisynthetic") semi_ = resolve_semisynth(root);
    output_ = root.get<std::string>("output", "data.csv");
    Json doc;
    doc["generator"] = generator_;
    doc["n"] = n_;
    if (generator_ == "semisynthetic") doc["semisynthetic"] = to_json(semi_);
    doc["output"] = output_;
    return doc;
  }

  void execute(const Context& ctx) override {
    SeededRng rng(ctx.seed);
    const Dataset d = generator_ == "synthetic" ? generate_synthetic(rng, n_)
                                                : generate_semisynthetic(rng, n_, semi_);
    write_dataset(d, (ctx.out / output_).string());
    spdlog::info("wrote {} rows to {}", d.size(), (ctx.out / output_).string());
  }

 private:
  std::string generator_;
  std::size_t n_ = 0;
  SemiSynthSpec semi_;
  std::string output_;
};

// Model section shared by train and fig-synthetic.
struct ModelSpec {
  std::size_t members = 10;
  CoregionalizationSpec spec = CoregionalizationSpec::icm3(0, 0, 1);
  std::vector<NetworkArchitecture> architectures{NetworkArchitecture{}};
  std::optional<ModalityPlan> plan;
  TrainingConfig training;

  void resolve(const Node& root) {
    members = root.get("members", members);
    require_positive("members", members);
    spec = resolve_spec_or(root, "spec", spec);
    architectures = resolve_architectures(root, "architectures", architectures.front());
    plan = resolve_plan(root);
    training = resolve_training(root, training);
    const std::size_t blocks = block_count(spec);
    if (architectures.size() != 1 && architectures.size() != blocks) {
      throw FieldError(ErrorKind::kConfigError, "architectures",
                       "needs one entry or one per coregionalization block");
    }
  }

  void write(Json& doc) const {
    doc["members"] = members;
    doc["spec"] = to_json(spec);
    doc["architectures"] = architectures_json(architectures);
    doc["modality_plan"] = plan ? to_json(*plan) : Json();
    doc["training"] = to_json(training);
  }

  // Streams: 0 initializes the ensemble, 1 shuffles minibatches.
  std::pair<Cmde, TrainingReport> fit(const Dataset& data, std::uint64_t seed) const {
    if (plan && plan->input_dim() != data.dim()) {
      throw FieldError(ErrorKind::kConfigError, "modality_plan.block_dims",
                       "blocks cover " + std::to_string(plan->input_dim()) +
                           " covariates but the dataset has " + std::to_string(data.dim()));
    }
    SeededRng root(seed);
    auto streams = root.split(2);
    Cmde cmde = build_cmde(streams[0], members, spec, architectures, data.dim(), plan, training);
    const auto start = std::chrono::steady_clock::now();
    TrainingReport report = train(cmde, data, streams[1]);
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!report.epochs.empty()) {
      spdlog::info("trained {} members for {} epochs in {:.1f}s, final risk {:.6g}", members,
                   report.epochs.size(), secs, report.epochs.back().risk);
    }
    for (const auto& e : report.epochs) {
      spdlog::debug("epoch {} risk {:.6g} mse {:.6g} var {:.6g}", e.epoch, e.risk, e.factual_mse,
                    e.variance_term);
    }
    return {std::move(cmde), std::move(report)};
  }
};

class TrainCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "dataset", "members", "spec", "architectures", "modality_plan",
                "training"});
    dataset_ = root.require<std::string>("dataset");
    model_.resolve(root);
    Json doc;
    doc["dataset"] = dataset_;
    model_.write(doc);
    return doc;
  }

  void execute(const Context& ctx) override {
    const Dataset data = read_dataset(dataset_);
    auto [cmde, report] = model_.fit(data, ctx.seed);
    write_json_file((ctx.out / "checkpoint.json").string(), to_json(cmde));
    write_training_csv((ctx.out / "training_report.csv").string(), report);
  }

 private:
  std::string dataset_;
  ModelSpec model_;
};

class PredictCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "checkpoint", "queries"});
    checkpoint_ = root.require<std::string>("checkpoint");
    queries_ = resolve_queries(root, "");
    Json doc;
    doc["checkpoint"] = checkpoint_;
    doc["queries"] = to_json(queries_);
    return doc;
  }

  void execute(const Context& ctx) override {
    const Cmde cmde = cmde_from_json(read_json_file(checkpoint_));
    const DenseMatrix x = materialize(queries_);
    write_estimate_csv((ctx.out / "predictions.csv").string(), x, predict(cmde, x));
  }

 private:
  std::string checkpoint_;
  QuerySpec queries_;
};

class GpFitCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "dataset", "oracle", "queries", "variance"});
    dataset_ = root.require<std::string>("dataset");
    oracle_ = resolve_oracle(root, "oracle");
    queries_ = resolve_queries(root, dataset_);
    variance_ = root.get("variance", true);
    Json doc;
    doc["dataset"] = dataset_;
    doc["oracle"] = to_json(oracle_);
    doc["queries"] = to_json(queries_);
    doc["variance"] = variance_;
    return doc;
  }

  void execute(const Context& ctx) override {
    const Dataset data = read_dataset(dataset_);
    const GpPosterior gp = fit(data, oracle_kernel(oracle_), oracle_.noise_variance);
    spdlog::info("oracle fit on {} rows, solve residual {:.3g}", data.size(), solve_residual(gp));
    const DenseMatrix x = materialize(queries_);
    const GpPrediction p = variance_ ? posterior(gp, x) : posterior_mean(gp, x);
    write_posterior_csv((ctx.out / "oracle_predictions.csv").string(), x, p);
  }

 private:
  std::string dataset_;
  OracleSpec oracle_;
  QuerySpec queries_;
  bool variance_ = true;
};

class EvalCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "dataset", "predictions", "metrics", "ate_true", "model"});
    dataset_ = root.require<std::string>("dataset");
    predictions_ = root.require<std::string>("predictions");
    metrics_ = root.get<std::vector<std::string>>("metrics", {"pehe"});
    for (const auto& m : metrics_) {
      if (m != "pehe" && m != "sqrt_pehe" && m != "empirical_pehe" && m != "policy_risk" &&
          m != "ate_error") {
        throw FieldError(ErrorKind::kConfigError, "metrics", "unknown metric '" + m + "'");
      }
    }
    if (root.has("ate_true")) ate_true_ = root.require<double>("ate_true");
    model_ = root.get<std::string>("model", "model");
    Json doc;
    doc["dataset"] = dataset_;
    doc["predictions"] = predictions_;
    doc["metrics"] = metrics_;
    doc["ate_true"] = ate_true_ ? Json(*ate_true_) : Json();
    doc["model"] = model_;
    return doc;
  }

  void execute(const Context& ctx) override {
    const Dataset data = read_dataset(dataset_);
    const auto cols = read_csv_columns(predictions_);
    const auto& yhat0 = column(cols, "mean0", predictions_);
    const auto& yhat1 = column(cols, "mean1", predictions_);
    Json reports = Json::array();
    std::string csv = "dataset,model,metric,value,n\n";
    for (const auto& m : metrics_) {
      MetricReport r{m, 0.0, yhat0.size(), {}};
      if (m == "pehe" || m == "sqrt_pehe") {
        if (!data.mu0 || !data.mu1) {
          throw Error(ErrorKind::kMissingGroundTruth, dataset_ + " has no mu0/mu1 columns");
        }
        r.value = pehe(*data.mu1, *data.mu0, yhat1, yhat0);
        if (m == "sqrt_pehe") r.value = std::sqrt(r.value);
        r.columns = {"mu0", "mu1"};
      } else if (m == "empirical_pehe") {
        if (!data.y0 || !data.y1) {
          throw Error(ErrorKind::kMissingGroundTruth, dataset_ + " has no y0/y1 columns");
        }
        r.value = empirical_pehe(*data.y1, *data.y0, yhat1, yhat0);
        r.columns = {"y0", "y1"};
      } else if (m == "policy_risk") {
        r.value = policy_risk(data.y, data.t, treatment_policy(yhat1, yhat0));
        r.columns = {"t", "y"};
      } else {
        double truth = 0.0;
        if (ate_true_) {
          truth = *ate_true_;
        } else if (data.mu0 && data.mu1) {
          for (std::size_t i = 0; i < data.size(); ++i) truth += (*data.mu1)[i] - (*data.mu0)[i];
          truth /= static_cast<double>(data.size());
          r.columns = {"mu0", "mu1"};
        } else {
          throw Error(ErrorKind::kMissingGroundTruth, "ate_error needs ate_true or mu0/mu1 columns");
        }
        r.value = ate_error(truth, yhat1, yhat0);
      }
      spdlog::info("{} = {:.6g}", m, r.value);
      reports.push_back(to_json(r));
      csv += fs::path(dataset_).filename().string() + "," + model_ + "," + m + "," +
             format_double(r.value) + "," + std::to_string(r.n) + "\n";
    }
    write_json_file((ctx.out / "metrics.json").string(), reports);
    write_text_file((ctx.out / "metrics.csv").string(), csv);
  }

 private:
  std::string dataset_;
  std::string predictions_;
  std::vector<std::string> metrics_;
  std::optional<double> ate_true_;
  std::string model_;
};

class KernelCheckCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "spec", "architectures", "modality_plan", "widths", "draws",
                "replicates", "grid"});
    NetworkArchitecture erf;
    erf.activation = Activation::kErf;
    erf.prior_variance = 0.1;
    spec_ = resolve_spec_or(root, "spec", CoregionalizationSpec::icm3(0, 0, 1));
    architectures_ = resolve_architectures(root, "architectures", erf);
    plan_ = resolve_plan(root);
    widths_ = root.get<std::vector<std::size_t>>("widths", {64, 4096});
    draws_ = root.get<std::size_t>("draws", 20000);
    replicates_ = root.get<std::size_t>("replicates", 10);
    require_positive("replicates", replicates_);
    grid_ = DenseMatrix{{-4.0}, {-2.0}, {0.0}, {2.0}, {4.0}};
    if (root.has("grid")) {
      const auto rows = root.require<std::vector<std::vector<double>>>("grid");
      if (rows.empty() || rows.front().empty()) {
        throw FieldError(ErrorKind::kConfigError, "grid", "needs at least one point");
      }
      grid_ = DenseMatrix(rows.size(), rows.front().size());
      for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != rows.front().size()) {
          throw FieldError(ErrorKind::kConfigError, "grid", "ragged rows");
        }
        for (std::size_t j = 0; j < rows[i].size(); ++j) grid_(i, j) = rows[i][j];
      }
    }
    if (widths_.size() < 2 || !std::is_sorted(widths_.begin(), widths_.end(), std::less_equal<>())) {
      throw FieldError(ErrorKind::kConfigError, "widths", "needs >= 2 strictly increasing widths");
    }
    if (draws_ < 2) throw FieldError(ErrorKind::kConfigError, "draws", "needs at least 2 draws");
    in_field("architectures", [&] { (void)analytic_prior_covariance(spec_, architectures_, grid_, plan_); });
    Json doc;
    doc["spec"] = to_json(spec_);
    doc["architectures"] = architectures_json(architectures_);
    doc["modality_plan"] = plan_ ? to_json(*plan_) : Json();
    doc["widths"] = widths_;
    doc["draws"] = draws_;
    doc["replicates"] = replicates_;
    doc["grid"] = matrix_json(grid_);
    return doc;
  }

  void execute(const Context& ctx) override {
    const ConvergenceReport r = convergence_sweep(spec_, architectures_, widths_, draws_, grid_,
                                                  ctx.seed, replicates_, plan_);
    for (const auto& w : r.widths) {
      spdlog::info("width {} mean error {:.4g} (sd {:.2g}, {:.1f}s)", w.width, w.mean_error,
                   w.sd_error, w.elapsed_seconds);
    }
    write_json_file((ctx.out / "convergence.json").string(), to_json(r));
    write_convergence_csv(r, (ctx.out / "convergence.csv").string());
    write_convergence_svg(r, (ctx.out / "convergence.svg").string());
  }

 private:
  CoregionalizationSpec spec_;
  std::vector<NetworkArchitecture> architectures_;
  std::optional<ModalityPlan> plan_;
  std::vector<std::size_t> widths_;
  std::size_t draws_ = 0;
  std::size_t replicates_ = 0;
  DenseMatrix grid_;
};

// Synthetic experiment: data, trained ensemble, oracle, comparison and figure.
class FigSyntheticCommand : public Command {
 public:
  Json resolve(const Node& root) override {
    root.allow({"command", "seed", "n", "members", "spec", "architectures", "modality_plan",
                "training", "oracle", "plot_range", "dense_range"});
    n_ = root.get<std::size_t>("n", 3000);
    require_positive("n", n_);
    model_.training.learning_rate = 3e-2;
    model_.resolve(root);
    if (model_.plan) {
      throw FieldError(ErrorKind::kConfigError, "modality_plan",
                       "the synthetic data has a single covariate");
    }
    oracle_ = resolve_oracle(root, "oracle");
    plot_ = root.get<std::vector<double>>("plot_range", {-10.0, 10.0});
    dense_ = root.get<std::vector<double>>("dense_range", {-6.0, 6.0});
    for (const auto* r : {&plot_, &dense_}) {
      if (r->size() != 2 || !((*r)[1] > (*r)[0])) {
        throw FieldError(ErrorKind::kConfigError, r == &plot_ ? "plot_range" : "dense_range",
                         "expected [low, high] with high > low");
      }
    }
    Json doc;
    doc["n"] = n_;
    model_.write(doc);
    doc["oracle"] = to_json(oracle_);
    doc["plot_range"] = plot_;
    doc["dense_range"] = dense_;
    return doc;
  }

  void execute(const Context& ctx) override {
    const auto start = std::chrono::steady_clock::now();
    // Streams: 0 draws the data, 1 seeds the ensemble.
    SeededRng root(ctx.seed);
    auto streams = root.split(2);
    const Dataset data = generate_synthetic(streams[0], n_);
    write_dataset(data, (ctx.out / "data.csv").string());

    auto [cmde, report] = model_.fit(data, streams[1]());
    write_json_file((ctx.out / "checkpoint.json").string(), to_json(cmde));
    write_training_csv((ctx.out / "training_report.csv").string(), report);

    const GpPosterior gp = fit(data, oracle_kernel(oracle_), oracle_.noise_variance);

    // Scores on the training covariates.
    const CateEstimate in_cmde = predict(cmde, data.x);
    const GpPrediction in_gp = posterior_mean(gp, data.x);
    const double cmde_pehe = pehe(*data.mu1, *data.mu0, column_of(in_cmde.outcome_mean, 1),
                                  column_of(in_cmde.outcome_mean, 0));
    const double gp_pehe =
        pehe(*data.mu1, *data.mu0, column_of(in_gp.mean, 1), column_of(in_gp.mean, 0));
    double sq = 0.0;
    std::size_t dense_rows = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x = data.x(i, 0);
      if (x < dense_[0] || x > dense_[1]) continue;
      const double diff = in_cmde.cate_mean(i, 0) - in_gp.cate_mean(i, 0);
      sq += diff * diff;
      ++dense_rows;
    }
    const double rmse = dense_rows ? std::sqrt(sq / static_cast<double>(dense_rows)) : 0.0;

    // Curves on an evenly spaced grid.
    const DenseMatrix grid = range_grid(plot_[0], plot_[1], 201);
    const CateEstimate est = predict(cmde, grid);
    const GpPrediction gpp = posterior(gp, grid);
    const DenseMatrix comps = component_contributions(cmde, grid);
    const auto& info = cmde.learners().front().layout().components;

    std::vector<std::string> header{"x",         "cmde_mean0", "cmde_mean1", "cmde_sd0",
                                    "cmde_sd1",  "cmde_cate",  "gp_mean0",   "gp_mean1",
                                    "gp_sd0",    "gp_sd1",     "gp_cate",    "true_mu0",
                                    "true_mu1"};
    for (const auto& c : info) header.push_back("contrib_" + sanitize(c.name));
    DenseMatrix curves(grid.rows(), header.size());
    for (std::size_t i = 0; i < grid.rows(); ++i) {
      const double x = grid(i, 0);
      const double s = logistic(x);
      const double row[] = {x,
                            est.outcome_mean(i, 0),
                            est.outcome_mean(i, 1),
                            std::sqrt(est.outcome_variance(i, 0)),
                            std::sqrt(est.outcome_variance(i, 1)),
                            est.cate_mean(i, 0),
                            gpp.mean(i, 0),
                            gpp.mean(i, 1),
                            std::sqrt(std::max(0.0, gpp.covariance(i, 0))),
                            std::sqrt(std::max(0.0, gpp.covariance(i, 3))),
                            gpp.cate_mean(i, 0),
                            1.0 + s,
                            2.0 + s};
      std::size_t k = 0;
      for (double v : row) curves(i, k++) = v;
      for (std::size_t c = 0; c < info.size(); ++c) curves(i, k++) = comps(i, c);
    }
    write_matrix_csv((ctx.out / "curves.csv").string(), header, curves);
    write_svg(figure(data, curves, header), (ctx.out / "figure.svg").string());

    Json summary;
    summary["cmde_sqrt_pehe"] = std::sqrt(cmde_pehe);
    summary["oracle_sqrt_pehe"] = std::sqrt(gp_pehe);
    summary["cate_rmse_dense"] = rmse;
    summary["dense_rows"] = dense_rows;
    summary["final_coefficients"] = std::vector<double>(cmde.learners().front().coefficients().begin(),
                                                        cmde.learners().front().coefficients().end());
    summary["elapsed_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    write_json_file((ctx.out / "summary.json").string(), summary);
    spdlog::info("sqrt PEHE: ensemble {:.4f}, oracle {:.4f}; CATE RMSE on [{}, {}]: {:.4f}",
                 std::sqrt(cmde_pehe), std::sqrt(gp_pehe), dense_[0], dense_[1], rmse);
  }

 private:
  static std::vector<SvgPlot> figure(const Dataset& data, const DenseMatrix& curves,
                                     const std::vector<std::string>& header) {
    auto col = [&](const std::string& name) {
      const std::size_t c =
          static_cast<std::size_t>(std::find(header.begin(), header.end(), name) - header.begin());
      return column_of(curves, c);
    };
    const std::vector<double> x = col("x");
    SvgPlot outcomes{"Potential outcomes", "x", "y", {}, {}};
    SvgSeries control{"control data", {}, {}, "#1f77b4", SeriesStyle::kPoints};
    SvgSeries treated{"treated data", {}, {}, "#d62728", SeriesStyle::kPoints};
    for (std::size_t i = 0; i < data.size(); ++i) {
      SvgSeries& s = data.t[i] == 1 ? treated : control;
      s.x.push_back(data.x(i, 0));
      s.y.push_back(data.y[i]);
    }
    const char* colors[] = {"#1f77b4", "#d62728"};
    for (int c = 0; c < 2; ++c) {
      const std::string cs = std::to_string(c);
      const auto mean = col("cmde_mean" + cs);
      const auto sd = col("cmde_sd" + cs);
      std::vector<double> lo(x.size()), hi(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        lo[i] = mean[i] - 2 * sd[i];
        hi[i] = mean[i] + 2 * sd[i];
      }
      outcomes.bands.push_back({"ensemble +-2 sd, arm " + cs, x, lo, hi, c ? "#f4c2c2" : "#c6dbef"});
      outcomes.series.push_back({"ensemble mean, arm " + cs, x, mean, colors[c], SeriesStyle::kLine});
      outcomes.series.push_back(
          {"oracle mean, arm " + cs, x, col("gp_mean" + cs), "#333333", SeriesStyle::kDashed});
    }
    outcomes.series.insert(outcomes.series.begin(), {control, treated});

    SvgPlot cate{"CATE", "x", "effect", {}, {}};
    cate.series.push_back({"true", x, std::vector<double>(x.size(), 1.0), "#2ca02c", SeriesStyle::kLine});
    cate.series.push_back({"ensemble", x, col("cmde_cate"), "#9467bd", SeriesStyle::kLine});
    cate.series.push_back({"oracle", x, col("gp_cate"), "#333333", SeriesStyle::kDashed});

    SvgPlot parts{"Component contributions", "x", "contribution", {}, {}};
    const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};
    std::size_t k = 0;
    for (const auto& name : header) {
      if (name.rfind("contrib_", 0) != 0) continue;
      parts.series.push_back({name.substr(8), x, col(name), palette[k++ % 6], SeriesStyle::kLine});
    }
    return {outcomes, cate, parts};
  }

  std::size_t n_ = 3000;
  ModelSpec model_;
  OracleSpec oracle_;
  std::vector<double> plot_;
  std::vector<double> dense_;
};

std::unique_ptr<Command> make_command(std::string_view name) {
  if (name == "gen") return std::make_unique<GenCommand>();
  if (name == "train") return std::make_unique<TrainCommand>();
  if (name == "predict") return std::make_unique<PredictCommand>();
  if (name == "gp-fit") return std::make_unique<GpFitCommand>();
  if (name == "eval") return std::make_unique<EvalCommand>();
  if (name == "kernel-check") return std::make_unique<KernelCheckCommand>();
  if (name == "fig-synthetic") return std::make_unique<FigSyntheticCommand>();
  return nullptr;
}

// ---------------------------------------------------------------------------

void configure_logging() {
  auto logger = spdlog::get("cmde");
  if (!logger) {
    logger = spdlog::stderr_logger_mt("cmde");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  const char* env = std::getenv("CMDE_LOG");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw FieldError(ErrorKind::kConfigError, "CMDE_LOG",
                     "expected error, info or debug; got '" + level + "'");
  }
}

int report_error(std::string_view command, const fs::path& out, ErrorKind kind,
                 const std::string& message, const std::string& field, int code) {
  Json err;
  err["error"] = std::string(to_string(kind));
  err["message"] = message;
  err["field"] = field.empty() ? Json() : Json(field);
  err["command"] = std::string(command);
  err["exit_code"] = code;
  std::cerr << err.dump() << std::endl;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (!ec) {
    try {
      write_json_file((out / "error.json").string(), err);
    } catch (const Error&) {
    }
  }
  return code;
}

}  // namespace

int run(std::string_view command, const Json& config, const RunOptions& options) {
  const fs::path out(options.out_dir);
  bool resolving = true;
  try {
    configure_logging();
    auto cmd = make_command(command);
    if (!cmd) {
      throw FieldError(ErrorKind::kConfigError, "command",
                       "unknown command '" + std::string(command) + "'");
    }
    const Node root(config, "");
    Context ctx;
    ctx.out = out;
    ctx.seed = options.seed ? *options.seed : root.get<std::uint64_t>("seed", 1);
    if (root.has("command") && root.require<std::string>("command") != command) {
      throw FieldError(ErrorKind::kConfigError, "command",
                       "config was resolved for '" + root.require<std::string>("command") + "'");
    }
    Json body = cmd->resolve(root);
    Json resolved;
    resolved["command"] = std::string(command);
    resolved["seed"] = ctx.seed;
    for (auto& item : body.items()) resolved[item.key()] = item.value();
    resolving = false;

    set_thread_count(options.threads.value_or(0));
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw Error(ErrorKind::kIoError, "cannot create '" + out.string() + "': " + ec.message());
    write_json_file((out / "resolved_config.json").string(), resolved);
    spdlog::info("{}: seed {}, {} threads, output {}", command, ctx.seed, thread_count(),
                 out.string());
    cmd->execute(ctx);
    return kExitOk;
  } catch (const FieldError& e) {
    const int code = resolving || e.kind() == ErrorKind::kConfigError ? kExitConfigError
                                                                      : kExitRuntimeError;
    return report_error(command, out, e.kind(), e.what(), e.field(), code);
  } catch (const Error& e) {
    const int code = resolving || e.kind() == ErrorKind::kConfigError ? kExitConfigError
                                                                      : kExitRuntimeError;
    return report_error(command, out, e.kind(), e.what(), "", code);
  } catch (const std::exception& e) {
    return report_error(command, out, ErrorKind::kIoError, e.what(), "",
                        resolving ? kExitConfigError : kExitRuntimeError);
  }
}

int main(int argc, char** argv) {
  CLI::App app{"Causal multi-task deep ensemble experiments"};
  app.require_subcommand(1);
  std::string config_path;
  RunOptions options;
  std::size_t threads = 0;
  std::uint64_t seed = 0;
  for (const auto& name : kCommands) {
    CLI::App* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--out", options.out_dir, "output directory")->capture_default_str();
    sub->add_option("--threads", threads, "worker threads (default: all cores)");
    sub->add_option("--seed", seed, "override the config seed");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    const std::string command = app.get_subcommands().empty() ? "" : app.get_subcommands().front()->get_name();
    return report_error(command, options.out_dir, ErrorKind::kConfigError, e.what(), "",
                        kExitConfigError);
  }
  const CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  if (sub->count("--threads") && threads > 0) options.threads = threads;
  if (sub->count("--seed")) options.seed = seed;

  Json config;
  try {
    config = read_json_file(config_path);
  } catch (const Error& e) {
    return report_error(command, options.out_dir, e.kind(), e.what(), "", kExitConfigError);
  }
  return run(command, config, options);
}

}  // namespace cmde::cli
