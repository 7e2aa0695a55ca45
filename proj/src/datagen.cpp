#include "cmde/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

#include "cmde/serialize.hpp"

namespace cmde {

namespace {

double sigmoid(double u) {
  return u >= 0.0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

// Rounds to a multiple of 2^-40 so that sums of a few such values with small
// integers are exact; keeps identities such as y1 - y0 = 1 exact.
double quantize(double v) {
  constexpr double kGrid = 1099511627776.0;  // 2^40
  return std::nearbyint(v * kGrid) / kGrid;
}

void check_column(const std::optional<std::vector<double>>& col, std::size_t n,
                  std::string_view name) {
  if (col && col->size() != n) {
    throw Error(ErrorKind::kDimensionMismatch,
                "column " + std::string(name) + " has a different length than t");
  }
}

}  // namespace

void validate(const Dataset& data) {
  const std::size_t n = data.size();
  if (n == 0) throw Error(ErrorKind::kEmptyDataset, "dataset has no rows");
  if (data.x.rows() != n || data.y.size() != n) {
    throw Error(ErrorKind::kDimensionMismatch, "x, t and y have different row counts");
  }
  if (data.x.cols() == 0) throw Error(ErrorKind::kDimensionMismatch, "dataset has no covariates");
  check_column(data.y0, n, "y0");
  check_column(data.y1, n, "y1");
  check_column(data.mu0, n, "mu0");
  check_column(data.mu1, n, "mu1");
  check_column(data.propensity, n, "propensity");
  if (!data.modality_blocks.empty()) {
    std::size_t total = 0;
    for (std::size_t b : data.modality_blocks) total += b;
    if (total != data.x.cols()) {
      throw Error(ErrorKind::kSchemaError, "modality blocks do not cover the covariates");
    }
  }
  if (data.treatments < 2) throw Error(ErrorKind::kSchemaError, "need at least two treatments");
  for (std::size_t i = 0; i < n; ++i) {
    if (data.t[i] < 0 || static_cast<std::size_t>(data.t[i]) >= data.treatments) {
      std::ostringstream msg;
      msg << "row " << i << " has treatment " << data.t[i];
      throw Error(data.treatments == 2 ? ErrorKind::kNonBinaryTreatment : ErrorKind::kSchemaError,
                  msg.str());
    }
  }
}

bool factual_consistent(const Dataset& data) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.t[i] == 0 && data.y0 && (*data.y0)[i] != data.y[i]) return false;
    if (data.t[i] == 1 && data.y1 && (*data.y1)[i] != data.y[i]) return false;
  }
  return true;
}

Dataset generate_synthetic(SeededRng& rng, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::kEmptyDataset, "generate_synthetic needs n >= 1");
  Dataset data;
  data.x = DenseMatrix(n, 1);
  data.t.resize(n);
  data.y.resize(n);
  data.y0.emplace(n);
  data.y1.emplace(n);
  data.mu0.emplace(n);
  data.mu1.emplace(n);
  data.propensity.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = rng.normal(9.0);
    const double p = sigmoid(x);
    const bool treated = rng.bernoulli(p);
    const double xi = quantize(rng.normal(0.0025));
    const double s = quantize(p);
    data.x(i, 0) = x;
    (*data.propensity)[i] = p;
    (*data.mu0)[i] = 1.0 + s;
    (*data.mu1)[i] = 2.0 + s;
    (*data.y0)[i] = (*data.mu0)[i] + xi;
    (*data.y1)[i] = (*data.mu1)[i] + xi;
    data.t[i] = treated ? 1 : 0;
    data.y[i] = treated ? (*data.y1)[i] : (*data.y0)[i];
  }
  return data;
}

void validate(const SemiSynthSpec& spec) {
  if (spec.d_dim == 0 || spec.im_dim == 0) {
    throw Error(ErrorKind::kSpecMismatch, "semi-synthetic blocks need positive dimensions");
  }
  auto check = [](const std::vector<SparseEntry>& coef, std::size_t bound, std::string_view name) {
    for (const auto& e : coef) {
      if (e.index >= bound) {
        std::ostringstream msg;
        msg << name << " index " << e.index << " exceeds length " << bound;
        throw Error(ErrorKind::kSpecMismatch, msg.str());
      }
    }
  };
  check(spec.beta1, spec.d_dim, "beta1");
  check(spec.beta2, spec.im_dim, "beta2");
  check(spec.beta3, spec.d_dim * spec.d_dim, "beta3");
  check(spec.beta_t1, spec.im_dim, "beta_t1");
  check(spec.beta_t2, spec.d_dim * spec.im_dim, "beta_t2");
  if (!(spec.noise_variance >= 0.0)) {
    throw Error(ErrorKind::kSpecMismatch, "noise variance must be >= 0");
  }
  if (const auto* r = std::get_if<RandomizedAssignment>(&spec.assignment)) {
    if (!(r->p1 > 0.0 && r->p1 < 1.0)) throw Error(ErrorKind::kSpecMismatch, "p1 must lie in (0, 1)");
  } else {
    const auto& p = std::get<PropensityAssignment>(spec.assignment);
    if (!(p.p2 > 0.0 && p.p2 < 1.0)) throw Error(ErrorKind::kSpecMismatch, "p2 must lie in (0, 1)");
    if (p.beta_t.size() != spec.d_dim + spec.im_dim) {
      throw Error(ErrorKind::kSpecMismatch, "beta_t length must equal d_dim + im_dim");
    }
  }
}

SemiSynthSpec clinical_preset() {
  SemiSynthSpec s;
  s.d_dim = 4;
  s.im_dim = 3;
  s.beta0 = 1.0;
  s.beta1 = {{0, 0.5}, {2, -0.3}};
  s.beta2 = {{1, 0.4}};
  s.beta3 = {{0 * 4 + 1, 0.2}, {3 * 4 + 3, -0.1}};
  s.beta_t1 = {{0, 1.0}, {2, 0.5}};
  s.beta_t2 = {{1 * 3 + 0, 0.3}, {2 * 3 + 2, -0.2}};
  s.noise_variance = 0.1;
  s.assignment = PropensityAssignment{{0.8, 0.0, -0.5, 0.0, 0.3, 0.0, 0.0}, 0.3};
  return s;
}

Dataset generate_semisynthetic(SeededRng& rng, std::size_t n, const SemiSynthSpec& spec) {
  validate(spec);
  if (n == 0) throw Error(ErrorKind::kEmptyDataset, "generate_semisynthetic needs n >= 1");
  const std::size_t dd = spec.d_dim;
  const std::size_t di = spec.im_dim;
  const double noise_sd = std::sqrt(spec.noise_variance);
  Dataset data;
  data.x = DenseMatrix(n, dd + di);
  data.modality_blocks = {dd, di};
  data.t.resize(n);
  data.y.resize(n);
  data.y0.emplace(n);
  data.y1.emplace(n);
  data.mu0.emplace(n);
  data.mu1.emplace(n);
  data.propensity.emplace(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = data.x.row(i);
    for (std::size_t j = 0; j < dd; ++j) row[j] = rng.normal();
    row[dd + rng.uniform_index(di)] = 1.0;
    const auto xd = row.subspan(0, dd);
    const auto xim = row.subspan(dd, di);
    double mu0 = spec.beta0;
    for (const auto& e : spec.beta1) mu0 += e.value * xd[e.index];
    for (const auto& e : spec.beta2) mu0 += e.value * xim[e.index];
    for (const auto& e : spec.beta3) mu0 += e.value * xd[e.index / dd] * xd[e.index % dd];
    double effect = 0.0;
    for (const auto& e : spec.beta_t1) effect += e.value * xim[e.index];
    for (const auto& e : spec.beta_t2) effect += e.value * xd[e.index / di] * xim[e.index % di];
    (*data.mu0)[i] = mu0;
    (*data.mu1)[i] = mu0 + effect;
    (*data.y0)[i] = mu0 + noise_sd * rng.normal();
    (*data.y1)[i] = mu0 + effect + noise_sd * rng.normal();
  }
  auto& prop = *data.propensity;
  if (const auto* r = std::get_if<RandomizedAssignment>(&spec.assignment)) {
    std::fill(prop.begin(), prop.end(), r->p1);
  } else {
    const auto& pa = std::get<PropensityAssignment>(spec.assignment);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      prop[i] = sigmoid(dot(pa.beta_t, data.x.row(i)));
      mean += prop[i];
    }
    mean /= static_cast<double>(n);
    for (double& p : prop) {
      p = std::clamp(pa.p2 * p / mean, kPropensityClamp, 1.0 - kPropensityClamp);
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    data.t[i] = rng.bernoulli(prop[i]) ? 1 : 0;
    data.y[i] = data.t[i] == 1 ? (*data.y1)[i] : (*data.y0)[i];
  }
  return data;
}

namespace {

std::string sidecar_path(const std::string& path) { return path + ".meta.json"; }

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

void write_dataset(const Dataset& data, const std::string& path) {
  validate(data);
  const std::size_t d = data.dim();
  std::vector<std::pair<std::string, const std::vector<double>*>> optional_cols;
  if (data.y0) optional_cols.emplace_back("y0", &*data.y0);
  if (data.y1) optional_cols.emplace_back("y1", &*data.y1);
  if (data.mu0) optional_cols.emplace_back("mu0", &*data.mu0);
  if (data.mu1) optional_cols.emplace_back("mu1", &*data.mu1);
  if (data.propensity) optional_cols.emplace_back("propensity", &*data.propensity);
  std::string out;
  for (std::size_t j = 0; j < d; ++j) out += "x_" + std::to_string(j) + ",";
  out += "t,y";
  for (const auto& [name, col] : optional_cols) out += "," + name;
  out += "\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      out += format_double(data.x(i, j));
      out += ',';
    }
    out += std::to_string(data.t[i]);
    out += ',';
    out += format_double(data.y[i]);
    for (const auto& [name, col] : optional_cols) {
      out += ',';
      out += format_double((*col)[i]);
    }
    out += '\n';
  }
  write_text_file(path, out);
  Json meta;
  meta["version"] = kFormatVersion;
  meta["treatments"] = data.treatments;
  meta["modality_blocks"] = data.modality_blocks;
  write_json_file(sidecar_path(path), meta);
}

Dataset read_dataset(const std::string& path) {
  const std::string text = read_text_file(path);
  Dataset data;
  if (std::filesystem::exists(sidecar_path(path))) {
    const Json meta = read_json_file(sidecar_path(path));
    try {
      data.treatments = meta.value("treatments", std::size_t{2});
      data.modality_blocks = meta.value("modality_blocks", std::vector<std::size_t>{});
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::kSchemaError, sidecar_path(path) + ": " + e.what());
    }
  }
  std::vector<std::string_view> lines;
  {
    std::string_view rest(text);
    while (!rest.empty()) {
      const std::size_t nl = rest.find('\n');
      std::string_view line = rest.substr(0, nl);
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (!line.empty()) lines.push_back(line);
      if (nl == std::string_view::npos) break;
      rest.remove_prefix(nl + 1);
    }
  }
  if (lines.empty()) throw Error(ErrorKind::kSchemaError, path + ": missing header row");
  const auto header = split_fields(lines.front());
  std::map<std::string, std::size_t, std::less<>> col;
  for (std::size_t j = 0; j < header.size(); ++j) col.emplace(std::string(header[j]), j);
  std::size_t d = 0;
  while (col.count("x_" + std::to_string(d))) ++d;
  for (const char* required : {"t", "y"}) {
    if (!col.count(required)) {
      throw Error(ErrorKind::kSchemaError, path + ": missing required column '" + required + "'");
    }
  }
  if (d == 0) throw Error(ErrorKind::kSchemaError, path + ": missing covariate column 'x_0'");
  const std::size_t n = lines.size() - 1;
  if (n == 0) throw Error(ErrorKind::kEmptyDataset, path + ": no data rows");
  data.x = DenseMatrix(n, d);
  data.t.resize(n);
  data.y.resize(n);
  std::vector<std::pair<std::optional<std::vector<double>>*, std::size_t>> optional_cols;
  for (auto [name, target] : {std::pair{"y0", &data.y0}, std::pair{"y1", &data.y1},
                              std::pair{"mu0", &data.mu0}, std::pair{"mu1", &data.mu1},
                              std::pair{"propensity", &data.propensity}}) {
    if (auto it = col.find(name); it != col.end()) {
      target->emplace(n);
      optional_cols.emplace_back(target, it->second);
    }
  }
  const std::size_t t_col = col.find("t")->second;
  const std::size_t y_col = col.find("y")->second;
  for (std::size_t i = 0; i < n; ++i) {
    const auto fields = split_fields(lines[i + 1]);
    const std::size_t line_no = i + 2;
    if (fields.size() != header.size()) {
      std::ostringstream msg;
      msg << path << ": line " << line_no << " (row " << i << ") has " << fields.size()
          << " fields, header has " << header.size();
      throw Error(ErrorKind::kParseError, msg.str());
    }
    auto where = [&](std::string_view column) {
      std::ostringstream w;
      w << path << ": row " << i << " (line " << line_no << "), column " << column;
      return w.str();
    };
    for (std::size_t j = 0; j < d; ++j) {
      const std::string name = "x_" + std::to_string(j);
      data.x(i, j) = parse_double(fields[col.find(name)->second], where(name));
    }
    const double tv = parse_double(fields[t_col], where("t"));
    if (tv != std::floor(tv) || tv < 0.0 || tv >= static_cast<double>(data.treatments)) {
      std::ostringstream msg;
      msg << where("t") << ": treatment value " << fields[t_col] << " outside {0.."
          << data.treatments - 1 << "}";
      throw Error(ErrorKind::kParseError, msg.str());
    }
    data.t[i] = static_cast<int>(tv);
    data.y[i] = parse_double(fields[y_col], where("y"));
    for (auto& [target, c] : optional_cols) {
      (**target)[i] = parse_double(fields[c], where(header[c]));
    }
  }
  validate(data);
  return data;
}

}  // namespace cmde
