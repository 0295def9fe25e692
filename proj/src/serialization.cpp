#include "noetherkit/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace noether {

namespace {

using nlohmann::json;

const json& get_key(const json& j, const std::string& key, const std::string& context) {
  auto it = j.find(key);
  if (it == j.end())
    throw ConfigError(context + ": missing required key \"" + key + "\"");
  return *it;
}

double get_double(const json& j, const std::string& key, const std::string& context) {
  const json& v = get_key(j, key, context);
  if (!v.is_number())
    throw ConfigError(context + ": \"" + key + "\" must be a number");
  return v.get<double>();
}

std::size_t get_size(const json& j, const std::string& key, const std::string& context) {
  const json& v = get_key(j, key, context);
  if (!v.is_number_unsigned())
    throw ConfigError(context + ": \"" + key + "\" must be a non-negative integer");
  return v.get<std::size_t>();
}

std::string get_string(const json& j, const std::string& key, const std::string& context) {
  const json& v = get_key(j, key, context);
  if (!v.is_string())
    throw ConfigError(context + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

void dump_rec(const json& j, std::string& out, int indent) {
  const std::string pad(2 * std::size_t(indent), ' ');
  const std::string pad_in(2 * std::size_t(indent + 1), ' ');
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        out += json(it.key()).dump();
        out += ": ";
        dump_rec(it.value(), out, indent + 1);
      }
      out += "\n" + pad + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[\n";
      bool first = true;
      for (const auto& el : j) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        dump_rec(el, out, indent + 1);
      }
      out += "\n" + pad + "]";
      return;
    }
    case json::value_t::number_float:
      out += format_double(j.get<double>());
      return;
    default:
      out += j.dump();
      return;
  }
}

std::string profile_name(RadialProfile p) {
  return p == RadialProfile::InverseSquare ? "InverseSquare" : "TanhOverR";
}

RadialProfile profile_from_name(const std::string& s, const std::string& context) {
  if (s == "InverseSquare") return RadialProfile::InverseSquare;
  if (s == "TanhOverR") return RadialProfile::TanhOverR;
  throw ConfigError(context + ": unknown radial profile \"" + s + "\"");
}

}  // namespace

std::string format_double(double x) {
  if (!std::isfinite(x))
    throw ConfigError("format_double: non-finite values are not serializable");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  std::string s = buf;
  // Keep a float marker so JSON parsers never take the integer path, which
  // would drop the sign of -0.0.
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string dump_json(const json& j) {
  std::string out;
  dump_rec(j, out, 0);
  out += "\n";
  return out;
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) throw ConfigError(what + ": invalid JSON");
  return j;
}

void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) throw ConfigError(context + ": unknown key \"" + it.key() + "\"");
  }
}

json matrix_to_json(const Matrix& a) {
  json j;
  j["rows"] = a.rows();
  j["cols"] = a.cols();
  json data = json::array();
  for (std::size_t i = 0; i < a.size(); ++i) data.push_back(a.data()[i]);
  j["data"] = std::move(data);
  return j;
}

Matrix matrix_from_json(const json& j, const std::string& context) {
  require_keys(j, {"rows", "cols", "data"}, context);
  const std::size_t rows = get_size(j, "rows", context);
  const std::size_t cols = get_size(j, "cols", context);
  const json& data = get_key(j, "data", context);
  if (!data.is_array() || data.size() != rows * cols)
    throw ConfigError(context + ": \"data\" must hold rows*cols numbers");
  Matrix a(rows, cols);
  for (std::size_t i = 0; i < rows * cols; ++i) {
    if (!data[i].is_number())
      throw ConfigError(context + ": \"data\" must hold rows*cols numbers");
    a.data()[i] = data[i].get<double>();
  }
  return a;
}

json activation_to_json(const Activation& act) {
  json j;
  switch (act.kind) {
    case ActKind::Identity:
      j["kind"] = "Identity";
      break;
    case ActKind::LeakyReLU:
      j["kind"] = "LeakyReLU";
      j["slope"] = act.slope;
      break;
    case ActKind::Sigmoid:
      j["kind"] = "Sigmoid";
      break;
    case ActKind::Tanh:
      j["kind"] = "Tanh";
      break;
    case ActKind::HomogeneousPower:
      j["kind"] = "HomogeneousPower";
      j["alpha"] = act.alpha;
      break;
    case ActKind::RadialRescale:
      j["kind"] = "RadialRescale";
      j["profile"] = profile_name(act.profile);
      break;
    case ActKind::RowRadial:
      j["kind"] = "RowRadial";
      j["profile"] = profile_name(act.profile);
      break;
  }
  return j;
}

Activation activation_from_json(const json& j, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": activation must be an object");
  const std::string kind = get_string(j, "kind", context);
  if (kind == "Identity") {
    require_keys(j, {"kind"}, context);
    return Activation::identity();
  }
  if (kind == "LeakyReLU") {
    require_keys(j, {"kind", "slope"}, context);
    return Activation::leaky_relu(get_double(j, "slope", context));
  }
  if (kind == "Sigmoid") {
    require_keys(j, {"kind"}, context);
    return Activation::sigmoid();
  }
  if (kind == "Tanh") {
    require_keys(j, {"kind"}, context);
    return Activation::tanh();
  }
  if (kind == "HomogeneousPower") {
    require_keys(j, {"kind", "alpha"}, context);
    return Activation::homogeneous_power(get_double(j, "alpha", context));
  }
  if (kind == "RadialRescale") {
    require_keys(j, {"kind", "profile"}, context);
    return Activation::radial_rescale(
        profile_from_name(get_string(j, "profile", context), context));
  }
  if (kind == "RowRadial") {
    require_keys(j, {"kind", "profile"}, context);
    return Activation::row_radial(
        profile_from_name(get_string(j, "profile", context), context));
  }
  throw ConfigError(context + ": unknown activation kind \"" + kind + "\"");
}

json model_to_json(const ModelFile& model) {
  json j;
  json widths = json::array();
  for (std::size_t w : model.params.widths) widths.push_back(w);
  j["widths"] = std::move(widths);
  json weights = json::array();
  for (const auto& w : model.params.weights) weights.push_back(matrix_to_json(w));
  j["weights"] = std::move(weights);
  if (model.params.biases) {
    json biases = json::array();
    for (const auto& b : *model.params.biases) {
      json arr = json::array();
      for (std::size_t i = 0; i < b.size(); ++i) arr.push_back(b[i]);
      biases.push_back(std::move(arr));
    }
    j["biases"] = std::move(biases);
  } else {
    j["biases"] = nullptr;
  }
  json acts = json::array();
  for (const auto& a : model.acts) acts.push_back(activation_to_json(a));
  j["activations"] = std::move(acts);
  return j;
}

ModelFile model_from_json(const json& j) {
  const std::string context = "model";
  require_keys(j, {"widths", "weights", "biases", "activations"}, context);
  ModelFile model;
  const json& widths = get_key(j, "widths", context);
  if (!widths.is_array() || widths.size() < 2)
    throw ConfigError(context + ": \"widths\" must list at least two layer sizes");
  for (const auto& w : widths) {
    if (!w.is_number_unsigned() || w.get<std::size_t>() == 0)
      throw ConfigError(context + ": widths must be positive integers");
    model.params.widths.push_back(w.get<std::size_t>());
  }
  const json& weights = get_key(j, "weights", context);
  if (!weights.is_array() || weights.size() + 1 != model.params.widths.size())
    throw ConfigError(context + ": expected one weight matrix per layer");
  for (std::size_t i = 0; i < weights.size(); ++i)
    model.params.weights.push_back(
        matrix_from_json(weights[i], context + ".weights[" + std::to_string(i) + "]"));
  const json& biases = get_key(j, "biases", context);
  if (!biases.is_null()) {
    if (!biases.is_array() || biases.size() != weights.size())
      throw ConfigError(context + ": \"biases\" must be null or one vector per layer");
    std::vector<Vector> bs;
    for (std::size_t i = 0; i < biases.size(); ++i) {
      const json& arr = biases[i];
      if (!arr.is_array())
        throw ConfigError(context + ": each bias must be an array of numbers");
      Vector b(arr.size());
      for (std::size_t k = 0; k < arr.size(); ++k) {
        if (!arr[k].is_number())
          throw ConfigError(context + ": each bias must be an array of numbers");
        b[k] = arr[k].get<double>();
      }
      bs.push_back(std::move(b));
    }
    model.params.biases = std::move(bs);
  }
  const json& acts = get_key(j, "activations", context);
  if (!acts.is_array() || acts.size() != model.params.weights.size())
    throw ConfigError(context + ": expected one activation per layer");
  for (std::size_t i = 0; i < acts.size(); ++i)
    model.acts.push_back(
        activation_from_json(acts[i], context + ".activations[" + std::to_string(i) + "]"));
  try {
    validate(model.params);
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("model: ") + e.what());
  }
  return model;
}

json qspec_to_json(const QSpec& spec) {
  json j;
  j["name"] = spec.name;
  switch (spec.variant) {
    case QSpec::Variant::ImbalanceMatrix:
      j["variant"] = "imbalance";
      j["layer"] = spec.layer;
      break;
    case QSpec::Variant::QM: {
      j["variant"] = "qm";
      json gens = json::array();
      for (const auto& m : spec.generator.ms) gens.push_back(matrix_to_json(m));
      j["generators"] = std::move(gens);
      json pi;
      if (spec.pi.rule == PiSpec::Rule::Identity) {
        pi["rule"] = "identity";
      } else {
        pi["rule"] = "power";
        pi["alpha"] = spec.pi.alpha;
      }
      j["pi"] = std::move(pi);
      break;
    }
    case QSpec::Variant::HomogeneousDiag:
      j["variant"] = "homogeneous_diag";
      j["alpha"] = spec.alpha;
      break;
    case QSpec::Variant::ElementwiseIntegral:
      j["variant"] = "elementwise_integral";
      j["activation"] = activation_to_json(spec.act);
      j["x0"] = spec.x0;
      break;
    case QSpec::Variant::RadialSpectralLambda:
      j["variant"] = "radial_spectral_lambda";
      break;
    case QSpec::Variant::EllipseQ:
      j["variant"] = "ellipse";
      j["a"] = spec.ellipse_a;
      break;
  }
  return j;
}

QSpec qspec_from_json(const json& j, const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": quantity spec must be an object");
  const std::string variant = get_string(j, "variant", context);
  if (variant == "imbalance") {
    require_keys(j, {"variant", "name", "layer"}, context);
    QSpec spec = QSpec::imbalance(j.contains("layer") ? get_size(j, "layer", context) : 1);
    if (j.contains("name")) spec.name = get_string(j, "name", context);
    return spec;
  }
  if (variant == "qm") {
    require_keys(j, {"variant", "name", "generators", "pi"}, context);
    const json& gens = get_key(j, "generators", context);
    if (!gens.is_array() || gens.empty())
      throw ConfigError(context + ": \"generators\" must be a non-empty array");
    HiddenLieElement gen;
    for (std::size_t i = 0; i < gens.size(); ++i)
      gen.ms.push_back(
          matrix_from_json(gens[i], context + ".generators[" + std::to_string(i) + "]"));
    const json& pj = get_key(j, "pi", context);
    const std::string rule = get_string(pj, "rule", context + ".pi");
    PiSpec pi;
    if (rule == "identity") {
      require_keys(pj, {"rule"}, context + ".pi");
      pi = PiSpec::identity();
    } else if (rule == "power") {
      require_keys(pj, {"rule", "alpha"}, context + ".pi");
      pi = PiSpec::power(get_double(pj, "alpha", context + ".pi"));
    } else {
      throw ConfigError(context + ".pi: unknown rule \"" + rule + "\"");
    }
    QSpec spec = QSpec::qm(std::move(gen), pi);
    if (j.contains("name")) spec.name = get_string(j, "name", context);
    return spec;
  }
  if (variant == "homogeneous_diag") {
    require_keys(j, {"variant", "name", "alpha"}, context);
    QSpec spec = QSpec::homogeneous_diag(get_double(j, "alpha", context));
    if (j.contains("name")) spec.name = get_string(j, "name", context);
    return spec;
  }
  if (variant == "elementwise_integral") {
    require_keys(j, {"variant", "name", "activation", "x0"}, context);
    const Activation act =
        activation_from_json(get_key(j, "activation", context), context + ".activation");
    const double x0 = j.contains("x0") ? get_double(j, "x0", context) : 0.0;
    QSpec spec = QSpec::elementwise_integral(act, x0);
    if (j.contains("name")) spec.name = get_string(j, "name", context);
    return spec;
  }
  if (variant == "radial_spectral_lambda") {
    require_keys(j, {"variant", "name"}, context);
    QSpec spec = QSpec::radial_spectral_lambda();
    if (j.contains("name")) spec.name = get_string(j, "name", context);
    return spec;
  }
  if (variant == "ellipse") {
    require_keys(j, {"variant", "name", "a"}, context);
    QSpec spec = QSpec::ellipse(get_double(j, "a", context));
    if (j.contains("name")) spec.name = get_string(j, "name", context);
    return spec;
  }
  throw ConfigError(context + ": unknown quantity variant \"" + variant + "\"");
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void atomic_write_file(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot open file for writing: " + tmp);
    out << content;
    out.flush();
    if (!out) throw ConfigError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    std::remove(tmp.c_str());
    throw ConfigError("rename failed: " + path);
  }
}

void save_model(const std::string& path, const ModelFile& model) {
  atomic_write_file(path, dump_json(model_to_json(model)));
}

ModelFile load_model(const std::string& path) {
  return model_from_json(parse_json(read_file(path), path));
}

std::string trajectory_to_csv(const Trajectory& t) {
  std::string out = "step,loss,grad_norm";
  for (const auto& name : t.q_names) out += ",q_" + name;
  for (const auto& name : t.q_names) out += ",dq_" + name;
  out += "\n";
  for (std::size_t r = 0; r < t.steps.size(); ++r) {
    out += std::to_string(t.steps[r]);
    out += "," + format_double(t.loss[r]);
    out += "," + format_double(t.grad_norm[r]);
    for (std::size_t q = 0; q < t.q_names.size(); ++q)
      out += "," + format_double(t.q_value[q][r]);
    for (std::size_t q = 0; q < t.q_names.size(); ++q)
      out += "," + format_double(t.q_drift[q][r]);
    out += "\n";
  }
  return out;
}

void save_trajectory_csv(const std::string& path, const Trajectory& t) {
  atomic_write_file(path, trajectory_to_csv(t));
}

void Table::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns.size())
    throw ShapeError("Table::add_row: cell count does not match the header");
  rows.push_back(std::move(cells));
}

std::string Table::to_csv() const {
  std::string out;
  for (std::size_t c = 0; c < columns.size(); ++c) {
    if (c) out += ",";
    out += columns[c];
  }
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ",";
      out += row[c];
    }
    out += "\n";
  }
  return out;
}

std::string cell(double x) { return format_double(x); }
std::string cell(long x) { return std::to_string(x); }
std::string cell(std::size_t x) { return std::to_string(x); }

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string content_hash_hex(const std::string& bytes) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

}  // namespace noether
