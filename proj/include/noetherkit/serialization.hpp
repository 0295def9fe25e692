#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "noetherkit/conserved.hpp"
#include "noetherkit/flow.hpp"
#include "noetherkit/network.hpp"

namespace noether {

/// Malformed or out-of-contract input files (JSON syntax, unknown keys,
/// wrong types, inconsistent shapes). The CLI maps this to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A network together with its per-layer activations — the on-disk model
/// unit. The last activation is the output layer's (usually Identity).
struct ModelFile {
  MlpParams params;
  std::vector<Activation> acts;
};

/// Formats a finite double with 17 significant digits (lossless for IEEE
/// binary64: parsing the string recovers the identical bits). Non-finite
/// values are rejected — they have no JSON representation.
std::string format_double(double x);

/// Serializes a JSON document with format_double applied to every float,
/// object keys in nlohmann's (sorted) order, and stable 2-space indentation,
/// so equal documents yield byte-identical text.
std::string dump_json(const nlohmann::json& j);

/// Parses text as JSON; syntax errors become ConfigError.
nlohmann::json parse_json(const std::string& text, const std::string& what);

/// Throws ConfigError when `j` is not an object or has a key outside
/// `allowed` — strict parsing so config typos fail loudly.
void require_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                  const std::string& context);

nlohmann::json matrix_to_json(const Matrix& a);
Matrix matrix_from_json(const nlohmann::json& j, const std::string& context);

nlohmann::json activation_to_json(const Activation& act);
Activation activation_from_json(const nlohmann::json& j, const std::string& context);

nlohmann::json model_to_json(const ModelFile& model);
ModelFile model_from_json(const nlohmann::json& j);

nlohmann::json qspec_to_json(const QSpec& spec);
QSpec qspec_from_json(const nlohmann::json& j, const std::string& context);

/// Whole-file helpers (write side is atomic: temp file + rename, so readers
/// never observe a partially written file).
std::string read_file(const std::string& path);
void atomic_write_file(const std::string& path, const std::string& content);

void save_model(const std::string& path, const ModelFile& model);
ModelFile load_model(const std::string& path);

/// Trajectory CSV: `step,loss,grad_norm,q_<name>...,dq_<name>...`, one row
/// per record point, floats at 17 significant digits.
std::string trajectory_to_csv(const Trajectory& t);
void save_trajectory_csv(const std::string& path, const Trajectory& t);

/// A named rectangular table with preformatted cells; numeric cells go
/// through format_double so re-runs are byte-identical.
struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> cells);
  std::string to_csv() const;
};

std::string cell(double x);
std::string cell(long x);
std::string cell(std::size_t x);

/// FNV-1a 64-bit content hash (hex) — provenance fingerprint for configs.
std::uint64_t fnv1a64(const std::string& bytes);
std::string content_hash_hex(const std::string& bytes);

}  // namespace noether
