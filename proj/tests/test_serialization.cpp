// JSON/CSV serialization: lossless float text, strict config parsing,
// bit-exact model round-trips, deterministic tables, and content hashing.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "noetherkit/network.hpp"
#include "noetherkit/rng.hpp"
#include "noetherkit/serialization.hpp"
#include "noetherkit/symmetry.hpp"

using namespace noether;
using nlohmann::json;

namespace {

std::uint64_t bits_of(double x) {
  std::uint64_t b;
  std::memcpy(&b, &x, sizeof b);
  return b;
}

std::string temp_path(const std::string& leaf) {
  return (std::filesystem::temp_directory_path() / leaf).string();
}

ModelFile sample_model(bool with_biases) {
  Rng rng(41);
  ModelFile m;
  m.params.widths = {3, 4, 2};
  m.params.weights = {rng.gaussian_matrix(4, 3), rng.gaussian_matrix(2, 4)};
  m.params.weights[0](0, 0) = -0.0;  // signed zero must survive the trip
  if (with_biases) {
    m.params.biases = std::vector<Vector>{rng.gaussian_vector(4),
                                          rng.gaussian_vector(2)};
  }
  m.acts = {Activation::leaky_relu(0.1), Activation::identity()};
  return m;
}

}  // namespace

TEST_CASE("float formatting is lossless and rejects non-finite values") {
  // Hand-picked values with awkward shortest representations.
  for (double x : {0.1, 1.0 / 3.0, -0.0, 0.0, 3.0, 1e-308, -2.5e17,
                   std::numeric_limits<double>::denorm_min(),
                   std::numeric_limits<double>::max()}) {
    const std::string s = format_double(x);
    CHECK(bits_of(std::strtod(s.c_str(), nullptr)) == bits_of(x));
    // Always marked as a float so JSON parsers keep the sign of -0.0.
    CHECK(s.find_first_of(".eE") != std::string::npos);
  }
  CHECK(format_double(3.0) == "3.0");
  CHECK(format_double(-0.0) == "-0.0");
  CHECK(format_double(0.1) == "0.10000000000000001");

  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.gaussian() * std::pow(10.0, rng.uniform(-20.0, 20.0));
    const std::string s = format_double(x);
    CHECK(bits_of(std::strtod(s.c_str(), nullptr)) == bits_of(x));
  }

  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::infinity()), ConfigError);
  CHECK_THROWS_AS(format_double(-std::numeric_limits<double>::infinity()), ConfigError);
  CHECK_THROWS_AS(format_double(std::numeric_limits<double>::quiet_NaN()), ConfigError);
}

TEST_CASE("json dump is deterministic; parse is strict") {
  json a;
  a["beta"] = 0.1;
  a["alpha"] = json::array({1, 2, 3});
  json b;
  b["alpha"] = json::array({1, 2, 3});
  b["beta"] = 0.1;
  CHECK(dump_json(a) == dump_json(b));  // key order never leaks
  CHECK(dump_json(a).back() == '\n');
  CHECK(dump_json(a).find("0.10000000000000001") != std::string::npos);

  const json round = parse_json(dump_json(a), "doc");
  CHECK(round == a);

  CHECK_THROWS_AS(parse_json("{not json", "doc"), ConfigError);
  CHECK_THROWS_AS(parse_json("", "doc"), ConfigError);

  CHECK_NOTHROW(require_keys(a, {"alpha", "beta", "gamma"}, "doc"));
  CHECK_THROWS_AS(require_keys(a, {"alpha"}, "doc"), ConfigError);
  CHECK_THROWS_AS(require_keys(json::array(), {"alpha"}, "doc"), ConfigError);
}

TEST_CASE("matrix JSON round-trip is bitwise and shape-checked") {
  Rng rng(2);
  const Matrix m = rng.gaussian_matrix(3, 5);
  const Matrix back = matrix_from_json(matrix_to_json(m), "m");
  REQUIRE(back.rows() == 3);
  REQUIRE(back.cols() == 5);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(bits_of(back(i, j)) == bits_of(m(i, j)));

  json bad = matrix_to_json(m);
  bad["data"].erase(0);
  CHECK_THROWS_AS(matrix_from_json(bad, "m"), ConfigError);
  json extra = matrix_to_json(m);
  extra["unexpected"] = 1;
  CHECK_THROWS_AS(matrix_from_json(extra, "m"), ConfigError);
  json missing = matrix_to_json(m);
  missing.erase("cols");
  CHECK_THROWS_AS(matrix_from_json(missing, "m"), ConfigError);
}

TEST_CASE("activation JSON round-trips and strictness") {
  const std::vector<Activation> acts = {
      Activation::identity(),
      Activation::leaky_relu(0.1),
      Activation::relu(),
      Activation::sigmoid(),
      Activation::tanh(),
      Activation::homogeneous_power(1.5),
      Activation::radial_rescale(RadialProfile::InverseSquare),
      Activation::radial_rescale(RadialProfile::TanhOverR),
      Activation::row_radial(RadialProfile::InverseSquare),
  };
  for (const Activation& a : acts) {
    const json j = activation_to_json(a);
    const Activation back = activation_from_json(j, "act");
    CHECK(activation_to_json(back) == j);
  }

  CHECK_THROWS_AS(activation_from_json(json{{"kind", "Swish"}}, "act"), ConfigError);
  CHECK_THROWS_AS(activation_from_json(json{{"kind", "LeakyReLU"}}, "act"), ConfigError);
  CHECK_THROWS_AS(
      activation_from_json(json{{"kind", "Identity"}, {"slope", 0.1}}, "act"),
      ConfigError);
  CHECK_THROWS_AS(
      activation_from_json(json{{"kind", "RadialRescale"}, {"profile", "cubic"}}, "act"),
      ConfigError);
  CHECK_THROWS_AS(activation_from_json(json("Identity"), "act"), ConfigError);
}

TEST_CASE("model file round-trip through disk is byte-identical") {
  for (bool with_biases : {false, true}) {
    const ModelFile m = sample_model(with_biases);
    const std::string path = temp_path(with_biases ? "nk_model_b.json" : "nk_model.json");
    save_model(path, m);
    const ModelFile back = load_model(path);

    REQUIRE(back.params.widths == m.params.widths);
    REQUIRE(back.acts.size() == m.acts.size());
    for (std::size_t l = 0; l < m.params.weights.size(); ++l)
      for (std::size_t i = 0; i < m.params.weights[l].rows(); ++i)
        for (std::size_t j = 0; j < m.params.weights[l].cols(); ++j)
          CHECK(bits_of(back.params.weights[l](i, j)) ==
                bits_of(m.params.weights[l](i, j)));
    CHECK(back.params.biases.has_value() == with_biases);

    // Serialize -> parse -> serialize is a fixed point byte for byte.
    CHECK(dump_json(model_to_json(back)) == dump_json(model_to_json(m)));
    CHECK(read_file(path) == dump_json(model_to_json(m)));
  }
}

TEST_CASE("model parsing rejects malformed documents") {
  const json good = model_to_json(sample_model(true));
  CHECK_NOTHROW(model_from_json(good));

  json extra = good;
  extra["comment"] = "hi";
  CHECK_THROWS_AS(model_from_json(extra), ConfigError);

  json short_widths = good;
  short_widths["widths"] = json::array({3});
  CHECK_THROWS_AS(model_from_json(short_widths), ConfigError);

  json bad_width = good;
  bad_width["widths"] = json::array({3, 0, 2});
  CHECK_THROWS_AS(model_from_json(bad_width), ConfigError);

  json missing_weight = good;
  missing_weight["weights"].erase(1);
  CHECK_THROWS_AS(model_from_json(missing_weight), ConfigError);

  json wrong_shape = good;
  wrong_shape["widths"] = json::array({3, 5, 2});  // weights say 4 hidden
  CHECK_THROWS_AS(model_from_json(wrong_shape), ConfigError);

  json bad_biases = good;
  bad_biases["biases"] = json::array({json::array({1.0})});
  CHECK_THROWS_AS(model_from_json(bad_biases), ConfigError);

  json few_acts = good;
  few_acts["activations"].erase(1);
  CHECK_THROWS_AS(model_from_json(few_acts), ConfigError);
}

TEST_CASE("quantity spec JSON round-trips") {
  Matrix sym(2, 2);
  sym(0, 0) = 1.0, sym(0, 1) = 0.5, sym(1, 0) = 0.5, sym(1, 1) = -2.0;
  HiddenLieElement gen;
  gen.ms.push_back(sym);

  const std::vector<QSpec> specs = {
      QSpec::imbalance(),
      QSpec::imbalance(2),
      QSpec::qm(gen, PiSpec::identity()),
      QSpec::qm(gen, PiSpec::power(2.0)),
      QSpec::homogeneous_diag(2.0),
      QSpec::elementwise_integral(Activation::sigmoid(), 0.0),
      QSpec::radial_spectral_lambda(),
      QSpec::ellipse(3.0),
  };
  for (const QSpec& s : specs) {
    const json j = qspec_to_json(s);
    const QSpec back = qspec_from_json(j, "q");
    CHECK(qspec_to_json(back) == j);
    CHECK(back.name == s.name);
  }

  CHECK_THROWS_AS(qspec_from_json(json{{"variant", "unknown"}}, "q"), ConfigError);
  CHECK_THROWS_AS(
      qspec_from_json(json{{"variant", "imbalance"}, {"layer", 1}, {"extra", 1}}, "q"),
      ConfigError);
  CHECK_THROWS_AS(
      qspec_from_json(json{{"variant", "qm"},
                           {"generators", json::array()},
                           {"pi", json{{"rule", "identity"}}}},
                      "q"),
      ConfigError);
  CHECK_THROWS_AS(
      qspec_from_json(json{{"variant", "qm"},
                           {"generators", json::array({matrix_to_json(sym)})},
                           {"pi", json{{"rule", "cube"}}}},
                      "q"),
      ConfigError);
}

TEST_CASE("trajectory CSV layout") {
  Trajectory t;
  t.steps = {0, 5};
  t.loss = {0.5, 0.25};
  t.grad_norm = {2.0, 1.0};
  t.q_names = {"imb"};
  t.q_value = {{1.5, 1.5}};
  t.q_drift = {{0.0, 1e-3}};
  CHECK(trajectory_to_csv(t) ==
        "step,loss,grad_norm,q_imb,dq_imb\n"
        "0,0.5,2.0,1.5,0.0\n"
        "5,0.25,1.0,1.5,0.001\n");

  // Two quantities: values first, then drifts, in declaration order.
  t.q_names = {"a", "b"};
  t.q_value = {{1.0, 1.0}, {2.0, 2.0}};
  t.q_drift = {{0.0, 0.0}, {0.0, 0.0}};
  const std::string csv = trajectory_to_csv(t);
  CHECK(csv.substr(0, csv.find('\n')) == "step,loss,grad_norm,q_a,q_b,dq_a,dq_b");

  const std::string path = temp_path("nk_traj.csv");
  save_trajectory_csv(path, t);
  CHECK(read_file(path) == csv);
}

TEST_CASE("atomic file writes") {
  const std::string path = temp_path("nk_atomic.txt");
  atomic_write_file(path, "first");
  CHECK(read_file(path) == "first");
  atomic_write_file(path, "second");  // clean overwrite
  CHECK(read_file(path) == "second");
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  std::filesystem::remove(path);

  CHECK_THROWS_AS(atomic_write_file("/nonexistent-dir/x/y.txt", "z"), ConfigError);
  CHECK_THROWS_AS(read_file(temp_path("nk_never_written.txt")), ConfigError);
}

TEST_CASE("tables format deterministically") {
  Table t;
  t.name = "demo";
  t.columns = {"n", "value"};
  t.add_row({cell(static_cast<long>(1)), cell(0.5)});
  t.add_row({cell(std::size_t{2}), cell(0.25)});
  CHECK(t.to_csv() == "n,value\n1,0.5\n2,0.25\n");
  CHECK_THROWS_AS(t.add_row({"only-one"}), ShapeError);

  CHECK(cell(2.0) == "2.0");
  CHECK(cell(-3L) == "-3");
  CHECK(cell(std::size_t{7}) == "7");
}

TEST_CASE("content hash matches the reference FNV-1a vectors") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
  CHECK(content_hash_hex("") == "cbf29ce484222325");
  CHECK(content_hash_hex("foobar") == "85944171f73967e8");
  CHECK(content_hash_hex("x") != content_hash_hex("y"));
}
