#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flowlab/integrate.hpp"
#include "flowlab/targets.hpp"

namespace flowlab {

// One value of the run-configuration format: number, string, bool, or a
// (possibly nested) array.
class ConfigValue {
 public:
  using Array = std::vector<ConfigValue>;

  ConfigValue() : data_(0.0) {}
  explicit ConfigValue(double v) : data_(v) {}
  explicit ConfigValue(bool v) : data_(v) {}
  explicit ConfigValue(std::string v) : data_(std::move(v)) {}
  explicit ConfigValue(Array v) : data_(std::move(v)) {}

  bool is_number() const { return std::holds_alternative<double>(data_); }
  bool is_string() const { return std::holds_alternative<std::string>(data_); }
  bool is_bool() const { return std::holds_alternative<bool>(data_); }
  bool is_array() const { return std::holds_alternative<Array>(data_); }

  double as_number() const;
  bool as_bool() const;
  const std::string& as_string() const;
  const Array& as_array() const;

  std::vector<double> as_number_list() const;
  Eigen::VectorXd as_vector() const;
  Eigen::MatrixXd as_matrix() const;  // array of row arrays

  std::string serialize() const;

 private:
  std::variant<double, bool, std::string, Array> data_;
};

// Sectioned key-value configuration:
//   [target]
//   family = "mixture"
//   means = [[-0.7, 0.0], [0.7, 0.3]]
class Config {
 public:
  using Table = std::map<std::string, ConfigValue>;

  static Config parse(const std::string& text, const std::string& origin = "<string>");
  static Config parse_file(const std::filesystem::path& path);

  bool has(const std::string& section, const std::string& key) const;
  const ConfigValue& get(const std::string& section, const std::string& key) const;
  const ConfigValue* find(const std::string& section, const std::string& key) const;

  double number_or(const std::string& section, const std::string& key, double fallback) const;
  std::string string_or(const std::string& section, const std::string& key,
                        const std::string& fallback) const;
  bool bool_or(const std::string& section, const std::string& key, bool fallback) const;

  void set(const std::string& section, const std::string& key, ConfigValue value);

  // Deterministic re-serialization (sections and keys sorted) and its digest.
  std::string canonical() const;
  std::uint64_t digest() const;

  const std::map<std::string, Table>& tables() const { return tables_; }

 private:
  std::map<std::string, Table> tables_;
};

// ----- builders -------------------------------------------------------------

TargetPtr make_target(const Config& cfg);
Schedule make_schedule(const Config& cfg);

// follmer | rectified | prob-ode (the last shares the score-driven field).
struct FlowSpec {
  std::string name = "follmer";
  FlowKind kind = FlowKind::Follmer;
  bool exponential_stepper = false;
  EvalMode mode = EvalMode::ClosedForm;
  QuadratureOptions quadrature;
};
FlowSpec make_flow_spec(const Config& cfg);

std::shared_ptr<VelocityField> make_field(const Config& cfg, TargetPtr target);

std::optional<PerturbationModel> make_perturbation(const Config& cfg, const Target& target);

// Reads a matrix given as `<prefix>_iso = s`, `<prefix>_diag = [...]`, or
// row-major `<prefix>_dense = [[...], ...]`.
std::optional<Eigen::MatrixXd> read_matrix_spec(const Config& cfg, const std::string& section,
                                                const std::string& prefix, int dim);

}  // namespace flowlab
