#include "flowlab/config.hpp"

#include <cctype>
#include <cstdio>
#include <sstream>

#include "flowlab/io.hpp"

namespace flowlab {

double ConfigValue::as_number() const {
  if (!is_number()) throw ConfigError("config value is not a number");
  return std::get<double>(data_);
}

bool ConfigValue::as_bool() const {
  if (!is_bool()) throw ConfigError("config value is not a bool");
  return std::get<bool>(data_);
}

const std::string& ConfigValue::as_string() const {
  if (!is_string()) throw ConfigError("config value is not a string");
  return std::get<std::string>(data_);
}

const ConfigValue::Array& ConfigValue::as_array() const {
  if (!is_array()) throw ConfigError("config value is not an array");
  return std::get<Array>(data_);
}

std::vector<double> ConfigValue::as_number_list() const {
  std::vector<double> out;
  for (const auto& v : as_array()) out.push_back(v.as_number());
  return out;
}

Eigen::VectorXd ConfigValue::as_vector() const {
  const auto list = as_number_list();
  Eigen::VectorXd v(static_cast<Eigen::Index>(list.size()));
  for (std::size_t i = 0; i < list.size(); ++i) v[static_cast<Eigen::Index>(i)] = list[i];
  return v;
}

Eigen::MatrixXd ConfigValue::as_matrix() const {
  const auto& rows = as_array();
  if (rows.empty()) throw ConfigError("config matrix is empty");
  const auto first = rows[0].as_number_list();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(first.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto row = rows[i].as_number_list();
    if (row.size() != first.size()) throw ConfigError("config matrix rows have uneven lengths");
    for (std::size_t j = 0; j < row.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
  }
  return m;
}

std::string ConfigValue::serialize() const {
  std::ostringstream os;
  if (is_number()) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", as_number());
    os << buf;
  } else if (is_bool()) {
    os << (as_bool() ? "true" : "false");
  } else if (is_string()) {
    os << '"' << as_string() << '"';
  } else {
    os << '[';
    const auto& arr = as_array();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      if (i) os << ", ";
      os << arr[i].serialize();
    }
    os << ']';
  }
  return os.str();
}

namespace {

struct Cursor {
  const std::string& text;
  std::size_t pos = 0;
  int line = 1;
  std::string origin;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
  }
  bool done() const { return pos >= text.size(); }
  char peek() const { return text[pos]; }
  char take() {
    const char c = text[pos++];
    if (c == '\n') ++line;
    return c;
  }
  void skip_ws_inline() {
    while (!done() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) ++pos;
  }
  void skip_ws_and_comments() {
    while (!done()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        take();
      } else if (c == '#') {
        while (!done() && peek() != '\n') ++pos;
      } else {
        break;
      }
    }
  }
};

ConfigValue parse_value(Cursor& cur);

ConfigValue parse_array(Cursor& cur) {
  cur.take();  // '['
  ConfigValue::Array arr;
  cur.skip_ws_and_comments();
  if (!cur.done() && cur.peek() == ']') {
    cur.take();
    return ConfigValue(std::move(arr));
  }
  while (true) {
    cur.skip_ws_and_comments();
    arr.push_back(parse_value(cur));
    cur.skip_ws_and_comments();
    if (cur.done()) cur.fail("unterminated array");
    const char c = cur.take();
    if (c == ']') break;
    if (c != ',') cur.fail("expected ',' or ']' in array");
  }
  return ConfigValue(std::move(arr));
}

ConfigValue parse_value(Cursor& cur) {
  if (cur.done()) cur.fail("expected a value");
  const char c = cur.peek();
  if (c == '[') return parse_array(cur);
  if (c == '"') {
    cur.take();
    std::string s;
    while (!cur.done() && cur.peek() != '"') s.push_back(cur.take());
    if (cur.done()) cur.fail("unterminated string");
    cur.take();
    return ConfigValue(std::move(s));
  }
  std::string token;
  while (!cur.done() && (std::isalnum(static_cast<unsigned char>(cur.peek())) ||
                         std::string("+-._").find(cur.peek()) != std::string::npos))
    token.push_back(cur.take());
  if (token.empty()) cur.fail("expected a value");
  if (token == "true") return ConfigValue(true);
  if (token == "false") return ConfigValue(false);
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end != token.c_str() + token.size()) cur.fail("malformed number '" + token + "'");
  return ConfigValue(v);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config cfg;
  Cursor cur{text, 0, 1, origin};
  std::string section;
  while (true) {
    cur.skip_ws_and_comments();
    if (cur.done()) break;
    if (cur.peek() == '[') {
      cur.take();
      section.clear();
      while (!cur.done() && cur.peek() != ']') section.push_back(cur.take());
      if (cur.done()) cur.fail("unterminated section header");
      cur.take();
      continue;
    }
    std::string key;
    while (!cur.done() && (std::isalnum(static_cast<unsigned char>(cur.peek())) ||
                           cur.peek() == '_' || cur.peek() == '-'))
      key.push_back(cur.take());
    if (key.empty()) cur.fail("expected a key");
    cur.skip_ws_inline();
    if (cur.done() || cur.take() != '=') cur.fail("expected '=' after key '" + key + "'");
    cur.skip_ws_inline();
    if (section.empty()) cur.fail("key '" + key + "' appears outside any [section]");
    cfg.tables_[section][key] = parse_value(cur);
  }
  return cfg;
}

Config Config::parse_file(const std::filesystem::path& path) {
  return parse(read_text_file(path), path.string());
}

bool Config::has(const std::string& section, const std::string& key) const {
  return find(section, key) != nullptr;
}

const ConfigValue* Config::find(const std::string& section, const std::string& key) const {
  const auto sit = tables_.find(section);
  if (sit == tables_.end()) return nullptr;
  const auto kit = sit->second.find(key);
  return kit == sit->second.end() ? nullptr : &kit->second;
}

const ConfigValue& Config::get(const std::string& section, const std::string& key) const {
  const ConfigValue* v = find(section, key);
  if (!v) throw ConfigError("missing config key [" + section + "] " + key);
  return *v;
}

double Config::number_or(const std::string& section, const std::string& key,
                         double fallback) const {
  const ConfigValue* v = find(section, key);
  return v ? v->as_number() : fallback;
}

std::string Config::string_or(const std::string& section, const std::string& key,
                              const std::string& fallback) const {
  const ConfigValue* v = find(section, key);
  return v ? v->as_string() : fallback;
}

bool Config::bool_or(const std::string& section, const std::string& key, bool fallback) const {
  const ConfigValue* v = find(section, key);
  return v ? v->as_bool() : fallback;
}

void Config::set(const std::string& section, const std::string& key, ConfigValue value) {
  tables_[section][key] = std::move(value);
}

std::string Config::canonical() const {
  std::ostringstream os;
  for (const auto& [section, table] : tables_) {
    os << '[' << section << "]\n";
    for (const auto& [key, value] : table) os << key << " = " << value.serialize() << '\n';
  }
  return os.str();
}

std::uint64_t Config::digest() const {
  const std::string c = canonical();
  return fnv1a64(c.data(), c.size());
}

// ------------------------------------------------------------------ builders

std::optional<Eigen::MatrixXd> read_matrix_spec(const Config& cfg, const std::string& section,
                                                const std::string& prefix, int dim) {
  if (const auto* v = cfg.find(section, prefix + "_iso"))
    return Eigen::MatrixXd(v->as_number() * Eigen::MatrixXd::Identity(dim, dim));
  if (const auto* v = cfg.find(section, prefix + "_diag")) {
    const Eigen::VectorXd diag = v->as_vector();
    if (diag.size() != dim) throw ConfigError(prefix + "_diag has wrong length");
    return Eigen::MatrixXd(diag.asDiagonal());
  }
  if (const auto* v = cfg.find(section, prefix + "_dense")) {
    Eigen::MatrixXd m = v->as_matrix();
    if (m.rows() != dim || m.cols() != dim) throw ConfigError(prefix + "_dense has wrong shape");
    return m;
  }
  return std::nullopt;
}

namespace {

int target_dim(const Config& cfg) {
  if (cfg.has("target", "dim")) return static_cast<int>(cfg.get("target", "dim").as_number());
  if (cfg.has("target", "mean")) return static_cast<int>(cfg.get("target", "mean").as_vector().size());
  if (cfg.has("target", "means"))
    return static_cast<int>(cfg.get("target", "means").as_matrix().cols());
  if (cfg.has("target", "points"))
    return static_cast<int>(cfg.get("target", "points").as_matrix().cols());
  if (cfg.has("target", "y")) return static_cast<int>(cfg.get("target", "y").as_vector().size());
  throw ConfigError("[target] needs dim (or mean/means/points to infer it)");
}

}  // namespace

TargetPtr make_target(const Config& cfg) {
  const std::string family = cfg.get("target", "family").as_string();
  const int d = target_dim(cfg);
  const Eigen::MatrixXd c_ref =
      read_matrix_spec(cfg, "target", "c", d).value_or(Eigen::MatrixXd::Identity(d, d));

  if (family == "gaussian") {
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    if (cfg.has("target", "mean")) mean = cfg.get("target", "mean").as_vector();
    const Eigen::MatrixXd cov =
        read_matrix_spec(cfg, "target", "cov", d).value_or(Eigen::MatrixXd::Identity(d, d));
    return std::make_shared<GaussianTarget>(mean, cov, c_ref);
  }
  if (family == "gaussian_tail") {
    const Eigen::MatrixXd a =
        read_matrix_spec(cfg, "target", "a", d).value_or(Eigen::MatrixXd::Identity(d, d));
    return std::make_shared<GaussianTailTarget>(a, c_ref);
  }
  if (family == "mixture") {
    const Eigen::VectorXd w = cfg.get("target", "weights").as_vector();
    const Eigen::MatrixXd means = cfg.get("target", "means").as_matrix();
    if (means.rows() != w.size()) throw ConfigError("mixture: weights/means mismatch");
    std::vector<double> weights(w.data(), w.data() + w.size());
    std::vector<Eigen::VectorXd> mean_list;
    std::vector<Eigen::MatrixXd> cov_list;
    for (int i = 0; i < means.rows(); ++i) mean_list.push_back(means.row(i).transpose());
    if (cfg.has("target", "covs_iso")) {
      for (double s : cfg.get("target", "covs_iso").as_number_list())
        cov_list.push_back(s * Eigen::MatrixXd::Identity(d, d));
    } else if (cfg.has("target", "covs_diag")) {
      const Eigen::MatrixXd diags = cfg.get("target", "covs_diag").as_matrix();
      for (int i = 0; i < diags.rows(); ++i)
        cov_list.push_back(Eigen::MatrixXd(diags.row(i).transpose().asDiagonal()));
    } else {
      throw ConfigError("mixture: needs covs_iso or covs_diag");
    }
    if (cov_list.size() != weights.size()) throw ConfigError("mixture: weights/covs mismatch");
    return std::make_shared<MixtureTarget>(weights, mean_list, cov_list, c_ref);
  }
  if (family == "ball") {
    return BoundedSupportTarget::uniform_ball(d, cfg.get("target", "radius").as_number(),
                                              cfg.number_or("target", "delta", 0.01));
  }
  if (family == "atoms") {
    return BoundedSupportTarget::atoms(cfg.get("target", "points").as_matrix(),
                                       cfg.get("target", "weights").as_vector(),
                                       cfg.number_or("target", "delta", 0.01));
  }
  if (family == "bayes_posterior") {
    const Eigen::VectorXd y = cfg.get("target", "y").as_vector();
    const std::string op_name = cfg.string_or("target", "operator", "identity");
    const double probe_radius =
        cfg.number_or("target", "probe_radius", 6.0 * std::sqrt(operator_norm(c_ref)));
    BayesPosteriorTarget::ForwardOperator op;
    if (op_name == "identity") {
      op = BayesPosteriorTarget::identity_op(d, probe_radius);
    } else if (op_name == "linear") {
      op = BayesPosteriorTarget::linear_op(cfg.get("target", "g_matrix").as_matrix(),
                                           probe_radius);
    } else if (op_name == "tanh") {
      op = BayesPosteriorTarget::tanh_op(d);
    } else if (op_name == "constant") {
      op = BayesPosteriorTarget::constant_op(cfg.get("target", "g_value").as_vector(), d);
    } else {
      throw ConfigError("bayes_posterior: unknown operator '" + op_name + "'");
    }
    const Eigen::MatrixXd sigma = read_matrix_spec(cfg, "target", "sigma", op.codim)
                                      .value_or(Eigen::MatrixXd::Identity(op.codim, op.codim));
    return std::make_shared<BayesPosteriorTarget>(c_ref, op, sigma, y);
  }
  throw UnsupportedFamilyError("unknown target family '" + family + "'");
}

Schedule make_schedule(const Config& cfg) {
  const int steps = static_cast<int>(cfg.number_or("schedule", "steps", 128));
  const double delta = cfg.number_or("schedule", "delta", 0.0);
  const std::string kind = cfg.string_or("schedule", "kind", "uniform");
  if (kind == "uniform") return uniform_schedule(steps, delta);
  if (kind == "geometric") {
    const double t1 = cfg.number_or("schedule", "t1", (1.0 - delta) / steps);
    return geometric_schedule(steps, t1, delta);
  }
  throw ConfigError("schedule: unknown kind '" + kind + "'");
}

FlowSpec make_flow_spec(const Config& cfg) {
  FlowSpec spec;
  spec.name = cfg.string_or("flow", "kind", "follmer");
  if (spec.name == "follmer") {
    spec.kind = FlowKind::Follmer;
  } else if (spec.name == "rectified") {
    spec.kind = FlowKind::Rectified;
  } else if (spec.name == "prob-ode") {
    spec.kind = FlowKind::Follmer;
    spec.exponential_stepper = true;
  } else {
    throw ConfigError("flow: unknown kind '" + spec.name + "'");
  }
  const std::string mode = cfg.string_or("flow", "mode", "closed_form");
  if (mode == "closed_form") {
    spec.mode = EvalMode::ClosedForm;
  } else if (mode == "quadrature") {
    spec.mode = EvalMode::Quadrature;
  } else {
    throw ConfigError("flow: unknown mode '" + mode + "'");
  }
  spec.quadrature.budget = static_cast<int>(cfg.number_or("flow", "quadrature_budget", 100000));
  spec.quadrature.seed = static_cast<std::uint64_t>(cfg.number_or("flow", "quadrature_seed", 0));
  return spec;
}

std::shared_ptr<VelocityField> make_field(const Config& cfg, TargetPtr target) {
  const FlowSpec spec = make_flow_spec(cfg);
  return std::make_shared<VelocityField>(std::move(target), spec.kind, spec.mode,
                                         spec.quadrature);
}

std::optional<PerturbationModel> make_perturbation(const Config& cfg, const Target& target) {
  const std::string mode = cfg.string_or("perturbation", "mode", "none");
  if (mode == "none") return std::nullopt;
  const double eps = cfg.number_or("perturbation", "eps", 0.0);
  const auto seed = static_cast<std::uint64_t>(cfg.number_or("perturbation", "seed", 7));
  if (mode == "random") {
    const double freq = cfg.number_or("perturbation", "frequency", 3.2);
    const double ramp = cfg.number_or("perturbation", "ramp", 2.0);
    return PerturbationModel::random_field(target.dim(), eps, seed, freq, ramp);
  }
  if (mode == "adversarial") {
    Eigen::VectorXd dir;
    if (cfg.has("perturbation", "direction")) {
      dir = cfg.get("perturbation", "direction").as_vector();
    } else {
      dir = target.mean();
      if (dir.norm() < 1e-12) dir = Eigen::VectorXd::Unit(target.dim(), 0);
    }
    return PerturbationModel::adversarial(target.dim(), eps, dir,
                                          cfg.number_or("perturbation", "omega_t", 0.0),
                                          cfg.number_or("perturbation", "phase", 0.0));
  }
  throw ConfigError("perturbation: unknown mode '" + mode + "'");
}

}  // namespace flowlab
