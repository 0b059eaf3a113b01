#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

namespace dsmcsg::app {
namespace {

namespace pt = boost::property_tree;

struct KeyDef {
  const char* key;
  // Default given the experiment and the already-resolved model kind.
  std::string (*def)(Experiment, ModelKind);
};

std::string kind_default(Experiment e) {
  switch (e) {
    case Experiment::test1:
    case Experiment::mc_rate: return "gambling";
    case Experiment::test2:
    case Experiment::spectral: return "wealth";
    case Experiment::test3:
    case Experiment::bounds: return "traffic";
  }
  return "gambling";
}

#define K(name, expr) {name, [](Experiment e, ModelKind m) -> std::string { (void)e; (void)m; return expr; }}

const std::vector<KeyDef>& schema() {
  using E = Experiment;
  using M = ModelKind;
  static const std::vector<KeyDef> keys = {
      K("experiment.id", ""),
      K("experiment.output_dir", ""),
      K("experiment.threads", "0"),
      K("experiment.write_log", "false"),

      K("run.n", e == E::spectral || e == E::bounds ? "10000" : e == E::mc_rate ? "0" : "100000"),
      K("run.seed", "1"),
      K("run.orders", e == E::test3 ? "5,5" : e == E::bounds ? "3" : "5"),
      K("run.nq", ""),
      K("run.dt", e == E::test1 || e == E::mc_rate ? "0.1" : e == E::spectral ? "0.01" : "auto"),
      K("run.t_final", e == E::test3 ? "300" : e == E::bounds ? "20" : e == E::spectral ? "0.5"
                       : e == E::mc_rate ? "1" : "10"),
      K("run.mode", e == E::spectral ? "sigmoid" : "indicator"),
      K("run.beta", m == M::traffic && e == E::spectral ? "0.01" : "1"),
      K("run.rescale", "false"),
      K("run.rescale_form", "variance_matching"),
      K("run.record_every", e == E::test2 || e == E::test3 || e == E::spectral ? "10"
                            : e == E::mc_rate ? "0" : "1"),
      K("run.strict_step", "false"),
      K("run.init", m == M::traffic ? "0,1" : "0,2"),

      K("model.kind", kind_default(e)),
      K("model.kappa", "1"),
      K("model.delta_offset", "0"),
      K("model.delta_slope", m == M::gambling ? "0.5" : "1"),
      K("model.lambda", "0.5"),
      K("model.sigma2", "0.5"),
      K("model.epsilon", e == E::test2 || e == E::test3 ? "0.5,0.1,0.05" : m == M::gambling ? "1" : "0.1"),
      K("model.w_a", "0.9"),
      K("model.w_b", "1.1"),
      K("model.rho", e == E::test3 || e == E::bounds ? "0.4,0.6" : "0.4"),
      K("model.mu_offset", "1"),
      K("model.mu_slope", "2"),
      K("model.alpha_offset", "0"),
      K("model.alpha_slope", "2"),
      K("model.a", "auto"),
      K("model.c", "auto"),

      K("grid.v_min", "0"),
      K("grid.v_max", m == M::traffic ? "1" : m == M::wealth ? "30" : "20"),
      K("grid.dv", m == M::traffic ? "0.02" : "0.05"),
      K("grid.l1_lo", "0"),
      K("grid.l1_hi", m == M::traffic ? "1" : "10"),
      K("grid.out_of_range_limit", "0.001"),

      K("fp.enabled", e == E::test2 || e == E::test3 ? "true" : "false"),
      K("fp.v_min", "0"),
      K("fp.v_max", m == M::traffic ? "1" : "10"),
      K("fp.dv", m == M::traffic ? "0.02" : "0.05"),
      K("fp.dt", "auto"),
      K("fp.t_final", e == E::test3 ? "300" : "40"),
      K("fp.output_every", e == E::test3 ? "1" : "0.1"),

      K("study.orders", "1,2,3,4,5,6,7,8"),
      K("study.reference_order", "50"),
      K("study.sizes", "1000,10000,100000"),
      K("study.repetitions", "20"),
      K("study.alpha_cases", "1,2"),
      K("study.min_decades", "3"),
      K("study.max_plateau_decades", "1"),
      K("study.l1_tolerance", e == E::test2 ? "0.08" : "0.05"),
      K("study.variance_tolerance", "0.05"),
      K("study.variance_law_tolerance", "0.1"),
      K("study.slope_target", "-0.5"),
      K("study.slope_tolerance", "0.1"),
      K("study.bound_fraction", "0.01"),
  };
  return keys;
}

#undef K

bool known_key(const std::string& k) {
  const auto& s = schema();
  return std::any_of(s.begin(), s.end(), [&](const KeyDef& d) { return k == d.key; });
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  return out;
}

class Values {
 public:
  explicit Values(std::map<std::string, std::string> m) : m_(std::move(m)) {}

  const std::string& str(const std::string& key) const { return m_.at(key); }

  double real(const std::string& key) const { return parse_real(key, str(key)); }

  double real_or_auto(const std::string& key, double fallback) const {
    return str(key) == "auto" ? fallback : real(key);
  }

  std::int64_t integer(const std::string& key) const { return parse_int(key, str(key)); }

  std::size_t count(const std::string& key, std::size_t min = 0) const {
    const auto v = integer(key);
    if (v < static_cast<std::int64_t>(min))
      throw ConfigError(fmt::format("{}: must be >= {}, got {}", key, min, v));
    return static_cast<std::size_t>(v);
  }

  bool boolean(const std::string& key) const {
    std::string v = str(key);
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
    if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
    if (v == "false" || v == "off" || v == "no" || v == "0") return false;
    throw ConfigError(fmt::format("{}: expected a boolean, got '{}'", key, str(key)));
  }

  std::vector<double> reals(const std::string& key) const {
    std::vector<double> out;
    for (const auto& p : split(str(key), ',')) out.push_back(parse_real(key, p));
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of numbers");
    return out;
  }

  std::vector<int> ints(const std::string& key, bool allow_empty = false) const {
    std::vector<int> out;
    if (allow_empty && str(key).empty()) return out;
    for (const auto& p : split(str(key), ',')) out.push_back(static_cast<int>(parse_int(key, p)));
    if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of integers");
    return out;
  }

 private:
  static double parse_real(const std::string& key, const std::string& s) {
    double v = 0.0;
    const auto* b = s.data();
    const auto* e = s.data() + s.size();
    const auto r = std::from_chars(b, e, v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != e || !std::isfinite(v))
      throw ConfigError(fmt::format("{}: expected a number, got '{}'", key, s));
    return v;
  }
  static std::int64_t parse_int(const std::string& key, const std::string& s) {
    std::int64_t v = 0;
    const auto* b = s.data();
    const auto* e = s.data() + s.size();
    const auto r = std::from_chars(b, e, v);
    if (s.empty() || r.ec != std::errc{} || r.ptr != e)
      throw ConfigError(fmt::format("{}: expected an integer, got '{}'", key, s));
    return v;
  }

  std::map<std::string, std::string> m_;
};

std::map<std::string, std::string> read_ini(std::istream& is) {
  pt::ptree tree;
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigParseError("config parse error: " + e.message(), e.line());
  }
  std::map<std::string, std::string> out;
  for (const auto& [section, child] : tree) {
    if (child.empty())
      throw ConfigError("key '" + section + "' appears outside a section");
    for (const auto& [key, value] : child) {
      const std::string full = section + "." + key;
      if (!known_key(full)) throw ConfigError("unknown key '" + full + "'");
      out[full] = trim(value.data());
    }
  }
  return out;
}

void apply_overrides(std::map<std::string, std::string>& m, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not of the form section.key=value");
    const std::string key = trim(o.substr(0, eq));
    if (!known_key(key)) throw ConfigError("unknown key '" + key + "'");
    m[key] = trim(o.substr(eq + 1));
  }
}

ExperimentConfig resolve(std::map<std::string, std::string> given) {
  const auto id = given.find("experiment.id");
  if (id == given.end() || id->second.empty()) throw ConfigError("missing required key 'experiment.id'");
  const Experiment exp = experiment_from_string(id->second);
  if (!given.count("model.kind")) given["model.kind"] = kind_default(exp);
  const ModelKind kind = model_kind_from_string(given["model.kind"]);

  ExperimentConfig c;
  for (const auto& d : schema()) {
    auto it = given.find(d.key);
    c.resolved.emplace_back(d.key, it != given.end() ? it->second : d.def(exp, kind));
  }
  Values v({c.resolved.begin(), c.resolved.end()});

  c.experiment = exp;
  c.output_dir = v.str("experiment.output_dir");
  c.threads = static_cast<int>(v.count("experiment.threads"));
  c.write_log = v.boolean("experiment.write_log");

  c.n = v.count("run.n");
  c.seed = v.count("run.seed");
  c.orders = v.ints("run.orders");
  c.nq = v.ints("run.nq", true);
  c.dt = v.real_or_auto("run.dt", 0.0);
  c.t_final = v.real("run.t_final");
  const auto& mode = v.str("run.mode");
  if (mode == "indicator") c.mode = AcceptanceMode::indicator;
  else if (mode == "sigmoid") c.mode = AcceptanceMode::sigmoid;
  else throw ConfigError("run.mode: expected indicator or sigmoid, got '" + mode + "'");
  c.beta = v.real("run.beta");
  c.rescale = v.boolean("run.rescale");
  const auto& form = v.str("run.rescale_form");
  if (form == "variance_matching") c.rescale_form = RescaleForm::variance_matching;
  else if (form == "literal") c.rescale_form = RescaleForm::literal;
  else throw ConfigError("run.rescale_form: expected variance_matching or literal, got '" + form + "'");
  c.record_every = v.count("run.record_every");
  c.strict_step = v.boolean("run.strict_step");
  const auto init = v.reals("run.init");
  if (init.size() != 2) throw ConfigError("run.init: expected 'lo,hi'");
  c.init_lo = init[0];
  c.init_hi = init[1];

  c.model = kind;
  c.kappa = v.real("model.kappa");
  c.delta_offset = v.real("model.delta_offset");
  c.delta_slope = v.real("model.delta_slope");
  c.lambda = v.real("model.lambda");
  c.sigma2 = v.real("model.sigma2");
  c.epsilons = v.reals("model.epsilon");
  c.w_a = v.real("model.w_a");
  c.w_b = v.real("model.w_b");
  c.rhos = v.reals("model.rho");
  c.mu_offset = v.real("model.mu_offset");
  c.mu_slope = v.real("model.mu_slope");
  c.alpha_offset = v.real("model.alpha_offset");
  c.alpha_slope = v.real("model.alpha_slope");
  c.a = v.real_or_auto("model.a", -1.0);
  c.c = v.real_or_auto("model.c", -1.0);

  c.v_min = v.real("grid.v_min");
  c.v_max = v.real("grid.v_max");
  c.dv = v.real("grid.dv");
  c.l1_lo = v.real("grid.l1_lo");
  c.l1_hi = v.real("grid.l1_hi");
  c.out_of_range_limit = v.real("grid.out_of_range_limit");

  c.fp_enabled = v.boolean("fp.enabled") || c.rescale;
  c.fp_v_min = v.real("fp.v_min");
  c.fp_v_max = v.real("fp.v_max");
  c.fp_dv = v.real("fp.dv");
  c.fp_dt = v.real_or_auto("fp.dt", 0.0);
  c.fp_t_final = v.real("fp.t_final");
  c.fp_output_every = v.real("fp.output_every");

  c.study_orders = v.ints("study.orders");
  c.reference_order = static_cast<int>(v.integer("study.reference_order"));
  for (int s : v.ints("study.sizes")) {
    if (s < 2) throw ConfigError("study.sizes: every size must be >= 2");
    c.sizes.push_back(static_cast<std::size_t>(s));
  }
  c.repetitions = v.count("study.repetitions", 1);
  c.alpha_cases = v.ints("study.alpha_cases");
  c.min_decades = v.real("study.min_decades");
  c.max_plateau_decades = v.real("study.max_plateau_decades");
  c.l1_tolerance = v.real("study.l1_tolerance");
  c.variance_tolerance = v.real("study.variance_tolerance");
  c.variance_law_tolerance = v.real("study.variance_law_tolerance");
  c.slope_target = v.real("study.slope_target");
  c.slope_tolerance = v.real("study.slope_tolerance");
  c.bound_fraction = v.real("study.bound_fraction");
  return c;
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::test1: return "test1";
    case Experiment::test2: return "test2";
    case Experiment::test3: return "test3";
    case Experiment::spectral: return "spectral";
    case Experiment::mc_rate: return "mc-rate";
    case Experiment::bounds: return "bounds";
  }
  return "unknown";
}

Experiment experiment_from_string(const std::string& s) {
  for (auto e : {Experiment::test1, Experiment::test2, Experiment::test3, Experiment::spectral,
                 Experiment::mc_rate, Experiment::bounds})
    if (s == to_string(e)) return e;
  throw ConfigError("experiment.id: unknown experiment '" + s +
                    "' (expected test1, test2, test3, spectral, mc-rate or bounds)");
}

GpcBasis ExperimentConfig::basis() const {
  if (nq.empty()) return build_basis(param_spec(), orders);
  return build_basis(param_spec(), orders, nq);
}

GpcBasis ExperimentConfig::basis_with_order(int order) const {
  return build_basis(param_spec(), std::vector<int>(dims(), order));
}

GamblingParams ExperimentConfig::gambling_params() const {
  GamblingParams p;
  p.kappa = kappa;
  p.delta = {delta_offset, delta_slope, 0};
  return p;
}

WealthParams ExperimentConfig::wealth_params(double epsilon) const {
  WealthParams p;
  p.kappa = kappa;
  p.delta = {delta_offset, delta_slope, 0};
  p.lambda = lambda;
  p.sigma2 = sigma2;
  p.epsilon = epsilon;
  p.w_a = w_a;
  p.w_b = w_b;
  return p;
}

TrafficParams ExperimentConfig::traffic_params(double rho, double epsilon) const {
  TrafficParams p;
  p.rho = rho;
  p.epsilon = epsilon;
  p.sigma2 = sigma2;
  p.mu = {mu_offset, mu_slope, 0};
  p.alpha = {alpha_offset, alpha_slope, dims() > 1 ? 1 : 0};
  p.a = a;
  p.c = c;
  return p;
}

ModelSpec ExperimentConfig::build_model(const GpcBasis& b, double epsilon, double rho) const {
  switch (model) {
    case ModelKind::gambling: return gambling_model(gambling_params(), b);
    case ModelKind::wealth: return wealth_model(wealth_params(epsilon), b);
    case ModelKind::traffic: return traffic_model(traffic_params(rho, epsilon), b);
  }
  throw ConfigError("model.kind: unsupported");
}

CollisionConfig ExperimentConfig::collision_config(double epsilon) const {
  CollisionConfig cc;
  if (dt > 0.0) cc.dt = dt;
  else cc.dt = model == ModelKind::traffic ? epsilon : epsilon / 10.0;
  cc.mode = mode;
  cc.beta = beta;
  cc.rescale = rescale;
  cc.rescale_form = rescale_form;
  cc.t_final = t_final;
  cc.seed = seed;
  cc.strict_step = strict_step;
  cc.record_log = write_log || experiment == Experiment::spectral;
  cc.record_every = record_every;
  return cc;
}

std::string ExperimentConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& [key, value] : resolved) {
    const auto dot = key.find('.');
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string ExperimentConfig::hash() const {
  // Where results go and how many threads produce them do not change them.
  std::string text;
  for (const auto& [key, value] : resolved)
    if (key != "experiment.output_dir" && key != "experiment.threads") text += key + "=" + value + "\n";
  return fmt::format("{:016x}", fnv1a(text));
}

ExperimentConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides) {
  std::istringstream is(text);
  auto m = read_ini(is);
  apply_overrides(m, overrides);
  return resolve(std::move(m));
}

ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::map<std::string, std::string> m;
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file '" + path + "'");
    m = read_ini(is);
  }
  apply_overrides(m, overrides);
  return resolve(std::move(m));
}

void validate_config(const ExperimentConfig& c) {
  using E = Experiment;
  const auto need = [&](ModelKind k) {
    if (c.model != k)
      throw ConfigError("model.kind: experiment " + to_string(c.experiment) + " requires the " + to_string(k) +
                        " model, got " + to_string(c.model));
  };
  switch (c.experiment) {
    case E::test1:
    case E::mc_rate: need(ModelKind::gambling); break;
    case E::test2: need(ModelKind::wealth); break;
    case E::test3:
    case E::bounds: need(ModelKind::traffic); break;
    case E::spectral: break;
  }

  if (c.orders.empty() || c.orders.size() > 2) throw ConfigError("run.orders: one or two random dimensions");
  for (int o : c.orders)
    if (o < 0) throw ConfigError("run.orders: orders must be >= 0");
  if (!c.nq.empty() && c.nq.size() != c.orders.size())
    throw ConfigError("run.nq: one entry per random dimension required");
  if (c.model != ModelKind::traffic && c.dims() != 1)
    throw ConfigError("run.orders: the " + to_string(c.model) + " model has one random parameter");
  if (c.experiment != E::mc_rate && c.n < 2) throw ConfigError("run.n: at least two particles required");
  if (!(c.t_final > 0.0)) throw ConfigError("run.t_final: must be > 0");
  if (!(c.init_lo < c.init_hi)) throw ConfigError("run.init: lo must be below hi");
  if (c.model == ModelKind::traffic && (c.init_lo < 0.0 || c.init_hi > 1.0))
    throw ConfigError("run.init: traffic speeds must lie in [0,1]");
  if (c.model != ModelKind::traffic && c.init_lo < 0.0) throw ConfigError("run.init: wealth must be >= 0");
  if (c.rescale && c.mode != AcceptanceMode::sigmoid)
    throw ConfigError("run.rescale: rescaling applies to sigmoid acceptance only");

  if (!(c.v_min < c.v_max) || !(c.dv > 0.0)) throw ConfigError("grid: need v_min < v_max and dv > 0");
  VGrid::with_spacing(c.v_min, c.v_max, c.dv);
  if (c.fp_enabled) {
    if (c.model == ModelKind::traffic && c.dims() > 1 && c.rescale)
      throw ConfigError("fp: rescaling is supported for one random dimension");
    VGrid::with_spacing(c.fp_v_min, c.fp_v_max, c.fp_dv);
    const double fdt = c.fp_dt > 0.0 ? c.fp_dt : c.fp_dv / 2.0;
    if (fdt > c.fp_dv / 2.0 + 1e-15) throw ConfigError("fp.dt: must not exceed fp.dv / 2");
    if (!(c.fp_output_every > 0.0)) throw ConfigError("fp.output_every: must be > 0");
    if (!(c.fp_t_final > 0.0)) throw ConfigError("fp.t_final: must be > 0");
  }

  if (c.experiment == E::spectral) {
    if (c.reference_order < 1) throw ConfigError("study.reference_order: must be >= 1");
    for (int o : c.study_orders)
      if (o < 0 || o > c.reference_order)
        throw ConfigError("study.orders: every order must lie in [0, study.reference_order]");
  }
  if (c.experiment == E::mc_rate && c.sizes.size() < 2) throw ConfigError("study.sizes: at least two sizes");
  if (c.experiment == E::bounds)
    for (int a : c.alpha_cases)
      if (a != 1 && a != 2) throw ConfigError("study.alpha_cases: entries must be 1 or 2");

  // Model invariants at every node the runs will use.
  const auto b = c.basis();
  for (double eps : c.epsilons) {
    for (double rho : c.rhos) {
      switch (c.model) {
        case ModelKind::gambling: validate(c.gambling_params(), b); break;
        case ModelKind::wealth: validate(c.wealth_params(eps), b); break;
        case ModelKind::traffic: {
          auto tp = c.traffic_params(rho, eps);
          if (c.experiment == E::bounds) {
            for (int ac : c.alpha_cases) {
              tp.alpha = AffineParam::constant(ac);
              validate(tp, b);
            }
          } else {
            validate(tp, b);
          }
          break;
        }
      }
      auto cc = c.collision_config(eps);
      cc.validate();
    }
  }
}

}  // namespace dsmcsg::app
