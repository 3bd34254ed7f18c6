#include "ptgrad/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <utility>

#include "ptgrad/augmented.hpp"
#include "ptgrad/control.hpp"
#include "ptgrad/heom.hpp"
#include "ptgrad/rng.hpp"
#include "ptgrad/stochastic.hpp"
#include "ptgrad/tdvp.hpp"
#include "ptgrad/ttm.hpp"

namespace ptgrad {
namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw config_error(msg); }

void check_keys(const json& o, const std::string& section,
                std::initializer_list<const char*> allowed) {
  for (auto it = o.begin(); it != o.end(); ++it) {
    bool known = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        known = true;
        break;
      }
    if (!known) fail("unknown key \"" + it.key() + "\" in " + section);
  }
}

const json* opt_key(const json& o, const char* key) {
  auto it = o.find(key);
  return it == o.end() ? nullptr : &*it;
}

const json& req_key(const json& o, const char* key, const std::string& where) {
  const json* p = opt_key(o, key);
  if (!p) fail(where + ": missing required key \"" + key + "\"");
  return *p;
}

double as_num(const json& v, const std::string& what) {
  if (!v.is_number()) fail(what + " must be a number");
  return v.get<double>();
}

int as_int(const json& v, const std::string& what) {
  if (!v.is_number_integer()) fail(what + " must be an integer");
  long long x = v.get<long long>();
  if (x < -(1LL << 31) || x > (1LL << 31)) fail(what + " is out of range");
  return static_cast<int>(x);
}

std::uint64_t as_u64(const json& v, const std::string& what) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer() && v.get<long long>() >= 0)
    return static_cast<std::uint64_t>(v.get<long long>());
  fail(what + " must be a non-negative integer");
}

std::string as_str(const json& v, const std::string& what) {
  if (!v.is_string()) fail(what + " must be a string");
  return v.get<std::string>();
}

std::vector<double> as_dvec(const json& v, const std::string& what) {
  if (!v.is_array()) fail(what + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) out.push_back(as_num(e, what + " entry"));
  return out;
}

std::vector<int> as_ivec(const json& v, const std::string& what) {
  if (!v.is_array()) fail(what + " must be an array of integers");
  std::vector<int> out;
  for (const auto& e : v) out.push_back(as_int(e, what + " entry"));
  return out;
}

std::vector<std::string> as_svec(const json& v, const std::string& what) {
  if (!v.is_array()) fail(what + " must be an array of strings");
  std::vector<std::string> out;
  for (const auto& e : v) out.push_back(as_str(e, what + " entry"));
  return out;
}

double num_or(const json& o, const char* key, const std::string& where,
              double def) {
  const json* p = opt_key(o, key);
  return p ? as_num(*p, where + "." + key) : def;
}

int int_or(const json& o, const char* key, const std::string& where, int def) {
  const json* p = opt_key(o, key);
  return p ? as_int(*p, where + "." + key) : def;
}

std::string str_or(const json& o, const char* key, const std::string& where,
                   const std::string& def) {
  const json* p = opt_key(o, key);
  return p ? as_str(*p, where + "." + key) : def;
}

const json& obj_section(const json& root, const char* key,
                        const std::string& where) {
  const json& s = req_key(root, key, where);
  if (!s.is_object()) fail(where + "." + key + " must be an object");
  return s;
}

bool is_pauli(const std::string& name) {
  return name == "sigma_x" || name == "sigma_y" || name == "sigma_z";
}

bool is_state(const std::string& name) {
  return name == "ground" || name == "excited" || name == "plus_x" ||
         name == "minus_x" || name == "mixed";
}

ModelConfig parse_model(const json& o) {
  check_keys(o, "model", {"omega_q", "hamiltonian", "coupling",
                          "coupling_scale", "rho0", "target"});
  ModelConfig m;
  m.omega_q = num_or(o, "omega_q", "model", 1.0);
  m.hamiltonian = str_or(o, "hamiltonian", "model", "sigma_x");
  m.coupling = str_or(o, "coupling", "model", "sigma_z");
  m.coupling_scale = num_or(o, "coupling_scale", "model", 0.5);
  m.rho0 = str_or(o, "rho0", "model", "minus_x");
  m.target = str_or(o, "target", "model", "");
  return m;
}

BathConfig parse_bath(const json& o) {
  BathConfig b;
  b.type = as_str(req_key(o, "type", "bath"), "bath.type");
  if (b.type == "none") {
    check_keys(o, "bath", {"type"});
  } else if (b.type == "ohmic_exp") {
    check_keys(o, "bath", {"type", "alpha", "temperature"});
    b.alpha = as_num(req_key(o, "alpha", "bath"), "bath.alpha");
    b.temperature = num_or(o, "temperature", "bath", 0.0);
  } else if (b.type == "lorentzian") {
    check_keys(o, "bath", {"type", "lambda", "omega0", "kappa", "temperature"});
    b.lambda = as_num(req_key(o, "lambda", "bath"), "bath.lambda");
    b.omega0 = as_num(req_key(o, "omega0", "bath"), "bath.omega0");
    b.kappa = as_num(req_key(o, "kappa", "bath"), "bath.kappa");
    b.temperature = num_or(o, "temperature", "bath", 0.0);
  } else {
    fail("bath.type must be one of none, ohmic_exp, lorentzian");
  }
  return b;
}

MethodConfig parse_method(const json& o, const std::string& where) {
  MethodConfig m;
  m.type = as_str(req_key(o, "type", where), where + ".type");
  if (m.type == "heom") {
    check_keys(o, where, {"type", "m_exp", "depth"});
    m.depth = as_int(req_key(o, "depth", where), where + ".depth");
    m.m_exp = int_or(o, "m_exp", where, 0);
  } else if (m.type == "stochastic") {
    check_keys(o, where, {"type", "n_traj"});
    m.n_traj = as_int(req_key(o, "n_traj", where), where + ".n_traj");
  } else if (m.type == "augmented") {
    check_keys(o, where, {"type", "d"});
    m.d = as_int(req_key(o, "d", where), where + ".d");
  } else if (m.type == "tdvp") {
    check_keys(o, where, {"type", "n_modes", "omega_max"});
    m.n_modes = as_int(req_key(o, "n_modes", where), where + ".n_modes");
    m.omega_max = as_num(req_key(o, "omega_max", where), where + ".omega_max");
  } else if (m.type == "ttm") {
    check_keys(o, where, {"type", "t_c"});
    m.t_c = as_int(req_key(o, "t_c", where), where + ".t_c");
  } else {
    fail(where + ".type must be one of heom, stochastic, augmented, tdvp, ttm");
  }
  return m;
}

GridConfig parse_grid(const json& o) {
  check_keys(o, "grid", {"dt", "t_steps"});
  GridConfig g;
  g.dt = as_num(req_key(o, "dt", "grid"), "grid.dt");
  g.t_steps = as_int(req_key(o, "t_steps", "grid"), "grid.t_steps");
  return g;
}

OptimizeConfig parse_optimize(const json& o) {
  check_keys(o, "optimize",
             {"channels", "init", "lower", "upper", "max_iters", "lr_scale"});
  OptimizeConfig c;
  c.present = true;
  c.channels = as_svec(req_key(o, "channels", "optimize"), "optimize.channels");
  if (const json* p = opt_key(o, "init")) c.init = as_dvec(*p, "optimize.init");
  if (const json* p = opt_key(o, "lower"))
    c.lower = as_dvec(*p, "optimize.lower");
  if (const json* p = opt_key(o, "upper"))
    c.upper = as_dvec(*p, "optimize.upper");
  c.max_iters = int_or(o, "max_iters", "optimize", 200);
  c.lr_scale = num_or(o, "lr_scale", "optimize", 0.05);
  return c;
}

json parse_root(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::exception& e) {
    fail(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) fail("config root must be a JSON object");
  return root;
}

double parse_compression(const json& root) {
  const json* p = opt_key(root, "compression");
  if (!p) return -1.0;
  if (!p->is_object()) fail("compression must be an object");
  check_keys(*p, "compression", {"eps_rel"});
  double eps = as_num(req_key(*p, "eps_rel", "compression"),
                      "compression.eps_rel");
  if (!(eps >= 0.0) || !std::isfinite(eps))
    fail("compression.eps_rel must be >= 0");
  return eps;
}

std::string parse_output(const json& root) {
  const json* p = opt_key(root, "output");
  if (!p) return ".";
  if (!p->is_object()) fail("output must be an object");
  check_keys(*p, "output", {"dir"});
  return str_or(*p, "dir", "output", ".");
}

void validate_model(const ModelConfig& m) {
  if (!std::isfinite(m.omega_q)) fail("model.omega_q must be finite");
  if (m.hamiltonian != "none" && !is_pauli(m.hamiltonian))
    fail("model.hamiltonian must be a Pauli name or none");
  if (!is_pauli(m.coupling)) fail("model.coupling must be a Pauli name");
  if (!std::isfinite(m.coupling_scale))
    fail("model.coupling_scale must be finite");
  if (!is_state(m.rho0)) fail("model.rho0 is not a known state name");
  if (!m.target.empty() && !is_state(m.target))
    fail("model.target is not a known state name");
}

void validate_bath(const BathConfig& b) {
  if (b.type == "none") return;
  if (b.temperature < 0) fail("bath.temperature must be >= 0");
  if (b.type == "ohmic_exp") {
    if (b.alpha < 0) fail("bath.alpha must be >= 0");
  } else {
    if (b.lambda < 0) fail("bath.lambda must be >= 0");
    if (b.kappa < 0) fail("bath.kappa must be >= 0");
    if (b.temperature != 0) fail("the lorentzian bath supports temperature 0 only");
  }
}

// Per-type method rules against the shared model and bath.
void validate_method(const MethodConfig& me, const ModelConfig& mo,
                     const BathConfig& b) {
  if (me.type == "heom") {
    if (me.depth < 1) fail("method.depth must be >= 1");
    if (b.type == "lorentzian" && me.m_exp != 0)
      fail("the lorentzian correlation pair is exact; drop method.m_exp");
    if (b.type == "ohmic_exp" && me.m_exp < 1)
      fail("an ohmic bath needs method.m_exp >= 1 exponential terms");
  } else if (me.type == "stochastic") {
    if (me.n_traj < 1) fail("method.n_traj must be >= 1");
  } else if (me.type == "augmented") {
    if (me.d < 2) fail("method.d must be >= 2");
    if (b.type == "ohmic_exp")
      fail("the augmented method matches lorentzian baths only");
  } else if (me.type == "tdvp") {
    if (me.n_modes < 1) fail("method.n_modes must be >= 1");
    if (!(me.omega_max > 0)) fail("method.omega_max must be > 0");
    if (b.type != "ohmic_exp")
      fail("the tdvp method discretizes an ohmic_exp bath");
    if (b.temperature != 0) fail("the tdvp ansatz assumes temperature 0");
    if (mo.coupling != "sigma_z" || mo.coupling_scale != 0.5)
      fail("the tdvp ansatz fixes the coupling to 0.5 sigma_z");
    if (mo.hamiltonian != "sigma_x" && mo.hamiltonian != "none")
      fail("the tdvp ansatz drives along sigma_x");
    if (mo.rho0 != "minus_x") fail("the tdvp ansatz starts from minus_x");
  } else if (me.type == "ttm") {
    if (me.t_c < 1) fail("method.t_c must be >= 1");
  } else {
    fail("unknown method type " + me.type);
  }
}

std::vector<std::string> method_names(const std::vector<MethodConfig>& ms) {
  std::vector<std::string> names;
  for (const MethodConfig& m : ms) {
    int n = 1;
    for (const MethodConfig& prev : ms) {
      if (&prev == &m) break;
      if (prev.type == m.type) ++n;
    }
    names.push_back(n == 1 ? m.type : m.type + "-" + std::to_string(n));
  }
  return names;
}

}  // namespace

void RunConfig::validate() const {
  validate_model(model);
  validate_bath(bath);
  if (!(grid.dt > 0) || !std::isfinite(grid.dt)) fail("grid.dt must be > 0");
  if (grid.t_steps < 1) fail("grid.t_steps must be >= 1");
  validate_method(method, model, bath);
  if (observables.empty()) fail("observables must be nonempty");
  for (const std::string& o : observables)
    if (!is_pauli(o)) fail("observable " + o + " is not a Pauli name");
  if (method.type == "tdvp" &&
      observables != std::vector<std::string>{"sigma_x"})
    fail("the tdvp method reports sigma_x only");
  if (optimize.present) {
    if (optimize.channels.empty()) fail("optimize.channels must be nonempty");
    for (const std::string& c : optimize.channels)
      if (!is_pauli(c)) fail("optimize channel " + c + " is not a Pauli name");
    auto arity = [&](const std::vector<double>& v, const char* what) {
      if (!v.empty() && v.size() != optimize.channels.size())
        fail(std::string("optimize.") + what + " arity does not match channels");
    };
    arity(optimize.init, "init");
    arity(optimize.lower, "lower");
    arity(optimize.upper, "upper");
    if (!optimize.lower.empty() && !optimize.upper.empty())
      for (std::size_t i = 0; i < optimize.lower.size(); ++i)
        if (optimize.lower[i] > optimize.upper[i])
          fail("optimize bounds are inverted");
    if (optimize.max_iters < 1) fail("optimize.max_iters must be >= 1");
    if (!(optimize.lr_scale > 0)) fail("optimize.lr_scale must be > 0");
    if (model.target.empty()) fail("optimize needs model.target");
  }
}

void CompareConfig::validate() const {
  validate_model(model);
  validate_bath(bath);
  if (!(grid.dt > 0) || !std::isfinite(grid.dt)) fail("grid.dt must be > 0");
  if (grid.t_steps < 1) fail("grid.t_steps must be >= 1");
  if (methods.size() < 2) fail("compare needs at least two methods");
  for (const MethodConfig& m : methods) {
    if (m.type == "ttm")
      fail("compare supports heom, stochastic, augmented, and tdvp methods");
    validate_method(m, model, bath);
  }
  if (!reference.empty()) {
    auto names = method_names(methods);
    if (std::find(names.begin(), names.end(), reference) == names.end())
      fail("reference \"" + reference + "\" does not name any method");
  }
}

void BenchConfig::validate() const {
  if (chi.empty() && ttm_t_c.empty())
    fail("bench needs a chi or ttm_t_c sweep");
  for (int c : chi)
    if (c < 2) fail("bench.chi entries must be >= 2");
  for (int t : ttm_t_c)
    if (t < 1) fail("bench.ttm_t_c entries must be >= 1");
  if (t_steps < 2) fail("bench.t_steps must be >= 2");
  if (reps < 1) fail("bench.reps must be >= 1");
}

RunConfig parse_run_config(const std::string& json_text) {
  json root = parse_root(json_text);
  check_keys(root, "config", {"model", "bath", "method", "grid", "compression",
                              "optimize", "observables", "output", "seed"});
  RunConfig cfg;
  cfg.model = parse_model(obj_section(root, "model", "config"));
  cfg.bath = parse_bath(obj_section(root, "bath", "config"));
  cfg.method = parse_method(obj_section(root, "method", "config"), "method");
  cfg.grid = parse_grid(obj_section(root, "grid", "config"));
  cfg.eps_rel = parse_compression(root);
  if (const json* p = opt_key(root, "optimize")) {
    if (!p->is_object()) fail("optimize must be an object");
    cfg.optimize = parse_optimize(*p);
  }
  if (const json* p = opt_key(root, "observables"))
    cfg.observables = as_svec(*p, "observables");
  else if (cfg.method.type == "tdvp")
    cfg.observables = {"sigma_x"};
  else
    cfg.observables = {"sigma_x", "sigma_y", "sigma_z"};
  cfg.out_dir = parse_output(root);
  if (const json* p = opt_key(root, "seed")) cfg.seed = as_u64(*p, "seed");
  cfg.validate();
  return cfg;
}

CompareConfig parse_compare_config(const std::string& json_text) {
  json root = parse_root(json_text);
  check_keys(root, "config", {"model", "bath", "grid", "compression",
                              "methods", "reference", "output", "seed"});
  CompareConfig cfg;
  cfg.model = parse_model(obj_section(root, "model", "config"));
  cfg.bath = parse_bath(obj_section(root, "bath", "config"));
  cfg.grid = parse_grid(obj_section(root, "grid", "config"));
  cfg.eps_rel = parse_compression(root);
  const json& ms = req_key(root, "methods", "config");
  if (!ms.is_array()) fail("methods must be an array");
  for (std::size_t i = 0; i < ms.size(); ++i) {
    if (!ms[i].is_object()) fail("methods entries must be objects");
    cfg.methods.push_back(
        parse_method(ms[i], "methods[" + std::to_string(i) + "]"));
  }
  cfg.reference = str_or(root, "reference", "config", "");
  cfg.out_dir = parse_output(root);
  if (const json* p = opt_key(root, "seed")) cfg.seed = as_u64(*p, "seed");
  cfg.validate();
  return cfg;
}

BenchConfig parse_bench_config(const std::string& json_text) {
  json root = parse_root(json_text);
  check_keys(root, "config", {"bench", "output", "seed"});
  const json& b = obj_section(root, "bench", "config");
  check_keys(b, "bench", {"chi", "ttm_t_c", "t_steps", "reps"});
  BenchConfig cfg;
  if (const json* p = opt_key(b, "chi")) cfg.chi = as_ivec(*p, "bench.chi");
  if (const json* p = opt_key(b, "ttm_t_c"))
    cfg.ttm_t_c = as_ivec(*p, "bench.ttm_t_c");
  cfg.t_steps = int_or(b, "t_steps", "bench", 20);
  cfg.reps = int_or(b, "reps", "bench", 5);
  cfg.out_dir = parse_output(root);
  if (const json* p = opt_key(root, "seed")) cfg.seed = as_u64(*p, "seed");
  cfg.validate();
  return cfg;
}

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw io_error("cannot read config file " + path);
  return buf.str();
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_file(path));
}

CompareConfig load_compare_config(const std::string& path) {
  return parse_compare_config(read_file(path));
}

BenchConfig load_bench_config(const std::string& path) {
  return parse_bench_config(read_file(path));
}

Mat pauli_by_name(const std::string& name) {
  if (name == "sigma_x") return pauli_x();
  if (name == "sigma_y") return pauli_y();
  if (name == "sigma_z") return pauli_z();
  fail("unknown Pauli name " + name);
}

QOperator coupling_operator(const ModelConfig& m) {
  return QOperator(Mat(m.coupling_scale * pauli_by_name(m.coupling)));
}

Mat static_hamiltonian(const ModelConfig& m) {
  if (m.hamiltonian == "none") return Mat::Zero(2, 2);
  return 0.5 * m.omega_q * pauli_by_name(m.hamiltonian);
}

std::vector<SuperOp> fixed_props(const ModelConfig& m, const GridConfig& g) {
  SuperOp u = step_propagator(
      hamiltonian_superop(QOperator(static_hamiltonian(m))), g.dt);
  return std::vector<SuperOp>(g.t_steps, u);
}

DensityVec state_by_name(const std::string& name) {
  if (name == "ground") return qubit_state(0);
  if (name == "excited") return qubit_state(1);
  if (name == "plus_x") return plus_x_state(+1);
  if (name == "minus_x") return plus_x_state(-1);
  if (name == "mixed") return maximally_mixed(2);
  fail("unknown state name " + name);
}

HBuilder control_h_builder(const ModelConfig& m,
                           const std::vector<std::string>& channels) {
  Mat h0 = static_hamiltonian(m);
  std::vector<Mat> ps;
  for (const std::string& c : channels) ps.push_back(pauli_by_name(c));
  return [h0, ps](const std::vector<double>& u) {
    require(u.size() == ps.size(), "control arity mismatch");
    Mat h = h0;
    for (std::size_t i = 0; i < ps.size(); ++i) h += 0.5 * u[i] * ps[i];
    return h;
  };
}

SpectralDensity spectral_density(const BathConfig& b) {
  if (b.type == "ohmic_exp") return SpectralDensity::ohmic_exp(b.alpha, 1.0);
  if (b.type == "lorentzian")
    return SpectralDensity::lorentzian(b.lambda, b.omega0, b.kappa);
  fail("the decoupled bath has no spectral density");
}

BathCorrelation correlation_for_heom(const BathConfig& b, const MethodConfig& m,
                                     const GridConfig& g, std::uint64_t seed) {
  if (b.type == "lorentzian") {
    // exact conjugate pair of the damped mode, no fit involved
    BathCorrelation corr;
    corr.terms.push_back({cx(b.lambda * b.lambda, 0), cx(0, 0),
                          cx(-b.omega0, b.kappa / 2)});
    corr.terms.push_back({cx(0, 0), cx(b.lambda * b.lambda, 0),
                          cx(b.omega0, b.kappa / 2)});
    return corr;
  }
  if (b.type != "ohmic_exp") fail("no correlation for a decoupled bath");
  SpectralDensity j = spectral_density(b);
  int stride = 1;
  while ((g.t_steps / stride) + 1 > 256) ++stride;
  std::vector<std::pair<double, cx>> samples;
  for (int k = 0; k * stride <= g.t_steps; ++k) {
    double t = k * stride * g.dt;
    samples.emplace_back(t, correlation(j, t, b.temperature));
  }
  FitOptions fo;
  fo.seed = seed;
  return fit_exponentials(samples, m.m_exp, fo);
}

std::vector<cx> correlation_grid(const BathConfig& b, const GridConfig& g) {
  SpectralDensity j = spectral_density(b);
  std::vector<cx> grid(g.t_steps);
  for (int m = 0; m < g.t_steps; ++m)
    grid[m] = correlation(j, m * g.dt, b.temperature);
  return grid;
}

namespace {

std::string path_join(const std::string& dir, const std::string& name) {
  if (dir.empty() || dir == ".") return name;
  return dir.back() == '/' ? dir + name : dir + "/" + name;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open output file " + path);
  return out;
}

void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out.good()) throw io_error("write failed: " + path);
}

template <class F>
double timed(F&& f) {
  auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

ProcessTensor build_method_pt(const RunConfig& cfg) {
  const GridConfig& g = cfg.grid;
  if (cfg.bath.type == "none") return identity_pt(2, g.t_steps, g.dt);
  QOperator s = coupling_operator(cfg.model);
  ProcessTensor pt;
  if (cfg.method.type == "heom") {
    ExtendedGenerator gen = build_generator(
        correlation_for_heom(cfg.bath, cfg.method, g, cfg.seed), s,
        cfg.method.depth);
    pt = heom_pt(gen, g.dt, g.t_steps);
  } else if (cfg.method.type == "stochastic") {
    NoiseEnsemble ens =
        sample_noise(correlation_grid(cfg.bath, g), cfg.method.n_traj, g.dt,
                     g.t_steps, cfg.seed);
    pt = stochastic_pt(ens, s, g.dt);
  } else if (cfg.method.type == "augmented") {
    AuxiliaryModel model =
        from_lorentzian(spectral_density(cfg.bath), cfg.method.d);
    pt = augmented_pt(model, s, g.dt, g.t_steps);
  } else {
    fail("method " + cfg.method.type + " does not build a process tensor");
  }
  pt.metadata = cfg.method.type;
  return pt;
}

ProcessTensor load_or_identity(const RunConfig& cfg,
                               const std::string& pt_path) {
  const GridConfig& g = cfg.grid;
  if (pt_path.empty()) {
    if (cfg.bath.type != "none")
      fail("this configuration needs a pre-built process tensor; run build-pt "
           "and pass --pt");
    return identity_pt(2, g.t_steps, g.dt);
  }
  ProcessTensor pt = load_pt(pt_path);
  if (pt.system_dim != 2)
    fail("process tensor system dimension does not match the model");
  if (pt.steps() != g.t_steps)
    fail("process tensor covers " + std::to_string(pt.steps()) +
         " steps but the grid asks for " + std::to_string(g.t_steps));
  if (std::abs(pt.dt - g.dt) > 1e-9 * std::max(1.0, std::abs(g.dt)))
    fail("process tensor step size does not match the grid");
  return pt;
}

void write_observables_csv(const std::string& path,
                           const std::vector<DensityVec>& traj, double dt,
                           const std::vector<std::string>& names) {
  std::ofstream out = open_out(path);
  out << "t";
  for (const std::string& n : names) out << ",re_" << n << ",im_" << n;
  out << ",trace_defect\n";
  std::vector<Mat> ops;
  for (const std::string& n : names) ops.push_back(pauli_by_name(n));
  char buf[80];
  for (std::size_t k = 0; k < traj.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.17g", double(k) * dt);
    out << buf;
    const DensityVec& rho = traj[k];
    for (const Mat& op : ops) {
      cx e = expectation_cx(op, rho);
      std::snprintf(buf, sizeof(buf), ",%.17g,%.17g", e.real(), e.imag());
      out << buf;
    }
    const int s = rho.sdim();
    cx tr(0, 0);
    for (int i = 0; i < s; ++i) tr += rho.data(i * s + i);
    std::snprintf(buf, sizeof(buf), ",%.17g\n", std::abs(tr - cx(1, 0)));
    out << buf;
  }
  finish_out(out, path);
}

}  // namespace

void cmd_build_pt(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.method.type != "heom" && cfg.method.type != "stochastic" &&
      cfg.method.type != "augmented")
    fail("method " + cfg.method.type + " does not build a process tensor");
  ProcessTensor pt = build_method_pt(cfg);
  std::vector<int> raw = bond_profile(pt);
  if (cfg.eps_rel >= 0) pt = recompress(pt, cfg.eps_rel);
  std::vector<int> now = bond_profile(pt);
  save_pt(pt, path_join(out_dir, "pt.bin"));
  const std::string path = path_join(out_dir, "bond_profile.csv");
  std::ofstream out = open_out(path);
  out << "step,chi_raw,chi\n";
  char buf[64];
  for (std::size_t k = 0; k < raw.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%zu,%d,%d\n", k, raw[k], now[k]);
    out << buf;
  }
  finish_out(out, path);
}

void cmd_dynamics(const RunConfig& cfg, const std::string& pt_path,
                  const std::string& out_dir) {
  const GridConfig& g = cfg.grid;
  const std::string path = path_join(out_dir, "observables.csv");
  if (cfg.method.type == "tdvp") {
    if (!pt_path.empty())
      fail("the tdvp method does not consume a process tensor");
    ModeDiscretization modes = discretize(spectral_density(cfg.bath),
                                          cfg.method.n_modes,
                                          cfg.method.omega_max);
    const double wq = cfg.model.hamiltonian == "none" ? 0.0 : cfg.model.omega_q;
    std::vector<double> schedule(g.t_steps, wq);
    auto traj = integrate(modes, schedule, g.dt, g.t_steps);
    // the ansatz state is pure and normalized, so the defect column is 0
    std::ofstream out = open_out(path);
    out << "t,re_sigma_x,im_sigma_x,trace_defect\n";
    char buf[80];
    for (std::size_t k = 0; k < traj.size(); ++k) {
      std::snprintf(buf, sizeof(buf), "%.17g,%.17g,0,0\n", double(k) * g.dt,
                    magnetization(traj[k]));
      out << buf;
    }
    finish_out(out, path);
    return;
  }
  ProcessTensor pt = load_or_identity(cfg, pt_path);
  std::vector<SuperOp> props = fixed_props(cfg.model, g);
  DensityVec rho0 = state_by_name(cfg.model.rho0);
  std::vector<DensityVec> traj;
  if (cfg.method.type == "ttm") {
    DynamicalMapSeq maps = maps_from_pt(pt, props[0]);
    TransferTensorSet tts = extract(maps, cfg.method.t_c);
    traj = propagate(tts, rho0, g.t_steps);
  } else {
    traj = reduced_trajectory(pt, props, rho0);
  }
  write_observables_csv(path, traj, g.dt, cfg.observables);
}

void cmd_optimize(const RunConfig& cfg, const std::string& pt_path,
                  const std::string& out_dir) {
  if (!cfg.optimize.present) fail("config has no optimize section");
  ProcessTensor pt = load_or_identity(cfg, pt_path);
  const OptimizeConfig& oc = cfg.optimize;
  HBuilder hb = control_h_builder(cfg.model, oc.channels);
  ControlSchedule s0;
  s0.values = RMat::Zero(cfg.grid.t_steps, int(oc.channels.size()));
  if (!oc.init.empty())
    for (std::size_t m = 0; m < oc.init.size(); ++m)
      s0.values.col(int(m)).setConstant(oc.init[m]);
  s0.dt = cfg.grid.dt;
  s0.labels = oc.channels;
  s0.lower = oc.lower;
  s0.upper = oc.upper;
  OptimizeOptions opts;
  opts.lr_scale = oc.lr_scale;
  OptimizeResult res =
      optimize(pt, hb, s0, state_by_name(cfg.model.target),
               state_by_name(cfg.model.rho0), oc.max_iters, opts);
  const std::string spath = path_join(out_dir, "schedule.csv");
  std::ofstream out = open_out(spath);
  out << "t";
  for (const std::string& c : oc.channels) out << "," << c;
  out << "\n";
  char buf[64];
  for (int q = 0; q < res.schedule.steps(); ++q) {
    std::snprintf(buf, sizeof(buf), "%.17g", double(q) * cfg.grid.dt);
    out << buf;
    for (int m = 0; m < res.schedule.channels(); ++m) {
      std::snprintf(buf, sizeof(buf), ",%.17g", res.schedule.values(q, m));
      out << buf;
    }
    out << "\n";
  }
  finish_out(out, spath);
  write_history_csv(path_join(out_dir, "history.csv"), res.history);
}

namespace {

struct CompareEntry {
  std::string name, type;
  int chi_raw = 1, chi = 1;
  double build_s = 0, prop_s = 0, grad_s = 0;
  bool density = false;
  DensityVec final_rho;
  double final_mx = 0;
  bool has_se = false;
  double se = 0;
  double deviation = 0;
};

}  // namespace

void cmd_compare(const CompareConfig& cfg, const std::string& out_dir) {
  const auto names = method_names(cfg.methods);
  std::vector<SuperOp> props = fixed_props(cfg.model, cfg.grid);
  DensityVec rho0 = state_by_name(cfg.model.rho0);
  DensityVec target =
      cfg.model.target.empty() ? rho0 : state_by_name(cfg.model.target);
  std::vector<CompareEntry> entries;
  for (std::size_t i = 0; i < cfg.methods.size(); ++i) {
    const MethodConfig& me = cfg.methods[i];
    CompareEntry e;
    e.name = names[i];
    e.type = me.type;
    if (me.type == "tdvp") {
      const double wq =
          cfg.model.hamiltonian == "none" ? 0.0 : cfg.model.omega_q;
      std::vector<double> schedule(cfg.grid.t_steps, wq);
      ModeDiscretization modes;
      e.build_s = timed([&] {
        modes = discretize(spectral_density(cfg.bath), me.n_modes,
                           me.omega_max);
      });
      std::vector<PolaronState> traj;
      e.prop_s = timed(
          [&] { traj = integrate(modes, schedule, cfg.grid.dt,
                                 cfg.grid.t_steps); });
      e.final_mx = magnetization(traj.back());
      MagnetizationCost cost{[](double m) { return m; },
                             [](double) { return 1.0; }};
      e.grad_s = timed([&] {
        auto grad = adjoint_gradient(traj, schedule, cost, cfg.grid.dt);
        (void)grad;
      });
    } else {
      RunConfig rc;  // adapter so the build-pt path is shared verbatim
      rc.model = cfg.model;
      rc.bath = cfg.bath;
      rc.method = me;
      rc.grid = cfg.grid;
      rc.eps_rel = cfg.eps_rel;
      rc.seed = cfg.seed;
      rc.observables = {"sigma_x"};
      NoiseEnsemble ens;  // kept alive for the stochastic error bar
      ProcessTensor pt;
      e.build_s = timed([&] {
        if (me.type == "stochastic" && cfg.bath.type != "none") {
          ens = sample_noise(correlation_grid(cfg.bath, cfg.grid), me.n_traj,
                             cfg.grid.dt, cfg.grid.t_steps, cfg.seed);
          pt = stochastic_pt(ens, coupling_operator(cfg.model), cfg.grid.dt);
        } else {
          pt = build_method_pt(rc);
        }
        std::vector<int> raw = bond_profile(pt);
        e.chi_raw = *std::max_element(raw.begin(), raw.end());
        if (cfg.eps_rel >= 0) pt = recompress(pt, cfg.eps_rel);
        std::vector<int> now = bond_profile(pt);
        e.chi = *std::max_element(now.begin(), now.end());
      });
      ForwardResult fr;
      e.prop_s = timed([&] { fr = contract_forward(pt, props, rho0); });
      e.final_rho = fr.final;
      e.density = true;
      e.final_mx = expectation(pauli_x(), fr.final);
      e.grad_s = timed([&] {
        auto costates = backpropagate(pt, props, terminal_costate(target));
        auto grads = gradient_wrt_propagators(fr.states, costates, pt);
        (void)grads;
      });
      if (me.type == "stochastic" && cfg.bath.type != "none") {
        const int batches = std::min(100, me.n_traj);
        BatchEstimate be = batch_observable(ens, coupling_operator(cfg.model),
                                            props, rho0, pauli_x(), batches);
        e.has_se = true;
        e.se = be.se;
      }
    }
    entries.push_back(std::move(e));
  }

  std::size_t ref = 0;
  if (!cfg.reference.empty())
    ref = std::size_t(std::find(names.begin(), names.end(), cfg.reference) -
                      names.begin());
  for (CompareEntry& e : entries) {
    const CompareEntry& r = entries[ref];
    if (e.density && r.density)
      e.deviation =
          (e.final_rho.data - r.final_rho.data).cwiseAbs().maxCoeff();
    else
      e.deviation = std::abs(e.final_mx - r.final_mx);
  }

  json out;
  out["reference"] = entries[ref].name;
  out["grid"] = {{"dt", cfg.grid.dt}, {"t_steps", cfg.grid.t_steps}};
  json arr = json::array();
  for (const CompareEntry& e : entries) {
    json je = {{"name", e.name},
               {"type", e.type},
               {"max_chi_raw", e.chi_raw},
               {"max_chi", e.chi},
               {"deviation", e.deviation},
               {"build_seconds", e.build_s},
               {"propagate_seconds", e.prop_s},
               {"gradient_seconds", e.grad_s}};
    if (e.has_se) je["standard_error"] = e.se;
    arr.push_back(je);
  }
  out["methods"] = arr;
  const std::string path = path_join(out_dir, "compare.json");
  std::ofstream f = open_out(path);
  f << out.dump(2) << "\n";
  finish_out(f, path);
}

ProcessTensor synthetic_pt(int chi, int t_steps, int sdim,
                           std::uint64_t seed) {
  require(chi >= 1 && t_steps >= 1 && sdim >= 2, "synthetic_pt: bad shape");
  const int l = sdim * sdim;
  ProcessTensor pt;
  pt.dt = 0.1;
  pt.system_dim = sdim;
  pt.metadata = "synthetic";
  const double scale = 1.0 / std::sqrt(double(chi) * l);
  for (int k = 0; k < t_steps; ++k) {
    const int ci = k == 0 ? 1 : chi;
    const int co = k == t_steps - 1 ? 1 : chi;
    PtNodeBuffer b = PtNodeBuffer::dense(co, ci, l);
    GaussianStream g(seed, std::uint64_t(k));
    for (cx& z : b.data) z = cx(g.normal(), g.normal()) * scale;
    pt.nodes.push_back(std::move(b).freeze());
  }
  pt.bond_caps.assign(std::size_t(t_steps) + 1, Vec());
  pt.bond_caps[0] = Vec::Ones(1);
  pt.bond_caps[t_steps] = Vec::Ones(1);
  for (int k = 1; k < t_steps; ++k) {
    GaussianStream g(seed, 4096 + std::uint64_t(k));
    Vec c(chi);
    for (int x = 0; x < chi; ++x)
      c(x) = cx(g.normal(), g.normal()) / std::sqrt(double(chi));
    pt.bond_caps[k] = c;
  }
  pt.validate();
  return pt;
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  require(points.size() >= 2, "fit_loglog_slope: need at least two points");
  const double n = double(points.size());
  double mx = 0, my = 0;
  for (const auto& [x, y] : points) {
    require(x > 0 && y > 0, "fit_loglog_slope: values must be positive");
    mx += std::log(x);
    my += std::log(y);
  }
  mx /= n;
  my /= n;
  double num = 0, den = 0;
  for (const auto& [x, y] : points) {
    num += (std::log(x) - mx) * (std::log(y) - my);
    den += (std::log(x) - mx) * (std::log(x) - mx);
  }
  require(den > 0, "fit_loglog_slope: degenerate abscissa");
  return num / den;
}

std::vector<BenchRow> run_bench(const BenchConfig& cfg) {
  cfg.validate();
  std::vector<BenchRow> rows;
  for (int chi : cfg.chi) {
    ProcessTensor pt =
        synthetic_pt(chi, cfg.t_steps, 2, cfg.seed + std::uint64_t(chi));
    GaussianStream g(cfg.seed, 99991 + std::uint64_t(chi));
    std::vector<SuperOp> props;
    for (int k = 0; k < cfg.t_steps; ++k) {
      SuperOp p(4, 4);
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) p(r, c) = cx(g.normal(), g.normal()) * 0.35;
      props.push_back(p);
    }
    DensityVec rho0 = maximally_mixed(2);
    ForwardResult fr = contract_forward(pt, props, rho0);
    Costate lt = terminal_costate(plus_x_state(+1));
    std::vector<Costate> costates = backpropagate(pt, props, lt);
    auto bench_phase = [&](const char* phase, auto&& fn) {
      std::vector<double> ts;
      for (int r = 0; r < cfg.reps; ++r) ts.push_back(timed(fn));
      rows.push_back({phase, chi, std::max(median_of(std::move(ts)), 1e-9)});
    };
    bench_phase("forward", [&] {
      auto x = contract_forward(pt, props, rho0);
      (void)x;
    });
    bench_phase("backward", [&] {
      auto x = backpropagate(pt, props, lt);
      (void)x;
    });
    bench_phase("gradient", [&] {
      auto x = gradient_wrt_propagators(fr.states, costates, pt);
      (void)x;
    });
    bench_phase("recompress", [&] {
      auto x = recompress(pt, 1e-12);
      (void)x;
    });
  }
  for (int tc : cfg.ttm_t_c) {
    TransferTensorSet tts;
    tts.cutoff = tc;
    tts.dt = 0.1;
    tts.provenance.source = "synthetic";
    tts.provenance.system_step = SuperOp::Identity(4, 4);
    GaussianStream g(cfg.seed, 777);
    tts.tensors.push_back(SuperOp(0.8 * SuperOp::Identity(4, 4)));
    for (int m = 2; m <= tc; ++m) {
      SuperOp t(4, 4);
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
          t(r, c) = cx(g.normal(), g.normal()) * (0.05 / tc);
      tts.tensors.push_back(t);
    }
    const int steps = 4 * tc;
    DensityVec rho0 = maximally_mixed(2);
    std::vector<double> ts;
    for (int r = 0; r < cfg.reps; ++r)
      ts.push_back(timed([&] {
                     auto x = propagate(tts, rho0, steps);
                     (void)x;
                   }) /
                   steps);
    rows.push_back({"ttm", tc, std::max(median_of(std::move(ts)), 1e-12)});
  }
  return rows;
}

std::vector<std::pair<std::string, double>> bench_slopes(
    const std::vector<BenchRow>& rows) {
  std::vector<std::pair<std::string, double>> out;
  std::vector<std::string> seen;
  for (const BenchRow& r : rows)
    if (std::find(seen.begin(), seen.end(), r.phase) == seen.end())
      seen.push_back(r.phase);
  for (const std::string& phase : seen) {
    std::vector<std::pair<double, double>> pts;
    for (const BenchRow& r : rows)
      if (r.phase == phase) pts.emplace_back(double(r.size), r.seconds);
    if (pts.size() >= 2) out.emplace_back(phase, fit_loglog_slope(pts));
  }
  return out;
}

void cmd_bench(const BenchConfig& cfg, const std::string& out_dir) {
  std::vector<BenchRow> rows = run_bench(cfg);
  const std::string tpath = path_join(out_dir, "bench_times.csv");
  std::ofstream tf = open_out(tpath);
  tf << "phase,size,median_seconds\n";
  char buf[96];
  for (const BenchRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.6g\n", r.phase.c_str(), r.size,
                  r.seconds);
    tf << buf;
  }
  finish_out(tf, tpath);
  const std::string spath = path_join(out_dir, "bench_slopes.csv");
  std::ofstream sf = open_out(spath);
  sf << "phase,slope\n";
  for (const auto& [phase, slope] : bench_slopes(rows)) {
    std::snprintf(buf, sizeof(buf), "%s,%.6g\n", phase.c_str(), slope);
    sf << buf;
  }
  finish_out(sf, spath);
}

}  // namespace ptgrad
