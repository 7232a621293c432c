#include "psis/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace psis {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

void check_keys(const json& obj, const std::string& section, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(section + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : obj.items()) {
    if (key == "_doc") continue;
    if (!ok.count(key)) throw ConfigError(section + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const json& obj, const char* key, T fallback) {
  return obj.contains(key) ? obj.at(key).get<T>() : fallback;
}

std::string default_path(const std::string& stem, const char* suffix) { return stem + suffix; }

PlantModel parse_plant(const json& p, int n) {
  check_keys(p, "plant", {"kind", "n", "l", "m", "g", "k"});
  const auto kind = get_or<std::string>(p, "kind", "chain");
  if (kind == "chain") {
    for (const char* key : {"l", "m", "g", "k"}) {
      if (p.contains(key)) throw ConfigError(std::string("plant: '") + key + "' only applies to the pendulum");
    }
    const int pn = get_or<int>(p, "n", n);
    if (pn != n) throw ConfigError("plant: chain order " + std::to_string(pn) + " differs from synthesis.n");
    return IntegratorChain{pn};
  }
  if (kind == "pendulum") {
    if (p.contains("n")) throw ConfigError("plant: 'n' only applies to the chain");
    Pendulum pd;
    pd.l = get_or<double>(p, "l", pd.l);
    pd.m = get_or<double>(p, "m", pd.m);
    pd.g = get_or<double>(p, "g", pd.g);
    pd.k = get_or<double>(p, "k", pd.k);
    return pd;
  }
  throw ConfigError("plant: unknown kind '" + kind + "' (expected chain or pendulum)");
}

ExperimentConfig parse_impl(const json& doc, const std::string& stem) {
  check_keys(doc, "config", {"plant", "synthesis", "sim", "verify", "output"});
  if (!doc.contains("synthesis")) throw ConfigError("config: missing synthesis section");
  ExperimentConfig cfg;

  const json& syn = doc.at("synthesis");
  check_keys(syn, "synthesis", {"n", "c", "T_p", "stages", "allow_mixed_kinds"});
  for (const char* key : {"n", "T_p", "stages"}) {
    if (!syn.contains(key)) throw ConfigError(std::string("synthesis: missing '") + key + "'");
  }
  cfg.synthesis.n = syn.at("n").get<int>();
  cfg.synthesis.c = get_or<double>(syn, "c", 0.0);
  cfg.synthesis.t_p = syn.at("T_p").get<double>();
  cfg.synthesis.allow_mixed_kinds = get_or<bool>(syn, "allow_mixed_kinds", false);
  if (!syn.at("stages").is_array()) throw ConfigError("synthesis: stages must be an array");
  for (const auto& st : syn.at("stages")) {
    check_keys(st, "synthesis.stages[]", {"kind", "eta"});
    if (!st.contains("eta")) throw ConfigError("synthesis.stages[]: missing 'eta'");
    cfg.synthesis.stages.push_back({parse_rcdf_kind(get_or<std::string>(st, "kind", "linear")), st.at("eta").get<double>()});
  }
  validate(cfg.synthesis);

  cfg.plant = parse_plant(doc.value("plant", json::object()), cfg.synthesis.n);

  const json sim = doc.value("sim", json::object());
  check_keys(sim, "sim", {"x0", "t_end", "eps_stop", "rtol", "atol", "max_step", "mode", "sample_dt"});
  if (!sim.contains("x0")) throw ConfigError("sim: missing 'x0'");
  cfg.sim = SimConfig::defaults(cfg.synthesis.t_p, sim.at("x0").get<std::vector<double>>());
  cfg.sim.t_end = get_or<double>(sim, "t_end", cfg.sim.t_end);
  cfg.sim.eps_stop = get_or<double>(sim, "eps_stop", cfg.sim.eps_stop);
  cfg.sim.rtol = get_or<double>(sim, "rtol", cfg.sim.rtol);
  cfg.sim.atol = get_or<double>(sim, "atol", cfg.sim.atol);
  cfg.sim.max_step = get_or<double>(sim, "max_step", cfg.sim.max_step);
  cfg.sim.sample_dt = get_or<double>(sim, "sample_dt", cfg.sim.sample_dt);
  cfg.sim.mode = parse_mode(get_or<std::string>(sim, "mode", "direct"));

  const json ver = doc.value("verify", json::object());
  check_keys(ver, "verify", {"tol_abs", "tol_rel", "window_factor", "spread_bound", "scales", "force_zero_control"});
  auto& v = cfg.verify;
  v.tol_abs = get_or<double>(ver, "tol_abs", v.tol_abs);
  v.tol_rel = get_or<double>(ver, "tol_rel", v.tol_rel);
  v.window_factor = get_or<double>(ver, "window_factor", v.window_factor);
  v.spread_bound = get_or<double>(ver, "spread_bound", v.spread_bound);
  v.scales = get_or<std::vector<double>>(ver, "scales", v.scales);
  v.force_zero_control = get_or<bool>(ver, "force_zero_control", v.force_zero_control);

  const json out = doc.value("output", json::object());
  check_keys(out, "output", {"csv", "svg", "report"});
  cfg.output.csv = get_or<std::string>(out, "csv", default_path(stem, ".csv"));
  cfg.output.svg = get_or<std::string>(out, "svg", default_path(stem, ".svg"));
  cfg.output.report = get_or<std::string>(out, "report", default_path(stem, "_report.json"));

  validate(cfg);
  return cfg;
}

}  // namespace

void validate(const ExperimentConfig& cfg) {
  validate(cfg.synthesis);
  validate(cfg.plant);
  if (plant_order(cfg.plant) != cfg.synthesis.n) {
    throw ConfigError("plant order " + std::to_string(plant_order(cfg.plant)) + " differs from synthesis.n = " +
                      std::to_string(cfg.synthesis.n));
  }
  if (cfg.sim.t_p != cfg.synthesis.t_p) throw ConfigError("sim T_p differs from synthesis T_p");
  cfg.sim.validate();
  if (cfg.sim.x0.size() != static_cast<std::size_t>(cfg.synthesis.n)) {
    throw ConfigError("sim: x0 has " + std::to_string(cfg.sim.x0.size()) + " entries, expected " +
                      std::to_string(cfg.synthesis.n));
  }
  const auto& v = cfg.verify;
  if (!(v.tol_abs > 0.0) || !std::isfinite(v.tol_abs)) throw ConfigError("verify: tol_abs must be positive");
  if (!(v.tol_rel >= 0.0) || !std::isfinite(v.tol_rel)) throw ConfigError("verify: tol_rel must be non-negative");
  if (!(v.window_factor > 0.0 && v.window_factor < 1.0)) throw ConfigError("verify: window_factor must lie in (0, 1)");
  if (!(v.spread_bound > 0.0) || !std::isfinite(v.spread_bound)) throw ConfigError("verify: spread_bound must be positive");
  if (v.scales.empty()) throw ConfigError("verify: scales is empty");
  for (double s : v.scales) {
    if (!std::isfinite(s)) throw ConfigError("verify: scales must be finite");
  }
  if (cfg.output.csv.empty() || cfg.output.svg.empty() || cfg.output.report.empty()) {
    throw ConfigError("output: paths must be non-empty");
  }
}

ExperimentConfig parse_config(const json& doc, const std::string& stem) {
  try {
    return parse_impl(doc, stem);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path.string());
  json doc;
  try {
    doc = json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(doc, path.stem().string());
}

ordered_json emit_config(const ExperimentConfig& cfg) {
  ordered_json doc;
  ordered_json plant;
  if (const auto* chain = std::get_if<IntegratorChain>(&cfg.plant)) {
    plant["kind"] = "chain";
    plant["n"] = chain->n;
  } else {
    const auto& p = std::get<Pendulum>(cfg.plant);
    plant["kind"] = "pendulum";
    plant["l"] = p.l;
    plant["m"] = p.m;
    plant["g"] = p.g;
    plant["k"] = p.k;
  }
  doc["plant"] = plant;

  ordered_json syn;
  syn["n"] = cfg.synthesis.n;
  syn["c"] = cfg.synthesis.c;
  syn["T_p"] = cfg.synthesis.t_p;
  syn["stages"] = ordered_json::array();
  for (const auto& s : cfg.synthesis.stages) {
    syn["stages"].push_back({{"kind", std::string(to_string(s.kind))}, {"eta", s.eta}});
  }
  syn["allow_mixed_kinds"] = cfg.synthesis.allow_mixed_kinds;
  doc["synthesis"] = syn;

  ordered_json sim;
  sim["x0"] = cfg.sim.x0;
  sim["t_end"] = cfg.sim.t_end;
  sim["eps_stop"] = cfg.sim.eps_stop;
  sim["rtol"] = cfg.sim.rtol;
  sim["atol"] = cfg.sim.atol;
  sim["max_step"] = cfg.sim.max_step;
  sim["mode"] = std::string(to_string(cfg.sim.mode));
  sim["sample_dt"] = cfg.sim.sample_dt;
  doc["sim"] = sim;

  ordered_json ver;
  ver["tol_abs"] = cfg.verify.tol_abs;
  ver["tol_rel"] = cfg.verify.tol_rel;
  ver["window_factor"] = cfg.verify.window_factor;
  ver["spread_bound"] = cfg.verify.spread_bound;
  ver["scales"] = cfg.verify.scales;
  ver["force_zero_control"] = cfg.verify.force_zero_control;
  doc["verify"] = ver;

  doc["output"] = {{"csv", cfg.output.csv}, {"svg", cfg.output.svg}, {"report", cfg.output.report}};
  return doc;
}

}  // namespace psis
