#pragma once

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "params.hpp"

namespace trionw {

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ": " + msg), line(line) {}
  int line;
};

class UnknownKey : public std::runtime_error {
 public:
  UnknownKey(const std::string& name, int line)
      : std::runtime_error("line " + std::to_string(line) + ": unknown key '" + name + "'"),
        name(name),
        line(line) {}
  std::string name;
  int line;
};

struct RunSettings {
  // [dynamics]
  double field = 2.75;   // T
  double bias = std::numeric_limits<double>::quiet_NaN();  // mV, NaN: plateau center
  double rabi = 0;       // ueV, 0: saturating Rabi
  int n_nodes = 61;
  double delta_v = 50;   // mV, lock-in modulation
  // [sweep]
  double b_min = 0, b_max = 6;
  int b_points = 601;
  double v_min = std::numeric_limits<double>::quiet_NaN();  // NaN: plateau window
  double v_max = std::numeric_limits<double>::quiet_NaN();
  int v_points = 21;
  double e_min = -500, e_max = 300;
  int e_points = 801;
  double linewidth = 5.0;
  bool subtract_dia = false;
  int plateau_e_points = 0;  // 0: peak traces only
  // [lasers]
  double rabi_init = 1.0, rabi_meas = 1.0;
  double init_min = 0, init_max = 100;
  int init_points = 41;
  double meas_min = 150, meas_max = 240;
  int meas_points = 37;
  // [fit]
  std::vector<std::string> free{"h_so", "delta_eh0", "g_e_bottom", "g_h"};
  double min_prominence = 1e-3;
  double fit_linewidth = 5.0;
  double min_strength = 0.02;
  int max_iter = 100;
  std::vector<double> h_so_starts;  // optional grid of initial h_so values
};

struct RunConfig {
  ModelParams model;
  RunSettings run;
};

namespace detail {

inline std::string trim(const std::string& s) {
  auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line, const std::string& key) {
  double x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(line, "key '" + key + "': not a number: '" + v + "'");
  return x;
}

inline int parse_int(const std::string& v, int line, const std::string& key) {
  int x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ParseError(line, "key '" + key + "': not an integer: '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v, int line, const std::string& key) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ParseError(line, "key '" + key + "': expected true or false: '" + v + "'");
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ','))
    if (auto t = trim(item); !t.empty()) out.push_back(t);
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&, int)>;

inline std::map<std::string, Setter> config_keys() {
  std::map<std::string, Setter> k;
  auto num = [&](const std::string& sec, const std::string& key, auto field) {
    k[sec + "." + key] = [key, field](RunConfig& c, const std::string& v, int line) {
      field(c) = parse_double(v, line, key);
    };
  };
  auto integer = [&](const std::string& sec, const std::string& key, auto field) {
    k[sec + "." + key] = [key, field](RunConfig& c, const std::string& v, int line) {
      field(c) = parse_int(v, line, key);
    };
  };
  auto flag = [&](const std::string& sec, const std::string& key, auto field) {
    k[sec + "." + key] = [key, field](RunConfig& c, const std::string& v, int line) {
      field(c) = parse_bool(v, line, key);
    };
  };
#define TRIONW_M(name) num("model", #name, [](RunConfig& c) -> double& { return c.model.name; })
  TRIONW_M(t_e);
  TRIONW_M(delta_eh0);
  TRIONW_M(h_so);
  TRIONW_M(delta_eh_asym);
  TRIONW_M(g_e_bottom);
  TRIONW_M(g_e_top);
  TRIONW_M(g_h);
  TRIONW_M(kappa_dia);
  TRIONW_M(eps0);
  TRIONW_M(lever_arm);
  TRIONW_M(gamma_sp);
  TRIONW_M(dipole);
  TRIONW_M(sigma_wander);
  TRIONW_M(gamma_dephase);
  TRIONW_M(eps02);
#undef TRIONW_M
#define TRIONW_C(name) num("model", #name, [](RunConfig& c) -> double& { return c.model.cotun.name; })
  TRIONW_C(kappa_edge);
  TRIONW_C(kappa_center);
  TRIONW_C(v_left);
  TRIONW_C(v_right);
  TRIONW_C(width);
#undef TRIONW_C
  flag("model", "include_zero_two", [](RunConfig& c) -> bool& { return c.model.include_zero_two; });

#define TRIONW_R(sec, name) num(sec, #name, [](RunConfig& c) -> double& { return c.run.name; })
#define TRIONW_I(sec, name) integer(sec, #name, [](RunConfig& c) -> int& { return c.run.name; })
  TRIONW_R("dynamics", field);
  TRIONW_R("dynamics", bias);
  TRIONW_R("dynamics", rabi);
  TRIONW_I("dynamics", n_nodes);
  TRIONW_R("dynamics", delta_v);
  TRIONW_R("sweep", b_min);
  TRIONW_R("sweep", b_max);
  TRIONW_I("sweep", b_points);
  TRIONW_R("sweep", v_min);
  TRIONW_R("sweep", v_max);
  TRIONW_I("sweep", v_points);
  TRIONW_R("sweep", e_min);
  TRIONW_R("sweep", e_max);
  TRIONW_I("sweep", e_points);
  TRIONW_R("sweep", linewidth);
  TRIONW_I("sweep", plateau_e_points);
  flag("sweep", "subtract_dia", [](RunConfig& c) -> bool& { return c.run.subtract_dia; });
  TRIONW_R("lasers", rabi_init);
  TRIONW_R("lasers", rabi_meas);
  TRIONW_R("lasers", init_min);
  TRIONW_R("lasers", init_max);
  TRIONW_I("lasers", init_points);
  TRIONW_R("lasers", meas_min);
  TRIONW_R("lasers", meas_max);
  TRIONW_I("lasers", meas_points);
  TRIONW_R("fit", min_prominence);
  TRIONW_R("fit", min_strength);
  TRIONW_I("fit", max_iter);
#undef TRIONW_R
#undef TRIONW_I
  num("fit", "linewidth", [](RunConfig& c) -> double& { return c.run.fit_linewidth; });
  k["fit.free"] = [](RunConfig& c, const std::string& v, int) { c.run.free = split_list(v); };
  k["fit.h_so_starts"] = [](RunConfig& c, const std::string& v, int line) {
    c.run.h_so_starts.clear();
    for (const auto& s : split_list(v)) c.run.h_so_starts.push_back(parse_double(s, line, "h_so_starts"));
  };
  return k;
}

}  // namespace detail

class SettingError : public std::invalid_argument {
 public:
  SettingError(std::string field, const std::string& msg)
      : std::invalid_argument(field + ": " + msg), field(std::move(field)) {}
  std::string field;
};

inline void validate_run(const RunSettings& r) {
  auto positive = [](const char* n, int v) {
    if (v < 1) throw SettingError(n, "must be >= 1");
  };
  positive("b_points", r.b_points);
  positive("v_points", r.v_points);
  positive("e_points", r.e_points);
  positive("init_points", r.init_points);
  positive("meas_points", r.meas_points);
  positive("max_iter", r.max_iter);
  if (r.plateau_e_points < 0) throw SettingError("plateau_e_points", "must be >= 0");
  if (r.n_nodes < 1 || r.n_nodes % 2 == 0) throw SettingError("n_nodes", "must be odd and >= 1");
  if (r.rabi < 0) throw SettingError("rabi", "must be >= 0");
  if (r.rabi_init < 0) throw SettingError("rabi_init", "must be >= 0");
  if (r.rabi_meas < 0) throw SettingError("rabi_meas", "must be >= 0");
  if (!(r.linewidth > 0)) throw SettingError("linewidth", "must be > 0");
  if (!(r.fit_linewidth > 0)) throw SettingError("linewidth", "must be > 0");
  if (!(r.delta_v > 0)) throw SettingError("delta_v", "must be > 0");
  if (!(r.min_prominence > 0)) throw SettingError("min_prominence", "must be > 0");
}

inline RunConfig parse_config(std::istream& in) {
  static const auto keys = detail::config_keys();
  static const std::vector<std::string> sections{"model", "dynamics", "sweep", "lasers", "fit"};
  RunConfig c;
  std::map<std::string, int> seen;
  std::string section, raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string s = raw;
    if (auto h = s.find_first_of("#;"); h != std::string::npos) s = s.substr(0, h);
    s = detail::trim(s);
    if (s.empty()) continue;
    if (s.front() == '[') {
      if (s.back() != ']') throw ParseError(line, "malformed section header");
      section = detail::trim(s.substr(1, s.size() - 2));
      if (std::find(sections.begin(), sections.end(), section) == sections.end())
        throw ParseError(line, "unknown section [" + section + "]");
      continue;
    }
    auto eq = s.find('=');
    if (eq == std::string::npos) throw ParseError(line, "expected key = value");
    std::string key = detail::trim(s.substr(0, eq)), val = detail::trim(s.substr(eq + 1));
    if (key.empty()) throw ParseError(line, "empty key");
    if (section.empty()) throw ParseError(line, "key '" + key + "' outside of a section");
    std::string full = section + "." + key;
    auto it = keys.find(full);
    if (it == keys.end()) throw UnknownKey(key, line);
    if (auto d = seen.find(full); d != seen.end())
      throw ParseError(line, "duplicate key '" + key + "' (first at line " +
                                 std::to_string(d->second) + ", again at line " +
                                 std::to_string(line) + ")");
    seen[full] = line;
    it->second(c, val, line);
  }
  validate_params(c.model);
  validate_run(c.run);
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config file: " + path);
  return parse_config(f);
}

}  // namespace trionw
