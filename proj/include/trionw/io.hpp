#pragma once

#include <openssl/evp.h>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "experiments.hpp"
#include "fitting.hpp"

namespace trionw {

using json = nlohmann::ordered_json;

// 9 significant digits, '.' separator, empty for NaN
inline std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 9);
  if (ec != std::errc()) throw std::runtime_error("fmt: conversion failed");
  return std::string(buf, ptr);
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') { cur += '"'; ++i; }
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_csv_number(const std::string& s) {
  if (s.empty()) return std::numeric_limits<double>::quiet_NaN();
  double x = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), x);
  if (ec != std::errc() || ptr != s.data() + s.size())
    throw std::runtime_error("csv: not a number: '" + s + "'");
  return x;
}

// ---- writers ----

// header: sweep name then the energy grid; one row per sweep value
inline std::string spectrum_grid_csv(const SpectrumGrid& g) {
  std::ostringstream o;
  o << g.sweep_name;
  for (double e : g.energy) o << ',' << fmt(e);
  o << '\n';
  for (std::size_t i = 0; i < g.sweep.size(); ++i) {
    o << fmt(g.sweep[i]);
    for (Eigen::Index k = 0; k < g.values.cols(); ++k) o << ',' << fmt(g.values(Eigen::Index(i), k));
    o << '\n';
  }
  return o.str();
}

inline SpectrumGrid read_spectrum_grid_csv(std::istream& in) {
  SpectrumGrid g;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("spectrum grid csv: empty input");
  auto head = split_csv_line(line);
  g.sweep_name = head.at(0);
  for (std::size_t k = 1; k < head.size(); ++k) g.energy.push_back(parse_csv_number(head[k]));
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != head.size()) throw std::runtime_error("spectrum grid csv: ragged row");
    g.sweep.push_back(parse_csv_number(f[0]));
    std::vector<double> r;
    for (std::size_t k = 1; k < f.size(); ++k) r.push_back(parse_csv_number(f[k]));
    rows.push_back(r);
  }
  g.values.resize(Eigen::Index(rows.size()), Eigen::Index(g.energy.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < g.energy.size(); ++k) g.values(Eigen::Index(i), Eigen::Index(k)) = rows[i][k];
  return g;
}

inline std::string sweep_csv(const std::vector<EigenBranch>& branches, const std::vector<double>& grid,
                             bool include_zero_two) {
  auto basis = enumerate_basis(include_zero_two);
  std::ostringstream o;
  o << "sweep_value,branch_id,label,energy_microev";
  for (std::size_t k = n_ground; k < basis.size(); ++k) {
    auto n = to_string(basis[k]);
    o << ",re_" << n << ",im_" << n;
  }
  o << '\n';
  for (const auto& b : branches)
    for (std::size_t i = 0; i < grid.size(); ++i) {
      o << fmt(grid[i]) << ',' << b.id << ',' << csv_field(b.label) << ',' << fmt(b.energy[i]);
      for (Eigen::Index k = 0; k < b.vectors[i].size(); ++k)
        o << ',' << fmt(b.vectors[i](k).real()) << ',' << fmt(b.vectors[i](k).imag());
      o << '\n';
    }
  return o.str();
}

inline json sticks_json(const std::vector<TransitionLine>& lines) {
  json a = json::array();
  for (const auto& l : lines)
    a.push_back({{"energy", l.energy},
                 {"strength", l.strength},
                 {"ground_spin", l.ground_spin > 0 ? "+1/2" : "-1/2"},
                 {"polarization", to_string(l.polarization)},
                 {"dark", l.dark},
                 {"label", l.label}});
  return a;
}

inline json params_json(const ModelParams& p) {
  return {{"t_e", p.t_e},
          {"delta_eh0", p.delta_eh0},
          {"h_so", p.h_so},
          {"delta_eh_asym", p.delta_eh_asym},
          {"g_e_bottom", p.g_e_bottom},
          {"g_e_top", p.g_e_top},
          {"g_h", p.g_h},
          {"kappa_dia", p.kappa_dia},
          {"eps0", p.eps0},
          {"lever_arm", p.lever_arm},
          {"gamma_sp", p.gamma_sp},
          {"dipole", p.dipole},
          {"kappa_edge", p.cotun.kappa_edge},
          {"kappa_center", p.cotun.kappa_center},
          {"v_left", p.cotun.v_left},
          {"v_right", p.cotun.v_right},
          {"width", p.cotun.width},
          {"sigma_wander", p.sigma_wander},
          {"gamma_dephase", p.gamma_dephase},
          {"include_zero_two", p.include_zero_two},
          {"eps02", p.eps02}};
}

inline json steady_state_json(const OpticalSystem& s, const DensityMatrix& r, double residual,
                              bool include_zero_two) {
  json pops = json::object();
  for (const auto& [name, v] : labelled_populations(s, r, include_zero_two)) pops[name] = v;
  return {{"populations", pops},
          {"polarization", r.polarization()},
          {"trion_population", r.trion_population()},
          {"residual", residual}};
}

inline std::string plateau_traces_csv(const PlateauScanResult& r) {
  std::ostringstream o;
  o << "bias_mV";
  for (const auto& n : r.trace_names) o << ',' << csv_field(n);
  for (const auto& n : r.trace_names) o << ',' << csv_field(n + "_energy");
  o << '\n';
  for (std::size_t i = 0; i < r.map.sweep.size(); ++i) {
    o << fmt(r.map.sweep[i]);
    for (Eigen::Index l = 0; l < r.traces.cols(); ++l) o << ',' << fmt(r.traces(Eigen::Index(i), l));
    for (Eigen::Index l = 0; l < r.line_energy.cols(); ++l)
      o << ',' << fmt(r.line_energy(Eigen::Index(i), l));
    o << '\n';
  }
  return o.str();
}

// same layout as a spectrum grid: rows init energy, columns measurement energy
inline std::string pump_probe_csv(const PumpProbeMap& m, int line) {
  SpectrumGrid g;
  g.sweep_name = "init_energy_microev";
  g.sweep = m.init_grid;
  g.energy = m.meas_grid;
  g.values = m.probe[std::size_t(line)];
  return spectrum_grid_csv(g);
}

inline std::string lockin_csv(const std::vector<double>& e, const std::vector<double>& s) {
  std::ostringstream o;
  o << "energy_microev,signal\n";
  for (std::size_t i = 0; i < e.size(); ++i) o << fmt(e[i]) << ',' << fmt(s[i]) << '\n';
  return o.str();
}

inline std::string peak_table_csv(const PeakTable& t) {
  std::ostringstream o;
  o << "sweep_value,energy_microev,height,label\n";
  for (const auto& r : t)
    o << fmt(r.sweep_value) << ',' << fmt(r.energy) << ',' << fmt(r.height) << ','
      << csv_field(r.label) << '\n';
  return o.str();
}

inline PeakTable read_peak_table(std::istream& in) {
  PeakTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("peak table csv: empty input");
  auto head = split_csv_line(line);
  if (head.size() < 3 || head[0] != "sweep_value" || head[1] != "energy_microev" || head[2] != "height")
    throw std::runtime_error("peak table csv: expected columns sweep_value,energy_microev,height,label");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() < 3) throw std::runtime_error("peak table csv: short row");
    t.push_back({parse_csv_number(f[0]), parse_csv_number(f[1]), parse_csv_number(f[2]),
                 f.size() > 3 ? f[3] : ""});
  }
  return t;
}

inline json fit_report_json(const FitReport& r) {
  json params = json::object(), widths = json::object();
  for (std::size_t k = 0; k < r.names.size(); ++k) {
    params[r.names[k]] = r.values[k];
    widths[r.names[k]] = k < r.half_widths.size() ? r.half_widths[k] : 0.0;
  }
  return {{"parameters", params},
          {"confidence_half_widths", widths},
          {"residual_norm", r.residual_norm},
          {"residual_history", r.residual_history},
          {"converged", r.converged},
          {"iterations", r.iterations},
          {"n_peaks", r.n_peaks},
          {"n_unassigned", r.n_unassigned}};
}

// ---- digests and manifest ----

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  std::ostringstream o;
  for (unsigned int i = 0; i < len; ++i) o << std::hex << std::setw(2) << std::setfill('0') << int(md[i]);
  return o.str();
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream o;
  o << f.rdbuf();
  return o.str();
}

inline constexpr const char* manifest_name = "manifest.json";

// Output files of one run; the manifest is written last.
class OutputSet {
 public:
  explicit OutputSet(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << content;
    f.close();
    files_.push_back({{"path", name}, {"sha256", sha256_hex(content)}, {"bytes", content.size()}});
  }

  void write_manifest(json meta) {
    meta["outputs"] = files_;
    std::ofstream f(dir_ / manifest_name, std::ios::binary);
    f << meta.dump(2) << '\n';
  }

  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  json files_ = json::array();
};

struct VerifyResult {
  std::vector<std::string> mismatched;
  std::vector<std::string> missing;
  std::size_t checked = 0;
  bool ok() const { return mismatched.empty() && missing.empty(); }
};

inline VerifyResult verify_manifest(const std::filesystem::path& dir) {
  auto m = json::parse(read_file(dir / manifest_name));
  VerifyResult r;
  for (const auto& e : m.at("outputs")) {
    auto path = dir / e.at("path").get<std::string>();
    ++r.checked;
    if (!std::filesystem::exists(path)) {
      r.missing.push_back(e.at("path"));
      continue;
    }
    if (sha256_hex(read_file(path)) != e.at("sha256").get<std::string>())
      r.mismatched.push_back(e.at("path"));
  }
  return r;
}

}  // namespace trionw
