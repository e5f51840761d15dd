#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <trionw/config.hpp>
#include <trionw/io.hpp>

using namespace trionw;

namespace {

constexpr const char* tool_version = "1.0.0";

struct Cli {
  std::string config = "defaults";
  std::string out = "out";
  std::string format = "csv";
  int threads = 0;
  bool verify = false;
  std::string input;  // fit
};

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> x(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) x[std::size_t(i)] = n == 1 ? a : a + (b - a) * i / (n - 1);
  return x;
}

RunConfig resolve_config(const std::string& path) {
  if (path == "defaults" && !std::filesystem::exists(path)) {
    RunConfig c;
    validate_params(c.model);
    return c;
  }
  return load_config(path);
}

double bias_of(const RunConfig& c) {
  return std::isnan(c.run.bias) ? c.model.v_center() : c.run.bias;
}

json grid_json(const SpectrumGrid& g) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < g.values.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < g.values.cols(); ++k) {
      double v = g.values(i, k);
      if (std::isnan(v)) r.push_back(nullptr);
      else r.push_back(v);
    }
    rows.push_back(r);
  }
  return {{"sweep_name", g.sweep_name}, {"sweep", g.sweep}, {"energy", g.energy}, {"values", rows}};
}

void write_grid(OutputSet& out, const std::string& stem, const SpectrumGrid& g, const Cli& cli) {
  if (cli.format == "json") out.write(stem + ".json", grid_json(g).dump(2) + "\n");
  else out.write(stem + ".csv", spectrum_grid_csv(g));
}

std::string sticks_csv(const std::vector<TransitionLine>& lines) {
  std::ostringstream o;
  o << "energy_microev,strength,ground_spin,polarization,dark,label\n";
  for (const auto& l : lines)
    o << fmt(l.energy) << ',' << fmt(l.strength) << ',' << (l.ground_spin > 0 ? "+1/2" : "-1/2") << ','
      << to_string(l.polarization) << ',' << (l.dark ? "true" : "false") << ',' << l.label << '\n';
  return o.str();
}

double resolved_rabi(const RunConfig& c) {
  return c.run.rabi > 0 ? c.run.rabi : saturating_rabi(c.model, c.run.field);
}

json line_json(const LineRef& l) {
  return {{"name", l.name}, {"ground", l.ground == 0 ? "+1/2" : "-1/2"}, {"trion_index", l.trion},
          {"energy", l.energy}, {"strength", l.strength}};
}

int cmd_spectrum(const RunConfig& c, const Cli& cli, OutputSet& out) {
  auto lines = transition_spectrum(c.model, c.run.field, bias_of(c));
  if (cli.format == "json") out.write("spectrum.json", sticks_json(lines).dump(2) + "\n");
  else out.write("spectrum.csv", sticks_csv(lines));
  return 0;
}

int cmd_sweep_field(const RunConfig& c, const Cli& cli, OutputSet& out) {
  auto grid = linspace(c.run.b_min, c.run.b_max, c.run.b_points);
  auto branches = sweep_eigensystem(c.model, grid, SweepAxis::Field, bias_of(c));
  if (cli.format == "json") {
    json a = json::array();
    for (const auto& b : branches) a.push_back({{"branch_id", b.id}, {"label", b.label}, {"energy", b.energy}});
    out.write("branches.json", json{{"sweep_value", grid}, {"branches", a}}.dump(2) + "\n");
  } else {
    out.write("branches.csv", sweep_csv(branches, grid, c.model.include_zero_two));
  }
  auto e = linspace(c.run.e_min, c.run.e_max, c.run.e_points);
  write_grid(out, "field_map", field_sweep_map(c.model, grid, bias_of(c), e, c.run.linewidth, c.run.subtract_dia), cli);
  return 0;
}

std::vector<double> bias_grid(const RunConfig& c) {
  double lo = std::isnan(c.run.v_min) ? c.model.cotun.v_left : c.run.v_min;
  double hi = std::isnan(c.run.v_max) ? c.model.cotun.v_right : c.run.v_max;
  return linspace(lo, hi, c.run.v_points);
}

int cmd_plateau(const RunConfig& c, const Cli& cli, OutputSet& out) {
  PlateauOptions o;
  o.n_nodes = c.run.n_nodes;
  o.threads = cli.threads;
  std::vector<double> e;
  if (c.run.plateau_e_points > 0) e = linspace(c.run.e_min, c.run.e_max, c.run.plateau_e_points);
  auto r = one_laser_plateau(c.model, c.run.field, bias_grid(c), e, resolved_rabi(c), o);
  if (cli.format == "json") {
    json t = json::object();
    for (Eigen::Index l = 0; l < r.traces.cols(); ++l) {
      std::vector<double> col(r.traces.col(l).data(), r.traces.col(l).data() + r.traces.rows());
      t[r.trace_names[std::size_t(l)]] = col;
    }
    out.write("plateau_traces.json", json{{"bias_mV", r.map.sweep}, {"traces", t}}.dump(2) + "\n");
  } else {
    out.write("plateau_traces.csv", plateau_traces_csv(r));
  }
  if (!e.empty()) write_grid(out, "plateau_map", r.map, cli);
  return 0;
}

int cmd_pump_probe(const RunConfig& c, const Cli& cli, OutputSet& out) {
  PumpProbeOptions o;
  o.n_nodes = c.run.n_nodes;
  o.threads = cli.threads;
  auto m = two_laser_map(c.model, c.run.field, bias_of(c),
                         linspace(c.run.init_min, c.run.init_max, c.run.init_points),
                         linspace(c.run.meas_min, c.run.meas_max, c.run.meas_points), c.run.rabi_init,
                         c.run.rabi_meas, o);
  for (int l = 0; l < 2; ++l) {
    SpectrumGrid g;
    g.sweep_name = "init_energy_microev";
    g.sweep = m.init_grid;
    g.energy = m.meas_grid;
    g.values = m.probe[std::size_t(l)];
    std::string stem = "pump_probe_" + std::string(l == 0 ? "cycling_down" : "cycling_up");
    write_grid(out, stem, g, cli);
  }
  return 0;
}

int cmd_pump_fidelity(const RunConfig& c, const Cli&, OutputSet& out) {
  const double b = c.run.field, v = bias_of(c), rabi = resolved_rabi(c);
  ExperimentOptions o;
  o.n_nodes = c.run.n_nodes;
  auto w = identify_w_lines(c.model, b, v);
  json lines = json::array();
  for (const auto& l : w.all()) {
    LaserField laser{l.energy, rabi, LaserRole::Initialize, LaserPol::LinearX};
    auto g = broadened_populations(c.model, b, v, {laser}, o);
    auto j = line_json(l);
    j["n_up"] = g.up;
    j["n_down"] = g.down;
    j["trion_population"] = g.trion;
    j["polarization"] = g.polarization();
    lines.push_back(j);
  }
  auto center = cycling_photon_budget(c.model, b, v, rabi);
  auto edge = cycling_photon_budget(c.model, b, c.model.cotun.v_left, rabi);
  auto budget = [](const PhotonBudget& p) {
    return json{{"photons", p.photons}, {"saturated", p.saturated}, {"cycling_rate", p.cycling_rate},
                {"leak_rate", p.leak_rate}};
  };
  json r{{"field", b},          {"bias", v},
         {"rabi", rabi},        {"sigma_wander", c.model.sigma_wander},
         {"lines", lines},      {"photon_budget", {{"bias", budget(center)}, {"plateau_edge", budget(edge)}}}};
  out.write("pump_fidelity.json", r.dump(2) + "\n");
  std::cout << "polarization (" << w.lambda_up.name << "): " << lines[0]["polarization"].get<double>() << "\n";
  return 0;
}

int cmd_lockin(const RunConfig& c, const Cli& cli, OutputSet& out) {
  ExperimentOptions o;
  o.n_nodes = c.run.n_nodes;
  o.threads = cli.threads;
  double v = std::isnan(c.run.bias) ? c.model.v_center() - 0.5 * c.run.delta_v : c.run.bias;
  double rabi = c.run.rabi > 0 ? c.run.rabi : 0.5 * c.model.gamma_sp;
  auto e = linspace(c.run.e_min, c.run.e_max, c.run.e_points);
  auto s = lockin_spectrum(c.model, c.run.field, v, c.run.delta_v, e, rabi, o);
  if (cli.format == "json") out.write("lockin.json", json{{"energy_microev", e}, {"signal", s}}.dump(2) + "\n");
  else out.write("lockin.csv", lockin_csv(e, s));
  return 0;
}

int cmd_eq3(const RunConfig& c, const Cli&, OutputSet& out) {
  const auto& p = c.model;
  double pert = effective_exchange_eq3(p.h_so, p.t_e, p.delta_eh0);
  auto exact = effective_exchange_exact_detail(p);
  double ratio = exact.gap / pert;
  std::cout << "perturbative " << fmt(pert) << " ueV\n"
            << "exact        " << fmt(exact.gap) << " ueV at " << fmt(exact.field) << " T\n"
            << "ratio        " << fmt(ratio) << "\n";
  out.write("eq3.json", json{{"h_so", p.h_so}, {"t_e", p.t_e}, {"delta_eh0", p.delta_eh0},
                             {"perturbative", pert}, {"exact", exact.gap},
                             {"field", exact.field}, {"ratio", ratio}}.dump(2) + "\n");
  return 0;
}

int cmd_calibrate(const RunConfig& c, const Cli&, OutputSet& out) {
  auto p = calibrate_defaults(c.model);
  const auto [lo, hi] = calibration_window;
  auto m1 = find_gap_minimum(p, pair_b1.first, pair_b1.second, lo, hi, p.v_center());
  auto m2 = find_gap_minimum(p, pair_b2.first, pair_b2.second, lo, hi, p.v_center());
  std::cout << "eps0 " << fmt(p.eps0) << "  g_h " << fmt(p.g_h) << "\n"
            << "B1 " << fmt(m1.field) << " T (gap " << fmt(m1.gap) << ")  B2 " << fmt(m2.field)
            << " T (gap " << fmt(m2.gap) << ")\n";
  out.write("calibrated.json", json{{"params", params_json(p)},
                                    {"b1", {{"field", m1.field}, {"gap", m1.gap}}},
                                    {"b2", {{"field", m2.field}, {"gap", m2.gap}}}}.dump(2) + "\n");
  return 0;
}

int cmd_fit(const RunConfig& c, const Cli& cli, OutputSet& out) {
  if (cli.input.empty()) throw CLI::ValidationError("--input", "fit requires --input <csv>");
  std::ifstream f(cli.input);
  if (!f) throw CLI::ValidationError("--input", "cannot open " + cli.input);
  std::string head;
  std::getline(f, head);
  f.seekg(0);
  PeakTable peaks;
  if (head.rfind("sweep_value,energy_microev", 0) == 0) {
    peaks = read_peak_table(f);
  } else {
    peaks = extract_peaks(read_spectrum_grid_csv(f), c.run.min_prominence);
    out.write("peaks.csv", peak_table_csv(peaks));
  }
  FitOptions o;
  o.linewidth = c.run.fit_linewidth;
  o.min_strength = c.run.min_strength;
  o.max_iter = c.run.max_iter;
  o.subtract_dia = c.run.subtract_dia;
  o.bias = c.run.bias;
  std::vector<double> starts = c.run.h_so_starts;
  if (starts.empty()) starts.push_back(c.model.h_so);
  FitReport best;
  bool have = false;
  for (double h : starts) {
    ModelParams p0 = c.model;
    p0.h_so = h;
    auto r = fit_parameters(peaks, p0, c.run.free, o);
    if (!have || r.residual_norm < best.residual_norm) best = r;
    have = true;
  }
  out.write("fit_report.json", fit_report_json(best).dump(2) + "\n");
  std::cout << "residual " << fmt(best.residual_norm) << " after " << best.iterations << " iterations\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trion W-system simulator"};
  app.require_subcommand(0, 1);
  Cli cli;
  app.add_option("--config", cli.config, "configuration file, or 'defaults'");
  app.add_option("--out", cli.out, "output directory");
  app.add_option("--format", cli.format, "tabular output format")->check(CLI::IsMember({"csv", "json"}));
  app.add_option("--threads", cli.threads, "worker threads (fallback TRION_W_THREADS)")->check(CLI::PositiveNumber);
  app.add_flag("--verify", cli.verify, "recompute digests of an existing run in --out");

  using Handler = int (*)(const RunConfig&, const Cli&, OutputSet&);
  std::vector<std::pair<CLI::App*, Handler>> subs{
      {app.add_subcommand("spectrum", "stick spectrum at one field and bias"), cmd_spectrum},
      {app.add_subcommand("sweep-field", "branches and spectral map versus field"), cmd_sweep_field},
      {app.add_subcommand("plateau", "one-laser peak traces across the charge plateau"), cmd_plateau},
      {app.add_subcommand("pump-probe", "two-laser initialize and measure maps"), cmd_pump_probe},
      {app.add_subcommand("pump-fidelity", "spin polarization and photon budget"), cmd_pump_fidelity},
      {app.add_subcommand("lockin", "bias-modulated spectrum"), cmd_lockin},
      {app.add_subcommand("eq3-check", "perturbative versus exact exchange gap"), cmd_eq3},
      {app.add_subcommand("calibrate", "place the two anticrossings"), cmd_calibrate},
      {app.add_subcommand("fit", "fit parameters to a peak table or spectral map"), cmd_fit}};
  for (auto& [sub, h] : subs) {
    sub->fallthrough();
    if (sub->get_name() == "fit") sub->add_option("--input", cli.input, "peak table or spectrum grid CSV");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    app.exit(e);
    std::cerr << app.help();
    return 1;
  }

  if (cli.threads <= 0) cli.threads = default_threads();

  if (cli.verify) {
    try {
      auto r = verify_manifest(cli.out);
      for (const auto& m : r.mismatched) std::cerr << "digest mismatch: " << m << "\n";
      for (const auto& m : r.missing) std::cerr << "missing: " << m << "\n";
      std::cout << (r.ok() ? "verified " : "FAILED ") << r.checked << " files\n";
      return r.ok() ? 0 : 2;
    } catch (const std::exception& e) {
      std::cerr << "verify: " << e.what() << "\n";
      return 1;
    }
  }

  CLI::App* chosen = nullptr;
  Handler handler = nullptr;
  for (auto& [sub, h] : subs)
    if (sub->parsed()) { chosen = sub; handler = h; }
  if (!chosen) {
    std::cerr << "a subcommand is required\n" << app.help();
    return 1;
  }

  RunConfig cfg;
  try {
    cfg = resolve_config(cli.config);
  } catch (const std::exception& e) {
    std::cerr << "config: " << e.what() << "\n";
    return 1;
  }

  auto t0 = std::chrono::steady_clock::now();
  try {
    OutputSet out(cli.out);
    int rc = handler(cfg, cli, out);
    std::vector<std::string> args(argv + 1, argv + argc);
    double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    out.write_manifest({{"tool", "trionw"},
                        {"version", tool_version},
                        {"subcommand", chosen->get_name()},
                        {"args", args},
                        {"config", cli.config},
                        {"params", params_json(cfg.model)},
                        {"wall_time_s", wall}});
    return rc;
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << chosen->get_name() << ": " << e.what() << "\n";
    return 2;
  }
}
