#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include <trionw/experiments.hpp>
#include <trionw/fitting.hpp>

using namespace trionw;

namespace {

struct Outcome {
  bool pass;
  bool known;  // failure the model cannot avoid, see README
  std::string detail;
};

constexpr double field = 2.75;

LaserField laser_on(const LineRef& l, double rabi, LaserPol pol = LaserPol::LinearX) {
  return {l.energy, rabi, LaserRole::Initialize, pol};
}

std::string num(double x, int prec = 4) {
  char b[64];
  std::snprintf(b, sizeof b, "%.*g", prec, x);
  return b;
}

Outcome exchange_formula() {
  ModelParams p;
  p.h_so = 95;
  p.t_e = 850;
  p.delta_eh0 = 130;
  double eq3 = effective_exchange_eq3(95, 850, 130);
  double ex = effective_exchange_exact(p);
  ModelParams q = p;
  q.t_e *= 10;
  double eq3b = effective_exchange_eq3(95, 8500, 130), exb = effective_exchange_exact(q);
  bool ok = std::abs(eq3 - 14.53) < 0.005 && std::abs(ex / eq3 - 1) < 0.10 && std::abs(exb / eq3b - 1) < 0.01;
  return {ok, false, "eq3 " + num(eq3) + ", exact " + num(ex) + "; t_e x10: " + num(eq3b) + " vs " + num(exb)};
}

Outcome anticrossings() {
  ModelParams start;
  start.eps0 += 40;
  start.g_h += 0.03;
  auto p = calibrate_defaults(start);
  double b1 = find_crossing_field(p, pair_b1, calibration_window);
  double b2 = find_crossing_field(p, pair_b2, calibration_window);
  double gap = anticrossing_gap(p, pair_b2, calibration_window);
  bool ok = std::abs(b1 - 1.0) <= 0.05 && std::abs(b2 - 2.8) <= 0.05 && std::abs(gap - 15) <= 1;
  return {ok, false, "B1 " + num(b1) + " T, B2 " + num(b2) + " T, gap " + num(gap) + " ueV"};
}

Outcome selection_rules() {
  ModelParams p;
  p.h_so = 0;
  p.delta_eh_asym = 0;
  auto d = build_dipole_operator(p, 1.0);
  int worst = 99;
  double sum_err = 0;
  std::array<double, 2> sum0{};
  for (double b : {0.0, 1.0, 3.0, 6.0}) {
    auto es = trion_eigensystem(p, b);
    std::array<int, 2> dark{};
    std::array<double, 2> sums{};
    for (Eigen::Index n = 0; n < es.energies.size(); ++n) {
      double s = 0;
      for (int g = 0; g < 2; ++g) {
        double sg = std::norm(es.vectors.col(n).dot(d.sigma_plus.col(g))) +
                    std::norm(es.vectors.col(n).dot(d.sigma_minus.col(g)));
        sums[std::size_t(g)] += sg;
        s += sg;
      }
      if (s < 1e-12) {
        // hole spin from the dominant product state
        Eigen::Index k;
        es.vectors.col(n).cwiseAbs2().maxCoeff(&k);
        ++dark[enumerate_basis(p.include_zero_two)[n_ground + std::size_t(k)].hole > 0 ? 0 : 1];
      }
    }
    worst = std::min({worst, dark[0], dark[1]});
    if (b == 0) sum0 = sums;
    for (int g = 0; g < 2; ++g) sum_err = std::max(sum_err, std::abs(sums[std::size_t(g)] / sum0[std::size_t(g)] - 1));
  }
  bool rule = sum_err < 1e-10;
  bool ok = worst >= 2 && rule;
  return {ok, !ok && rule,
          "fewest dark states per hole spin " + std::to_string(worst) + " (need 2); sum rule drift " + num(sum_err)};
}

Outcome solver_hygiene() {
  ModelParams p;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0, 1);
  double tr = 0, mineig = 0, res = 0, dev = 0;
  int n = 0;
  while (n < 20) {
    double b = 6 * u(rng), v = 100 * u(rng);
    auto s = optical_system(p, b, v);
    std::vector<std::pair<Eigen::Index, int>> bright;
    for (Eigen::Index k = 0; k < s.n_trion(); ++k)
      for (int g = 0; g < 2; ++g)
        if (std::norm(s.dplus(k, g)) + std::norm(s.dminus(k, g)) > 0.1 && s.trion(k) - s.ground[g] < 1000)
          bright.push_back({k, g});
    std::vector<LaserField> lasers;
    int nl = u(rng) < 0.5 ? 1 : 2;
    for (int k = 0; k < nl; ++k) {
      auto [t, g] = bright[std::size_t(u(rng) * double(bright.size()))];
      lasers.push_back({s.trion(t) - s.ground[g] + 2 * (u(rng) - 0.5), (0.2 + 5 * u(rng)) * p.gamma_sp,
                        LaserRole::Initialize, k ? LaserPol::LinearY : LaserPol::LinearX});
    }
    DrivenSystem ds;
    try {
      auto a = reference_assignment(p, b, v, lasers);
      ds = driven_system(p, b, v, lasers, 0.0, &a);
    } catch (const AmbiguousAssignment&) {
      continue;
    }
    auto r = steady_state(ds.l);
    tr = std::max(tr, std::abs(r.trace() - 1));
    mineig = std::min(mineig, r.min_eigenvalue());
    res = std::max(res, residual_norm(ds.l, r));
    auto x = time_evolve(ds.l, mixed_ground_state(ds.sys.dim()), 200 / p.gamma_sp);
    dev = std::max(dev, (x.rho - r.rho).cwiseAbs().maxCoeff());
    ++n;
  }
  bool hygiene = tr < 1e-12 && mineig > -1e-10 && res < 1e-10;
  bool ok = hygiene && dev < 1e-6;
  return {ok, !ok && hygiene,
          "trace err " + num(tr, 2) + ", min eig " + num(mineig, 2) + ", residual " + num(res, 2) +
              ", |rho(200/gamma) - rho_ss| " + num(dev, 3)};
}

Outcome spin_pumping() {
  ModelParams p;
  const double v = p.v_center();
  auto w = identify_w_lines(p, field, v);
  double rabi = saturating_rabi(p, field);
  ExperimentOptions o;
  o.n_nodes = 31;
  o.sigma = ghz_to_microev(2.0);
  double wide = std::abs(spin_pumping_polarization(p, field, v, laser_on(w.lambda_up, rabi), o));
  o.sigma = ghz_to_microev(0.4);
  double narrow = std::abs(spin_pumping_polarization(p, field, v, laser_on(w.lambda_up, rabi), o));
  bool ok = std::abs(wide - 0.96) <= 0.05 && narrow > wide;
  return {ok, false, "|P| " + num(wide) + " at 2 GHz, " + num(narrow) + " at 0.4 GHz"};
}

Outcome cycling() {
  ModelParams p;
  const double v = p.v_center();
  auto w = identify_w_lines(p, field, v);
  double rabi = saturating_rabi(p, field);
  ExperimentOptions o;
  o.n_nodes = 31;
  double pc = std::max(std::abs(spin_pumping_polarization(p, field, v, laser_on(w.cycling_down, rabi), o)),
                       std::abs(spin_pumping_polarization(p, field, v, laser_on(w.cycling_up, rabi), o)));
  double center = cycling_photon_budget(p, field, v, rabi).photons;
  double edge = cycling_photon_budget(p, field, p.cotun.v_left, rabi).photons;
  bool nondestructive = pc < 0.01, budget = center >= 10 * edge;
  return {nondestructive && budget, !nondestructive && budget,
          "polarization change " + num(pc) + " (need < 0.01); photons center " + num(center) + ", edge " +
              num(edge)};
}

Outcome plateau() {
  ModelParams p;
  PlateauOptions o;
  o.n_nodes = 31;
  std::vector<double> vs;
  for (int i = 0; i <= 10; ++i) vs.push_back(p.cotun.v_left + (p.cotun.v_right - p.cotun.v_left) * i / 10);
  auto r = one_laser_plateau(p, field, vs, {}, saturating_rabi(p, field), o);
  double lam = 0, cyc = 0;
  for (Eigen::Index l = 0; l < 2; ++l)
    lam = std::max(lam, r.traces(5, l) / std::min(r.traces(0, l), r.traces(10, l)));
  for (Eigen::Index l = 2; l < 4; ++l)
    cyc = std::max(cyc, r.traces.col(l).maxCoeff() / r.traces.col(l).minCoeff());
  bool dip = lam < 0.2, flat = cyc <= 2;
  return {dip && flat, dip && !flat,
          "lambda center/edge " + num(lam) + " (need < 0.2); cycling max/min " + num(cyc) + " (need <= 2)"};
}

Outcome two_laser() {
  ModelParams p;
  const double v = p.v_center();
  auto w = identify_w_lines(p, field, v);
  PumpProbeOptions o;
  o.n_nodes = 31;
  auto change = [&](const LineRef& pump, const LineRef& probe) {
    double on = pump_probe_point(p, field, v, pump.energy, probe.energy, 1.0, 1.0, probe, o);
    double off = pump_probe_point(p, field, v, pump.energy, probe.energy, 0.0, 1.0, probe, o);
    return (on - off) / off;
  };
  double ud = change(w.lambda_up, w.cycling_down), uu = change(w.lambda_up, w.cycling_up);
  double dd = change(w.lambda_down, w.cycling_down), du = change(w.lambda_down, w.cycling_up);
  // pump spin up: spin-down line enhanced, spin-up line suppressed; mirrored for spin down
  bool ok = ud > 0 && uu < 0 && du > 0 && dd < 0;
  return {ok, false,
          "pump up: " + num(ud, 3) + " / " + num(uu, 3) + "; pump down: " + num(dd, 3) + " / " + num(du, 3)};
}

Outcome lockin() {
  ModelParams p;
  const double v = 25, dv = 50, shift = p.lever_arm * dv;
  ExperimentOptions o;
  o.sigma = 0;
  double worst = 0;
  int n = 0, unpaired = 0;
  for (const auto& line : transition_spectrum(p, 0.0, v)) {
    if (line.strength < 0.05) continue;
    std::vector<double> e;
    for (double x = line.energy - 12; x <= line.energy + shift + 12 + 1e-9; x += 0.25) e.push_back(x);
    auto s = lockin_spectrum(p, 0.0, v, dv, e, 0.5 * p.gamma_sp, o);
    double top = *std::max_element(s.begin(), s.end());
    for (const auto& r : lockin_replicas(e, s, shift, 0.05 * top, 8.0, 3.0)) {
      if (std::abs(r.energy - line.energy) > 3) continue;
      ++n;
      if (!std::isfinite(r.replica_energy) || std::abs(r.replica_energy - r.energy - shift) > 0.5) {
        ++unpaired;
        continue;
      }
      worst = std::max(worst, std::abs(-r.replica_area / r.area - 1));
    }
  }
  bool ok = n > 0 && unpaired == 0 && worst < 0.02;
  return {ok, false,
          std::to_string(n) + " peaks, " + std::to_string(unpaired) + " unpaired, worst area mismatch " + num(worst, 3)};
}

Outcome fit() {
  ModelParams truth;
  std::vector<double> b;
  for (int i = 0; i <= 60; ++i) b.push_back(0.1 * i);
  auto peaks = synthetic_peaks(truth, b, 0.5, 7);
  const std::vector<std::string> free{"h_so", "delta_eh0", "g_e_bottom", "g_h"};
  ModelParams start = truth;
  start.h_so *= 1.04;
  start.delta_eh0 *= 0.97;
  start.g_e_bottom *= 1.05;
  start.g_h *= 0.96;
  auto r = fit_parameters(peaks, start, free);
  double worst = 0;
  for (std::size_t k = 0; k < free.size(); ++k) {
    double t = fit_parameter(truth, free[k]);
    worst = std::max(worst, std::abs(r.values[k] / t - 1));
  }
  bool mono = true;
  for (std::size_t k = 1; k < r.residual_history.size(); ++k)
    mono = mono && r.residual_history[k] <= r.residual_history[k - 1];
  return {worst < 0.05 && mono, false,
          "worst relative error " + num(worst, 3) + ", " + std::to_string(r.iterations) + " iterations, history " +
              (mono ? "monotone" : "not monotone")};
}

}  // namespace

int main() {
  std::vector<std::pair<int, std::function<Outcome()>>> crit{
      {1, exchange_formula}, {2, anticrossings}, {3, selection_rules}, {4, solver_hygiene}, {5, spin_pumping},
      {6, cycling},          {7, plateau},       {8, two_laser},       {9, lockin},         {10, fit}};
  int unexpected = 0;
  for (auto& [id, f] : crit) {
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, false, std::string("exception: ") + e.what()};
    }
    double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!o.pass && !o.known) ++unexpected;
    std::printf("criterion %2d: %s%s  %s  [%.1f s]\n", id, o.pass ? "PASS" : "FAIL",
                !o.pass && o.known ? " (known)" : "", o.detail.c_str(), dt);
    std::fflush(stdout);
  }
  return unexpected ? 1 : 0;
}
