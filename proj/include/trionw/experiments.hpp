#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dynamics.hpp"
#include "parallel.hpp"

namespace trionw {

struct ExperimentOptions {
  int n_nodes = 61;
  double sigma = std::numeric_limits<double>::quiet_NaN();  // NaN: p.sigma_wander
  int threads = 1;
  double kappa = std::numeric_limits<double>::quiet_NaN();  // NaN: kappa(V)
  LaserPol pol = LaserPol::LinearX;

  double sigma_or(const ModelParams& p) const { return std::isnan(sigma) ? p.sigma_wander : sigma; }
};

// One optical transition of the W diagram.
struct LineRef {
  std::string name;
  int ground = 0;
  Eigen::Index trion = 0;
  double energy = 0;
  double strength = 0;
};

struct WLines {
  LineRef lambda_up;     // strongest doublet transition from spin up
  LineRef lambda_down;   // strongest doublet transition from spin down
  LineRef cycling_down;  // T+1/2 line, spin down
  LineRef cycling_up;    // T+3/2 line, spin up
  std::array<LineRef, 4> all() const { return {lambda_up, lambda_down, cycling_down, cycling_up}; }
};

namespace detail {

inline double weight_in(const cvec& v, const std::vector<std::string>& labels, bool zt) {
  double w = 0;
  for (const auto& l : labels) w += std::norm(character_vector(l, zt).dot(v));
  return w;
}

inline LineRef make_line(const std::string& name, const OpticalSystem& s, Eigen::Index n, int g) {
  double st = std::norm(s.dplus(n, g)) + std::norm(s.dminus(n, g));
  return {name, g, n, s.trion(n) - s.ground[g], st};
}

}  // namespace detail

inline WLines identify_w_lines(const ModelParams& p, double b, double v) {
  auto s = optical_system(p, b, v);
  const bool zt = p.include_zero_two;
  const Eigen::Index nt = s.n_trion();
  const auto un = static_cast<std::size_t>(nt);
  std::vector<double> wd(un), wp(un), wq(un);
  for (Eigen::Index n = 0; n < nt; ++n) {
    cvec col = s.vectors.col(n);
    wd[std::size_t(n)] = detail::weight_in(col, {"T-1/2", "T-3/2"}, zt);
    wp[std::size_t(n)] = detail::weight_in(col, {"T+1/2"}, zt);
    wq[std::size_t(n)] = detail::weight_in(col, {"T+3/2"}, zt);
  }
  auto argmax = [&](const std::vector<double>& w, Eigen::Index skip) {
    Eigen::Index best = -1;
    for (Eigen::Index n = 0; n < nt; ++n)
      if (n != skip && (best < 0 || w[std::size_t(n)] > w[std::size_t(best)])) best = n;
    return best;
  };
  Eigen::Index d1 = argmax(wd, -1), d2 = argmax(wd, d1);
  auto strongest = [&](int g) {
    auto a = detail::make_line("", s, d1, g), c = detail::make_line("", s, d2, g);
    return a.strength >= c.strength ? a : c;
  };
  WLines w;
  w.lambda_up = strongest(0);
  w.lambda_up.name = "lambda_up";
  w.lambda_down = strongest(1);
  w.lambda_down.name = "lambda_down";
  w.cycling_down = detail::make_line("cycling_T+1/2", s, argmax(wp, -1), 1);
  w.cycling_up = detail::make_line("cycling_T+3/2", s, argmax(wq, -1), 0);
  return w;
}

// Assignment at zero offset, validated once and reused across the
// wandering average.
inline Assignment reference_assignment(const ModelParams& p, double b, double v,
                                       const std::vector<LaserField>& lasers) {
  auto s = optical_system(p, b, v);
  auto a = auto_assign(s, lasers);
  check_assignment(s, lasers, a);
  return a;
}

struct PointState {
  DrivenSystem ds;
  DensityMatrix rho;
};

inline PointState solve_point(const ModelParams& p, double b, double v,
                              const std::vector<LaserField>& lasers, double offset,
                              const Assignment& a, double kappa) {
  PointState ps{driven_system(p, b, v, lasers, offset, &a, kappa), {}};
  ps.rho = steady_state(ps.ds.l);
  return ps;
}

inline double laser_absorption(const PointState& ps, const std::vector<LaserField>& lasers,
                               int laser, double gamma_sp) {
  auto tr = driven_transitions(ps.ds.sys, lasers, ps.ds.assign, laser);
  return absorption_signal(ps.rho, ps.ds.h, tr, gamma_sp);
}

// Single-laser absorption averaged over spectral wandering.
inline double broadened_absorption(const ModelParams& p, double b, double v, double photon_energy,
                                   double rabi, const ExperimentOptions& o = {}) {
  std::vector<LaserField> lasers{{photon_energy, rabi, LaserRole::Measure, o.pol}};
  auto a = reference_assignment(p, b, v, lasers);
  return broadened_observable(
      [&](double x) {
        return laser_absorption(solve_point(p, b, v, lasers, x, a, o.kappa), lasers, 0, p.gamma_sp);
      },
      o.sigma_or(p), o.n_nodes);
}

struct GroundPopulations {
  double up = 0, down = 0, trion = 0;
  double polarization() const { return (up - down) / (up + down); }
};

inline GroundPopulations broadened_populations(const ModelParams& p, double b, double v,
                                               const std::vector<LaserField>& lasers,
                                               const ExperimentOptions& o = {}) {
  auto a = reference_assignment(p, b, v, lasers);
  GroundPopulations g;
  auto add = [&](double x, double w) {
    auto ps = solve_point(p, b, v, lasers, x, a, o.kappa);
    g.up += w * ps.rho.population(0);
    g.down += w * ps.rho.population(1);
    g.trion += w * ps.rho.trion_population();
  };
  const double sigma = o.sigma_or(p);
  if (sigma == 0) {
    add(0.0, 1.0);
    return g;
  }
  auto q = gauss_hermite(o.n_nodes);
  for (std::size_t i = 0; i < q.nodes.size(); ++i) add(sigma * q.nodes[i], q.weights[i]);
  return g;
}

inline double spin_pumping_polarization(const ModelParams& p, double b, double v,
                                        const LaserField& laser, const ExperimentOptions& o = {}) {
  return broadened_populations(p, b, v, {laser}, o).polarization();
}

inline double line_absorption(const PointState& ps, const std::vector<LaserField>& lasers,
                              int laser, const LineRef& line, double gamma_sp) {
  std::vector<DrivenTransition> mine;
  for (const auto& t : driven_transitions(ps.ds.sys, lasers, ps.ds.assign, laser))
    if (t.trion == line.trion && t.ground == line.ground) mine.push_back(t);
  return absorption_signal(ps.rho, ps.ds.h, mine, gamma_sp);
}

// Smallest Rabi energy at which homogeneous absorption on the T+1/2 cycling
// line at the plateau edge reaches `fraction` of its saturation maximum.
inline double saturating_rabi(const ModelParams& p, double b, double fraction = 0.9) {
  const double v = p.cotun.v_left;
  const auto line = identify_w_lines(p, b, v).cycling_down;
  auto absorb = [&](double rabi) {
    std::vector<LaserField> lasers{{line.energy, rabi, LaserRole::Measure, LaserPol::LinearX}};
    auto a = reference_assignment(p, b, v, lasers);
    auto ps = solve_point(p, b, v, lasers, 0.0, a, std::nan(""));
    return line_absorption(ps, lasers, 0, line, p.gamma_sp);
  };
  double top = 0, at = p.gamma_sp;
  for (double r = 0.25 * p.gamma_sp; r < 128 * p.gamma_sp; r *= std::sqrt(2.0)) {
    double x = absorb(r);
    if (x > top) { top = x; at = r; }
  }
  double lo = 0, hi = at;
  for (int it = 0; it < 60 && hi - lo > 1e-6 * hi; ++it) {
    double mid = 0.5 * (lo + hi);
    (absorb(mid) < fraction * top ? lo : hi) = mid;
  }
  return hi;
}

struct PhotonBudget {
  double photons = 0;
  bool saturated = false;
  double cycling_rate = 0;  // emission flux back into the driven spin
  double leak_rate = 0;     // emission into the other spin plus co-tunneling
};

inline constexpr double photon_budget_cap = 1e12;

// Homogeneous drive on resonance with the T+1/2 cycling line; fluxes are
// taken out of the cycling eigenstate and out of the driven ground spin.
inline PhotonBudget cycling_photon_budget(const ModelParams& p, double b, double v, double rabi,
                                          double kappa = std::numeric_limits<double>::quiet_NaN()) {
  const auto line = identify_w_lines(p, b, v).cycling_down;
  std::vector<LaserField> lasers{{line.energy, rabi, LaserRole::Measure, LaserPol::LinearX}};
  auto a = reference_assignment(p, b, v, lasers);
  auto ps = solve_point(p, b, v, lasers, 0.0, a, kappa);
  const int gc = line.ground;
  const Eigen::Index n = 2 + line.trion;
  PhotonBudget out;
  for (const auto& c : emission_channels(p, ps.ds.sys, ps.ds.assign, p.gamma_sp)) {
    double f = c.rate * ps.rho.population(n);
    out.cycling_rate += f * std::norm(c.op(gc, n));
    out.leak_rate += f * std::norm(c.op(1 - gc, n));
  }
  double k = std::isnan(kappa) ? cotunneling_rate(v, p) : kappa;
  out.leak_rate += k * ps.rho.population(gc);
  if (out.leak_rate <= out.cycling_rate / photon_budget_cap) {
    out.photons = photon_budget_cap;
    out.saturated = true;
  } else {
    out.photons = out.cycling_rate / out.leak_rate;
  }
  return out;
}

struct PlateauScanResult {
  SpectrumGrid map;  // rows: bias, columns: photon energy
  std::vector<std::string> trace_names;
  rmat traces;       // rows: bias, columns: lines
  rmat line_energy;  // homogeneous line position per bias
};

struct PlateauOptions : ExperimentOptions {
  std::vector<double> trace_offsets{-1.5, 0.0, 1.5};
};

// Peak trace: maximum of the broadened absorption over points around each
// line center; the map itself is optional (empty e_grid).
inline PlateauScanResult one_laser_plateau(const ModelParams& p, double b,
                                           const std::vector<double>& v_grid,
                                           const std::vector<double>& e_grid, double rabi,
                                           const PlateauOptions& o = {}) {
  PlateauScanResult r;
  const auto nv = Eigen::Index(v_grid.size()), ne = Eigen::Index(e_grid.size());
  r.map.sweep_name = "bias_mV";
  r.map.sweep = v_grid;
  r.map.energy = e_grid;
  r.map.values = rmat::Zero(nv, ne);
  r.map.integrated.assign(v_grid.size(), 0.0);
  parallel_for(std::size_t(nv * ne), o.threads, [&](std::size_t k) {
    Eigen::Index i = Eigen::Index(k) / ne, j = Eigen::Index(k) % ne;
    try {
      r.map.values(i, j) =
          broadened_absorption(p, b, v_grid[std::size_t(i)], e_grid[std::size_t(j)], rabi, o);
    } catch (const AmbiguousAssignment&) {
      r.map.values(i, j) = std::numeric_limits<double>::quiet_NaN();
    }
  });
  for (Eigen::Index i = 0; i < nv; ++i)
    for (Eigen::Index j = 0; j < ne; ++j)
      if (std::isfinite(r.map.values(i, j))) r.map.integrated[std::size_t(i)] += r.map.values(i, j);

  std::vector<WLines> lines;
  for (double v : v_grid) lines.push_back(identify_w_lines(p, b, v));
  for (const auto& l : lines.front().all()) r.trace_names.push_back(l.name);
  const auto no = Eigen::Index(o.trace_offsets.size());
  rmat samples(nv * 4, no);
  parallel_for(std::size_t(nv * 4 * no), o.threads, [&](std::size_t k) {
    Eigen::Index row = Eigen::Index(k) / no, c = Eigen::Index(k) % no;
    Eigen::Index i = row / 4, l = row % 4;
    double e = lines[std::size_t(i)].all()[std::size_t(l)].energy + o.trace_offsets[std::size_t(c)];
    samples(row, c) = broadened_absorption(p, b, v_grid[std::size_t(i)], e, rabi, o);
  });
  r.traces.resize(nv, 4);
  r.line_energy.resize(nv, 4);
  for (Eigen::Index i = 0; i < nv; ++i)
    for (Eigen::Index l = 0; l < 4; ++l) {
      r.traces(i, l) = samples.row(i * 4 + l).maxCoeff();
      r.line_energy(i, l) = lines[std::size_t(i)].all()[std::size_t(l)].energy;
    }
  return r;
}

struct PumpProbeMap {
  std::vector<double> init_grid, meas_grid;
  std::array<std::string, 2> line_names;
  std::array<rmat, 2> probe;  // rows: init energy, columns: measurement energy; NaN masked
};

struct PumpProbeOptions : ExperimentOptions {
  LaserPol init_pol = LaserPol::LinearX;
  LaserPol meas_pol = LaserPol::LinearY;
};

// Probe absorption of the measurement laser on one W line, with the
// initialization laser present but not detected.
inline double pump_probe_point(const ModelParams& p, double b, double v, double e_init,
                               double e_meas, double rabi_init, double rabi_meas,
                               const LineRef& line, const PumpProbeOptions& o = {}) {
  std::vector<LaserField> lasers{{e_init, rabi_init, LaserRole::Initialize, o.init_pol},
                                 {e_meas, rabi_meas, LaserRole::Measure, o.meas_pol}};
  auto a = reference_assignment(p, b, v, lasers);
  return broadened_observable(
      [&](double x) {
        auto ps = solve_point(p, b, v, lasers, x, a, o.kappa);
        auto tr = driven_transitions(ps.ds.sys, lasers, ps.ds.assign, 1);
        std::vector<DrivenTransition> mine;
        for (const auto& t : tr)
          if (t.trion == line.trion && t.ground == line.ground) mine.push_back(t);
        return absorption_signal(ps.rho, ps.ds.h, mine, p.gamma_sp);
      },
      o.sigma_or(p), o.n_nodes);
}

inline PumpProbeMap two_laser_map(const ModelParams& p, double b, double v,
                                  const std::vector<double>& init_grid,
                                  const std::vector<double>& meas_grid, double rabi_init,
                                  double rabi_meas, const PumpProbeOptions& o = {}) {
  PumpProbeMap m;
  m.init_grid = init_grid;
  m.meas_grid = meas_grid;
  auto w = identify_w_lines(p, b, v);
  std::array<LineRef, 2> lines{w.cycling_down, w.cycling_up};
  const auto ni = Eigen::Index(init_grid.size()), nm = Eigen::Index(meas_grid.size());
  for (int l = 0; l < 2; ++l) {
    m.line_names[std::size_t(l)] = lines[std::size_t(l)].name;
    m.probe[std::size_t(l)] = rmat::Zero(ni, nm);
  }
  parallel_for(std::size_t(2 * ni * nm), o.threads, [&](std::size_t k) {
    int l = int(Eigen::Index(k) / (ni * nm));
    Eigen::Index rest = Eigen::Index(k) % (ni * nm), i = rest / nm, j = rest % nm;
    double val;
    try {
      val = pump_probe_point(p, b, v, init_grid[std::size_t(i)], meas_grid[std::size_t(j)],
                             rabi_init, rabi_meas, lines[std::size_t(l)], o);
    } catch (const AmbiguousAssignment&) {
      val = std::numeric_limits<double>::quiet_NaN();
    }
    m.probe[std::size_t(l)](i, j) = val;
  });
  return m;
}

// signal(E) = A(E; V) - A(E; V + delta_v)
inline std::vector<double> lockin_spectrum(const ModelParams& p, double b, double v, double delta_v,
                                           const std::vector<double>& e_grid, double rabi,
                                           const ExperimentOptions& o = {}) {
  if (!(delta_v > 0)) throw std::invalid_argument("lockin_spectrum: delta_V must be > 0");
  std::vector<double> out(e_grid.size());
  parallel_for(e_grid.size(), o.threads, [&](std::size_t j) {
    out[j] = broadened_absorption(p, b, v, e_grid[j], rabi, o) -
             broadened_absorption(p, b, v + delta_v, e_grid[j], rabi, o);
  });
  return out;
}

struct Replica {
  double energy;          // positive peak
  double replica_energy;  // matching negative peak
  double area;            // integral over +-window around the positive peak
  double replica_area;    // same around the negative peak (negative)
};

namespace detail {

inline double interp(const std::vector<double>& x, const std::vector<double>& y, double at) {
  auto it = std::lower_bound(x.begin(), x.end(), at);
  if (it == x.begin()) return y.front();
  if (it == x.end()) return y.back();
  std::size_t j = std::size_t(it - x.begin());
  double f = (at - x[j - 1]) / (x[j] - x[j - 1]);
  return (1 - f) * y[j - 1] + f * y[j];
}

inline double window_integral(const std::vector<double>& x, const std::vector<double>& y, double lo,
                              double hi) {
  std::vector<double> pts{lo};
  for (double e : x)
    if (e > lo && e < hi) pts.push_back(e);
  pts.push_back(hi);
  double s = 0;
  for (std::size_t k = 0; k + 1 < pts.size(); ++k)
    s += 0.5 * (interp(x, y, pts[k]) + interp(x, y, pts[k + 1])) * (pts[k + 1] - pts[k]);
  return s;
}

}  // namespace detail

// Pairs each positive local maximum above `threshold` with the deepest
// negative local minimum within `tol` of energy + shift.
inline std::vector<Replica> lockin_replicas(const std::vector<double>& e, const std::vector<double>& s,
                                            double shift, double threshold, double window,
                                            double tol) {
  std::vector<Replica> out;
  const std::size_t n = s.size();
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(s[i] > threshold && s[i] >= s[i - 1] && s[i] > s[i + 1])) continue;
    double target = e[i] + shift, best = 0, at = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t j = 1; j + 1 < n; ++j)
      if (std::abs(e[j] - target) <= tol && s[j] < best && s[j] <= s[j - 1] && s[j] < s[j + 1]) {
        best = s[j];
        at = e[j];
      }
    Replica r{e[i], at, detail::window_integral(e, s, e[i] - window, e[i] + window),
              std::numeric_limits<double>::quiet_NaN()};
    if (std::isfinite(at)) r.replica_area = detail::window_integral(e, s, at - window, at + window);
    out.push_back(r);
  }
  return out;
}

}  // namespace trionw
