#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "optics.hpp"

namespace trionw {

struct PeakRow {
  double sweep_value;
  double energy;  // ueV
  double height;
  std::string label;
};

using PeakTable = std::vector<PeakRow>;

class EmptyMap : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

// height above the higher of the two bounding minima
inline double prominence(const std::vector<double>& y, std::size_t i) {
  auto side = [&](int dir) {
    double low = y[i];
    for (long k = long(i) + dir; k >= 0 && k < long(y.size()); k += dir) {
      double v = y[std::size_t(k)];
      if (!std::isfinite(v)) break;
      if (v > y[i]) break;
      low = std::min(low, v);
    }
    return low;
  };
  return y[i] - std::max(side(-1), side(+1));
}

}  // namespace detail

inline PeakTable extract_peaks(const SpectrumGrid& map, double min_prominence) {
  if (!(min_prominence > 0)) throw std::invalid_argument("extract_peaks: min_prominence must be > 0");
  if (map.sweep.empty() || map.energy.size() < 3 || map.values.size() == 0)
    throw EmptyMap("extract_peaks: map has no data");
  PeakTable out;
  const auto& e = map.energy;
  for (Eigen::Index r = 0; r < map.values.rows(); ++r) {
    std::vector<double> y(e.size());
    for (std::size_t k = 0; k < e.size(); ++k) y[k] = map.values(r, Eigen::Index(k));
    for (std::size_t k = 1; k + 1 < e.size(); ++k) {
      double a = y[k - 1], b = y[k], c = y[k + 1];
      if (!(std::isfinite(a) && std::isfinite(b) && std::isfinite(c))) continue;
      if (!(b > a && b >= c)) continue;
      if (detail::prominence(y, k) < min_prominence) continue;
      // parabola through the three samples, non-uniform spacing allowed
      double x0 = e[k - 1], x1 = e[k], x2 = e[k + 1];
      double d1 = (b - a) / (x1 - x0), d2 = (c - b) / (x2 - x1);
      double curv = (d2 - d1) / (x2 - x0);
      double xp = x1, yp = b;
      if (curv < 0) {
        double slope = d1 + curv * (x1 - x0);
        double dx = -slope / (2 * curv);
        dx = std::clamp(dx, x0 - x1, x2 - x1);
        xp = x1 + dx;
        yp = b + slope * dx + curv * dx * dx;
      }
      if (yp > 0) out.push_back({map.sweep[std::size_t(r)], xp, yp, ""});
    }
  }
  return out;
}

inline const std::vector<std::string>& fit_parameter_names() {
  static const std::vector<std::string> names{"t_e",      "delta_eh0",  "h_so",
                                              "delta_eh_asym", "g_e_bottom", "g_e_top",
                                              "g_h",      "kappa_dia",  "eps0"};
  return names;
}

inline double& fit_parameter(ModelParams& p, const std::string& name) {
  if (name == "t_e") return p.t_e;
  if (name == "delta_eh0") return p.delta_eh0;
  if (name == "h_so") return p.h_so;
  if (name == "delta_eh_asym") return p.delta_eh_asym;
  if (name == "g_e_bottom") return p.g_e_bottom;
  if (name == "g_e_top") return p.g_e_top;
  if (name == "g_h") return p.g_h;
  if (name == "kappa_dia") return p.kappa_dia;
  if (name == "eps0") return p.eps0;
  throw std::invalid_argument("unknown fit parameter: " + name);
}

struct FitOptions {
  double bias = std::numeric_limits<double>::quiet_NaN();  // NaN: plateau center
  double linewidth = 5.0;     // assignment gate is 3 linewidths
  double min_strength = 0.02; // model lines weaker than this are not matched
  bool subtract_dia = false;
  int max_iter = 100;
  double tol = 1e-10;         // relative cost change and step size
  double confidence_z = 1.96;
};

struct FitReport {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<double> half_widths;
  double residual_norm = 0;
  std::vector<double> residual_history;  // after each accepted iteration, starting at p0
  bool converged = false;
  int iterations = 0;
  int n_peaks = 0;
  int n_unassigned = 0;
  ModelParams params;
};

class SingularJacobian : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MaxIterations : public std::runtime_error {
 public:
  MaxIterations(const std::string& m, FitReport r) : std::runtime_error(m), report(std::move(r)) {}
  FitReport report;
};

struct ModelLine {
  double energy;
  double strength;
};

// All ground-to-trion lines at one field, in a stable (ground, eigenstate)
// order, on the energy scale of the map.
inline std::vector<ModelLine> model_lines(const ModelParams& p, double b, const FitOptions& o) {
  double v = std::isnan(o.bias) ? p.v_center() : o.bias;
  std::vector<ModelLine> out;
  for (const auto& l : transition_spectrum(p, b, v))
    out.push_back({o.subtract_dia ? apply_diamagnetic(l.energy, b, p.kappa_dia, DiaMode::Subtract)
                                  : l.energy,
                   l.strength});
  return out;
}

// Line energies visible in a field-sweep map.
inline std::vector<double> model_line_energies(const ModelParams& p, double b, const FitOptions& o) {
  std::vector<double> out;
  for (const auto& l : model_lines(p, b, o))
    if (l.strength >= o.min_strength) out.push_back(l.energy);
  return out;
}

// Synthetic peak table from the forward model with Gaussian position noise.
inline PeakTable synthetic_peaks(const ModelParams& p, const std::vector<double>& b_grid,
                                 double noise, std::uint64_t seed, const FitOptions& o = {}) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  PeakTable out;
  for (double b : b_grid) {
    auto e = model_line_energies(p, b, o);
    std::sort(e.begin(), e.end());
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (k > 0 && e[k] - e[k - 1] < 1e-9) continue;
      out.push_back({b, e[k] + noise * n(rng), 1.0, ""});
    }
  }
  return out;
}

namespace detail {

struct Matched {
  std::vector<int> line;  // per peak; -1 unassigned
  int unassigned = 0;
};

class PeakModel {
 public:
  PeakModel(const PeakTable& peaks, const FitOptions& o) : peaks_(peaks), o_(o) {
    for (const auto& r : peaks) rows_.push_back(r.sweep_value);
    std::sort(rows_.begin(), rows_.end());
    rows_.erase(std::unique(rows_.begin(), rows_.end()), rows_.end());
  }

  std::vector<std::vector<ModelLine>> lines(const ModelParams& p) const {
    std::vector<std::vector<ModelLine>> out;
    for (double b : rows_) out.push_back(model_lines(p, b, o_));
    return out;
  }

  std::size_t row_of(double b) const {
    return std::size_t(std::lower_bound(rows_.begin(), rows_.end(), b) - rows_.begin());
  }

  Matched match(const std::vector<std::vector<ModelLine>>& lines) const {
    Matched m;
    const double gate = 3 * o_.linewidth;
    for (const auto& r : peaks_) {
      const auto& ls = lines[row_of(r.sweep_value)];
      int best = -1;
      double bd = gate;
      for (std::size_t k = 0; k < ls.size(); ++k) {
        if (ls[k].strength < o_.min_strength) continue;
        double d = std::abs(ls[k].energy - r.energy);
        if (d <= bd) { bd = d; best = int(k); }
      }
      if (best < 0) ++m.unassigned;
      m.line.push_back(best);
    }
    return m;
  }

  // residuals with a fixed match; unmatched lines give zero
  rvec residuals(const std::vector<std::vector<ModelLine>>& lines, const Matched& m) const {
    rvec r = rvec::Zero(Eigen::Index(peaks_.size()));
    for (std::size_t i = 0; i < peaks_.size(); ++i) {
      int k = m.line[i];
      if (k < 0) continue;
      const auto& ls = lines[row_of(peaks_[i].sweep_value)];
      r(Eigen::Index(i)) = peaks_[i].energy - ls[std::size_t(k)].energy;
    }
    return r;
  }

  rvec residuals(const ModelParams& p, Matched* m_out = nullptr) const {
    auto ls = lines(p);
    auto m = match(ls);
    if (m_out) *m_out = m;
    return residuals(ls, m);
  }

 private:
  const PeakTable& peaks_;
  FitOptions o_;
  std::vector<double> rows_;
};

}  // namespace detail

// Levenberg-Marquardt on peak positions; the peak-to-line match is redone
// at every trial point and held fixed inside the Jacobian.
inline FitReport fit_parameters(const PeakTable& peaks, const ModelParams& p0,
                                const std::vector<std::string>& free, const FitOptions& o = {}) {
  detail::PeakModel model(peaks, o);
  FitReport rep;
  rep.names = free;
  rep.n_peaks = int(peaks.size());
  ModelParams p = p0;
  detail::Matched m;
  rvec r = model.residuals(p, &m);
  double cost = r.squaredNorm();
  rep.residual_history.push_back(std::sqrt(cost));
  auto finish = [&](bool conv) {
    rep.params = p;
    rep.values.clear();
    for (const auto& n : free) rep.values.push_back(fit_parameter(p, n));
    rep.residual_norm = std::sqrt(cost);
    rep.n_unassigned = m.unassigned;
    rep.converged = conv;
  };
  const auto np = Eigen::Index(free.size());
  if (np == 0) {
    finish(true);
    return rep;
  }
  if (peaks.size() < 2 * free.size())
    throw std::invalid_argument("fit_parameters: need at least twice as many peaks as parameters");

  auto jacobian = [&](const ModelParams& at, const detail::Matched& mm) {
    rmat j(Eigen::Index(peaks.size()), np);
    auto base = model.lines(at);
    rvec r0 = model.residuals(base, mm);
    for (Eigen::Index c = 0; c < np; ++c) {
      ModelParams q = at;
      double& x = fit_parameter(q, free[std::size_t(c)]);
      double h = 1e-6 * std::max(std::abs(x), 1.0);
      x += h;
      j.col(c) = (model.residuals(model.lines(q), mm) - r0) / h;
    }
    return j;
  };

  double lambda = 1e-3;
  rmat j;
  for (int it = 0; it < o.max_iter; ++it) {
    j = jacobian(p, m);
    rmat jtj = j.transpose() * j;
    rvec g = j.transpose() * r;
    Eigen::JacobiSVD<rmat> svd(jtj);
    double smax = svd.singularValues()(0), smin = svd.singularValues()(np - 1);
    if (!(smax > 0) || smin <= 1e-14 * smax)
      throw SingularJacobian("fit_parameters: Jacobian is rank deficient");
    if (g.norm() <= o.tol * std::max(1.0, std::sqrt(cost)) * std::sqrt(smax) || cost == 0) {
      finish(true);
      break;
    }
    bool accepted = false;
    for (int tries = 0; tries < 30 && !accepted; ++tries) {
      rmat a = jtj;
      a.diagonal() += lambda * jtj.diagonal();
      rvec step = -a.ldlt().solve(g);
      ModelParams q = p;
      for (Eigen::Index c = 0; c < np; ++c) fit_parameter(q, free[std::size_t(c)]) += step(c);
      detail::Matched mq;
      rvec rq = model.residuals(q, &mq);
      double cq = rq.squaredNorm();
      if (std::isfinite(cq) && cq <= cost) {
        double rel = (cost - cq) / std::max(cost, 1e-300);
        double xs = 0;
        for (Eigen::Index c = 0; c < np; ++c)
          xs = std::max(xs, std::abs(step(c)) / std::max(std::abs(fit_parameter(p, free[std::size_t(c)])), 1.0));
        p = q;
        r = rq;
        m = mq;
        cost = cq;
        lambda = std::max(lambda / 3, 1e-12);
        accepted = true;
        ++rep.iterations;
        rep.residual_history.push_back(std::sqrt(cost));
        if (rel < o.tol || xs < o.tol) {
          finish(true);
          it = o.max_iter;
        }
      } else {
        lambda *= 4;
      }
    }
    if (!accepted) {
      finish(true);  // no downhill step at any damping: local minimum
      break;
    }
    if (it == o.max_iter - 1) {
      finish(false);
      throw MaxIterations("fit_parameters: no convergence in " + std::to_string(o.max_iter) +
                          " iterations", rep);
    }
  }
  if (rep.values.empty()) finish(true);

  j = jacobian(p, m);
  rmat cov = (j.transpose() * j).inverse();
  int dof = std::max(1, int(peaks.size()) - m.unassigned - int(np));
  double s2 = cost / dof;
  for (Eigen::Index c = 0; c < np; ++c)
    rep.half_widths.push_back(o.confidence_z * std::sqrt(std::max(0.0, s2 * cov(c, c))));
  return rep;
}

}  // namespace trionw
