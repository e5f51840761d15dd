#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "basis.hpp"
#include "linalg.hpp"
#include "params.hpp"
#include "units.hpp"

namespace trionw {

struct HamiltonianMatrix {
  Manifold manifold;
  cmat m;
  Eigen::Index dim() const { return m.rows(); }
};

inline HamiltonianMatrix build_ground_hamiltonian(const ModelParams& p, double b) {
  cmat h = cmat::Zero(2, 2);
  h(0, 0) = 0.5 * p.g_e_bottom * mu_b * b;
  h(1, 1) = -0.5 * p.g_e_bottom * mu_b * b;
  return {Manifold::Ground, h};
}

namespace detail {

inline rmat trion_real(const ModelParams& p, double b, double v) {
  const auto n = static_cast<Eigen::Index>(trion_dim(p.include_zero_two));
  rmat h = rmat::Zero(n, n);
  const double dia = p.kappa_dia * b * b;
  const double common = dia + p.stark(v);
  for (int eb : {+1, -1})
    for (int et : {+1, -1})
      for (int hh : {+1, -1}) {
        auto i = static_cast<Eigen::Index>(oneone_index(eb, et, hh));
        h(i, i) = 0.5 * mu_b * b * (p.g_e_bottom * eb + p.g_e_top * et + p.g_h * hh) -
                  0.5 * p.delta_eh0 * et * hh + common;
      }
  const double rt2 = std::sqrt(2.0);
  auto couple = [&](std::size_t a, std::size_t c, double x) {
    h(Eigen::Index(a), Eigen::Index(c)) += x;
    h(Eigen::Index(c), Eigen::Index(a)) += x;
  };
  for (int hh : {+1, -1}) {
    auto s = twozero_index(hh);
    h(Eigen::Index(s), Eigen::Index(s)) = 0.5 * mu_b * b * p.g_h * hh + p.eps(v) + dia;
    couple(s, oneone_index(+1, -1, hh), p.t_e);
    couple(s, oneone_index(-1, +1, hh), -p.t_e);
    couple(s, oneone_index(+1, +1, hh), rt2 * p.h_so);
    couple(s, oneone_index(-1, -1, hh), rt2 * p.h_so);
    if (p.include_zero_two) {
      auto z = zerotwo_index(hh);
      h(Eigen::Index(z), Eigen::Index(z)) =
          0.5 * mu_b * b * p.g_h * hh + p.eps02 + common;
      couple(z, oneone_index(+1, -1, hh), p.t_e);
      couple(z, oneone_index(-1, +1, hh), -p.t_e);
      couple(z, oneone_index(+1, +1, hh), rt2 * p.h_so);
      couple(z, oneone_index(-1, -1, hh), rt2 * p.h_so);
    }
  }
  for (int eb : {+1, -1})
    couple(oneone_index(eb, +1, -1), oneone_index(eb, -1, +1), 0.5 * p.delta_eh_asym);
  return h;
}

}  // namespace detail

inline HamiltonianMatrix build_trion_hamiltonian(const ModelParams& p, double b, double v) {
  return {Manifold::Trion, detail::trion_real(p, b, v).cast<cplx>()};
}

inline HamiltonianMatrix build_trion_hamiltonian(const ModelParams& p, double b) {
  return build_trion_hamiltonian(p, b, p.v_center());
}

// dH/dB, used to fix eigenvectors inside degenerate subspaces
inline cmat trion_field_derivative(const ModelParams& p, double b) {
  const double db = 1e-3;
  ModelParams q = p;
  q.kappa_dia = 0;
  rmat d = (detail::trion_real(q, b + db, q.v_center()) - detail::trion_real(q, b, q.v_center())) / db;
  d.diagonal().array() += 2 * p.kappa_dia * b;
  return d.cast<cplx>();
}

inline Eigensystem trion_eigensystem(const ModelParams& p, double b, double v) {
  cmat d = trion_field_derivative(p, b);
  return diagonalize(build_trion_hamiltonian(p, b, v).m, &d);
}

inline Eigensystem trion_eigensystem(const ModelParams& p, double b) {
  return trion_eigensystem(p, b, p.v_center());
}

// ---- state characters and labels ----

struct Character {
  std::string label;
  cvec v;
};

inline std::string projection_label(const char* base, int twice_jz) {
  std::string s = base;
  s += twice_jz >= 0 ? "+" : "-";
  s += std::to_string(std::abs(twice_jz)) + "/2";
  return s;
}

inline std::vector<Character> trion_characters(bool include_zero_two = false) {
  const auto n = static_cast<Eigen::Index>(trion_dim(include_zero_two));
  const double r = 1.0 / std::sqrt(2.0);
  std::vector<Character> c;
  auto unit = [&](std::size_t i) {
    cvec v = cvec::Zero(n);
    v(Eigen::Index(i)) = 1.0;
    return v;
  };
  for (int h : {+1, -1}) {
    int hz = 3 * h;  // hole projection in units of 1/2
    c.push_back({projection_label("T", hz + 2), unit(oneone_index(+1, +1, h))});
    c.push_back({projection_label("T", hz),
                 r * (unit(oneone_index(+1, -1, h)) + unit(oneone_index(-1, +1, h)))});
    c.push_back({projection_label("T", hz - 2), unit(oneone_index(-1, -1, h))});
    c.push_back({projection_label("S11", hz),
                 r * (unit(oneone_index(+1, -1, h)) - unit(oneone_index(-1, +1, h)))});
    c.push_back({projection_label("S20", hz), unit(twozero_index(h))});
    if (include_zero_two) c.push_back({projection_label("S02", hz), unit(zerotwo_index(h))});
  }
  return c;
}

inline cvec character_vector(const std::string& label, bool include_zero_two = false) {
  for (auto& c : trion_characters(include_zero_two))
    if (c.label == label) return c.v;
  throw std::invalid_argument("unknown state label: " + label);
}

inline std::string dominant_label(const cvec& v) {
  bool zt = v.size() == 12;
  std::string best;
  double w = -1;
  for (auto& c : trion_characters(zt)) {
    double x = std::norm(c.v.dot(v));
    if (x > w + 1e-12) { w = x; best = c.label; }
  }
  return best;
}

// ---- sweeps and branch tracking ----

enum class SweepAxis { Field, Bias };

struct EigenBranch {
  int id = 0;
  std::string label;
  std::vector<double> energy;
  std::vector<cvec> vectors;
};

class TrackingLost : public std::runtime_error {
 public:
  TrackingLost(std::size_t point, double overlap)
      : std::runtime_error("branch tracking lost at sweep point " + std::to_string(point) +
                           " (max overlap " + std::to_string(overlap) + ")"),
        point(point), overlap(overlap) {}
  std::size_t point;
  double overlap;
};

inline std::vector<EigenBranch> sweep_eigensystem(const ModelParams& p,
                                                  const std::vector<double>& grid,
                                                  SweepAxis axis, double fixed_other) {
  if (grid.empty()) throw std::invalid_argument("sweep_eigensystem: empty grid");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1]))
      throw std::invalid_argument("sweep_eigensystem: grid must be strictly increasing");
  auto eig = [&](double x) {
    return axis == SweepAxis::Field ? trion_eigensystem(p, x, fixed_other)
                                    : trion_eigensystem(p, fixed_other, x);
  };
  Eigensystem es = eig(grid[0]);
  const auto n = es.energies.size();
  std::vector<EigenBranch> br(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    auto& b = br[std::size_t(k)];
    b.id = int(k);
    b.label = dominant_label(es.vectors.col(k));
    b.energy.push_back(es.energies(k));
    b.vectors.push_back(es.vectors.col(k));
  }
  for (std::size_t g = 1; g < grid.size(); ++g) {
    Eigensystem cur = eig(grid[g]);
    rmat ov(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        ov(i, j) = std::abs(br[std::size_t(i)].vectors.back().dot(cur.vectors.col(j)));
    std::vector<bool> used_b(std::size_t(n), false), used_s(std::size_t(n), false);
    for (Eigen::Index step = 0; step < n; ++step) {
      Eigen::Index bi = -1, bj = -1;
      double best = -1, best_de = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (used_b[std::size_t(i)]) continue;
        for (Eigen::Index j = 0; j < n; ++j) {
          if (used_s[std::size_t(j)]) continue;
          double de = std::abs(cur.energies(j) - br[std::size_t(i)].energy.back());
          if (ov(i, j) > best + 1e-12 || (std::abs(ov(i, j) - best) <= 1e-12 && de < best_de)) {
            best = ov(i, j); best_de = de; bi = i; bj = j;
          }
        }
      }
      if (best < 0.5) throw TrackingLost(g, best);
      used_b[std::size_t(bi)] = used_s[std::size_t(bj)] = true;
      auto& b = br[std::size_t(bi)];
      cvec v = cur.vectors.col(bj);
      cplx ph = b.vectors.back().dot(v);
      if (std::abs(ph) > 0) v *= std::conj(ph) / std::abs(ph);
      b.energy.push_back(cur.energies(bj));
      b.vectors.push_back(v);
    }
  }
  return br;
}

// ---- gaps between labelled characters ----

struct PairGap {
  double gap;
  double signed_diff;  // E(u-like) - E(v-like)
};

inline PairGap pair_gap(const Eigensystem& es, const cvec& u, const cvec& v) {
  const auto n = es.energies.size();
  rvec wu(n), wv(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    wu(k) = std::norm(u.dot(es.vectors.col(k)));
    wv(k) = std::norm(v.dot(es.vectors.col(k)));
  }
  rvec tot = wu + wv;
  Eigen::Index i = 0, j = -1;
  tot.maxCoeff(&i);
  for (Eigen::Index k = 0; k < n; ++k)
    if (k != i && (j < 0 || tot(k) > tot(j))) j = k;
  Eigen::Index iu = wu(i) - wv(i) >= wu(j) - wv(j) ? i : j;
  Eigen::Index iv = iu == i ? j : i;
  return {std::abs(es.energies(i) - es.energies(j)), es.energies(iu) - es.energies(iv)};
}

class NoMinimumInWindow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GapMinimum {
  double field;
  double gap;
};

using EigenFn = std::function<Eigensystem(double)>;

// grid scan, then golden section on the gap; exact crossings are refined by
// bisection on the sign of the character-resolved energy difference
inline GapMinimum minimize_pair_gap(const EigenFn& eig, const cvec& u, const cvec& v, double lo,
                                    double hi, int n_scan = 241, double tol = 1e-10) {
  if (!(hi > lo)) throw std::invalid_argument("minimize_pair_gap: empty window");
  const auto ns = static_cast<std::size_t>(n_scan);
  std::vector<double> xs(ns), gs(ns), ds(ns);
  for (int k = 0; k < n_scan; ++k) {
    double x = lo + (hi - lo) * k / (n_scan - 1);
    auto pg = pair_gap(eig(x), u, v);
    xs[std::size_t(k)] = x; gs[std::size_t(k)] = pg.gap; ds[std::size_t(k)] = pg.signed_diff;
  }
  auto k = std::size_t(std::min_element(gs.begin(), gs.end()) - gs.begin());
  if (k == 0 || k + 1 == std::size_t(n_scan))
    throw NoMinimumInWindow("no interior gap minimum in [" + std::to_string(lo) + ", " +
                            std::to_string(hi) + "] T");
  auto gapf = [&](double x) { return pair_gap(eig(x), u, v).gap; };
  double a = xs[k - 1], b = xs[k + 1];
  const double r = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - r * (b - a), d = a + r * (b - a);
  double fc = gapf(c), fd = gapf(d);
  while (b - a > tol) {
    if (fc < fd) { b = d; d = c; fd = fc; c = b - r * (b - a); fc = gapf(c); }
    else { a = c; c = d; fc = fd; d = a + r * (b - a); fd = gapf(d); }
  }
  GapMinimum best{0.5 * (a + b), gapf(0.5 * (a + b))};
  for (std::size_t s : {k - 1, k}) {
    if (ds[s] * ds[s + 1] >= 0) continue;
    double x0 = xs[s], x1 = xs[s + 1], d0 = ds[s];
    for (int it = 0; it < 200 && x1 - x0 > 1e-13; ++it) {
      double xm = 0.5 * (x0 + x1);
      double dm = pair_gap(eig(xm), u, v).signed_diff;
      if (dm * d0 > 0) { x0 = xm; d0 = dm; } else x1 = xm;
    }
    for (double x : {x0, x1}) {
      double g = gapf(x);
      if (g < best.gap) best = {x, g};
    }
  }
  return best;
}

inline GapMinimum find_gap_minimum(const ModelParams& p, const std::string& la,
                                   const std::string& lb, double b_lo, double b_hi, double v) {
  bool zt = p.include_zero_two;
  return minimize_pair_gap([&](double b) { return trion_eigensystem(p, b, v); },
                           character_vector(la, zt), character_vector(lb, zt), b_lo, b_hi);
}

inline double find_crossing_field(const ModelParams& p, const std::pair<std::string, std::string>& pair,
                                  std::pair<double, double> window) {
  return find_gap_minimum(p, pair.first, pair.second, window.first, window.second, p.v_center())
      .field;
}

inline double anticrossing_gap(const ModelParams& p, const std::pair<std::string, std::string>& pair,
                               std::pair<double, double> window) {
  return find_gap_minimum(p, pair.first, pair.second, window.first, window.second, p.v_center())
      .gap;
}

// ---- effective exchange ----

class ZeroTunneling : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline double effective_exchange_eq3(double h_so, double t_e, double delta_eh) {
  if (t_e == 0) throw ZeroTunneling("effective exchange: t_e = 0");
  return h_so / t_e * delta_eh;
}

// Exact gap of the four-state spin-flip Raman chain
// {uuD, udD, duD, S20 D} taken from the full trion Hamiltonian.
inline GapMinimum effective_exchange_exact_detail(const ModelParams& p, double b_lo = 0.02,
                                                  double b_hi = 20.0) {
  const std::size_t idx[4] = {oneone_index(+1, +1, -1), oneone_index(+1, -1, -1),
                              oneone_index(-1, +1, -1), twozero_index(-1)};
  cvec u = cvec::Zero(4), w = cvec::Zero(4);
  u(0) = 1;
  w(1) = w(2) = 1.0 / std::sqrt(2.0);
  auto eig = [&](double b) {
    rmat full = detail::trion_real(p, b, p.v_center());
    rmat blk(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) blk(i, j) = full(Eigen::Index(idx[i]), Eigen::Index(idx[j]));
    return diagonalize(blk.cast<cplx>());
  };
  return minimize_pair_gap(eig, u, w, b_lo, b_hi, 801);
}

inline double effective_exchange_exact(const ModelParams& p) {
  return effective_exchange_exact_detail(validate_params(p)).gap;
}

// ---- calibration ----

class CalibrationDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CalibrationTargets {
  double b1 = 1.0;
  double b2 = 2.8;
};

inline const std::pair<std::string, std::string> pair_b1{"T-1/2", "T+3/2"};
inline const std::pair<std::string, std::string> pair_b2{"T-1/2", "T-3/2"};
inline constexpr std::pair<double, double> calibration_window{0.05, 8.0};

inline ModelParams calibrate_defaults(const ModelParams& p0, CalibrationTargets t = {},
                                      int max_iter = 60) {
  if (!(t.b1 > 0 && t.b1 < t.b2))
    throw CalibrationDiverged("calibration targets must satisfy 0 < B1 < B2");
  ModelParams p = validate_params(p0);
  auto resid = [&](const ModelParams& q) {
    Eigen::Vector2d r;
    r(0) = find_crossing_field(q, pair_b1, calibration_window) - t.b1;
    r(1) = find_crossing_field(q, pair_b2, calibration_window) - t.b2;
    return r;
  };
  auto with = [&](Eigen::Vector2d x) {
    ModelParams q = p;
    q.eps0 = x(0);
    q.g_h = x(1);
    return q;
  };
  Eigen::Vector2d x(p.eps0, p.g_h);
  Eigen::Vector2d r;
  try {
    r = resid(p);
    for (int it = 0; it <= max_iter; ++it) {
      if (r.cwiseAbs().maxCoeff() < 1e-6) return with(x);
      if (it == max_iter) break;
      const Eigen::Vector2d h(std::max(1.0, 1e-3 * std::abs(x(0))), 1e-4);
      Eigen::Matrix2d jac;
      for (int c = 0; c < 2; ++c) {
        Eigen::Vector2d xp = x;
        xp(c) += h(c);
        jac.col(c) = (resid(with(xp)) - r) / h(c);
      }
      Eigen::Vector2d step = jac.fullPivLu().solve(-r);
      if (!step.allFinite()) break;
      double lam = 1.0;
      bool accepted = false;
      for (int ls = 0; ls < 12; ++ls, lam *= 0.5) {
        Eigen::Vector2d xn = x + lam * step;
        try {
          Eigen::Vector2d rn = resid(with(xn));
          if (rn.norm() < r.norm()) { x = xn; r = rn; accepted = true; break; }
        } catch (const NoMinimumInWindow&) {
        }
      }
      if (!accepted) break;
    }
  } catch (const NoMinimumInWindow& e) {
    throw CalibrationDiverged(std::string("calibration lost a crossing: ") + e.what());
  }
  throw CalibrationDiverged("calibration did not converge");
}

}  // namespace trionw
