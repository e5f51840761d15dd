#pragma once

#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "optics.hpp"
#include "quadrature.hpp"

namespace trionw {

enum class LaserRole { Initialize, Measure };
enum class LaserPol { LinearX, LinearY, SigmaPlus, SigmaMinus };

// photon_energy is measured on the same scale as transition energies
// (E_trion - E_ground, zero at the bare OneOne trion)
struct LaserField {
  double photon_energy = 0;
  double rabi = 0;
  LaserRole role = LaserRole::Initialize;
  LaserPol pol = LaserPol::LinearX;
};

inline Eigen::Vector2cd polarization_vector(LaserPol p) {
  const double r = 1.0 / std::sqrt(2.0);
  switch (p) {
    case LaserPol::SigmaPlus: return {1.0, 0.0};
    case LaserPol::SigmaMinus: return {0.0, 1.0};
    case LaserPol::LinearY: return {cplx(0, r), cplx(0, -r)};
    default: return {r, r};
  }
}

inline double cotunneling_rate(double v, const ModelParams& p) {
  const auto& c = p.cotun;
  double edge = std::exp((c.v_left - v) / c.width) + std::exp((v - c.v_right) / c.width);
  double k = c.kappa_center + c.kappa_edge * edge;
  return std::min(k, 10.0 * c.kappa_edge);
}

// Ground and trion eigenstates at one (B, V) with a rigid trion offset.
// Full-space index: 0,1 ground (up, down); 2.. trion eigenstates.
struct OpticalSystem {
  double ground[2];
  rvec trion;
  cmat vectors;  // trion eigenvectors in the product basis
  cmat dplus;    // <n|D+|g>, unit dipole
  cmat dminus;
  Eigen::Index n_trion() const { return trion.size(); }
  Eigen::Index dim() const { return 2 + trion.size(); }
};

inline OpticalSystem optical_system(const ModelParams& p, double b, double v, double offset = 0) {
  OpticalSystem s;
  auto es = trion_eigensystem(p, b, v);
  auto hg = build_ground_hamiltonian(p, b);
  s.ground[0] = hg.m(0, 0).real();
  s.ground[1] = hg.m(1, 1).real();
  s.trion = es.energies.array() + offset;
  s.vectors = es.vectors;
  auto d = build_dipole_operator(p, 1.0);
  s.dplus = es.vectors.adjoint() * d.sigma_plus;
  s.dminus = es.vectors.adjoint() * d.sigma_minus;
  return s;
}

inline cplx laser_coupling(const OpticalSystem& s, const LaserField& l, Eigen::Index n, int g) {
  Eigen::Vector2cd e = polarization_vector(l.pol);
  return e(0) * s.dplus(n, g) + e(1) * s.dminus(n, g);
}

class AmbiguousAssignment : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Assignment {
  std::vector<int> laser_of;  // per trion eigenstate
};

inline constexpr double bright_cutoff = 1e-10;
inline constexpr double rwa_separation = 20.0;

// Each trion eigenstate goes to the laser closest to one of its bright
// transitions; lasers with zero Rabi are skipped unless all are dark.
inline Assignment auto_assign(const OpticalSystem& s, const std::vector<LaserField>& lasers) {
  Assignment a;
  bool any_on = false;
  for (const auto& l : lasers) any_on = any_on || l.rabi > 0;
  for (Eigen::Index n = 0; n < s.n_trion(); ++n) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < lasers.size(); ++k)
      for (int g = 0; g < 2; ++g) {
        if (any_on && lasers[k].rabi == 0) continue;
        double st = std::norm(s.dplus(n, g)) + std::norm(s.dminus(n, g));
        if (st < bright_cutoff) continue;
        double d = std::abs(s.trion(n) - s.ground[g] - lasers[k].photon_energy);
        if (d < bd) { bd = d; best = int(k); }
      }
    a.laser_of.push_back(best);
  }
  return a;
}

inline void check_assignment(const OpticalSystem& s, const std::vector<LaserField>& lasers,
                             const Assignment& a) {
  if (lasers.empty() || lasers.size() > 2)
    throw std::invalid_argument("rwa_hamiltonian: one or two lasers required");
  if (a.laser_of.size() != std::size_t(s.n_trion()))
    throw std::invalid_argument("rwa_hamiltonian: assignment size mismatch");
  for (Eigen::Index n = 0; n < s.n_trion(); ++n)
    for (std::size_t k = 0; k < lasers.size(); ++k) {
      if (int(k) == a.laser_of[std::size_t(n)] || lasers[k].rabi == 0) continue;
      for (int g = 0; g < 2; ++g) {
        double c = lasers[k].rabi * std::abs(laser_coupling(s, lasers[k], n, g));
        if (c < 1e-12) continue;
        double det = std::abs(s.trion(n) - s.ground[g] - lasers[k].photon_energy);
        if (det <= rwa_separation * c)
          throw AmbiguousAssignment("laser " + std::to_string(k) + " drives trion state " +
                                    std::to_string(n) + " assigned to another laser (detuning " +
                                    std::to_string(det) + " ueV)");
      }
    }
}

inline HamiltonianMatrix rwa_hamiltonian(const OpticalSystem& s, const std::vector<LaserField>& lasers,
                                         const Assignment& a, bool validate = true) {
  if (validate) check_assignment(s, lasers, a);
  const Eigen::Index d = s.dim();
  cmat h = cmat::Zero(d, d);
  h(0, 0) = s.ground[0];
  h(1, 1) = s.ground[1];
  for (Eigen::Index n = 0; n < s.n_trion(); ++n) {
    const auto& l = lasers[std::size_t(a.laser_of[std::size_t(n)])];
    h(2 + n, 2 + n) = s.trion(n) - l.photon_energy;
    for (int g = 0; g < 2; ++g) {
      cplx c = 0.5 * l.rabi * laser_coupling(s, l, n, g);
      h(2 + n, g) += c;
      h(g, 2 + n) += std::conj(c);
    }
  }
  return {Manifold::Trion, h};
}

inline HamiltonianMatrix rwa_hamiltonian(const ModelParams& p, double b, double v,
                                         const std::vector<LaserField>& lasers,
                                         const Assignment* a = nullptr) {
  auto s = optical_system(p, b, v);
  return rwa_hamiltonian(s, lasers, a ? *a : auto_assign(s, lasers));
}

enum class ChannelKind { Emission, CoTunnelFlip, PureDephasing };

struct CollapseChannel {
  cmat op;  // jump operator is sqrt(rate) * op
  double rate;
  ChannelKind kind;
};

// One channel per bright product state and rotating frame.
inline std::vector<CollapseChannel> emission_channels(const ModelParams& p, const OpticalSystem& s,
                                                      const Assignment& a, double gamma) {
  std::vector<CollapseChannel> out;
  const Eigen::Index d = s.dim();
  int n_frames = 1;
  for (int k : a.laser_of) n_frames = std::max(n_frames, k + 1);
  struct Bright { std::size_t b; int g; };
  std::vector<Bright> bright;
  for (int eb : {+1, -1}) {
    bright.push_back({oneone_index(eb, -1, +1), int(ground_index(eb))});
    bright.push_back({oneone_index(eb, +1, -1), int(ground_index(eb))});
  }
  (void)p;
  for (auto br : bright)
    for (int k = 0; k < n_frames; ++k) {
      cmat op = cmat::Zero(d, d);
      bool any = false;
      for (Eigen::Index n = 0; n < s.n_trion(); ++n) {
        if (a.laser_of[std::size_t(n)] != k) continue;
        op(br.g, 2 + n) = s.vectors(Eigen::Index(br.b), n);
        any = any || std::abs(op(br.g, 2 + n)) > 0;
      }
      if (any) out.push_back({op, gamma, ChannelKind::Emission});
    }
  return out;
}

inline std::vector<CollapseChannel> cotunneling_channels(double kappa, Eigen::Index d) {
  std::vector<CollapseChannel> out;
  if (kappa <= 0) return out;
  cmat up = cmat::Zero(d, d), dn = cmat::Zero(d, d);
  dn(1, 0) = 1.0;
  up(0, 1) = 1.0;
  out.push_back({dn, kappa, ChannelKind::CoTunnelFlip});
  out.push_back({up, kappa, ChannelKind::CoTunnelFlip});
  return out;
}

inline std::vector<CollapseChannel> dephasing_channels(double rate, Eigen::Index d) {
  std::vector<CollapseChannel> out;
  if (rate <= 0) return out;
  cmat pr = cmat::Zero(d, d);
  for (Eigen::Index n = 2; n < d; ++n) pr(n, n) = 1.0;
  out.push_back({pr, rate, ChannelKind::PureDephasing});
  return out;
}

struct Superoperator {
  cmat m;  // acts on column-stacked density matrices
  Eigen::Index d;
};

// vec(A X B) = (B^T kron A) vec(X)
inline Superoperator build_liouvillian(const HamiltonianMatrix& h,
                                       const std::vector<CollapseChannel>& channels) {
  const Eigen::Index d = h.dim();
  const cmat id = cmat::Identity(d, d);
  cmat l = cplx(0, -1) * (Eigen::kroneckerProduct(id, h.m) - Eigen::kroneckerProduct(h.m.transpose(), id)).eval();
  for (const auto& c : channels) {
    if (c.rate < 0) throw std::invalid_argument("collapse channel with negative rate");
    if (c.rate == 0) continue;
    cmat cdc = c.op.adjoint() * c.op;
    l += c.rate * (Eigen::kroneckerProduct(c.op.conjugate(), c.op) -
                   0.5 * Eigen::kroneckerProduct(id, cdc) -
                   0.5 * Eigen::kroneckerProduct(cdc.transpose(), id))
                      .eval();
  }
  return {l, d};
}

struct DensityMatrix {
  cmat rho;
  double trace() const { return rho.trace().real(); }
  double population(Eigen::Index i) const { return rho(i, i).real(); }
  double polarization() const {
    double u = rho(0, 0).real(), d = rho(1, 1).real();
    return (u - d) / (u + d);
  }
  double trion_population() const {
    double s = 0;
    for (Eigen::Index i = 2; i < rho.rows(); ++i) s += rho(i, i).real();
    return s;
  }
  double min_eigenvalue() const {
    Eigen::SelfAdjointEigenSolver<cmat> s(0.5 * (rho + rho.adjoint()));
    return s.eigenvalues().minCoeff();
  }
};

inline cvec vec(const cmat& m) { return Eigen::Map<const cvec>(m.data(), m.size()); }
inline cmat unvec(const cvec& v, Eigen::Index d) { return Eigen::Map<const cmat>(v.data(), d, d); }

inline double residual_norm(const Superoperator& l, const DensityMatrix& r) {
  return (l.m * vec(r.rho)).norm();
}

class StepSizeUnderflow : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DegenerateSteadyState : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EvolveMethod { Exponential, AdaptiveRK };

struct EvolveControl {
  EvolveMethod method = EvolveMethod::Exponential;
  double abs_tol = 1e-12;
  double rel_tol = 1e-10;
  double dt_init = 1e-3;
  double dt_min = 1e-12;
};

inline DensityMatrix time_evolve(const Superoperator& l, const DensityMatrix& rho0, double t_final,
                                 EvolveControl ctl = {}) {
  if (t_final < 0) throw std::invalid_argument("time_evolve: negative time");
  if (t_final == 0) return rho0;
  const Eigen::Index d = l.d;
  if (ctl.method == EvolveMethod::Exponential) {
    cmat prop = (l.m * t_final).exp();
    return {unvec(prop * vec(rho0.rho), d)};
  }
  namespace ode = boost::numeric::odeint;
  using state = std::vector<cplx>;
  cvec x0 = vec(rho0.rho);
  state x(x0.data(), x0.data() + x0.size());
  auto rhs = [&](const state& y, state& dy, double) {
    Eigen::Map<const cvec> ym(y.data(), Eigen::Index(y.size()));
    dy.resize(y.size());
    Eigen::Map<cvec>(dy.data(), Eigen::Index(dy.size())) = l.m * ym;
  };
  auto stepper = ode::make_controlled<ode::runge_kutta_dopri5<state>>(ctl.abs_tol, ctl.rel_tol);
  double t = 0, dt = std::min(ctl.dt_init, t_final);
  while (t < t_final) {
    dt = std::min(dt, t_final - t);
    if (dt < ctl.dt_min && t_final - t > ctl.dt_min)
      throw StepSizeUnderflow("time_evolve: step size below " + std::to_string(ctl.dt_min));
    if (stepper.try_step(rhs, x, t, dt) == ode::fail) continue;
  }
  cvec xe = Eigen::Map<cvec>(x.data(), Eigen::Index(x.size()));
  return {unvec(xe, d)};
}

inline DensityMatrix mixed_ground_state(Eigen::Index d) {
  cmat r = cmat::Zero(d, d);
  r(0, 0) = r(1, 1) = 0.5;
  return {r};
}

// vec entries reachable from the ground populations; uncoupled dark states
// would otherwise add stationary solutions of their own
inline std::vector<Eigen::Index> reachable_from_ground(const Superoperator& l) {
  const Eigen::Index d = l.d, d2 = d * d;
  const double floor = 1e-13 * l.m.cwiseAbs().maxCoeff();  // eigenvector round-off
  std::vector<char> seen(std::size_t(d2), 0);
  std::vector<Eigen::Index> todo{0, d + 1};
  seen[0] = seen[std::size_t(d + 1)] = 1;
  while (!todo.empty()) {
    Eigen::Index j = todo.back();
    todo.pop_back();
    for (Eigen::Index i = 0; i < d2; ++i)
      if (!seen[std::size_t(i)] && std::abs(l.m(i, j)) > floor) {
        seen[std::size_t(i)] = 1;
        todo.push_back(i);
      }
  }
  std::vector<Eigen::Index> out;
  for (Eigen::Index i = 0; i < d2; ++i)
    if (seen[std::size_t(i)]) out.push_back(i);
  return out;
}

inline DensityMatrix steady_state(const Superoperator& l) {
  const Eigen::Index d = l.d;
  const auto keep = reachable_from_ground(l);
  const auto nk = Eigen::Index(keep.size());
  cmat a(nk, nk);
  for (Eigen::Index r = 0; r < nk; ++r)
    for (Eigen::Index c = 0; c < nk; ++c) a(r, c) = l.m(keep[std::size_t(r)], keep[std::size_t(c)]);
  a.row(0).setZero();
  for (Eigen::Index c = 0; c < nk; ++c) {
    Eigen::Index k = keep[std::size_t(c)];
    if (k % d == k / d) a(0, c) = 1.0;
  }
  cvec rhs = cvec::Zero(nk);
  rhs(0) = 1.0;
  Eigen::PartialPivLU<cmat> lu(a);
  double rc = lu.rcond();
  if (std::isfinite(rc) && rc > 1e-14) {
    cvec x = lu.solve(rhs), full = cvec::Zero(d * d);
    for (Eigen::Index c = 0; c < nk; ++c) full(keep[std::size_t(c)]) = x(c);
    cmat r = unvec(full, d);
    r = 0.5 * (r + r.adjoint()).eval();
    r /= r.trace().real();
    DensityMatrix out{r};
    if (residual_norm(l, out) < 1e-9) return out;
  }
  // degenerate null space: state reached from the mixed ground state
  DensityMatrix r = mixed_ground_state(d);
  double t = 1e3;
  for (int it = 0; it < 24; ++it, t *= 4) {
    DensityMatrix x = time_evolve(l, r, t);
    x.rho = 0.5 * (x.rho + x.rho.adjoint()).eval();
    x.rho /= x.rho.trace().real();
    if (residual_norm(l, x) < 1e-11) return x;
  }
  throw DegenerateSteadyState("steady_state: propagation did not converge");
}

// Gaussian average over a joint trion offset
inline double broadened_observable(const std::function<double(double)>& f, double sigma,
                                   int n_nodes) {
  if (sigma < 0) throw std::invalid_argument("broadened_observable: sigma < 0");
  if (n_nodes < 1 || n_nodes % 2 == 0)
    throw std::invalid_argument("broadened_observable: n_nodes must be odd and >= 1");
  if (sigma == 0) return f(0.0);
  auto q = gauss_hermite(n_nodes);
  double s = 0;
  for (std::size_t i = 0; i < q.nodes.size(); ++i) s += q.weights[i] * f(sigma * q.nodes[i]);
  return s;
}

struct DrivenTransition {
  int ground;
  Eigen::Index trion;  // eigenstate index
  int laser;
};

inline std::vector<DrivenTransition> driven_transitions(const OpticalSystem& s,
                                                        const std::vector<LaserField>& lasers,
                                                        const Assignment& a, int laser) {
  std::vector<DrivenTransition> out;
  const auto& l = lasers[std::size_t(laser)];
  if (l.rabi == 0) return out;
  for (Eigen::Index n = 0; n < s.n_trion(); ++n) {
    if (a.laser_of[std::size_t(n)] != laser) continue;
    for (int g = 0; g < 2; ++g)
      if (std::norm(laser_coupling(s, l, n, g)) > bright_cutoff) out.push_back({g, n, laser});
  }
  return out;
}

// gamma_sp times the trion population of each driven eigenstate, split over
// its driven ground states by their net absorption rates 2 Im(H_ng rho_gn)
inline double absorption_signal(const DensityMatrix& r, const HamiltonianMatrix& h,
                                const std::vector<DrivenTransition>& tr, double gamma_sp) {
  double s = 0;
  for (const auto& t : tr) {
    Eigen::Index n = 2 + t.trion;
    double total = 0, mine = 0;
    for (int g = 0; g < 2; ++g) {
      double rate = std::max(0.0, 2.0 * std::imag(h.m(n, g) * r.rho(g, n)));
      total += rate;
      if (g == t.ground) mine = rate;
    }
    if (total > 0) s += gamma_sp * r.rho(n, n).real() * mine / total;
  }
  return s;
}

// Complete one-point model: lasers at (B, V) with a rigid offset. A fixed
// assignment is taken as already validated at zero offset.
struct DrivenSystem {
  OpticalSystem sys;
  Assignment assign;
  HamiltonianMatrix h;
  Superoperator l;
};

inline DrivenSystem driven_system(const ModelParams& p, double b, double v,
                                  const std::vector<LaserField>& lasers, double offset = 0,
                                  const Assignment* fixed = nullptr,
                                  double kappa = std::numeric_limits<double>::quiet_NaN()) {
  DrivenSystem ds;
  ds.sys = optical_system(p, b, v, offset);
  ds.assign = fixed ? *fixed : auto_assign(ds.sys, lasers);
  ds.h = rwa_hamiltonian(ds.sys, lasers, ds.assign, fixed == nullptr);
  double k = std::isnan(kappa) ? cotunneling_rate(v, p) : kappa;
  auto ch = emission_channels(p, ds.sys, ds.assign, p.gamma_sp);
  for (auto& c : cotunneling_channels(k, ds.sys.dim())) ch.push_back(c);
  for (auto& c : dephasing_channels(p.gamma_dephase, ds.sys.dim())) ch.push_back(c);
  ds.l = build_liouvillian(ds.h, ch);
  return ds;
}

// populations in the product basis, labelled
inline std::vector<std::pair<std::string, double>> labelled_populations(const OpticalSystem& s,
                                                                        const DensityMatrix& r,
                                                                        bool include_zero_two) {
  std::vector<std::pair<std::string, double>> out;
  auto basis = enumerate_basis(include_zero_two);
  out.emplace_back(to_string(basis[0]), r.rho(0, 0).real());
  out.emplace_back(to_string(basis[1]), r.rho(1, 1).real());
  cmat t = r.rho.bottomRightCorner(s.n_trion(), s.n_trion());
  cmat pb = s.vectors * t * s.vectors.adjoint();
  for (Eigen::Index i = 0; i < s.n_trion(); ++i)
    out.emplace_back(to_string(basis[std::size_t(2 + i)]), pb(i, i).real());
  return out;
}

}  // namespace trionw
