#include <gtest/gtest.h>

#include <random>

#include <trionw/experiments.hpp>

using namespace trionw;

namespace {

DensityMatrix random_state(std::mt19937_64& rng, Eigen::Index d) {
  std::normal_distribution<double> n(0, 1);
  cmat a(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = 0; j < d; ++j) a(i, j) = cplx(n(rng), n(rng));
  cmat r = a * a.adjoint();
  return {r / r.trace().real()};
}

// slowest nonzero relaxation rate of a generator
double slowest_rate(const Superoperator& l) {
  Eigen::ComplexEigenSolver<cmat> es(l.m, false);
  std::vector<double> re;
  for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) re.push_back(-es.eigenvalues()(i).real());
  std::sort(re.begin(), re.end());
  return re[1];
}

LaserField laser_on(const LineRef& l, double rabi, LaserPol pol = LaserPol::LinearX) {
  return {l.energy, rabi, LaserRole::Initialize, pol};
}

struct RandomConfig {
  double b, v;
  std::vector<LaserField> lasers;
};

// one or two lasers near random bright lines, skipping ambiguous assignments
std::vector<RandomConfig> random_configs(int n, std::uint64_t seed) {
  ModelParams p;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<RandomConfig> out;
  while (int(out.size()) < n) {
    RandomConfig c{6 * u(rng), 100 * u(rng), {}};
    auto s = optical_system(p, c.b, c.v);
    std::vector<std::pair<Eigen::Index, int>> bright;
    for (Eigen::Index k = 0; k < s.n_trion(); ++k)
      for (int g = 0; g < 2; ++g)
        if (std::norm(s.dplus(k, g)) + std::norm(s.dminus(k, g)) > 0.1 && s.trion(k) - s.ground[g] < 1000)
          bright.push_back({k, g});
    int nl = u(rng) < 0.5 ? 1 : 2;
    for (int k = 0; k < nl; ++k) {
      auto [t, g] = bright[std::size_t(u(rng) * double(bright.size()))];
      c.lasers.push_back({s.trion(t) - s.ground[g] + 2 * (u(rng) - 0.5), (0.2 + 5 * u(rng)) * p.gamma_sp,
                          LaserRole::Initialize, k ? LaserPol::LinearY : LaserPol::LinearX});
    }
    try {
      reference_assignment(p, c.b, c.v, c.lasers);
      out.push_back(c);
    } catch (const AmbiguousAssignment&) {
    }
  }
  return out;
}

}  // namespace

TEST(CoTunneling, Profile) {
  ModelParams p;
  p.cotun.kappa_center = 0;
  EXPECT_LT(cotunneling_rate(p.v_center(), p), 1e-3 * p.cotun.kappa_edge);
  ModelParams q;
  double edge = cotunneling_rate(q.cotun.v_left, q);
  double expect = q.cotun.kappa_center +
                  q.cotun.kappa_edge * (1 + std::exp((q.cotun.v_left - q.cotun.v_right) / q.cotun.width));
  EXPECT_NEAR(edge, expect, 1e-12);
  for (double x : {0.0, 3.0, 10.0, 25.0, 49.0})
    EXPECT_NEAR(cotunneling_rate(q.cotun.v_left + x, q), cotunneling_rate(q.cotun.v_right - x, q), 1e-14);
  EXPECT_DOUBLE_EQ(cotunneling_rate(-100, q), 10 * q.cotun.kappa_edge);
}

TEST(Rwa, ZeroRabiIsDiagonal) {
  ModelParams p;
  std::vector<LaserField> lasers{{100.0, 0.0}};
  auto h = rwa_hamiltonian(p, 2.75, 50, lasers);
  cmat off = h.m;
  off.diagonal().setZero();
  EXPECT_EQ(off.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Rwa, ResonantDetuningVanishes) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.cycling_down, 1.0)};
  auto s = optical_system(p, 2.75, 50);
  auto h = rwa_hamiltonian(s, lasers, auto_assign(s, lasers));
  Eigen::Index n = 2 + w.cycling_down.trion;
  EXPECT_NEAR((h.m(n, n) - h.m(w.cycling_down.ground, w.cycling_down.ground)).real(), 0.0, 1e-9);
  EXPECT_LE((h.m - h.m.adjoint()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Rwa, CloseLasersAreAmbiguous) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.cycling_down, 2.0), laser_on(w.cycling_down, 2.0)};
  lasers[1].photon_energy += 10.0;
  EXPECT_THROW(rwa_hamiltonian(p, 2.75, 50, lasers), AmbiguousAssignment);
  std::vector<LaserField> far{laser_on(w.cycling_down, 1.0), laser_on(w.lambda_up, 1.0)};
  EXPECT_NO_THROW(rwa_hamiltonian(p, 2.75, 50, far));
  EXPECT_THROW(rwa_hamiltonian(p, 2.75, 50, {}), std::invalid_argument);
}

TEST(Liouvillian, ClosedSystemIsUnitary) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.lambda_up, 3.0)};
  auto h = rwa_hamiltonian(p, 2.75, 50, lasers);
  auto l = build_liouvillian(h, {});
  Eigen::ComplexEigenSolver<cmat> es(l.m, false);
  EXPECT_LT(es.eigenvalues().real().cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Liouvillian, TracePreservingRandomChannels) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n(0, 1);
  std::uniform_real_distribution<double> u(0, 1);
  const Eigen::Index d = 12;
  for (int k = 0; k < 10; ++k) {
    cmat a(d, d);
    for (Eigen::Index i = 0; i < d; ++i)
      for (Eigen::Index j = 0; j < d; ++j) a(i, j) = cplx(n(rng), n(rng));
    HamiltonianMatrix h{Manifold::Trion, a + a.adjoint()};
    std::vector<CollapseChannel> ch;
    for (int c = 0; c < 4; ++c) {
      cmat op(d, d);
      for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j) op(i, j) = cplx(n(rng), n(rng));
      ch.push_back({op, 3 * u(rng), ChannelKind::Emission});
    }
    auto l = build_liouvillian(h, ch);
    cvec id = vec(cmat::Identity(d, d));
    EXPECT_LT((id.adjoint() * l.m).norm(), 1e-10 * l.m.norm());
  }
  HamiltonianMatrix h{Manifold::Trion, cmat::Zero(2, 2)};
  EXPECT_THROW(build_liouvillian(h, {{cmat::Identity(2, 2), -1.0, ChannelKind::PureDephasing}}),
               std::invalid_argument);
}

TEST(Liouvillian, EmissionDecaysAtGamma) {
  // without asymmetric couplings this eigenstate is a pure bright product state
  ModelParams p;
  p.h_so = 0;
  p.delta_eh_asym = 0;
  std::vector<LaserField> lasers{{0.0, 0.0}};
  auto ds = driven_system(p, 2.0, 50, lasers, 0, nullptr, 0.0);
  Eigen::Index n = -1;
  for (Eigen::Index k = 0; k < ds.sys.n_trion(); ++k)
    if (std::abs(ds.sys.vectors(Eigen::Index(oneone_index(-1, -1, +1)), k)) > 1 - 1e-12) n = k;
  ASSERT_GE(n, 0);
  cmat r0 = cmat::Zero(ds.sys.dim(), ds.sys.dim());
  r0(2 + n, 2 + n) = 1.0;
  std::vector<double> t, lnp;
  for (double x : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    double tt = x / p.gamma_sp;
    auto r = time_evolve(ds.l, {r0}, tt);
    t.push_back(tt);
    lnp.push_back(std::log(r.trion_population()));
    EXPECT_NEAR(r.trace(), 1.0, 1e-9);
  }
  // single-exponential fit
  double mt = 0, ml = 0;
  for (std::size_t i = 0; i < t.size(); ++i) { mt += t[i]; ml += lnp[i]; }
  mt /= double(t.size());
  ml /= double(t.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    sxy += (t[i] - mt) * (lnp[i] - ml);
    sxx += (t[i] - mt) * (t[i] - mt);
  }
  EXPECT_NEAR(-sxy / sxx, p.gamma_sp, 1e-8);
}

TEST(SteadyState, NoDriveIsUnpolarized) {
  ModelParams p;
  std::vector<LaserField> lasers{{0.0, 0.0}};
  for (double v : {0.0, 50.0, 90.0}) {
    auto ds = driven_system(p, 2.75, v, lasers);
    auto r = steady_state(ds.l);
    EXPECT_NEAR(r.population(0), 0.5, 1e-9);
    EXPECT_NEAR(r.population(1), 0.5, 1e-9);
    EXPECT_LT(r.trion_population(), 1e-12);
  }
}

TEST(SteadyState, LambdaDriveShelvesSpin) {
  ModelParams p;
  const double b = 2.75, v = p.v_center();
  auto w = identify_w_lines(p, b, v);
  for (const auto& line : {w.lambda_up, w.lambda_down}) {
    ExperimentOptions o;
    o.sigma = 0;
    auto g = broadened_populations(p, b, v, {laser_on(line, 5.0)}, o);
    // population is pumped out of the driven spin
    double sign = line.ground == 0 ? -1 : 1;
    EXPECT_GE(sign * g.polarization(), 0.9);
    o.sigma = p.sigma_wander;
    o.n_nodes = 21;
    g = broadened_populations(p, b, v, {laser_on(line, 5.0)}, o);
    EXPECT_GE(sign * g.polarization(), 0.9);
  }
}

TEST(SteadyState, Hygiene) {
  ModelParams p;
  for (const auto& c : random_configs(20, 17)) {
    auto ds = driven_system(p, c.b, c.v, c.lasers);
    auto r = steady_state(ds.l);
    EXPECT_LT(std::abs(r.trace() - 1), 1e-12);
    EXPECT_LE((r.rho - r.rho.adjoint()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(r.min_eigenvalue(), -1e-10);
    EXPECT_LT(residual_norm(ds.l, r), 1e-10);
  }
}

TEST(SteadyState, PropagationOracle) {
  // propagation to many times the slowest relaxation time, from random states
  ModelParams p;
  std::mt19937_64 rng(23);
  for (const auto& c : random_configs(8, 29)) {
    auto ds = driven_system(p, c.b, c.v, c.lasers);
    auto ss = steady_state(ds.l);
    double t = 40.0 / slowest_rate(ds.l);
    for (int k = 0; k < 3; ++k) {
      auto r = time_evolve(ds.l, random_state(rng, ds.sys.dim()), t);
      EXPECT_LT((r.rho - ss.rho).norm(), 1e-6) << c.b << " " << c.v;
    }
  }
}

TEST(SteadyState, DegenerateWithoutDissipation) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.cycling_down, 2.0)};
  auto h = rwa_hamiltonian(p, 2.75, 50, lasers);
  EXPECT_THROW(steady_state(build_liouvillian(h, {})), DegenerateSteadyState);
}

TEST(TimeEvolve, ZeroTime) {
  ModelParams p;
  std::mt19937_64 rng(1);
  auto ds = driven_system(p, 2.75, 50, {{0.0, 0.0}});
  auto r0 = random_state(rng, ds.sys.dim());
  EXPECT_EQ((time_evolve(ds.l, r0, 0.0).rho - r0.rho).norm(), 0.0);
  EXPECT_THROW(time_evolve(ds.l, r0, -1.0), std::invalid_argument);
}

TEST(TimeEvolve, ClosedSystemPurity) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.lambda_up, 4.0)};
  auto l = build_liouvillian(rwa_hamiltonian(p, 2.75, 50, lasers), {});
  std::mt19937_64 rng(4);
  auto r0 = random_state(rng, l.d);
  double pur0 = (r0.rho * r0.rho).trace().real();
  for (auto m : {EvolveMethod::Exponential, EvolveMethod::AdaptiveRK}) {
    EvolveControl ctl;
    ctl.method = m;
    // adaptive steps follow the fast trion phases, so keep the horizon short
    auto r = time_evolve(l, r0, m == EvolveMethod::Exponential ? 20.0 : 1.0, ctl);
    EXPECT_NEAR((r.rho * r.rho).trace().real(), pur0, m == EvolveMethod::Exponential ? 1e-9 : 1e-8);
    EXPECT_NEAR(r.trace(), 1.0, 1e-9);
  }
}

TEST(TimeEvolve, MethodsAgree) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.lambda_up, 4.0), laser_on(w.cycling_down, 2.0)};
  auto ds = driven_system(p, 2.75, 50, lasers);
  std::mt19937_64 rng(8);
  auto r0 = random_state(rng, ds.sys.dim());
  EvolveControl rk;
  rk.method = EvolveMethod::AdaptiveRK;
  auto a = time_evolve(ds.l, r0, 3.0), b = time_evolve(ds.l, r0, 3.0, rk);
  // default tolerances: per-step error 1e-10 relative
  EXPECT_LT((a.rho - b.rho).norm(), 1e-7);
  EXPECT_NEAR(b.trace(), 1.0, 1e-9);
}

TEST(TimeEvolve, StepSizeUnderflow) {
  ModelParams p;
  auto ds = driven_system(p, 2.75, 50, {{0.0, 0.0}});
  EvolveControl c;
  c.method = EvolveMethod::AdaptiveRK;
  c.abs_tol = 1e-300;
  c.rel_tol = 1e-300;
  c.dt_init = 1.0;
  c.dt_min = 1e-2;
  cmat r0 = cmat::Zero(ds.sys.dim(), ds.sys.dim());
  r0(0, 0) = 0.5;
  r0(2, 2) = 0.5;
  EXPECT_THROW(time_evolve(ds.l, {r0}, 10.0, c), StepSizeUnderflow);
}

TEST(Broadening, Basics) {
  EXPECT_EQ(broadened_observable([](double x) { return 3 + x * x; }, 0.0, 31), 3.0);
  EXPECT_NEAR(broadened_observable([](double x) { return 2.5 - 7 * x; }, 8.27, 31), 2.5, 1e-12);
  EXPECT_NEAR(broadened_observable([](double x) { return x * x; }, 2.0, 31), 4.0, 1e-10);
  EXPECT_THROW(broadened_observable([](double) { return 0.0; }, 1.0, 4), std::invalid_argument);
  EXPECT_THROW(broadened_observable([](double) { return 0.0; }, -1.0, 5), std::invalid_argument);
}

TEST(Broadening, WanderingLowersPolarization) {
  ModelParams p;
  const double b = 2.75, v = p.v_center();
  auto w = identify_w_lines(p, b, v);
  ExperimentOptions o;
  o.n_nodes = 21;
  o.sigma = ghz_to_microev(2.0);
  double wide = std::abs(spin_pumping_polarization(p, b, v, laser_on(w.lambda_up, 5.4), o));
  o.sigma = ghz_to_microev(0.4);
  double narrow = std::abs(spin_pumping_polarization(p, b, v, laser_on(w.lambda_up, 5.4), o));
  EXPECT_LT(wide, narrow);
}

TEST(Absorption, ZeroRabi) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 0);
  ExperimentOptions o;
  o.sigma = 0;
  EXPECT_EQ(broadened_absorption(p, 2.75, 0, w.cycling_down.energy, 0.0, o), 0.0);
}

TEST(Absorption, QuadraticInWeakDrive) {
  ModelParams p;
  const double v = p.cotun.v_left;
  auto w = identify_w_lines(p, 2.75, v);
  ExperimentOptions o;
  o.sigma = 0;
  for (const auto& line : {w.cycling_down, w.cycling_up}) {
    double r0 = 0.02 * p.gamma_sp;
    double a0 = broadened_absorption(p, 2.75, v, line.energy, r0, o) / (r0 * r0);
    for (double f : {0.05, 0.1, 0.25}) {
      double r = f * p.gamma_sp;
      double a = broadened_absorption(p, 2.75, v, line.energy, r, o) / (r * r);
      EXPECT_NEAR(a / a0, 1.0, 0.05) << line.name << " " << f;
    }
  }
}

TEST(Absorption, PumpedLineDarkAtCenter) {
  ModelParams p;
  ExperimentOptions o;
  o.n_nodes = 11;
  for (auto pick : {0, 1}) {
    auto at = [&](double v) {
      auto w = identify_w_lines(p, 2.75, v);
      const auto& l = pick ? w.lambda_down : w.lambda_up;
      return broadened_absorption(p, 2.75, v, l.energy, 5.4, o);
    };
    EXPECT_LT(at(p.v_center()), 0.2 * at(p.cotun.v_left));
  }
}

TEST(Pumping, NoneWithoutAsymmetricCouplings) {
  ModelParams p;
  p.h_so = 0;
  p.delta_eh_asym = 0;
  const double b = 2.75, v = p.v_center();
  auto s = optical_system(p, b, v);
  ExperimentOptions o;
  o.sigma = 0;
  int n_lines = 0;
  for (Eigen::Index n = 0; n < s.n_trion(); ++n)
    for (int g = 0; g < 2; ++g) {
      if (std::norm(s.dplus(n, g)) + std::norm(s.dminus(n, g)) < 0.05) continue;
      LaserField l{s.trion(n) - s.ground[g], 5.4};
      EXPECT_LT(std::abs(spin_pumping_polarization(p, b, v, l, o)), 1e-6);
      ++n_lines;
    }
  EXPECT_GE(n_lines, 4);
}

TEST(Pumping, MonotoneInCoTunneling) {
  ModelParams p;
  const double b = 2.75, v = p.v_center();
  auto w = identify_w_lines(p, b, v);
  ExperimentOptions o;
  o.sigma = 0;
  double prev = 2;
  for (double k : {0.0, 1e-5, 1e-4, 1e-3, 1e-2, 0.1, 1.0, 10.0}) {
    o.kappa = k;
    double pol = std::abs(spin_pumping_polarization(p, b, v, laser_on(w.lambda_up, 5.4), o));
    EXPECT_LE(pol, prev + 1e-12) << k;
    prev = pol;
  }
  EXPECT_LT(prev, 0.2);
}

TEST(Populations, Labelled) {
  ModelParams p;
  auto w = identify_w_lines(p, 2.75, 50);
  std::vector<LaserField> lasers{laser_on(w.lambda_up, 5.0)};
  auto ds = driven_system(p, 2.75, 50, lasers);
  auto r = steady_state(ds.l);
  auto pops = labelled_populations(ds.sys, r, false);
  ASSERT_EQ(pops.size(), 12u);
  EXPECT_EQ(pops[0].first, "gu");
  EXPECT_EQ(pops[11].first, "S20D");
  double s = 0;
  for (const auto& [n, x] : pops) {
    EXPECT_GT(x, -1e-12);
    s += x;
  }
  EXPECT_NEAR(s, 1.0, 1e-12);
}
