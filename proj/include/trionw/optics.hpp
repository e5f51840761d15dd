#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "hamiltonian.hpp"

namespace trionw {

// rows: trion basis, cols: ground (up, down)
struct DipoleOperator {
  cmat sigma_plus;
  cmat sigma_minus;
};

// sigma+ creates (e_t down, hole Up), sigma- creates (e_t up, hole Down)
inline DipoleOperator build_dipole_operator(const ModelParams& p, double dipole) {
  const auto n = static_cast<Eigen::Index>(trion_dim(p.include_zero_two));
  DipoleOperator d{cmat::Zero(n, 2), cmat::Zero(n, 2)};
  for (int eb : {+1, -1}) {
    auto g = static_cast<Eigen::Index>(ground_index(eb));
    d.sigma_plus(Eigen::Index(oneone_index(eb, -1, +1)), g) = dipole;
    d.sigma_minus(Eigen::Index(oneone_index(eb, +1, -1)), g) = dipole;
  }
  return d;
}

inline DipoleOperator build_dipole_operator(const ModelParams& p) {
  return build_dipole_operator(p, p.dipole);
}

enum class Polarization { SigmaPlus, SigmaMinus, Mixed };

inline const char* to_string(Polarization p) {
  switch (p) {
    case Polarization::SigmaPlus: return "sigma+";
    case Polarization::SigmaMinus: return "sigma-";
    default: return "mixed";
  }
}

struct TransitionLine {
  double energy;         // E_trion - E_ground, ueV
  double strength;       // normalized to the strongest line in the set
  double raw_strength;   // |<n|d|g>|^2 in units of a single bright product state
  int ground_spin;       // +1 up, -1 down
  Polarization polarization;
  double purity;         // |I+ - I-| / (I+ + I-)
  bool dark;
  int trion_index;       // eigenstate index, ascending energy
  std::string label;     // dominant character of the trion eigenstate
};

inline constexpr double dark_threshold = 1e-12;

inline std::vector<TransitionLine> transition_spectrum(const ModelParams& p, double b, double v) {
  auto es = trion_eigensystem(p, b, v);
  auto hg = build_ground_hamiltonian(p, b);
  auto d = build_dipole_operator(p, 1.0);
  std::vector<TransitionLine> lines;
  double smax = 0;
  for (int g = 0; g < 2; ++g)
    for (Eigen::Index n = 0; n < es.energies.size(); ++n) {
      cvec vn = es.vectors.col(n);
      double ip = std::norm(vn.dot(d.sigma_plus.col(g)));
      double im = std::norm(vn.dot(d.sigma_minus.col(g)));
      double tot = ip + im;
      TransitionLine l;
      l.energy = es.energies(n) - hg.m(g, g).real();
      l.raw_strength = tot;
      l.strength = tot;
      l.ground_spin = g == 0 ? +1 : -1;
      l.purity = tot > 0 ? std::abs(ip - im) / tot : 0.0;
      l.polarization = l.purity > 0.99 ? (ip > im ? Polarization::SigmaPlus : Polarization::SigmaMinus)
                                       : Polarization::Mixed;
      l.dark = tot < dark_threshold;
      l.trion_index = int(n);
      l.label = dominant_label(vn);
      smax = std::max(smax, tot);
      lines.push_back(l);
    }
  if (smax > 0)
    for (auto& l : lines) l.strength = l.raw_strength / smax;
  return lines;
}

inline std::vector<TransitionLine> transition_spectrum(const ModelParams& p, double b) {
  return transition_spectrum(p, b, p.v_center());
}

// signal table; missing values are NaN
struct SpectrumGrid {
  std::string sweep_name = "field_T";
  std::vector<double> sweep;
  std::vector<double> energy;
  rmat values;                      // rows: sweep, cols: energy
  std::vector<double> integrated;   // line-integrated intensity per row
};

inline double lorentzian(double x, double fwhm) {
  double hw = 0.5 * fwhm;
  return hw / std::numbers::pi / (x * x + hw * hw);
}

inline SpectrumGrid field_sweep_map(const ModelParams& p, const std::vector<double>& b_grid,
                                    double v, const std::vector<double>& e_grid, double linewidth,
                                    bool subtract_dia = false) {
  if (!(linewidth > 0)) throw std::invalid_argument("field_sweep_map: linewidth must be > 0");
  SpectrumGrid m;
  m.sweep = b_grid;
  m.energy = e_grid;
  m.values = rmat::Zero(Eigen::Index(b_grid.size()), Eigen::Index(e_grid.size()));
  for (std::size_t i = 0; i < b_grid.size(); ++i) {
    double b = b_grid[i], tot = 0;
    for (auto& l : transition_spectrum(p, b, v)) {
      double e0 = subtract_dia ? apply_diamagnetic(l.energy, b, p.kappa_dia, DiaMode::Subtract)
                               : l.energy;
      tot += l.raw_strength;
      for (std::size_t k = 0; k < e_grid.size(); ++k)
        m.values(Eigen::Index(i), Eigen::Index(k)) += l.raw_strength * lorentzian(e_grid[k] - e0, linewidth);
    }
    m.integrated.push_back(tot);
  }
  return m;
}

}  // namespace trionw
