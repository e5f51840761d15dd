#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

namespace trionw {

struct CoTunneling {
  double kappa_edge = 1.0;     // ueV
  double kappa_center = 2e-5;  // ueV
  double v_left = 0.0;         // mV
  double v_right = 100.0;      // mV
  double width = 5.0;          // mV
};

// eps0 and g_h are the output of calibrate_defaults with targets (1.0 T, 2.8 T).
// h_so reproduces the 15 ueV gap of the full model; delta_eh_asym is uncalibrated.
struct ModelParams {
  double t_e = 850.0;
  double delta_eh0 = 130.0;
  double h_so = 110.6;
  double delta_eh_asym = 10.0;
  double g_e_bottom = -0.322;
  double g_e_top = -0.322;
  double g_h = 0.62977778;
  double kappa_dia = 10.8;
  double eps0 = 3867.954932;
  double lever_arm = 2.0;
  double gamma_sp = 1.316;
  double dipole = 25.0;
  CoTunneling cotun{};
  double sigma_wander = 8.2713;
  double gamma_dephase = 0.0;
  bool include_zero_two = false;
  double eps02 = 8000.0;

  double v_center() const { return 0.5 * (cotun.v_left + cotun.v_right); }
  double eps(double v) const { return eps0 + lever_arm * (v - v_center()); }
  double stark(double v) const { return lever_arm * (v - v_center()); }
};

enum class ParamErrorKind { NegativeRate, InvertedBiasWindow, NonPositiveTunneling, NonFinite };

class ParamError : public std::invalid_argument {
 public:
  ParamError(ParamErrorKind k, std::string field, const std::string& msg)
      : std::invalid_argument(msg), kind(k), field(std::move(field)) {}
  ParamErrorKind kind;
  std::string field;
};

inline ModelParams validate_params(const ModelParams& p) {
  auto finite = [](const char* name, double v) {
    if (!std::isfinite(v))
      throw ParamError(ParamErrorKind::NonFinite, name, std::string(name) + " is not finite");
  };
  auto rate = [&](const char* name, double v) {
    finite(name, v);
    if (v < 0)
      throw ParamError(ParamErrorKind::NegativeRate, name, std::string(name) + " must be >= 0");
  };
  finite("t_e", p.t_e);
  if (p.t_e <= 0)
    throw ParamError(ParamErrorKind::NonPositiveTunneling, "t_e", "t_e must be > 0");
  for (auto [n, v] : {std::pair{"delta_eh0", p.delta_eh0}, {"h_so", p.h_so},
                      {"delta_eh_asym", p.delta_eh_asym}, {"g_e_bottom", p.g_e_bottom},
                      {"g_e_top", p.g_e_top}, {"g_h", p.g_h}, {"kappa_dia", p.kappa_dia},
                      {"eps0", p.eps0}, {"lever_arm", p.lever_arm}, {"eps02", p.eps02},
                      {"dipole", p.dipole}})
    finite(n, v);
  rate("gamma_sp", p.gamma_sp);
  if (p.gamma_sp <= 0)
    throw ParamError(ParamErrorKind::NegativeRate, "gamma_sp", "gamma_sp must be > 0");
  rate("kappa_edge", p.cotun.kappa_edge);
  rate("kappa_center", p.cotun.kappa_center);
  rate("sigma_wander", p.sigma_wander);
  rate("gamma_dephase", p.gamma_dephase);
  finite("v_left", p.cotun.v_left);
  finite("v_right", p.cotun.v_right);
  rate("width", p.cotun.width);
  if (p.cotun.width == 0)
    throw ParamError(ParamErrorKind::NegativeRate, "width", "width must be > 0");
  if (!(p.cotun.v_left < p.cotun.v_right))
    throw ParamError(ParamErrorKind::InvertedBiasWindow, "v_left",
                     "v_left must be smaller than v_right");
  return p;
}

}  // namespace trionw
