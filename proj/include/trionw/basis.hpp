#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace trionw {

enum class Manifold { Ground, Trion };
enum class Config { None, OneOne, TwoZero, ZeroTwo };

// spins are +1 (up / hole Uparrow) or -1; 0 marks an absent particle
struct BasisState {
  Manifold manifold;
  Config config;
  int e_bottom;
  int e_top;
  int hole;
  bool operator==(const BasisState&) const = default;
};

inline constexpr std::size_t n_ground = 2;

inline std::size_t trion_dim(bool include_zero_two) { return include_zero_two ? 12 : 10; }

// Order: ground (up, down); OneOne (e_b, e_t, h) lexicographic with +1 first;
// TwoZero singlet x (Up, Down); optional ZeroTwo singlet x (Up, Down).
inline std::vector<BasisState> enumerate_basis(bool include_zero_two = false) {
  std::vector<BasisState> b;
  b.push_back({Manifold::Ground, Config::None, +1, 0, 0});
  b.push_back({Manifold::Ground, Config::None, -1, 0, 0});
  for (int eb : {+1, -1})
    for (int et : {+1, -1})
      for (int h : {+1, -1}) b.push_back({Manifold::Trion, Config::OneOne, eb, et, h});
  for (int h : {+1, -1}) b.push_back({Manifold::Trion, Config::TwoZero, 0, 0, h});
  if (include_zero_two)
    for (int h : {+1, -1}) b.push_back({Manifold::Trion, Config::ZeroTwo, 0, 0, h});
  return b;
}

// indices local to the trion manifold
inline std::size_t oneone_index(int eb, int et, int h) {
  return (eb > 0 ? 0 : 4) + (et > 0 ? 0 : 2) + (h > 0 ? 0 : 1);
}
inline std::size_t twozero_index(int h) { return h > 0 ? 8 : 9; }
inline std::size_t zerotwo_index(int h) { return h > 0 ? 10 : 11; }
inline std::size_t ground_index(int eb) { return eb > 0 ? 0 : 1; }

inline std::size_t index_of(const BasisState& s, bool include_zero_two = false) {
  auto all = enumerate_basis(include_zero_two);
  for (std::size_t i = 0; i < all.size(); ++i)
    if (all[i] == s) return i;
  throw std::out_of_range("index_of: state not in basis");
}

inline std::string spin_char(int s) { return s > 0 ? "u" : (s < 0 ? "d" : "0"); }
inline std::string hole_char(int s) { return s > 0 ? "U" : "D"; }

inline std::string to_string(const BasisState& s) {
  switch (s.config) {
    case Config::None: return "g" + spin_char(s.e_bottom);
    case Config::OneOne: return spin_char(s.e_bottom) + spin_char(s.e_top) + hole_char(s.hole);
    case Config::TwoZero: return "S20" + hole_char(s.hole);
    case Config::ZeroTwo: return "S02" + hole_char(s.hole);
  }
  return "?";
}

}  // namespace trionw
