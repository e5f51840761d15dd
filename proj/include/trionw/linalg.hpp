#pragma once

#include <Eigen/Dense>
#include <complex>

namespace trionw {

using cplx = std::complex<double>;
using cmat = Eigen::MatrixXcd;
using cvec = Eigen::VectorXcd;
using rmat = Eigen::MatrixXd;
using rvec = Eigen::VectorXd;

struct Eigensystem {
  rvec energies;
  cmat vectors;  // columns
};

// Largest component made real positive so repeated calls agree.
inline void fix_phases(cmat& v) {
  for (Eigen::Index j = 0; j < v.cols(); ++j) {
    Eigen::Index k = 0;
    double best = -1;
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      double a = std::abs(v(i, j));
      if (a > best + 1e-12) { best = a; k = i; }
    }
    if (best > 0) v.col(j) *= std::conj(v(k, j)) / best;
  }
}

// Hermitian diagonalization. Degenerate clusters are rotated to diagonalize
// the optional perturbation `dh` inside each cluster.
inline Eigensystem diagonalize(const cmat& h, const cmat* dh = nullptr, double tol = 1e-9) {
  Eigensystem es;
  const Eigen::Index n = h.rows();
  if (h.imag().cwiseAbs().maxCoeff() == 0.0) {
    Eigen::SelfAdjointEigenSolver<rmat> s(h.real());
    es.energies = s.eigenvalues();
    es.vectors = s.eigenvectors().cast<cplx>();
  } else {
    Eigen::SelfAdjointEigenSolver<cmat> s(h);
    es.energies = s.eigenvalues();
    es.vectors = s.eigenvectors();
  }
  if (dh) {
    double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    Eigen::Index i = 0;
    while (i < n) {
      Eigen::Index j = i + 1;
      while (j < n && es.energies(j) - es.energies(j - 1) < tol * scale) ++j;
      if (j - i > 1) {
        cmat block = es.vectors.middleCols(i, j - i);
        cmat sub = block.adjoint() * (*dh) * block;
        sub = 0.5 * (sub + sub.adjoint()).eval();
        Eigen::SelfAdjointEigenSolver<cmat> s(sub);
        es.vectors.middleCols(i, j - i) = block * s.eigenvectors();
      }
      i = j;
    }
  }
  fix_phases(es.vectors);
  return es;
}

}  // namespace trionw
