#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace trionw {

struct Quadrature {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1
};

// Gauss-Hermite rule for the standard normal weight (Golub-Welsch).
inline Quadrature gauss_hermite(int n) {
  if (n < 1) throw std::invalid_argument("gauss_hermite: n must be >= 1");
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) j(k, k - 1) = j(k - 1, k) = std::sqrt(double(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s(j);
  Quadrature q;
  for (int k = 0; k < n; ++k) {
    q.nodes.push_back(s.eigenvalues()(k));
    q.weights.push_back(s.eigenvectors()(0, k) * s.eigenvectors()(0, k));
  }
  // symmetrize so odd rules hit the center exactly
  for (int k = 0; k < n / 2; ++k) {
    double x = 0.5 * (q.nodes[std::size_t(n - 1 - k)] - q.nodes[std::size_t(k)]);
    double w = 0.5 * (q.weights[std::size_t(k)] + q.weights[std::size_t(n - 1 - k)]);
    q.nodes[std::size_t(k)] = -x;
    q.nodes[std::size_t(n - 1 - k)] = x;
    q.weights[std::size_t(k)] = q.weights[std::size_t(n - 1 - k)] = w;
  }
  if (n % 2) q.nodes[std::size_t(n / 2)] = 0.0;
  double sum = 0;
  for (double w : q.weights) sum += w;
  for (double& w : q.weights) w /= sum;
  return q;
}

}  // namespace trionw
