#pragma once

// Test-only reference computations. Nothing here calls into the code paths
// it is used to check, apart from evaluating the network being differentiated.

#include "hmac/net.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <random>

namespace oracle {

/// Largest singular value from a full SVD.
inline double sigma_max(const Eigen::MatrixXd& w) {
  if (w.size() == 0) return 0.0;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(w);
  return svd.singularValues()(0);
}

/// Minimum-norm least squares for the damped problem via the augmented
/// system [Phi; sqrt(lambda) I] a = [y; 0] and a complete orthogonal decomposition.
inline Eigen::VectorXd damped_pinv_solve(const Eigen::MatrixXd& phi, const Eigen::VectorXd& y,
                                         double damping) {
  const Eigen::Index n = phi.rows(), d = phi.cols();
  Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + d, d);
  aug.topRows(n) = phi;
  aug.bottomRows(d) = std::sqrt(damping) * Eigen::MatrixXd::Identity(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + d);
  rhs.head(n) = y;
  return aug.completeOrthogonalDecomposition().pseudoInverse() * rhs;
}

/// Central-difference gradient of <upstream, net(x)> with respect to every
/// parameter, in Mlp::parameters() order.
inline Eigen::VectorXd finite_difference_gradient(const hmac::net::Mlp& net,
                                                  const Eigen::VectorXd& x,
                                                  const Eigen::VectorXd& upstream,
                                                  double h = 1e-5) {
  const Eigen::VectorXd theta = net.parameters();
  Eigen::VectorXd grad(theta.size());
  hmac::net::Mlp probe = net;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Eigen::VectorXd tp = theta, tm = theta;
    tp(i) += h;
    tm(i) -= h;
    probe.set_parameters(tp);
    const double fp = upstream.dot(hmac::net::forward(probe, x));
    probe.set_parameters(tm);
    const double fm = upstream.dot(hmac::net::forward(probe, x));
    grad(i) = (fp - fm) / (2.0 * h);
  }
  return grad;
}

/// Entry-wise relative error with a small absolute floor on the denominator.
inline double max_relative_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                 double floor = 1e-4) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double den = std::max({std::abs(a(i)), std::abs(b(i)), floor});
    worst = std::max(worst, std::abs(a(i) - b(i)) / den);
  }
  return worst;
}

/// Random network with 1..max_layers layers and dims in [1, max_dim].
inline hmac::net::Mlp random_net(std::mt19937_64& rng, int max_layers, int max_dim) {
  std::uniform_int_distribution<int> n_layers(1, max_layers);
  std::uniform_int_distribution<int> dim(1, max_dim);
  std::vector<int> dims(static_cast<std::size_t>(n_layers(rng)) + 1);
  for (int& d : dims) d = dim(rng);
  hmac::net::Mlp net = hmac::net::Mlp::he_uniform(dims, rng(), 2.0);
  std::normal_distribution<double> bias(0.0, 0.3);
  for (auto& layer : net.layers()) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias(i) = bias(rng);
  }
  return net;
}

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = n(rng);
  return m;
}

inline Eigen::VectorXd random_vector(std::mt19937_64& rng, Eigen::Index n, double scale = 1.0) {
  return random_matrix(rng, n, 1, scale).col(0);
}

}  // namespace oracle
