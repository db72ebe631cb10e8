#pragma once

// Synthetic training sets with known generating structure.

#include "hmac/train.hpp"

#include <cmath>
#include <random>
#include <vector>

namespace planted {

/// Shared manageable feature map: depends only on the velocity slots.
inline Eigen::Vector3d phi_m_star(const Eigen::VectorXd& x) {
  return {x(0), x(1) + 0.5 * std::abs(x(0)), std::max(0.0, x(2)) - 0.3 * x(1)};
}

/// Latent feature map: a constant plus a velocity term.
inline Eigen::Vector2d phi_r_star(const Eigen::VectorXd& x) {
  return {1.0, 0.5 * x(1)};
}

/// Inputs ~ N(0, 0.5^2) with a condition-specific offset on the motor slots,
/// which the targets never depend on.
inline Eigen::MatrixXd inputs(std::mt19937_64& rng, Eigen::Index n, int cond, double nuisance) {
  std::normal_distribution<double> g(0.0, 0.5);
  Eigen::MatrixXd x(hmac::kInputDim, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (int i = 0; i < hmac::kInputDim; ++i) x(i, j) = g(rng);
    for (int i = 7; i < 11; ++i) x(i, j) += nuisance * (cond - 1);
  }
  return x;
}

/// Per-condition manageable coefficients, one column per axis.
inline Eigen::Matrix3d a_m_star(int cond) {
  Eigen::Matrix3d a;
  a << 1.0 + 0.4 * cond, -0.3, 0.2,
       0.5, 0.8 - 0.3 * cond, -0.4,
       -0.2, 0.3, 0.6 + 0.2 * cond;
  return a;
}

/// Slowly rotating latent coefficients (2 x 3) at sample i.
inline Eigen::Matrix<double, 2, 3> a_r_star(Eigen::Index i, double timescale, int cond) {
  const double th = static_cast<double>(i) / timescale + 0.7 * cond;
  Eigen::Matrix<double, 2, 3> a;
  a << std::cos(th), std::sin(th), 0.5 * std::cos(th + 1.0),
       std::sin(th), -std::cos(th), 0.5 * std::sin(th + 1.0);
  return a;
}

struct TwoChannel {
  std::vector<hmac::train::ChannelData> data;
  std::vector<Eigen::MatrixXd> manageable;  // Phi_m* a_m per condition
  std::vector<Eigen::MatrixXd> latent;      // Phi_r* a_r(t) per condition
};

/// y = Phi_m* a_m,k + latent_scale * Phi_r* a_r(t) + noise.
inline TwoChannel two_channel(std::uint64_t seed, int K, Eigen::Index n, double latent_scale,
                              double timescale, double noise, double nuisance = 0.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> eps(0.0, noise);
  TwoChannel out;
  for (int k = 0; k < K; ++k) {
    hmac::train::ChannelData d;
    d.cond_id = k;
    d.inputs = inputs(rng, n, k, nuisance);
    d.targets.resize(3, n);
    Eigen::MatrixXd fm(3, n), fr(3, n);
    for (Eigen::Index j = 0; j < n; ++j) {
      const Eigen::VectorXd x = d.inputs.col(j);
      fm.col(j) = a_m_star(k).transpose() * phi_m_star(x);
      fr.col(j) = latent_scale * (a_r_star(j, timescale, k).transpose() * phi_r_star(x));
      for (int a = 0; a < 3; ++a) d.targets(a, j) = fm(a, j) + fr(a, j) + eps(rng);
    }
    out.data.push_back(std::move(d));
    out.manageable.push_back(std::move(fm));
    out.latent.push_back(std::move(fr));
  }
  return out;
}

}  // namespace planted
