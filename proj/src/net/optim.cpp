#include "hmac/net.hpp"

#include <cmath>

namespace hmac::net {

namespace {

constexpr int kMaxPowerIterations = 2000;
constexpr double kPowerTolerance = 1e-13;

void check_step_inputs(const Mlp& net, const Gradients& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) {
    throw std::invalid_argument("sgd_step: learning rate must be finite and >= 0");
  }
  if (grads.layers.size() != net.num_layers()) {
    throw std::invalid_argument("sgd_step: gradient shape mismatch");
  }
  for (std::size_t l = 0; l < grads.layers.size(); ++l) {
    const auto& g = grads.layers[l];
    const auto& w = net.layers()[l];
    if (g.weight.rows() != w.weight.rows() || g.weight.cols() != w.weight.cols() ||
        g.bias.size() != w.bias.size()) {
      throw std::invalid_argument("sgd_step: gradient shape mismatch at layer " +
                                  std::to_string(l));
    }
    if (!g.weight.allFinite() || !g.bias.allFinite()) {
      throw NumericalError("sgd_step: non-finite gradient at layer " + std::to_string(l));
    }
  }
}

}  // namespace

double largest_singular_value(const Eigen::MatrixXd& w, Eigen::VectorXd* warm) {
  const Eigen::Index n = w.cols();
  if (w.size() == 0) return 0.0;
  Eigen::VectorXd v;
  if (warm != nullptr && warm->size() == n && warm->norm() > 0.0) {
    v = *warm;
  } else {
    // Deterministic start with no exact symmetry: 1, 1/2, 1/3, ...
    v.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 / static_cast<double>(i + 1);
  }
  v.normalize();
  double sigma = (w * v).norm();
  for (int it = 0; it < kMaxPowerIterations; ++it) {
    Eigen::VectorXd wv = w * v;
    Eigen::VectorXd next = w.transpose() * wv;
    const double nn = next.norm();
    if (!(nn > 0.0)) {
      sigma = 0.0;
      break;
    }
    v = next / nn;
    const double updated = (w * v).norm();
    const double change = std::abs(updated - sigma);
    sigma = updated;
    if (it >= 2 && change <= kPowerTolerance * sigma) break;
  }
  if (warm != nullptr) *warm = v;
  return sigma;
}

Mlp spectral_normalize(const Mlp& net) {
  Mlp out = net;
  const double bound = net.spectral_bound();
  out.power_vectors.resize(out.num_layers());
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    auto& w = out.layers()[l].weight;
    // sigma_max <= Frobenius norm, so small layers need no iteration.
    if (w.norm() <= bound) continue;
    const double sigma = largest_singular_value(w, &out.power_vectors[l]);
    // Slack keeps an already normalized layer from being rescaled by roundoff.
    if (sigma > bound * (1.0 + 1e-12)) w *= bound / sigma;
  }
  return out;
}

Mlp sgd_step(const Mlp& net, const Gradients& grads, double lr) {
  check_step_inputs(net, grads, lr);
  Mlp out = net;
  for (std::size_t l = 0; l < out.num_layers(); ++l) {
    out.layers()[l].weight -= lr * grads.layers[l].weight;
    out.layers()[l].bias -= lr * grads.layers[l].bias;
  }
  return spectral_normalize(out);
}

Mlp sgd_step_anchored(const Mlp& net, const Gradients& grads, double lr,
                      const Eigen::VectorXd& anchor, double weight) {
  check_step_inputs(net, grads, lr);
  if (!(weight >= 0.0) || !std::isfinite(weight)) {
    throw std::invalid_argument("sgd_step_anchored: weight must be finite and >= 0");
  }
  if (anchor.size() != static_cast<Eigen::Index>(net.num_params())) {
    throw std::invalid_argument("sgd_step_anchored: anchor size mismatch");
  }
  // argmin_theta <g, theta> + ||theta - theta_k||^2 / (2 lr) + weight ||theta - anchor||^2
  const double pull = 2.0 * lr * weight;
  Eigen::VectorXd theta = net.parameters();
  theta = (theta - lr * grads.flatten() + pull * anchor) / (1.0 + pull);
  Mlp out = net;
  out.set_parameters(theta);
  return spectral_normalize(out);
}

}  // namespace hmac::net
