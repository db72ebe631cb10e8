#include "hmac/net.hpp"

#include <cmath>
#include <random>

namespace hmac::net {

Mlp::Mlp(std::vector<int> dims, double spectral_bound)
    : dims_(std::move(dims)), spectral_bound_(spectral_bound) {
  if (dims_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
  for (int d : dims_) {
    if (d < 1) throw std::invalid_argument("Mlp: layer dims must be >= 1");
  }
  if (!(spectral_bound > 0.0)) throw std::invalid_argument("Mlp: spectral_bound must be > 0");
  layers_.reserve(dims_.size() - 1);
  for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
    layers_.push_back({Eigen::MatrixXd::Zero(dims_[l + 1], dims_[l]),
                       Eigen::VectorXd::Zero(dims_[l + 1])});
  }
}

Mlp Mlp::he_uniform(std::vector<int> dims, std::uint64_t seed, double spectral_bound) {
  Mlp net(std::move(dims), spectral_bound);
  std::mt19937_64 rng(seed);
  for (auto& layer : net.layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(layer.weight.cols()));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
      for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) layer.weight(r, c) = dist(rng);
    }
  }
  return net;
}

std::size_t Mlp::num_params() const {
  std::size_t n = 0;
  for (const auto& layer : layers_) n += layer.weight.size() + layer.bias.size();
  return n;
}

void Mlp::set_spectral_bound(double bound) {
  if (!(bound > 0.0)) throw std::invalid_argument("Mlp: spectral_bound must be > 0");
  spectral_bound_ = bound;
}

Eigen::VectorXd Mlp::parameters() const {
  Eigen::VectorXd theta(static_cast<Eigen::Index>(num_params()));
  Eigen::Index k = 0;
  for (const auto& layer : layers_) {
    theta.segment(k, layer.weight.size()) = layer.weight.reshaped();
    k += layer.weight.size();
    theta.segment(k, layer.bias.size()) = layer.bias;
    k += layer.bias.size();
  }
  return theta;
}

void Mlp::set_parameters(const Eigen::VectorXd& theta) {
  if (theta.size() != static_cast<Eigen::Index>(num_params())) {
    throw std::invalid_argument("Mlp::set_parameters: size mismatch");
  }
  Eigen::Index k = 0;
  for (auto& layer : layers_) {
    layer.weight.reshaped() = theta.segment(k, layer.weight.size());
    k += layer.weight.size();
    layer.bias = theta.segment(k, layer.bias.size());
    k += layer.bias.size();
  }
}

bool Mlp::finite() const {
  for (const auto& layer : layers_) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return true;
}

Gradients Gradients::zeros_like(const Mlp& net) {
  Gradients g;
  g.layers.reserve(net.num_layers());
  for (const auto& layer : net.layers()) {
    g.layers.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return g;
}

Gradients& Gradients::operator+=(const Gradients& other) {
  if (other.layers.size() != layers.size()) {
    throw std::invalid_argument("Gradients: shape mismatch");
  }
  for (std::size_t l = 0; l < layers.size(); ++l) {
    layers[l].weight += other.layers[l].weight;
    layers[l].bias += other.layers[l].bias;
  }
  loss += other.loss;
  return *this;
}

Gradients& Gradients::operator*=(double s) {
  for (auto& layer : layers) {
    layer.weight *= s;
    layer.bias *= s;
  }
  input *= s;
  loss *= s;
  return *this;
}

bool Gradients::finite() const {
  for (const auto& layer : layers) {
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) return false;
  }
  return input.allFinite() && std::isfinite(loss);
}

Eigen::VectorXd Gradients::flatten() const {
  Eigen::Index n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  Eigen::VectorXd out(n);
  Eigen::Index k = 0;
  for (const auto& layer : layers) {
    out.segment(k, layer.weight.size()) = layer.weight.reshaped();
    k += layer.weight.size();
    out.segment(k, layer.bias.size()) = layer.bias;
    k += layer.bias.size();
  }
  return out;
}

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& x) {
  if (x.size() != net.input_dim()) {
    throw std::invalid_argument("forward: input has " + std::to_string(x.size()) +
                                " entries, network expects " + std::to_string(net.input_dim()));
  }
  Eigen::VectorXd a = x;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::VectorXd z = layers[l].weight * a + layers[l].bias;
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Eigen::MatrixXd forward_batch(const Mlp& net, const Eigen::MatrixXd& inputs) {
  if (inputs.rows() != net.input_dim()) {
    throw std::invalid_argument("forward_batch: input rows do not match network input dim");
  }
  Eigen::MatrixXd a = inputs;
  const auto& layers = net.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    Eigen::MatrixXd z = layers[l].weight * a;
    z.colwise() += layers[l].bias;
    if (l + 1 < layers.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

Gradients backward(const Mlp& net, const Eigen::VectorXd& x, const Eigen::VectorXd& upstream) {
  if (x.size() != net.input_dim()) throw std::invalid_argument("backward: input dim mismatch");
  if (upstream.size() != net.output_dim()) {
    throw std::invalid_argument("backward: upstream dim mismatch");
  }
  const auto& layers = net.layers();
  const std::size_t n_layers = layers.size();
  std::vector<Eigen::VectorXd> acts(n_layers + 1);  // acts[l] is the input of layer l
  std::vector<Eigen::VectorXd> pre(n_layers);
  acts[0] = x;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l] = layers[l].weight * acts[l] + layers[l].bias;
    acts[l + 1] = (l + 1 < n_layers) ? Eigen::VectorXd(pre[l].cwiseMax(0.0)) : pre[l];
  }

  Gradients g = Gradients::zeros_like(net);
  Eigen::VectorXd delta = upstream;
  for (std::size_t l = n_layers; l-- > 0;) {
    g.layers[l].weight = delta * acts[l].transpose();
    g.layers[l].bias = delta;
    Eigen::VectorXd back = layers[l].weight.transpose() * delta;
    if (l > 0) {
      for (Eigen::Index i = 0; i < back.size(); ++i) {
        if (!(pre[l - 1](i) > 0.0)) back(i) = 0.0;
      }
    }
    delta = std::move(back);
  }
  g.input = delta;
  return g;
}

Gradients backward_batch_serial(const Mlp& net, const Eigen::MatrixXd& inputs,
                                const Eigen::MatrixXd& upstream) {
  if (inputs.cols() != upstream.cols()) {
    throw std::invalid_argument("backward_batch_serial: column count mismatch");
  }
  Gradients total = Gradients::zeros_like(net);
  total.input.resize(net.input_dim(), inputs.cols());
  for (Eigen::Index j = 0; j < inputs.cols(); ++j) {
    Gradients g = backward(net, inputs.col(j), upstream.col(j));
    total.input.col(j) = g.input;
    g.input.resize(0, 0);
    total += g;
  }
  return total;
}

}  // namespace hmac::net
