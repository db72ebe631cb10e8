#include "hmac/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hmac/rng.hpp"

namespace hmac::train {

void DaimlConfig::validate() const {
  if (!(alpha >= 0.0)) throw std::invalid_argument("DaimlConfig: alpha must be >= 0");
  if (!(lr_phi >= 0.0) || !(lr_disc >= 0.0)) {
    throw std::invalid_argument("DaimlConfig: learning rates must be >= 0");
  }
  if (epochs_per_round < 1) throw std::invalid_argument("DaimlConfig: epochs_per_round must be >= 1");
  if (n_warmup_epochs < 0) throw std::invalid_argument("DaimlConfig: n_warmup_epochs must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("DaimlConfig: batch_size must be >= 1");
  if (!(damping >= 0.0) || !(gamma > 0.0)) {
    throw std::invalid_argument("DaimlConfig: need damping >= 0 and gamma > 0");
  }
}

Discriminator Discriminator::make(int feature_dim, int n_conditions, int hidden,
                                  std::uint64_t seed, double spectral_bound) {
  return {net::Mlp::he_uniform({feature_dim, hidden, n_conditions}, seed, spectral_bound)};
}

namespace {

void check_data(const std::vector<ChannelData>& data, const net::Mlp& phi_m) {
  if (data.size() < 2) {
    throw std::invalid_argument("daiml: need at least 2 conditions, got " +
                                std::to_string(data.size()));
  }
  for (const auto& d : data) {
    if (d.size() < 1) throw std::invalid_argument("daiml: empty condition " + std::to_string(d.cond_id));
    if (d.inputs.rows() != phi_m.input_dim() || d.targets.rows() != 3) {
      throw std::invalid_argument("daiml: data shape does not match the network");
    }
  }
}

/// Row-wise softmax probabilities of logits (K x n).
Eigen::MatrixXd softmax(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double top = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - top).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

// Shared epoch loop. With disc == nullptr this is plain meta-regression; with
// alpha == 0 the discriminator is trained but never feeds back into phi.
void run_epochs(const std::vector<ChannelData>& data, net::Mlp& phi, Discriminator* disc,
                const DaimlConfig& cfg, std::uint64_t seed) {
  const std::size_t n_cond = data.size();
  const double cond_weight = 1.0 / static_cast<double>(n_cond);
  const bool adversarial = disc != nullptr && cfg.alpha > 0.0;

  for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    std::vector<std::vector<Eigen::Index>> perm(n_cond);
    Eigen::Index max_n = 0;
    for (std::size_t k = 0; k < n_cond; ++k) {
      SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), k));
      perm[k].resize(static_cast<std::size_t>(data[k].size()));
      std::iota(perm[k].begin(), perm[k].end(), Eigen::Index{0});
      shuffle(perm[k], rng);
      max_n = std::max(max_n, data[k].size());
    }
    const Eigen::Index n_batches = (max_n + cfg.batch_size - 1) / cfg.batch_size;

    for (Eigen::Index batch = 0; batch < n_batches; ++batch) {
      net::Gradients phi_grad = net::Gradients::zeros_like(phi);
      net::Gradients disc_grad;
      if (disc != nullptr) disc_grad = net::Gradients::zeros_like(disc->net);

      for (std::size_t k = 0; k < n_cond; ++k) {
        const ChannelData& d = data[k];
        const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, d.size());
        std::vector<Eigen::Index> idx(static_cast<std::size_t>(bsz));
        for (Eigen::Index i = 0; i < bsz; ++i) {
          idx[static_cast<std::size_t>(i)] = perm[k][static_cast<std::size_t>((batch * cfg.batch_size + i) % d.size())];
        }
        const Eigen::MatrixXd x = d.inputs(Eigen::all, idx);
        const Eigen::MatrixXd y = d.targets(Eigen::all, idx);
        const Eigen::MatrixXd features = net::forward_batch(phi, x);
        const Eigen::MatrixXd coeffs = net::fit_axis_coefficients(features, y, cfg.damping, cfg.gamma);
        const Eigen::MatrixXd resid = y - coeffs.transpose() * features;
        const double scale = cond_weight / static_cast<double>(bsz);
        Eigen::MatrixXd upstream = (-2.0 * scale) * (coeffs * resid);

        if (disc != nullptr) {
          const Eigen::MatrixXd probs = softmax(net::forward_batch(disc->net, features));
          Eigen::MatrixXd dlogits = probs;
          dlogits.row(static_cast<Eigen::Index>(k)).array() -= 1.0;
          dlogits *= scale;
          net::Gradients g = net::backward_batch(disc->net, features, dlogits);
          if (adversarial) upstream -= cfg.alpha * g.input;
          g.input.resize(0, 0);
          disc_grad += g;
        }
        net::Gradients g = net::backward_batch(phi, x, upstream);
        g.input.resize(0, 0);
        phi_grad += g;
      }
      phi = net::sgd_step(phi, phi_grad, cfg.lr_phi);
      if (disc != nullptr) disc->net = net::sgd_step(disc->net, disc_grad, cfg.lr_disc);
    }
  }
}

}  // namespace

DaimlMetrics evaluate_daiml(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                            const Discriminator& disc, const DaimlConfig& cfg) {
  DaimlMetrics m;
  double correct = 0.0, total = 0.0;
  for (std::size_t k = 0; k < data.size(); ++k) {
    const Eigen::MatrixXd features = net::forward_batch(phi_m, data[k].inputs);
    const Eigen::MatrixXd coeffs =
        net::fit_axis_coefficients(features, data[k].targets, cfg.damping, cfg.gamma);
    m.regression_loss += (data[k].targets - coeffs.transpose() * features).squaredNorm() /
                         static_cast<double>(data[k].size());
    if (disc.net.num_layers() > 0) {
      const Eigen::MatrixXd logits = net::forward_batch(disc.net, features);
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        Eigen::Index arg = 0;
        logits.col(j).maxCoeff(&arg);
        if (arg == static_cast<Eigen::Index>(k)) correct += 1.0;
      }
    }
    total += static_cast<double>(data[k].size());
  }
  m.regression_loss /= static_cast<double>(data.size());
  m.disc_accuracy = total > 0.0 ? correct / total : 0.0;
  return m;
}

DaimlResult daiml_round(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                        const Discriminator& disc, const DaimlConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_data(data, phi_m);
  if (disc.n_conditions() != static_cast<int>(data.size())) {
    throw std::invalid_argument("daiml_round: discriminator has " +
                                std::to_string(disc.n_conditions()) + " classes for " +
                                std::to_string(data.size()) + " conditions");
  }
  if (disc.net.input_dim() != phi_m.output_dim()) {
    throw std::invalid_argument("daiml_round: discriminator input dim must equal feature dim");
  }
  DaimlResult out{phi_m, disc, {}};
  run_epochs(data, out.phi_m, &out.disc, cfg, seed);
  out.metrics = evaluate_daiml(data, out.phi_m, out.disc, cfg);
  return out;
}

net::Mlp regression_round(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                          const DaimlConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  check_data(data, phi_m);
  net::Mlp phi = phi_m;
  run_epochs(data, phi, nullptr, cfg, seed);
  return phi;
}

}  // namespace hmac::train
