#include "hmac/train.hpp"

#include <algorithm>
#include <numeric>

#include "hmac/rng.hpp"

namespace hmac::train {

void SsmlConfig::validate() const {
  if (window < 2) throw std::invalid_argument("SsmlConfig: window b must be >= 2");
  if (adapt_size < 1 || adapt_size >= window) {
    throw std::invalid_argument("SsmlConfig: need 0 < c < b (c = " + std::to_string(adapt_size) +
                                ", b = " + std::to_string(window) + ")");
  }
  if (!(gamma > 0.0)) throw std::invalid_argument("SsmlConfig: gamma must be > 0");
  if (!(w_initial >= 0.0) || !(w_increment >= 0.0) || !(w_cap >= w_initial)) {
    throw std::invalid_argument("SsmlConfig: W schedule must be non-negative and non-decreasing");
  }
  if (!(lr >= 0.0)) throw std::invalid_argument("SsmlConfig: lr must be >= 0");
  if (epochs_per_round < 1) throw std::invalid_argument("SsmlConfig: epochs_per_round must be >= 1");
  if (!(damping >= 0.0)) throw std::invalid_argument("SsmlConfig: damping must be >= 0");
}

double SsmlConfig::weight_at(int iteration) const {
  return std::min(w_cap, w_initial + w_increment * static_cast<double>(iteration));
}

std::vector<int> adaptation_subset(std::uint64_t seed, int cond_index, long window_start,
                                   int epoch, int b, int c) {
  SplitMix64 rng(derive_seed(seed, static_cast<std::uint64_t>(cond_index),
                             static_cast<std::uint64_t>(window_start),
                             static_cast<std::uint64_t>(epoch)));
  std::vector<int> idx(static_cast<std::size_t>(b));
  std::iota(idx.begin(), idx.end(), 0);
  // Partial Fisher-Yates: the first c entries are a uniform c-subset.
  for (int i = 0; i < c; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(b - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(c));
  std::sort(idx.begin(), idx.end());
  return idx;
}

SsmlResult ssml_round(const std::vector<ChannelData>& data, const net::Mlp& phi_r,
                      const SsmlConfig& cfg, const Eigen::VectorXd& prev_theta, double w,
                      std::uint64_t seed) {
  cfg.validate();
  if (data.empty()) throw std::invalid_argument("ssml_round: no datasets");
  if (!(w >= 0.0)) throw std::invalid_argument("ssml_round: movement-cost weight must be >= 0");
  if (prev_theta.size() != static_cast<Eigen::Index>(phi_r.num_params())) {
    throw std::invalid_argument("ssml_round: prev_theta size does not match the network");
  }
  const int b = cfg.window;
  const int c = cfg.adapt_size;
  Eigen::Index max_n = 0;
  for (const auto& d : data) {
    if (d.size() < b) {
      throw std::invalid_argument("ssml_round: condition " + std::to_string(d.cond_id) + " has " +
                                  std::to_string(d.size()) + " samples, fewer than window b = " +
                                  std::to_string(b));
    }
    max_n = std::max(max_n, d.size());
  }
  const double inv_k = 1.0 / static_cast<double>(data.size());
  const int train_size = b - c;

  SsmlResult out{phi_r, {}};
  net::Mlp& phi = out.phi_r;
  double loss_sum = 0.0;

  std::vector<char> is_adapt(static_cast<std::size_t>(b));
  for (int epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    // Windows [t, t + b) for t = 0 .. N - b: consecutive windows differ by one sample.
    for (Eigen::Index t = 0; t + b <= max_n; ++t) {
      std::vector<int> active;
      for (std::size_t k = 0; k < data.size(); ++k) {
        if (t + b <= data[k].size()) active.push_back(static_cast<int>(k));
      }
      const Eigen::Index n_train = static_cast<Eigen::Index>(active.size()) * train_size;
      Eigen::MatrixXd train_x(phi.input_dim(), n_train);
      Eigen::MatrixXd upstream(phi.output_dim(), n_train);
      double window_loss = 0.0;
      Eigen::Index col = 0;
      for (int k : active) {
        const ChannelData& d = data[static_cast<std::size_t>(k)];
        const Eigen::MatrixXd x = d.inputs.middleCols(t, b);
        const Eigen::MatrixXd y = d.targets.middleCols(t, b);
        const Eigen::MatrixXd features = net::forward_batch(phi, x);

        const std::vector<int> adapt = adaptation_subset(seed, k, static_cast<long>(t), epoch, b, c);
        std::fill(is_adapt.begin(), is_adapt.end(), 0);
        for (int i : adapt) is_adapt[static_cast<std::size_t>(i)] = 1;
        std::vector<int> train;
        train.reserve(static_cast<std::size_t>(train_size));
        for (int i = 0; i < b; ++i) {
          if (!is_adapt[static_cast<std::size_t>(i)]) train.push_back(i);
        }

        const Eigen::MatrixXd coeffs = net::fit_axis_coefficients(
            features(Eigen::all, adapt), y(Eigen::all, adapt), cfg.damping, cfg.gamma);
        const Eigen::MatrixXd resid = y(Eigen::all, train) - coeffs.transpose() * features(Eigen::all, train);
        window_loss += resid.squaredNorm();
        train_x.middleCols(col, train_size) = x(Eigen::all, train);
        upstream.middleCols(col, train_size) = (-2.0 * inv_k) * (coeffs * resid);
        col += train_size;
      }
      loss_sum += window_loss * inv_k;
      ++out.metrics.windows;
      const net::Gradients grads = net::backward_batch(phi, train_x, upstream);
      phi = net::sgd_step_anchored(phi, grads, cfg.lr, prev_theta, w);
    }
  }
  const Eigen::VectorXd delta = phi.parameters() - phi_r.parameters();
  out.metrics.displacement_l2 = delta.norm();
  out.metrics.displacement_max = delta.size() ? delta.cwiseAbs().maxCoeff() : 0.0;
  out.metrics.mean_window_loss =
      out.metrics.windows ? loss_sum / static_cast<double>(out.metrics.windows) : 0.0;
  return out;
}

}  // namespace hmac::train
