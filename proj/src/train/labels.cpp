#include "hmac/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

namespace hmac::train {

void Dataset::validate(std::size_t min_len) const {
  if (samples.size() < min_len) {
    throw std::invalid_argument("dataset " + std::to_string(cond_id) + " has " +
                                std::to_string(samples.size()) + " samples, need " +
                                std::to_string(min_len));
  }
  if (!(dt > 0.0)) throw std::invalid_argument("dataset dt must be > 0");
  for (std::size_t i = 1; i < samples.size(); ++i) {
    const double step = samples[i].t - samples[i - 1].t;
    if (!(step > 0.0)) {
      throw std::invalid_argument("dataset timestamps not strictly increasing at sample " +
                                  std::to_string(i));
    }
    if (std::abs(step - dt) > 0.01 * dt) {
      throw std::invalid_argument("dataset spacing deviates more than 1% at sample " +
                                  std::to_string(i));
    }
  }
}

Eigen::MatrixXd Dataset::inputs() const {
  Eigen::MatrixXd x(kInputDim, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = samples[i].x;
  return x;
}

Eigen::MatrixXd Dataset::targets() const {
  Eigen::MatrixXd y(3, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) y.col(static_cast<Eigen::Index>(i)) = samples[i].y;
  return y;
}

ChannelData ChannelData::from(const Dataset& d) {
  return {d.cond_id, d.inputs(), d.targets()};
}

Eigen::Index window_start_for(Eigen::Index i, Eigen::Index n, int b) {
  const Eigen::Index last = std::max<Eigen::Index>(0, n - b);
  return std::clamp<Eigen::Index>(i - b / 2, 0, last);
}

LabelSplit build_label_split(const ChannelData& data, const net::Mlp& phi_m, const net::Mlp& phi_r,
                             const LabelOptions& opt, int generation) {
  const Eigen::Index n = data.size();
  if (n < 1) throw std::invalid_argument("build_label_split: empty dataset");
  if (opt.window < 1) throw std::invalid_argument("build_label_split: window must be >= 1");
  const int b = static_cast<int>(std::min<Eigen::Index>(opt.window, n));

  LabelSplit split;
  split.generation = generation;
  const Eigen::MatrixXd f_m = net::forward_batch(phi_m, data.inputs);
  split.a_m = net::fit_axis_coefficients(f_m, data.targets, opt.damping, opt.gamma);
  split.manageable_pred = split.a_m.transpose() * f_m;
  split.y_r = data.targets - split.manageable_pred;

  const Eigen::MatrixXd f_r = net::forward_batch(phi_r, data.inputs);
  split.latent_pred.resize(3, n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < n; ++i) {
    try {
      const Eigen::Index s = window_start_for(i, n, b);
      const Eigen::MatrixXd a_r = net::fit_axis_coefficients(
          f_r.middleCols(s, b), split.y_r.middleCols(s, b), opt.damping, opt.gamma);
      split.latent_pred.col(i) = a_r.transpose() * f_r.col(i);
    } catch (...) {
#pragma omp critical(hmac_label_split)
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  split.y_m = data.targets - split.latent_pred;
  return split;
}

double combined_rmse(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                     const net::Mlp& phi_r, const LabelOptions& opt) {
  double sq = 0.0;
  double count = 0.0;
  for (const auto& d : data) {
    const LabelSplit split = build_label_split(d, phi_m, phi_r, opt);
    sq += split.combined_residual().squaredNorm();
    count += static_cast<double>(d.size());
  }
  return std::sqrt(sq / count);
}

}  // namespace hmac::train
