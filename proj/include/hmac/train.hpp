#pragma once

// Offline learning of the two disturbance representations: adversarial
// meta-regression for the manageable channel, sliding-window streaming
// meta-learning for the latent channel, and the alternation between them.

#include "hmac/common.hpp"
#include "hmac/net.hpp"

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace hmac::train {

struct Sample {
  double t = 0.0;
  NnInput x = NnInput::Zero();
  Vec3 y = Vec3::Zero();
};

/// Time-ordered samples of one collection condition.
struct Dataset {
  int cond_id = 0;
  double dt = 0.01;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  /// Strictly increasing timestamps, spacing within 1% of dt, at least min_len samples.
  void validate(std::size_t min_len = 1) const;
  Eigen::MatrixXd inputs() const;   // 11 x N
  Eigen::MatrixXd targets() const;  // 3 x N
};

/// Column-per-sample view consumed by the trainers.
struct ChannelData {
  int cond_id = 0;
  Eigen::MatrixXd inputs;   // 11 x N
  Eigen::MatrixXd targets;  // 3 x N

  Eigen::Index size() const { return inputs.cols(); }
  static ChannelData from(const Dataset& d);
};

struct DaimlConfig {
  double alpha = 0.1;
  double lr_phi = 0.02;
  double lr_disc = 0.05;
  int epochs_per_round = 1;
  int n_warmup_epochs = 200;
  int batch_size = 256;
  double damping = 1e-6;
  double gamma = 10.0;
  double spectral_bound = 2.0;
  int disc_hidden = 16;

  void validate() const;
};

struct SsmlConfig {
  int window = 50;         // b
  int adapt_size = 25;     // c
  double gamma = 10.0;
  double w_initial = 0.01;
  double w_increment = 0.01;
  double w_cap = 1.0;
  double lr = 2e-3;
  int epochs_per_round = 1;
  double damping = 1e-6;
  double spectral_bound = 2.0;

  void validate() const;
  /// Movement-cost weight used in outer iteration `iteration` (0-based).
  double weight_at(int iteration) const;
};

/// Environment classifier on manageable features: 3 -> hidden -> K.
struct Discriminator {
  net::Mlp net;
  static Discriminator make(int feature_dim, int n_conditions, int hidden, std::uint64_t seed,
                            double spectral_bound);
  int n_conditions() const { return net.output_dim(); }
};

struct DaimlMetrics {
  double regression_loss = 0.0;  // mean ||y - phi a||^2 per sample, averaged over conditions
  double disc_accuracy = 0.0;
};

struct DaimlResult {
  net::Mlp phi_m;
  Discriminator disc;
  DaimlMetrics metrics;
};

/// One round (cfg.epochs_per_round epochs) of adversarial meta-regression.
DaimlResult daiml_round(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                        const Discriminator& disc, const DaimlConfig& cfg, std::uint64_t seed);

/// The same batches and coefficient solves with no discriminator at all.
net::Mlp regression_round(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                          const DaimlConfig& cfg, std::uint64_t seed);

DaimlMetrics evaluate_daiml(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                            const Discriminator& disc, const DaimlConfig& cfg);

struct SsmlMetrics {
  double mean_window_loss = 0.0;  // mean over windows of the data term
  double displacement_l2 = 0.0;   // ||theta_end - prev_theta||
  double displacement_max = 0.0;
  std::size_t windows = 0;
};

struct SsmlResult {
  net::Mlp phi_r;
  SsmlMetrics metrics;
};

/// One round of smoothed streaming meta-learning with movement-cost weight w
/// anchored at prev_theta.
SsmlResult ssml_round(const std::vector<ChannelData>& data, const net::Mlp& phi_r,
                      const SsmlConfig& cfg, const Eigen::VectorXd& prev_theta, double w,
                      std::uint64_t seed);

/// Adaptation-subset indices (sorted, within [0, b)) used for window t of condition k.
std::vector<int> adaptation_subset(std::uint64_t seed, int cond_index, long window_start,
                                   int epoch, int b, int c);

struct LabelOptions {
  int window = 50;
  double damping = 1e-6;
  double gamma = 10.0;
};

/// Mutual-residual labels for one condition.
struct LabelSplit {
  int generation = 0;
  Eigen::MatrixXd y_m;              // y - phi_r a_r(window)
  Eigen::MatrixXd y_r;              // y - phi_m a_m
  Eigen::MatrixXd manageable_pred;  // phi_m a_m
  Eigen::MatrixXd latent_pred;      // phi_r a_r(window), a_r fitted to y_r
  Eigen::MatrixXd a_m;              // d_m x 3

  /// y - phi_m a_m - phi_r a_r
  Eigen::MatrixXd combined_residual() const { return y_r - latent_pred; }
};

LabelSplit build_label_split(const ChannelData& data, const net::Mlp& phi_m, const net::Mlp& phi_r,
                             const LabelOptions& opt, int generation = 0);

/// Start index of the length-b window assigned to sample i (centred, clamped).
Eigen::Index window_start_for(Eigen::Index i, Eigen::Index n, int b);

struct HistoryRow {
  int round = 0;
  std::string channel;  // warmup, latent, manageable, total
  double regression_loss = 0.0;
  double disc_accuracy = std::numeric_limits<double>::quiet_NaN();
  double displacement = std::numeric_limits<double>::quiet_NaN();
};

struct HierarchicalResult {
  net::Mlp phi_m;
  net::Mlp phi_r;
  net::Mlp phi_m_warmup;  // single-representation baseline
  Discriminator disc;
  Discriminator disc_warmup;
  std::vector<HistoryRow> history;
  int warmup_epochs = 0;
  int outer_completed = 0;
  bool early_stopped = false;
  std::vector<std::string> warnings;
};

inline const std::vector<int> kPhiMDims = {11, 30, 40, 30, 3};
inline const std::vector<int> kPhiRDims = {11, 20, 10, 2};

struct HierarchicalOptions {
  std::vector<int> phi_m_dims = kPhiMDims;
  std::vector<int> phi_r_dims = kPhiRDims;
};

HierarchicalResult hierarchical_train(const std::vector<Dataset>& datasets,
                                      const DaimlConfig& daiml_cfg, const SsmlConfig& ssml_cfg,
                                      int outer_iters, std::uint64_t seed,
                                      const HierarchicalOptions& options = {});

/// Same, on pre-built channel views.
HierarchicalResult hierarchical_train(const std::vector<ChannelData>& data,
                                      const DaimlConfig& daiml_cfg, const SsmlConfig& ssml_cfg,
                                      int outer_iters, std::uint64_t seed,
                                      const HierarchicalOptions& options = {});

/// RMS over all samples and conditions of y - phi_m a_m - phi_r a_r.
double combined_rmse(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                     const net::Mlp& phi_r, const LabelOptions& opt);

std::string history_to_csv(const std::vector<HistoryRow>& history);

}  // namespace hmac::train
