#include "hmac/train.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

namespace hmac::train {

namespace {

std::vector<ChannelData> relabel(const std::vector<ChannelData>& data,
                                 const std::vector<LabelSplit>& splits, bool latent) {
  std::vector<ChannelData> out;
  out.reserve(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    out.push_back({data[k].cond_id, data[k].inputs, latent ? splits[k].y_r : splits[k].y_m});
  }
  return out;
}

std::vector<LabelSplit> split_all(const std::vector<ChannelData>& data, const net::Mlp& phi_m,
                                  const net::Mlp& phi_r, const LabelOptions& opt, int generation) {
  std::vector<LabelSplit> splits;
  splits.reserve(data.size());
  for (const auto& d : data) splits.push_back(build_label_split(d, phi_m, phi_r, opt, generation));
  return splits;
}

}  // namespace

HierarchicalResult hierarchical_train(const std::vector<Dataset>& datasets,
                                      const DaimlConfig& daiml_cfg, const SsmlConfig& ssml_cfg,
                                      int outer_iters, std::uint64_t seed,
                                      const HierarchicalOptions& options) {
  std::vector<ChannelData> data;
  data.reserve(datasets.size());
  for (const auto& d : datasets) {
    d.validate(static_cast<std::size_t>(ssml_cfg.window));
    data.push_back(ChannelData::from(d));
  }
  return hierarchical_train(data, daiml_cfg, ssml_cfg, outer_iters, seed, options);
}

HierarchicalResult hierarchical_train(const std::vector<ChannelData>& data,
                                      const DaimlConfig& daiml_cfg, const SsmlConfig& ssml_cfg,
                                      int outer_iters, std::uint64_t seed,
                                      const HierarchicalOptions& options) {
  daiml_cfg.validate();
  ssml_cfg.validate();
  if (outer_iters < 0) throw std::invalid_argument("hierarchical_train: outer_iters must be >= 0");
  if (data.size() < 2) {
    throw std::invalid_argument("hierarchical_train: need K >= 2 conditions, got " +
                                std::to_string(data.size()));
  }
  for (const auto& d : data) {
    if (d.size() < ssml_cfg.window) {
      throw std::invalid_argument("hierarchical_train: condition " + std::to_string(d.cond_id) +
                                  " is shorter than the SSML window");
    }
  }

  HierarchicalResult res;
  res.phi_m = net::spectral_normalize(
      net::Mlp::he_uniform(options.phi_m_dims, derive_seed(seed, 1), daiml_cfg.spectral_bound));
  res.disc = Discriminator::make(res.phi_m.output_dim(), static_cast<int>(data.size()),
                                 daiml_cfg.disc_hidden, derive_seed(seed, 2),
                                 daiml_cfg.spectral_bound);
  const LabelOptions labels{ssml_cfg.window, ssml_cfg.damping, ssml_cfg.gamma};

  // Warmup on the full residual until relative improvement stays below 1%
  // for 5 consecutive epochs.
  DaimlConfig warm_cfg = daiml_cfg;
  warm_cfg.epochs_per_round = 1;
  double prev_loss = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int epoch = 0; epoch < daiml_cfg.n_warmup_epochs; ++epoch) {
    DaimlResult r = daiml_round(data, res.phi_m, res.disc, warm_cfg, derive_seed(seed, 10, epoch));
    res.phi_m = std::move(r.phi_m);
    res.disc = std::move(r.disc);
    res.history.push_back({epoch, "warmup", r.metrics.regression_loss, r.metrics.disc_accuracy,
                           std::numeric_limits<double>::quiet_NaN()});
    ++res.warmup_epochs;
    const double rel = std::isfinite(prev_loss) ? (prev_loss - r.metrics.regression_loss) / prev_loss
                                                : 1.0;
    stalled = rel < 0.01 ? stalled + 1 : 0;
    prev_loss = r.metrics.regression_loss;
    if (stalled >= 5) break;
  }
  res.phi_m_warmup = res.phi_m;
  res.disc_warmup = res.disc;

  const net::Mlp zero_latent(options.phi_r_dims, ssml_cfg.spectral_bound);
  if (outer_iters == 0) {
    res.phi_r = zero_latent;
    return res;
  }

  res.phi_r = net::spectral_normalize(
      net::Mlp::he_uniform(options.phi_r_dims, derive_seed(seed, 3), ssml_cfg.spectral_bound));
  double prev_total = combined_rmse(data, res.phi_m, zero_latent, labels);
  res.history.push_back({0, "total", prev_total, std::numeric_limits<double>::quiet_NaN(),
                         std::numeric_limits<double>::quiet_NaN()});

  for (int it = 0; it < outer_iters; ++it) {
    const int round = it + 1;
    const net::Mlp phi_m_before = res.phi_m;
    const net::Mlp phi_r_before = res.phi_r;
    const Discriminator disc_before = res.disc;

    auto splits = split_all(data, res.phi_m, res.phi_r, labels, round);
    const double w = ssml_cfg.weight_at(it);
    SsmlResult s = ssml_round(relabel(data, splits, true), res.phi_r, ssml_cfg,
                              res.phi_r.parameters(), w, derive_seed(seed, 20, it));
    res.phi_r = std::move(s.phi_r);
    res.history.push_back({round, "latent", s.metrics.mean_window_loss,
                           std::numeric_limits<double>::quiet_NaN(), s.metrics.displacement_l2});

    splits = split_all(data, res.phi_m, res.phi_r, labels, round);
    const Eigen::VectorXd theta_m = res.phi_m.parameters();
    DaimlResult d = daiml_round(relabel(data, splits, false), res.phi_m, res.disc, daiml_cfg,
                                derive_seed(seed, 30, it));
    res.phi_m = std::move(d.phi_m);
    res.disc = std::move(d.disc);
    res.history.push_back({round, "manageable", d.metrics.regression_loss, d.metrics.disc_accuracy,
                           (res.phi_m.parameters() - theta_m).norm()});

    const double total = combined_rmse(data, res.phi_m, res.phi_r, labels);
    res.history.push_back({round, "total", total, std::numeric_limits<double>::quiet_NaN(),
                           std::numeric_limits<double>::quiet_NaN()});
    res.outer_completed = round;
    if (!(total < prev_total)) {
      res.early_stopped = true;
      res.warnings.push_back("outer iteration " + std::to_string(round) +
                             " did not reduce the total residual (" + std::to_string(total) +
                             " >= " + std::to_string(prev_total) +
                             "); stopping and keeping the previous networks");
      res.phi_m = phi_m_before;
      res.phi_r = phi_r_before;
      res.disc = disc_before;
      break;
    }
    prev_total = total;
  }
  return res;
}

std::string history_to_csv(const std::vector<HistoryRow>& history) {
  std::ostringstream os;
  os << "round,channel,regression_loss,disc_accuracy,displacement\n";
  char buf[64];
  auto num = [&](double v) {
    if (std::isnan(v)) return std::string();
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& row : history) {
    os << row.round << ',' << row.channel << ',' << num(row.regression_loss) << ','
       << num(row.disc_accuracy) << ',' << num(row.displacement) << '\n';
  }
  return os.str();
}

}  // namespace hmac::train
