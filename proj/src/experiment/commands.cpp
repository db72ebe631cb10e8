#include "hmac/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace hmac::experiment {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + p.string());
}

std::string dataset_file(int cond_id) { return "cond_" + std::to_string(cond_id) + ".csv"; }

std::string run_dir(const std::string& scenario, const std::string& controller, std::uint64_t seed) {
  return "runs/" + scenario + "/" + controller + "/seed_" + std::to_string(seed);
}

std::string run_tag(const RunMetrics& m) {
  return m.scenario + "_" + m.controller + "_seed" + std::to_string(m.seed);
}

struct TrainingInfo {
  bool latent_zero = false;
  int label_window = 50;
  double label_damping = 1e-6;
  double label_gamma = 10.0;
};

TrainingInfo read_training_info(const fs::path& p) {
  TrainingInfo info;
  try {
    const auto j = nlohmann::json::parse(read_text(p));
    info.latent_zero = j.at("latent_zero").get<bool>();
    info.label_window = j.at("label_window").get<int>();
    info.label_damping = j.at("label_damping").get<double>();
    info.label_gamma = j.at("label_gamma").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(p.string() + ": " + e.what());
  }
  return info;
}

// 1 / RMS of the network outputs over every training input.
double unit_rms_scale(const net::Mlp& net, const std::vector<train::ChannelData>& data) {
  double sum = 0.0;
  double count = 0.0;
  for (const auto& d : data) {
    const Eigen::MatrixXd out = net::forward_batch(net, d.inputs);
    sum += out.squaredNorm();
    count += static_cast<double>(out.size());
  }
  const double rms = count > 0.0 ? std::sqrt(sum / count) : 0.0;
  return rms > 0.0 && std::isfinite(rms) ? 1.0 / rms : 1.0;
}

int controller_rank(const std::string& c) {
  if (c == "pid") return 0;
  if (c == "nf") return 1;
  if (c == "hmac") return 2;
  return 3;
}

// Residual histogram and spread, with and without the latent channel.
void write_residual_files(const fs::path& root, CommandResult& res) {
  const fs::path models = root / "models";
  const fs::path manifest = root / "data" / "manifest.json";
  if (!fs::exists(models / "training.json") || !fs::exists(manifest)) {
    res.warnings.push_back("models or datasets missing; residual histogram skipped");
    return;
  }
  const TrainingInfo info = read_training_info(models / "training.json");
  const net::Mlp phi_m = net::load_mlp((models / "phi_m.txt").string());
  const net::Mlp phi_r = info.latent_zero ? net::Mlp(std::vector<int>{kInputDim, 1, 2})
                                          : net::load_mlp((models / "phi_r.txt").string());
  const auto datasets = pipeline::load_manifest(manifest.string());
  train::LabelOptions opt{info.label_window, info.label_damping, info.label_gamma};

  std::vector<double> only_m[3], both[3];
  for (const auto& d : datasets) {
    const auto split = train::build_label_split(train::ChannelData::from(d), phi_m, phi_r, opt);
    const Eigen::MatrixXd comb = split.combined_residual();
    for (Eigen::Index i = 0; i < comb.cols(); ++i) {
      for (int a = 0; a < 3; ++a) {
        only_m[a].push_back(split.y_r(a, i));
        both[a].push_back(comb(a, i));
      }
    }
  }
  auto stdev = [](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  constexpr int kBins = 40;
  std::string hist = "axis,bin_lo,bin_hi,manageable_only,with_latent\n";
  std::string spread = "axis,std_manageable_only,std_with_latent\n";
  const char* names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (only_m[a].empty()) continue;
    double lim = 0.0;
    for (double x : only_m[a]) lim = std::max(lim, std::abs(x));
    for (double x : both[a]) lim = std::max(lim, std::abs(x));
    if (!(lim > 0.0)) lim = 1.0;
    std::vector<long> cm(kBins, 0), cb(kBins, 0);
    auto bin = [&](double x) {
      const int b = static_cast<int>(std::floor((x + lim) / (2.0 * lim) * kBins));
      return std::clamp(b, 0, kBins - 1);
    };
    for (double x : only_m[a]) ++cm[bin(x)];
    for (double x : both[a]) ++cb[bin(x)];
    for (int b = 0; b < kBins; ++b) {
      const double lo = -lim + 2.0 * lim * b / kBins;
      const double hi = -lim + 2.0 * lim * (b + 1) / kBins;
      hist += std::string(names[a]) + "," + fmt(lo) + "," + fmt(hi) + "," + std::to_string(cm[b]) +
              "," + std::to_string(cb[b]) + "\n";
    }
    spread += std::string(names[a]) + "," + fmt(stdev(only_m[a])) + "," + fmt(stdev(both[a])) + "\n";
  }
  write_text(root / "report" / "residual_hist.csv", hist);
  write_text(root / "report" / "residual_std.csv", spread);
  res.written.push_back("report/residual_hist.csv");
  res.written.push_back("report/residual_std.csv");
}

}  // namespace

std::string resolve_output_root(const ExperimentConfig& cfg, const std::string& out_flag) {
  if (!out_flag.empty()) return out_flag;
  if (const char* env = std::getenv("HMAC_OUTPUT_ROOT"); env != nullptr && *env != '\0') return env;
  return cfg.output_dir;
}

CommandResult cmd_collect(const ExperimentConfig& cfg, const std::string& out_root) {
  CommandResult res;
  res.warnings = cfg.validate();
  const std::uint64_t seed = cfg.seeds.front();
  const pipeline::CollectionPlan plan = cfg.collection_plan();
  const auto datasets = pipeline::collect_all(plan, seed);

  const fs::path dir = fs::path(out_root) / "data";
  pipeline::Manifest manifest;
  manifest.seed = seed;
  manifest.scenario_hash = cfg.scenario_hash();
  for (const auto& d : datasets) {
    const std::string file = dataset_file(d.cond_id);
    pipeline::save_dataset((dir / file).string(), d);
    manifest.conditions.push_back({d.cond_id, file, d.size()});
    res.written.push_back("data/" + file);
  }
  pipeline::save_manifest((dir / "manifest.json").string(), manifest);
  res.written.push_back("data/manifest.json");
  return res;
}

CommandResult cmd_train(const ExperimentConfig& cfg, const std::string& out_root) {
  CommandResult res;
  res.warnings = cfg.validate();
  const fs::path root(out_root);
  const fs::path manifest_path = root / "data" / "manifest.json";
  if (!fs::exists(manifest_path)) {
    throw ConfigError("no datasets at " + manifest_path.string() + "; run collect first");
  }
  const pipeline::Manifest manifest = pipeline::read_manifest(manifest_path.string());
  if (manifest.scenario_hash != cfg.scenario_hash()) {
    throw ConfigError("datasets were collected under a different scenario; rerun collect");
  }
  const auto datasets = pipeline::load_manifest(manifest_path.string());
  if (datasets.size() < 2) throw ConfigError("training needs at least 2 conditions");

  const std::uint64_t seed = cfg.seeds.front();
  const auto r = train::hierarchical_train(datasets, cfg.daiml, cfg.ssml, cfg.outer_iters, seed, cfg.nets);
  for (const auto& w : r.warnings) res.warnings.push_back(w);

  // Manageable-only baseline: the warmup network trained on the full labels
  // for the same number of rounds the hierarchical loop was given.
  std::vector<train::ChannelData> data;
  for (const auto& d : datasets) data.push_back(train::ChannelData::from(d));
  net::Mlp nf = r.phi_m_warmup;
  train::Discriminator disc = r.disc_warmup;
  for (int it = 0; it < cfg.outer_iters; ++it) {
    auto step = train::daiml_round(data, nf, disc, cfg.daiml, derive_seed(seed, 40, static_cast<std::uint64_t>(it)));
    nf = std::move(step.phi_m);
    disc = std::move(step.disc);
  }

  const fs::path dir = root / "models";
  fs::create_directories(dir);
  const bool latent_zero = cfg.outer_iters == 0;
  net::save_mlp((dir / "phi_m.txt").string(), r.phi_m);
  res.written.push_back("models/phi_m.txt");
  net::save_mlp((dir / "nf_phi_m.txt").string(), nf);
  res.written.push_back("models/nf_phi_m.txt");
  if (!latent_zero) {
    net::save_mlp((dir / "phi_r.txt").string(), r.phi_r);
    res.written.push_back("models/phi_r.txt");
  } else if (fs::exists(dir / "phi_r.txt")) {
    fs::remove(dir / "phi_r.txt");
  }
  write_text(dir / "history.csv", train::history_to_csv(r.history));
  res.written.push_back("models/history.csv");

  nlohmann::ordered_json info;
  info["format"] = "hmac-training";
  info["version"] = 1;
  info["seed"] = seed;
  info["scenario_hash"] = manifest.scenario_hash;
  info["outer_iters"] = cfg.outer_iters;
  info["outer_completed"] = r.outer_completed;
  info["early_stopped"] = r.early_stopped;
  info["warmup_epochs"] = r.warmup_epochs;
  info["latent_zero"] = latent_zero;
  info["label_window"] = cfg.ssml.window;
  info["label_damping"] = cfg.ssml.damping;
  info["label_gamma"] = cfg.ssml.gamma;
  info["feature_scale"] = {
      {"phi_m", cfg.normalize_features ? unit_rms_scale(r.phi_m, data) : 1.0},
      {"nf_phi_m", cfg.normalize_features ? unit_rms_scale(nf, data) : 1.0},
      {"phi_r", cfg.normalize_features && !latent_zero ? unit_rms_scale(r.phi_r, data) : 1.0}};
  info["warnings"] = r.warnings;
  write_text(dir / "training.json", info.dump(2) + "\n");
  res.written.push_back("models/training.json");
  return res;
}

CommandResult cmd_fly(const ExperimentConfig& cfg, const std::string& out_root) {
  CommandResult res;
  res.warnings = cfg.validate();
  const fs::path root(out_root);
  const bool need_models = std::any_of(cfg.controllers.begin(), cfg.controllers.end(),
                                       [](auto k) { return k != control::ControllerKind::pid; });
  Models models;
  if (need_models) models = load_models((root / "models").string(), cfg);

  struct Job {
    const FlightScenario* scenario;
    control::ControllerKind kind;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (const auto& s : cfg.scenarios) {
    for (auto k : cfg.controllers) {
      for (auto seed : cfg.seeds) jobs.push_back({&s, k, seed});
    }
  }
  std::vector<std::exception_ptr> errors(jobs.size());
  std::vector<std::string> written(jobs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    try {
      const Job& job = jobs[i];
      const FlightResult fr = fly(cfg, *job.scenario, job.kind, job.seed, need_models ? &models : nullptr);
      const std::string rel = run_dir(job.scenario->name, control::to_string(job.kind), job.seed);
      write_text(root / rel / "telemetry.csv", telemetry_to_csv(fr.telemetry));
      write_text(root / rel / "metrics.json", metrics_to_json(fr.metrics));
      written[i] = rel;
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (const auto& w : written) res.written.push_back(w);
  return res;
}

CommandResult cmd_report(const std::string& out_root) {
  CommandResult res;
  const fs::path root(out_root);
  const fs::path runs = root / "runs";
  std::vector<fs::path> found;
  if (fs::exists(runs)) {
    for (const auto& e : fs::recursive_directory_iterator(runs)) {
      if (e.is_regular_file() && e.path().filename() == "metrics.json") found.push_back(e.path());
    }
  }
  if (found.empty()) throw std::runtime_error("no runs found under " + runs.string());
  std::sort(found.begin(), found.end());

  std::vector<RunMetrics> all;
  for (const auto& p : found) all.push_back(metrics_from_json(read_text(p)));
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& x = all[a];
    const auto& y = all[b];
    if (x.scenario != y.scenario) return x.scenario < y.scenario;
    if (x.controller != y.controller) return controller_rank(x.controller) < controller_rank(y.controller);
    return x.seed < y.seed;
  });

  const fs::path out = root / "report";
  std::string runs_csv =
      "scenario,trajectory,controller,seed,mse,rmse_x,rmse_y,rmse_z,max_error,crashed,ticks,"
      "centroid_m,centroid_r,floor_events,fallback_events,rejected_updates\n";
  for (std::size_t i : order) {
    const auto& m = all[i];
    runs_csv += m.scenario + "," + m.trajectory + "," + m.controller + "," + std::to_string(m.seed) +
                "," + fmt(m.mse) + "," + fmt(m.rmse_axis(0)) + "," + fmt(m.rmse_axis(1)) + "," +
                fmt(m.rmse_axis(2)) + "," + fmt(m.max_error) + "," + (m.crashed ? "1" : "0") + "," +
                std::to_string(m.ticks) + "," + fmt(m.centroid_m) + "," + fmt(m.centroid_r) + "," +
                std::to_string(m.floor_events) + "," + std::to_string(m.fallback_events) + "," +
                std::to_string(m.rejected_updates) + "\n";
  }
  write_text(out / "runs.csv", runs_csv);
  res.written.push_back("report/runs.csv");

  // controllers x scenarios: mean MSE over seeds, "crash" if any seed crashed
  std::vector<std::string> scenarios, controllers;
  std::map<std::string, std::string> trajectory_of;
  for (const auto& m : all) {
    if (std::find(scenarios.begin(), scenarios.end(), m.scenario) == scenarios.end()) scenarios.push_back(m.scenario);
    if (std::find(controllers.begin(), controllers.end(), m.controller) == controllers.end()) {
      controllers.push_back(m.controller);
    }
    trajectory_of[m.scenario] = m.trajectory;
  }
  std::sort(scenarios.begin(), scenarios.end());
  std::sort(controllers.begin(), controllers.end(),
            [](const std::string& a, const std::string& b) { return controller_rank(a) < controller_rank(b); });
  std::map<std::pair<std::string, std::string>, std::optional<double>> cell;
  std::string summary = "controller";
  for (const auto& s : scenarios) summary += "," + s;
  summary += "\n";
  for (const auto& c : controllers) {
    summary += c;
    for (const auto& s : scenarios) {
      double sum = 0.0;
      int n = 0;
      bool crash = false;
      for (std::size_t i : order) {
        const auto& m = all[i];
        if (m.controller != c || m.scenario != s) continue;
        if (m.crashed || !m.mse) {
          crash = true;
        } else {
          sum += *m.mse;
          ++n;
        }
      }
      if (crash) {
        summary += ",crash";
      } else if (n == 0) {
        summary += ",";
      } else {
        cell[{c, s}] = sum / n;
        summary += "," + fmt(sum / n);
      }
    }
    summary += "\n";
  }
  write_text(out / "summary.csv", summary);
  res.written.push_back("report/summary.csv");

  std::string ratio = "scenario,trajectory,hmac_over_nf,reference_hmac_over_nf\n";
  for (const auto& s : scenarios) {
    const auto h = cell.find({"hmac", s});
    const auto nf = cell.find({"nf", s});
    std::optional<double> ours, ref;
    if (h != cell.end() && nf != cell.end() && h->second && nf->second && *nf->second > 0.0) {
      ours = *h->second / *nf->second;
    }
    double rh = 0.0, rn = 0.0;
    for (const auto& c : kReferenceTable) {
      if (trajectory_of[s] != c.trajectory) continue;
      if (std::string(c.controller) == "hmac") rh = c.mse;
      if (std::string(c.controller) == "nf") rn = c.mse;
    }
    if (rh > 0.0 && rn > 0.0) ref = rh / rn;
    ratio += s + "," + trajectory_of[s] + "," + fmt(ours) + "," + fmt(ref) + "\n";
  }
  write_text(out / "ratio.csv", ratio);
  res.written.push_back("report/ratio.csv");

  std::string reference = "controller,trajectory,mse\n";
  for (const auto& c : kReferenceTable) {
    reference += std::string(c.controller) + "," + c.trajectory + "," + fmt(c.mse) + "\n";
  }
  write_text(out / "reference.csv", reference);
  res.written.push_back("report/reference.csv");

  for (std::size_t i : order) {
    const auto& m = all[i];
    const fs::path tel_path = root / run_dir(m.scenario, m.controller, m.seed) / "telemetry.csv";
    if (!fs::exists(tel_path)) {
      res.warnings.push_back("telemetry missing for " + run_tag(m));
      continue;
    }
    const Telemetry tel = telemetry_from_csv(read_text(tel_path));
    std::string xy = "t,x,y,z,x_d,y_d,z_d\n";
    for (const auto& r : tel.rows) {
      xy += fmt(r.t) + "," + fmt(r.q(0)) + "," + fmt(r.q(1)) + "," + fmt(r.q(2)) + "," +
            fmt(r.q_d(0)) + "," + fmt(r.q_d(1)) + "," + fmt(r.q_d(2)) + "\n";
    }
    write_text(out / "trajectory" / (run_tag(m) + ".csv"), xy);
    res.written.push_back("report/trajectory/" + run_tag(m) + ".csv");
    if (tel.n_coeffs < control::kManageableCoeffs || tel.rows.size() < 2) continue;

    std::string series = "t";
    for (int c = 0; c < tel.n_coeffs; ++c) series += ",a" + std::to_string(c);
    series += "\n";
    for (const auto& r : tel.rows) {
      series += fmt(r.t);
      for (int c = 0; c < tel.n_coeffs; ++c) series += "," + fmt(r.a_hat(c));
      series += "\n";
    }
    write_text(out / "ahat" / (run_tag(m) + "_series.csv"), series);

    const double fs_hz = 1.0 / m.control_dt;
    const Psd pm = coefficient_block_psd(tel, 0, control::kManageableCoeffs, fs_hz, m.psd_segment);
    Psd pr;
    if (tel.n_coeffs >= control::kCoeffs) {
      pr = coefficient_block_psd(tel, control::kManageableCoeffs, control::kCoeffs, fs_hz, m.psd_segment);
    }
    std::string psd = "freq,psd_manageable,psd_latent\n";
    for (std::size_t k = 0; k < pm.freq.size(); ++k) {
      psd += fmt(pm.freq[k]) + "," + fmt(pm.power[k]) + "," + (pr.power.empty() ? "" : fmt(pr.power[k])) + "\n";
    }
    write_text(out / "ahat" / (run_tag(m) + "_psd.csv"), psd);
    res.written.push_back("report/ahat/" + run_tag(m) + "_series.csv");
    res.written.push_back("report/ahat/" + run_tag(m) + "_psd.csv");
  }

  write_residual_files(root, res);
  return res;
}

}  // namespace hmac::experiment
