#pragma once

// Experiment harness: configuration, closed-loop flights, metrics and the
// collect / train / fly / report commands behind the CLI.

#include "hmac/control.hpp"
#include "hmac/net.hpp"
#include "hmac/pipeline.hpp"
#include "hmac/sim.hpp"
#include "hmac/train.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace hmac::experiment {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FlightScenario {
  std::string name;
  sim::TrajectorySpec trajectory;
  int condition_id = 0;
  double duration_s = 30.0;
};

struct ExperimentConfig {
  sim::SimParams params;
  std::vector<sim::DisturbanceCondition> conditions;

  // collection
  std::vector<int> collect_conditions;
  double collect_duration_s = 60.0;
  double sample_period = 0.01;
  sim::TrajectorySpec collect_trajectory;
  double collect_noise_sigma = 0.005;
  control::PidGains pid;

  // training
  train::DaimlConfig daiml;
  train::SsmlConfig ssml;
  int outer_iters = 3;
  train::HierarchicalOptions nets;
  bool normalize_features = true;  // unit-RMS network outputs on the training inputs

  // flight
  control::GainSet gains;
  std::vector<control::ControllerKind> controllers;
  std::vector<FlightScenario> scenarios;
  double crash_threshold = 1.5;  // m
  double flight_noise_sigma = 0.005;
  int psd_segment = 512;

  std::vector<std::uint64_t> seeds;
  std::string output_dir = "out";

  // Normalized JSON of the sections that determine the collected data.
  std::string scenario_canonical;

  const sim::DisturbanceCondition& condition(int id) const;
  pipeline::CollectionPlan collection_plan() const;
  std::string scenario_hash() const;
  /// Throws ConfigError; returns advisory warnings.
  std::vector<std::string> validate() const;
};

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::string& path);

// ---- telemetry and metrics

struct TelemetryRow {
  double t = 0.0;
  Vec3 q = Vec3::Zero();
  Vec3 q_d = Vec3::Zero();
  Vec3 u = Vec3::Zero();
  Eigen::VectorXd a_hat;
  double p_trace = 0.0;
  double p_min_diag = 0.0;
};

struct Telemetry {
  int n_coeffs = 0;  // 0 for pid, 9 for nf, 15 for hmac
  std::vector<TelemetryRow> rows;
};

std::string telemetry_to_csv(const Telemetry& tel);
Telemetry telemetry_from_csv(const std::string& text);

struct RunMetrics {
  std::string controller;
  std::string scenario;
  std::string trajectory;
  std::uint64_t seed = 0;
  double control_dt = 0.01;
  int psd_segment = 512;
  std::optional<double> mse;  // m^2, missing when crashed
  Vec3 rmse_axis = Vec3::Zero();
  double max_error = 0.0;
  bool crashed = false;
  std::size_t ticks = 0;
  std::optional<double> centroid_m;  // Hz
  std::optional<double> centroid_r;
  long floor_events = 0;
  long fallback_events = 0;
  long rejected_updates = 0;
};

std::string metrics_to_json(const RunMetrics& m);
RunMetrics metrics_from_json(const std::string& text);

struct Psd {
  std::vector<double> freq;
  std::vector<double> power;
};

/// Welch estimate: Hann window, 50% overlap, per-segment mean removed,
/// one-sided density. Series shorter than `segment` use one full-length segment.
Psd welch_psd(const std::vector<double>& x, double fs, int segment);

/// Power-weighted mean frequency, DC bin excluded. Empty if there is no power.
std::optional<double> spectral_centroid(const Psd& psd);

/// Sum of the coefficient PSDs in columns [begin, end) of the telemetry.
Psd coefficient_block_psd(const Telemetry& tel, int begin, int end, double fs, int segment);

/// Tracking metrics plus spectral centroids of the a_m and a_r blocks.
RunMetrics compute_metrics(const Telemetry& tel, double control_dt, int psd_segment,
                           bool crashed);

// ---- flights

struct Models {
  net::Mlp phi_m;     // hierarchical manageable representation
  net::Mlp phi_r;     // zero net when training emitted none
  net::Mlp nf_phi_m;  // single-representation baseline
  double scale_m = 1.0;
  double scale_r = 1.0;
  double scale_nf = 1.0;
  bool latent_zero = false;
};

Models load_models(const std::string& model_dir, const ExperimentConfig& cfg);

struct FlightResult {
  Telemetry telemetry;
  RunMetrics metrics;
};

FlightResult fly(const ExperimentConfig& cfg, const FlightScenario& scenario,
                 control::ControllerKind kind, std::uint64_t seed, const Models* models);

// ---- commands

struct CommandResult {
  std::vector<std::string> written;  // paths relative to the output root
  std::vector<std::string> warnings;
};

/// --out beats HMAC_OUTPUT_ROOT, which beats the config's output_dir.
std::string resolve_output_root(const ExperimentConfig& cfg, const std::string& out_flag);

CommandResult cmd_collect(const ExperimentConfig& cfg, const std::string& out_root);
CommandResult cmd_train(const ExperimentConfig& cfg, const std::string& out_root);
CommandResult cmd_fly(const ExperimentConfig& cfg, const std::string& out_root);
CommandResult cmd_report(const std::string& out_root);

/// Published hardware tracking MSEs (m^2). Documentation only, never a target.
struct ReferenceCell {
  const char* controller;
  const char* trajectory;
  double mse;
};
inline constexpr ReferenceCell kReferenceTable[] = {
    {"nf", "figure8", 0.036},
    {"hmac", "figure8", 0.027},
    {"nf", "wave", 0.059},
    {"hmac", "wave", 0.042},
};

}  // namespace hmac::experiment
