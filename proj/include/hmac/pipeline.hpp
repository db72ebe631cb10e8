#pragma once

// Simulated data collection, acceleration differencing, residual labels and
// dataset persistence.

#include "hmac/control.hpp"
#include "hmac/sim.hpp"
#include "hmac/train.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace hmac::pipeline {

struct LogRecord {
  double t = 0.0;
  Vec3 q = Vec3::Zero();
  Vec3 q_dot = Vec3::Zero();
  Vec4 quat = Vec4(1.0, 0.0, 0.0, 0.0);
  Vec4 u_motor = Vec4::Zero();
  Vec3 u_force = Vec3::Zero();  // world-frame control force from t on
  Vec3 f_true = Vec3::Zero();   // simulator residual at t (diagnostics only)
};

struct RawLog {
  double dt = 0.01;
  /// Forces are held constant between records; the residual then uses the
  /// mean of the forces on either side of a sample.
  bool zero_order_hold = true;
  std::vector<LogRecord> records;

  std::size_t size() const { return records.size(); }
  /// Uniform spacing within 1% and at least 5 records.
  void validate() const;
};

/// (-f[i+2] + 8 f[i+1] - 8 f[i-1] + f[i-2]) / (12 dt)
Vec3 five_point_derivative(const Vec3& m2, const Vec3& m1, const Vec3& p1, const Vec3& p2,
                           double dt);
/// (-f[i-2] + 16 f[i-1] - 30 f[i] + 16 f[i+1] - f[i+2]) / (12 dt^2)
Vec3 five_point_second_derivative(const Vec3& m2, const Vec3& m1, const Vec3& c, const Vec3& p1,
                                  const Vec3& p2, double dt);

/// Acceleration at record i from logged velocities; 2 <= i <= size - 3.
Vec3 five_point_accel(const RawLog& log, std::size_t i);
/// Same from logged positions (cross-check).
Vec3 five_point_accel_from_position(const RawLog& log, std::size_t i);

struct BuildOptions {
  double noise_sigma = 0.005;  // N per axis
  std::uint64_t seed = 0;
};

/// y = m a - m g - u at every interior record, x = [v, quat, u_motor].
train::Dataset build_dataset(const RawLog& log, const sim::SimParams& params, int cond_id,
                             const BuildOptions& options = {});

struct CollectionPlan {
  std::vector<sim::DisturbanceCondition> conditions;
  double duration_s = 60.0;
  control::ControllerKind collector = control::ControllerKind::pid;
  control::PidGains pid;
  sim::TrajectorySpec trajectory;
  double sample_period = 0.01;
  sim::SimParams params;
  double noise_sigma = 0.005;

  /// Sample period must be a whole number of simulator steps and every
  /// condition must yield at least min_samples stencil-interior samples.
  void validate(std::size_t min_samples) const;
  std::size_t steps_per_sample() const;
  std::size_t records_per_condition() const;
};

/// Closed-loop PID flight for one condition; latent process seeded from (seed, cond_id).
RawLog collect(const CollectionPlan& plan, std::size_t condition_index, std::uint64_t seed);

/// collect + build_dataset for every condition, parallel across conditions.
std::vector<train::Dataset> collect_all(const CollectionPlan& plan, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Files

inline constexpr int kDatasetFormatVersion = 1;

std::string dataset_to_csv(const train::Dataset& d);
train::Dataset dataset_from_csv(const std::string& text);
void save_dataset(const std::string& path, const train::Dataset& d);
train::Dataset load_dataset(const std::string& path);

struct ManifestEntry {
  int cond_id = 0;
  std::string file;  // relative to the manifest's directory
  std::size_t rows = 0;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::string scenario_hash;
  std::vector<ManifestEntry> conditions;
};

void save_manifest(const std::string& path, const Manifest& m);
Manifest read_manifest(const std::string& path);
/// Datasets listed in the manifest, in ascending cond_id order.
std::vector<train::Dataset> load_manifest(const std::string& path);

/// FNV-1a 64-bit of a string, as 16 hex digits.
std::string content_hash(const std::string& text);

}  // namespace hmac::pipeline
