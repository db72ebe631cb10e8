#pragma once

// Translational quadrotor simulation: state, synthetic two-channel
// disturbance field, RK4 stepping and reference trajectories.

#include "hmac/common.hpp"

#include <functional>
#include <random>
#include <string>

namespace hmac::sim {

struct RobotState {
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec4 quat = Vec4(1.0, 0.0, 0.0, 0.0);  // (w, x, y, z)
  Vec4 u_motor = Vec4::Zero();

  /// x = [v, quat, u_motor]
  NnInput nn_input() const;
  bool finite() const;
};

struct DragCoeffs {
  double linear = 0.15;     // N per (m/s)
  double quadratic = 0.05;  // N per (m/s)^2
};

struct SimParams {
  double mass = 1.0;
  Vec3 gravity = Vec3(0.0, 0.0, -9.81);
  double dt = 0.002;
  double attitude_tau = 0.05;
  DragCoeffs drag;
  double max_thrust = 25.0;        // N at full motor command
  double motor_tilt_gain = 0.5;    // motor offset per unit quaternion tilt component

  void validate() const;
};

enum class WindProfile { uniform, fan_row };

/// Manageable channel: commanded wind field.
struct WindField {
  Vec3 mean = Vec3::Zero();
  WindProfile profile = WindProfile::uniform;
  double spatial_gain = 0.0;   // fan_row: relative strength modulation
  double spatial_width = 0.5;  // fan_row: gaussian width along x, m

  Vec3 at(const Vec3& p) const;
};

/// Latent channel: per-axis Ornstein-Uhlenbeck drift plus its force coupling.
struct LatentProcess {
  Vec3 state = Vec3::Zero();
  Vec3 mean = Vec3::Zero();
  double corr_time = 8.0;       // s, must be >= 5
  double sigma = 0.2;           // stationary standard deviation
  double wr_max = 0.6;
  double gain = 1.0;            // k_r, N per unit state
  double speed_coupling = 0.5;  // force multiplier (1 + c |v|^2)
};

struct DisturbanceCondition {
  int cond_id = 0;
  WindField wm;
  LatentProcess wr;
};

enum class TrajectoryKind { figure8, wave, hover };

TrajectoryKind trajectory_kind_from_string(const std::string& name);
std::string to_string(TrajectoryKind kind);
WindProfile wind_profile_from_string(const std::string& name);
std::string to_string(WindProfile profile);

struct TrajectorySpec {
  TrajectoryKind kind = TrajectoryKind::figure8;
  double period = 5.0;  // s
  Vec3 center = Vec3(0.0, 0.0, 1.0);
};

struct TrajectoryRef {
  Vec3 q_d = Vec3::Zero();
  Vec3 qd_dot = Vec3::Zero();
  Vec3 qd_ddot = Vec3::Zero();
  TrajectoryKind kind = TrajectoryKind::hover;
};

/// Force applied during a step as a function of (time since step start, p, v).
using ForceField = std::function<Vec3(double, const Vec3&, const Vec3&)>;

/// One RK4 step of p' = v, m v' = m g + u + f_ext with constant forces.
RobotState step_dynamics(const RobotState& state, const Vec3& u, const Vec3& f_ext,
                         const SimParams& params);

/// Same, with the external force evaluated at every RK4 stage.
RobotState step_dynamics(const RobotState& state, const Vec3& u, const ForceField& f_ext,
                         const SimParams& params);

/// Ground-truth residual f = f_m + f_r.
Vec3 residual_force(const RobotState& state, const DisturbanceCondition& cond,
                    const SimParams& params);
Vec3 manageable_force(const Vec3& p, const Vec3& v, const WindField& wind, const DragCoeffs& drag);
Vec3 latent_force(const Vec3& v, const LatentProcess& wr);

/// Exact OU discretization of the latent state over dt, clamped to +-wr_max.
DisturbanceCondition advance_latent(const DisturbanceCondition& cond, double dt,
                                    std::mt19937_64& rng);

TrajectoryRef gen_trajectory(const TrajectorySpec& spec, double t);
inline TrajectoryRef gen_trajectory(TrajectoryKind kind, double t) {
  TrajectorySpec spec;
  spec.kind = kind;
  return gen_trajectory(spec, t);
}

/// Attitude whose body z axis points along `force` (zero yaw).
Vec4 attitude_from_force(const Vec3& force);

}  // namespace hmac::sim
