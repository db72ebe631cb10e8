#pragma once

// Online composite adaptive control on top of the learned representations,
// and the PID / manageable-only baselines.

#include "hmac/common.hpp"
#include "hmac/net.hpp"
#include "hmac/sim.hpp"

#include <random>
#include <string>
#include <vector>

namespace hmac::control {

inline constexpr int kManageableCoeffs = 9;  // 3 axes x 3
inline constexpr int kLatentCoeffs = 6;      // 3 axes x 2
inline constexpr int kCoeffs = kManageableCoeffs + kLatentCoeffs;
inline constexpr double kEigenFloor = 1e-8;

using PhiMatrix = Eigen::Matrix<double, 3, kCoeffs>;

struct GainSet {
  Mat3 K = 8.0 * Mat3::Identity();
  Mat3 Lambda_track = 4.0 * Mat3::Identity();
  Mat3 R = 0.1 * Mat3::Identity();
  Eigen::MatrixXd Q_m = 0.5 * Eigen::MatrixXd::Identity(kManageableCoeffs, kManageableCoeffs);
  Eigen::MatrixXd Q_r = 0.05 * Eigen::MatrixXd::Identity(kLatentCoeffs, kLatentCoeffs);
  double lambda_m = 0.1;
  double lambda_r = 0.01;
  double p0 = 0.1;  // P(0) = p0 I

  /// Throws on invalid gains; returns advisory warnings (channel ordering).
  std::vector<std::string> validate() const;
};

struct PidGains {
  Mat3 Kp = 32.0 * Mat3::Identity();
  Mat3 Kd = 12.0 * Mat3::Identity();
  Mat3 Ki = 4.0 * Mat3::Identity();
  double integrator_limit = 0.5;  // per axis, m s

  void validate() const;
};

/// Coefficients [a_m (axis-major, 3 each), a_r (axis-major, 2 each)] and P.
/// The manageable-only baseline uses the first 9 entries alone.
struct AdaptState {
  Eigen::VectorXd a_hat;
  Eigen::MatrixXd P;
  bool floor_triggered = false;  // last update needed the eigenvalue floor
  bool rejected = false;         // last update was non-finite and discarded

  static AdaptState initial(int n_coeffs, double p0);
  int size() const { return static_cast<int>(a_hat.size()); }
  /// P symmetric to 1e-9, positive definite, everything finite.
  bool valid() const;
};

struct TrackingSignals {
  Vec3 q_tilde = Vec3::Zero();
  Vec3 q_tilde_dot = Vec3::Zero();
  Vec3 s = Vec3::Zero();
  Vec3 q_r_dot = Vec3::Zero();
  Vec3 q_r_ddot = Vec3::Zero();
};

TrackingSignals tracking_signals(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                                 const Mat3& lambda_track);

/// Row j holds phi_m in the a_m,j slot (columns 3j..3j+2) and phi_r in the
/// a_r,j slot (columns 9+2j, 10+2j).
PhiMatrix compose_phi(const Vec3& phi_m_out, const Eigen::Vector2d& phi_r_out);
/// Manageable block only (3 x 9).
Eigen::MatrixXd compose_phi_manageable(const Vec3& phi_m_out);

/// Feature matrix at x for the given nets (phi_r == nullptr gives the 3 x 9
/// manageable-only layout), each network output multiplied by its scale.
/// Sets *finite to false on non-finite outputs.
Eigen::MatrixXd feature_matrix(const net::Mlp& phi_m, const net::Mlp* phi_r, const NnInput& x,
                               bool* finite, double scale_m = 1.0, double scale_r = 1.0);

/// u = m q''_r - m g - K s - Phi a_hat. `fallback` is set when the network
/// output was non-finite and the learned term was dropped.
Vec3 hmac_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                  const net::Mlp& phi_m, const net::Mlp& phi_r, const AdaptState& adapt,
                  const GainSet& gains, const sim::SimParams& params, bool* fallback = nullptr);

/// Same law with the latent channel removed (a_hat of size 9).
Vec3 nf_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                const net::Mlp& phi_m, const AdaptState& adapt, const GainSet& gains,
                const sim::SimParams& params, bool* fallback = nullptr);

/// Control law for an already evaluated feature matrix (3 x n).
Vec3 composite_law(const TrackingSignals& sig, const Eigen::MatrixXd& phi,
                   const Eigen::VectorXd& a_hat, const GainSet& gains,
                   const sim::SimParams& params);

/// One explicit Euler step of
///   a' = -L a - P Phi^T R^-1 (Phi a - y) + P Phi^T s
///   P' = -2 L P + Q - P Phi^T R^-1 Phi P
/// followed by symmetrization and, only if needed, an eigenvalue floor.
/// Phi is 3 x 15 (or 3 x 9 for the manageable-only state).
AdaptState adapt_update(const AdaptState& adapt, const Eigen::MatrixXd& phi, const Vec3& s,
                        const Vec3& y, const GainSet& gains, double dt);

/// Variant with separate regressors for the tracking term (current state)
/// and the prediction term (the state y was measured at).
AdaptState adapt_update(const AdaptState& adapt, const Eigen::MatrixXd& phi_track,
                        const Eigen::MatrixXd& phi_meas, const Vec3& s, const Vec3& y,
                        const GainSet& gains, double dt);

/// Integrator state for pid_control.
struct PidState {
  Vec3 integral = Vec3::Zero();
};

/// u = m q''_d - m g - Kp e - Kd e' - Ki int(e); advances the clamped integrator by dt.
Vec3 pid_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                 const PidGains& gains, const sim::SimParams& params, PidState& pid, double dt);

enum class ControllerKind { pid, nf, hmac };
ControllerKind controller_kind_from_string(const std::string& name);
std::string to_string(ControllerKind kind);

/// Residual force estimate from the last five control ticks, centred two
/// ticks back: m * stencil(v) - m g - mean of the two forces held around
/// that instant, plus measurement noise.
class ResidualEstimator {
 public:
  ResidualEstimator(double mass, const Vec3& gravity, double dt, double noise_sigma,
                    std::uint64_t seed);

  /// Push the velocity of the current tick and the force applied from it on.
  void push(const Vec3& v, const Vec3& u);
  /// Velocity of the current tick; the force follows with commit_force().
  void push_velocity(const Vec3& v);
  void commit_force(const Vec3& u);

  /// Measurement for the sample two ticks back, available after 5 velocities.
  bool ready() const { return count_ >= 5; }
  Vec3 measure();

 private:
  double mass_;
  Vec3 gravity_;
  double dt_;
  double sigma_;
  std::mt19937_64 rng_;
  Vec3 v_[5];
  Vec3 u_[5];
  long count_ = 0;
  long forces_ = 0;
};

struct ControllerOptions {
  ControllerKind kind = ControllerKind::hmac;
  GainSet gains;
  PidGains pid;
  double control_dt = 0.01;
  double noise_sigma = 0.005;
  std::uint64_t noise_seed = 0;
  double feature_scale_m = 1.0;  // multiplies phi_m outputs
  double feature_scale_r = 1.0;  // multiplies phi_r outputs
};

/// Per-tick state machine used in closed loop.
class FlightController {
 public:
  /// phi_m / phi_r must outlive the controller; phi_r is ignored unless kind == hmac.
  FlightController(const ControllerOptions& options, const sim::SimParams& params,
                   const net::Mlp* phi_m, const net::Mlp* phi_r);

  Vec3 update(const sim::RobotState& state, const sim::TrajectoryRef& ref);

  ControllerKind kind() const { return opt_.kind; }
  const AdaptState& adapt() const { return adapt_; }
  const TrackingSignals& last_signals() const { return sig_; }
  long floor_events() const { return floor_events_; }
  long fallback_events() const { return fallback_events_; }
  long rejected_updates() const { return rejected_; }

 private:
  ControllerOptions opt_;
  sim::SimParams params_;
  const net::Mlp* phi_m_;
  const net::Mlp* phi_r_;
  AdaptState adapt_;
  PidState pid_;
  ResidualEstimator estimator_;
  TrackingSignals sig_;
  Eigen::MatrixXd phi_hist_[3];  // feature matrices of the last three ticks
  bool phi_ok_[3] = {false, false, false};
  long ticks_ = 0;
  long floor_events_ = 0;
  long fallback_events_ = 0;
  long rejected_ = 0;
};

}  // namespace hmac::control
