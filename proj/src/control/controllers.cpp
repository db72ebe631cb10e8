#include "hmac/control.hpp"
#include "hmac/pipeline.hpp"

#include <algorithm>

namespace hmac::control {

ControllerKind controller_kind_from_string(const std::string& name) {
  if (name == "pid") return ControllerKind::pid;
  if (name == "nf") return ControllerKind::nf;
  if (name == "hmac") return ControllerKind::hmac;
  throw std::invalid_argument("unknown controller id: " + name);
}

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::pid:
      return "pid";
    case ControllerKind::nf:
      return "nf";
    case ControllerKind::hmac:
      return "hmac";
  }
  return "?";
}

Vec3 pid_control(const sim::RobotState& state, const sim::TrajectoryRef& ref,
                 const PidGains& gains, const sim::SimParams& params, PidState& pid, double dt) {
  const Vec3 e = state.p - ref.q_d;
  const Vec3 ed = state.v - ref.qd_dot;
  const double m = params.mass;
  const Vec3 u = m * ref.qd_ddot - m * params.gravity - gains.Kp * e - gains.Kd * ed -
                 gains.Ki * pid.integral;
  pid.integral += dt * e;
  for (int i = 0; i < 3; ++i) {
    pid.integral(i) = std::clamp(pid.integral(i), -gains.integrator_limit, gains.integrator_limit);
  }
  return u;
}

ResidualEstimator::ResidualEstimator(double mass, const Vec3& gravity, double dt,
                                     double noise_sigma, std::uint64_t seed)
    : mass_(mass), gravity_(gravity), dt_(dt), sigma_(noise_sigma), rng_(seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("ResidualEstimator: dt must be > 0");
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("ResidualEstimator: noise must be >= 0");
  for (int i = 0; i < 5; ++i) {
    v_[i].setZero();
    u_[i].setZero();
  }
}

void ResidualEstimator::push_velocity(const Vec3& v) {
  for (int i = 0; i < 4; ++i) {
    v_[i] = v_[i + 1];
    u_[i] = u_[i + 1];
  }
  v_[4] = v;
  u_[4].setZero();
  ++count_;
}

void ResidualEstimator::commit_force(const Vec3& u) {
  u_[4] = u;
  ++forces_;
}

void ResidualEstimator::push(const Vec3& v, const Vec3& u) {
  push_velocity(v);
  commit_force(u);
}

Vec3 ResidualEstimator::measure() {
  if (!ready()) throw std::logic_error("ResidualEstimator: fewer than 5 samples");
  const Vec3 accel = pipeline::five_point_derivative(v_[0], v_[1], v_[3], v_[4], dt_);
  const Vec3 u = 0.5 * (u_[1] + u_[2]);
  Vec3 y = mass_ * accel - mass_ * gravity_ - u;
  if (sigma_ > 0.0) {
    std::normal_distribution<double> noise(0.0, 1.0);
    for (int a = 0; a < 3; ++a) y(a) += sigma_ * noise(rng_);
  }
  return y;
}

FlightController::FlightController(const ControllerOptions& options, const sim::SimParams& params,
                                   const net::Mlp* phi_m, const net::Mlp* phi_r)
    : opt_(options),
      params_(params),
      phi_m_(phi_m),
      phi_r_(phi_r),
      estimator_(params.mass, params.gravity, options.control_dt, options.noise_sigma,
                 options.noise_seed) {
  params_.validate();
  if (!(opt_.control_dt > 0.0)) throw std::invalid_argument("FlightController: control_dt must be > 0");
  if (opt_.kind == ControllerKind::pid) {
    opt_.pid.validate();
    return;
  }
  opt_.gains.validate();
  if (!(opt_.feature_scale_m > 0.0) || !(opt_.feature_scale_r > 0.0)) {
    throw std::invalid_argument("FlightController: feature scales must be > 0");
  }
  if (phi_m_ == nullptr) throw std::invalid_argument("FlightController: phi_m is required");
  if (opt_.kind == ControllerKind::hmac && phi_r_ == nullptr) {
    throw std::invalid_argument("FlightController: phi_r is required for hmac");
  }
  const int n = opt_.kind == ControllerKind::hmac ? kCoeffs : kManageableCoeffs;
  adapt_ = AdaptState::initial(n, opt_.gains.p0);
}

Vec3 FlightController::update(const sim::RobotState& state, const sim::TrajectoryRef& ref) {
  ++ticks_;
  if (opt_.kind == ControllerKind::pid) {
    sig_ = tracking_signals(state, ref, Mat3::Zero());
    return pid_control(state, ref, opt_.pid, params_, pid_, opt_.control_dt);
  }
  sig_ = tracking_signals(state, ref, opt_.gains.Lambda_track);
  estimator_.push_velocity(state.v);

  bool ok = true;
  const net::Mlp* latent = opt_.kind == ControllerKind::hmac ? phi_r_ : nullptr;
  Eigen::MatrixXd phi = feature_matrix(*phi_m_, latent, state.nn_input(), &ok, opt_.feature_scale_m,
                                       opt_.feature_scale_r);
  if (!ok) {
    ++fallback_events_;
    phi.setZero();
  }
  phi_hist_[0] = std::move(phi_hist_[1]);
  phi_hist_[1] = std::move(phi_hist_[2]);
  phi_hist_[2] = phi;
  phi_ok_[0] = phi_ok_[1];
  phi_ok_[1] = phi_ok_[2];
  phi_ok_[2] = ok;

  const Vec3 u = composite_law(sig_, phi, adapt_.a_hat, opt_.gains, params_);

  if (estimator_.ready()) {
    const Vec3 y = estimator_.measure();
    if (ok && phi_ok_[0]) {
      adapt_ = adapt_update(adapt_, phi, phi_hist_[0], sig_.s, y, opt_.gains, opt_.control_dt);
      if (adapt_.floor_triggered) ++floor_events_;
      if (adapt_.rejected) ++rejected_;
    }
  }
  estimator_.commit_force(u);
  return u;
}

}  // namespace hmac::control
