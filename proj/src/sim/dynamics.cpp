#include "hmac/sim.hpp"

#include <algorithm>
#include <cmath>

namespace hmac::sim {

NnInput RobotState::nn_input() const {
  NnInput x;
  x << v, quat, u_motor;
  return x;
}

bool RobotState::finite() const {
  return p.allFinite() && v.allFinite() && quat.allFinite() && u_motor.allFinite();
}

void SimParams::validate() const {
  if (!(mass > 0.0)) throw std::invalid_argument("SimParams: mass must be > 0");
  if (!(dt > 0.0)) throw std::invalid_argument("SimParams: dt must be > 0");
  if (!(attitude_tau > 0.0)) throw std::invalid_argument("SimParams: attitude_tau must be > 0");
  if (!(max_thrust > 0.0)) throw std::invalid_argument("SimParams: max_thrust must be > 0");
  if (!gravity.allFinite()) throw std::invalid_argument("SimParams: gravity must be finite");
}

Vec4 attitude_from_force(const Vec3& force) {
  const double n = force.norm();
  if (!(n > 1e-12)) return Vec4(1.0, 0.0, 0.0, 0.0);
  const Vec3 b3 = force / n;
  // Shortest rotation taking e_z onto b3: axis e_z x b3 = (-b3_y, b3_x, 0).
  Vec4 q(1.0 + b3.z(), -b3.y(), b3.x(), 0.0);
  const double qn = q.norm();
  if (qn < 1e-9) return Vec4(0.0, 1.0, 0.0, 0.0);  // thrust straight down
  return q / qn;
}

namespace {

struct Derivative {
  Vec3 dp;
  Vec3 dv;
};

Derivative eval(const Vec3& v, const Vec3& total_force, double mass) {
  return {v, total_force / mass};
}

Vec4 relax_attitude(const Vec4& current, const Vec3& u, const SimParams& params) {
  Vec4 target = attitude_from_force(u);
  if (current.dot(target) < 0.0) target = -target;
  const double decay = std::exp(-params.dt / params.attitude_tau);
  Vec4 q = target + (current - target) * decay;
  return q / q.norm();
}

Vec4 motor_map(const Vec3& u, const Vec4& quat, const SimParams& params) {
  const double thrust = u.norm() / params.max_thrust;
  const double roll = params.motor_tilt_gain * quat(1);
  const double pitch = params.motor_tilt_gain * quat(2);
  Vec4 m(thrust - roll + pitch, thrust - roll - pitch, thrust + roll - pitch,
         thrust + roll + pitch);
  for (int i = 0; i < 4; ++i) m(i) = std::clamp(m(i), 0.0, 1.0);
  return m;
}

void check_inputs(const RobotState& state, const Vec3& u, const SimParams& params) {
  params.validate();
  if (!state.finite()) throw NumericalError("step_dynamics: non-finite state");
  if (!u.allFinite()) throw NumericalError("step_dynamics: non-finite control force");
}

}  // namespace

RobotState step_dynamics(const RobotState& state, const Vec3& u, const ForceField& f_ext,
                         const SimParams& params) {
  check_inputs(state, u, params);
  const double h = params.dt;
  const double m = params.mass;
  const Vec3 weight = m * params.gravity;

  auto stage = [&](double t_off, const Vec3& p, const Vec3& v) {
    const Vec3 f = f_ext(t_off, p, v);
    if (!f.allFinite()) throw NumericalError("step_dynamics: non-finite external force");
    return eval(v, weight + u + f, m);
  };

  const Derivative k1 = stage(0.0, state.p, state.v);
  const Derivative k2 = stage(0.5 * h, state.p + 0.5 * h * k1.dp, state.v + 0.5 * h * k1.dv);
  const Derivative k3 = stage(0.5 * h, state.p + 0.5 * h * k2.dp, state.v + 0.5 * h * k2.dv);
  const Derivative k4 = stage(h, state.p + h * k3.dp, state.v + h * k3.dv);

  RobotState next = state;
  next.p = state.p + (h / 6.0) * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
  next.v = state.v + (h / 6.0) * (k1.dv + 2.0 * k2.dv + 2.0 * k3.dv + k4.dv);
  next.quat = relax_attitude(state.quat, u, params);
  next.u_motor = motor_map(u, next.quat, params);
  if (!next.finite()) throw NumericalError("step_dynamics: integration produced non-finite state");
  return next;
}

RobotState step_dynamics(const RobotState& state, const Vec3& u, const Vec3& f_ext,
                         const SimParams& params) {
  if (!f_ext.allFinite()) throw NumericalError("step_dynamics: non-finite external force");
  return step_dynamics(
      state, u, [&f_ext](double, const Vec3&, const Vec3&) { return f_ext; }, params);
}

}  // namespace hmac::sim
