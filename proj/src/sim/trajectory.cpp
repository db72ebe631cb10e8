#include "hmac/sim.hpp"

#include <cmath>
#include <numbers>

namespace hmac::sim {

TrajectoryKind trajectory_kind_from_string(const std::string& name) {
  if (name == "figure8") return TrajectoryKind::figure8;
  if (name == "wave") return TrajectoryKind::wave;
  if (name == "hover") return TrajectoryKind::hover;
  throw std::invalid_argument("unknown trajectory kind: " + name);
}

std::string to_string(TrajectoryKind kind) {
  switch (kind) {
    case TrajectoryKind::figure8: return "figure8";
    case TrajectoryKind::wave: return "wave";
    case TrajectoryKind::hover: return "hover";
  }
  return "unknown";
}

namespace {

// Smoothed triangle wave spanning [-amp, amp]: amp * asin(rho sin th) / asin(rho).
constexpr double kTriangleSharpness = 0.9;

struct Scalar3 {
  double value, first, second;
};

Scalar3 smooth_triangle(double amp, double omega, double t) {
  const double rho = kTriangleSharpness;
  const double scale = amp / std::asin(rho);
  const double th = omega * t;
  const double s = rho * std::sin(th);
  const double ds = rho * omega * std::cos(th);
  const double dds = -rho * omega * omega * std::sin(th);
  const double one_minus = 1.0 - s * s;
  const double root = std::sqrt(one_minus);
  return {scale * std::asin(s), scale * ds / root,
          scale * (dds / root + ds * ds * s / (one_minus * root))};
}

}  // namespace

TrajectoryRef gen_trajectory(const TrajectorySpec& spec, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("gen_trajectory: t must be >= 0");
  if (!(spec.period > 0.0)) throw std::invalid_argument("gen_trajectory: period must be > 0");
  TrajectoryRef ref;
  ref.kind = spec.kind;
  ref.q_d = spec.center;
  const double w = 2.0 * std::numbers::pi / spec.period;
  switch (spec.kind) {
    case TrajectoryKind::hover:
      break;
    case TrajectoryKind::figure8: {
      // 1.0 m along x, 0.5 m along y.
      const double ax = 0.5, ay = 0.25;
      ref.q_d.x() += ax * std::sin(w * t);
      ref.q_d.y() += ay * std::sin(2.0 * w * t);
      ref.qd_dot.x() = ax * w * std::cos(w * t);
      ref.qd_dot.y() = 2.0 * ay * w * std::cos(2.0 * w * t);
      ref.qd_ddot.x() = -ax * w * w * std::sin(w * t);
      ref.qd_ddot.y() = -4.0 * ay * w * w * std::sin(2.0 * w * t);
      break;
    }
    case TrajectoryKind::wave: {
      // 0.8 m x 0.8 m: fast sine along x, slow smoothed sweep along y.
      const double ax = 0.4;
      ref.q_d.x() += ax * std::sin(w * t);
      ref.qd_dot.x() = ax * w * std::cos(w * t);
      ref.qd_ddot.x() = -ax * w * w * std::sin(w * t);
      const Scalar3 y = smooth_triangle(0.4, 0.5 * w, t);
      ref.q_d.y() += y.value;
      ref.qd_dot.y() = y.first;
      ref.qd_ddot.y() = y.second;
      break;
    }
  }
  return ref;
}

}  // namespace hmac::sim
