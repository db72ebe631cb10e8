#include "hmac/sim.hpp"

#include <algorithm>
#include <cmath>

namespace hmac::sim {

WindProfile wind_profile_from_string(const std::string& name) {
  if (name == "uniform") return WindProfile::uniform;
  if (name == "fan_row") return WindProfile::fan_row;
  throw std::invalid_argument("unknown wind profile: " + name);
}

std::string to_string(WindProfile profile) {
  return profile == WindProfile::uniform ? "uniform" : "fan_row";
}

Vec3 WindField::at(const Vec3& p) const {
  switch (profile) {
    case WindProfile::uniform:
      return mean;
    case WindProfile::fan_row: {
      // Three fans side by side: strongest in front of the middle fan.
      const double r = p.x() / spatial_width;
      return mean * (1.0 + spatial_gain * (std::exp(-0.5 * r * r) - 0.5));
    }
  }
  return mean;
}

Vec3 manageable_force(const Vec3& p, const Vec3& v, const WindField& wind, const DragCoeffs& drag) {
  const Vec3 rel = wind.at(p) - v;
  return drag.linear * rel + drag.quadratic * rel.norm() * rel;
}

Vec3 latent_force(const Vec3& v, const LatentProcess& wr) {
  return wr.gain * (1.0 + wr.speed_coupling * v.squaredNorm()) * wr.state;
}

Vec3 residual_force(const RobotState& state, const DisturbanceCondition& cond,
                    const SimParams& params) {
  return manageable_force(state.p, state.v, cond.wm, params.drag) + latent_force(state.v, cond.wr);
}

DisturbanceCondition advance_latent(const DisturbanceCondition& cond, double dt,
                                    std::mt19937_64& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("advance_latent: dt must be > 0");
  const LatentProcess& wr = cond.wr;
  if (!(wr.corr_time > 0.0)) throw std::invalid_argument("advance_latent: corr_time must be > 0");
  DisturbanceCondition next = cond;
  const double decay = std::exp(-dt / wr.corr_time);
  const double diffusion = wr.sigma * std::sqrt(1.0 - decay * decay);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    double x = wr.mean(i) + (wr.state(i) - wr.mean(i)) * decay;
    if (wr.sigma > 0.0) x += diffusion * normal(rng);
    next.wr.state(i) = std::clamp(x, -wr.wr_max, wr.wr_max);
  }
  return next;
}

}  // namespace hmac::sim
