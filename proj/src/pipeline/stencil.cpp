#include "hmac/pipeline.hpp"

#include <cmath>
#include <random>

namespace hmac::pipeline {

void RawLog::validate() const {
  if (records.size() < 5) {
    throw std::invalid_argument("RawLog: need at least 5 records, got " +
                                std::to_string(records.size()));
  }
  if (!(dt > 0.0)) throw std::invalid_argument("RawLog: dt must be > 0");
  for (std::size_t i = 1; i < records.size(); ++i) {
    const double step = records[i].t - records[i - 1].t;
    if (std::abs(step - dt) > 0.01 * dt) {
      throw std::invalid_argument("RawLog: non-uniform spacing at record " + std::to_string(i));
    }
  }
}

Vec3 five_point_derivative(const Vec3& m2, const Vec3& m1, const Vec3& p1, const Vec3& p2,
                           double dt) {
  return (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * dt);
}

Vec3 five_point_second_derivative(const Vec3& m2, const Vec3& m1, const Vec3& c, const Vec3& p1,
                                  const Vec3& p2, double dt) {
  return (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * dt * dt);
}

namespace {

void check_index(const RawLog& log, std::size_t i) {
  if (i < 2 || i + 2 >= log.size()) {
    throw std::out_of_range("five_point_accel: index " + std::to_string(i) +
                            " outside [2, " + std::to_string(log.size() < 3 ? 0 : log.size() - 3) +
                            "]");
  }
}

}  // namespace

Vec3 five_point_accel(const RawLog& log, std::size_t i) {
  check_index(log, i);
  const auto& r = log.records;
  return five_point_derivative(r[i - 2].q_dot, r[i - 1].q_dot, r[i + 1].q_dot, r[i + 2].q_dot,
                               log.dt);
}

Vec3 five_point_accel_from_position(const RawLog& log, std::size_t i) {
  check_index(log, i);
  const auto& r = log.records;
  return five_point_second_derivative(r[i - 2].q, r[i - 1].q, r[i].q, r[i + 1].q, r[i + 2].q,
                                      log.dt);
}

train::Dataset build_dataset(const RawLog& log, const sim::SimParams& params, int cond_id,
                             const BuildOptions& options) {
  log.validate();
  if (!(options.noise_sigma >= 0.0)) throw std::invalid_argument("build_dataset: noise_sigma must be >= 0");
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  train::Dataset d;
  d.cond_id = cond_id;
  d.dt = log.dt;
  d.samples.reserve(log.size() - 4);
  const double m = params.mass;
  for (std::size_t i = 2; i + 2 < log.size(); ++i) {
    const LogRecord& rec = log.records[i];
    const Vec3 u = log.zero_order_hold ? Vec3(0.5 * (log.records[i - 1].u_force + rec.u_force))
                                       : rec.u_force;
    Vec3 y = m * five_point_accel(log, i) - m * params.gravity - u;
    if (options.noise_sigma > 0.0) {
      for (int a = 0; a < 3; ++a) y(a) += options.noise_sigma * noise(rng);
    }
    train::Sample s;
    s.t = rec.t;
    s.x << rec.q_dot, rec.quat, rec.u_motor;
    s.y = y;
    d.samples.push_back(s);
  }
  return d;
}

}  // namespace hmac::pipeline
