#include "hmac/pipeline.hpp"

#include <cmath>
#include <exception>

namespace hmac::pipeline {

std::size_t CollectionPlan::steps_per_sample() const {
  const double ratio = sample_period / params.dt;
  return static_cast<std::size_t>(std::llround(ratio));
}

std::size_t CollectionPlan::records_per_condition() const {
  return static_cast<std::size_t>(std::llround(duration_s / sample_period)) + 1;
}

void CollectionPlan::validate(std::size_t min_samples) const {
  params.validate();
  pid.validate();
  if (conditions.empty()) throw std::invalid_argument("CollectionPlan: no conditions");
  if (!(duration_s > 0.0)) throw std::invalid_argument("CollectionPlan: duration_s must be > 0");
  if (!(sample_period > 0.0)) throw std::invalid_argument("CollectionPlan: sample_period must be > 0");
  const double ratio = sample_period / params.dt;
  if (std::llround(ratio) < 1 || std::abs(ratio - std::llround(ratio)) > 1e-9 * ratio) {
    throw std::invalid_argument("CollectionPlan: sample_period must be a multiple of dt");
  }
  if (collector != control::ControllerKind::pid) {
    throw std::invalid_argument("CollectionPlan: only the pid collector is supported");
  }
  if (!(noise_sigma >= 0.0)) throw std::invalid_argument("CollectionPlan: noise_sigma must be >= 0");
  const std::size_t records = records_per_condition();
  if (records < min_samples + 5) {
    throw std::invalid_argument("CollectionPlan: " + std::to_string(records) +
                                " records per condition, need at least " +
                                std::to_string(min_samples + 5));
  }
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (conditions[i].cond_id == conditions[j].cond_id) {
        throw std::invalid_argument("CollectionPlan: duplicate cond_id " +
                                    std::to_string(conditions[i].cond_id));
      }
    }
  }
}

RawLog collect(const CollectionPlan& plan, std::size_t condition_index, std::uint64_t seed) {
  plan.validate(0);
  if (condition_index >= plan.conditions.size()) {
    throw std::out_of_range("collect: condition index out of range");
  }
  sim::DisturbanceCondition cond = plan.conditions[condition_index];
  const sim::SimParams& params = plan.params;
  std::mt19937_64 latent_rng(derive_seed(seed, static_cast<std::uint64_t>(cond.cond_id), 1));

  const std::size_t sub = plan.steps_per_sample();
  const std::size_t n_records = plan.records_per_condition();
  const double control_dt = static_cast<double>(sub) * params.dt;

  sim::RobotState state;
  {
    const sim::TrajectoryRef r0 = sim::gen_trajectory(plan.trajectory, 0.0);
    state.p = r0.q_d;
    state.v = r0.qd_dot;
    state.quat = sim::attitude_from_force(-params.mass * params.gravity);
  }
  control::PidState pid;
  const sim::ForceField field = [&cond, &params](double, const Vec3& p, const Vec3& v) {
    return sim::manageable_force(p, v, cond.wm, params.drag) + sim::latent_force(v, cond.wr);
  };

  RawLog log;
  log.dt = control_dt;
  log.zero_order_hold = true;
  log.records.reserve(n_records);
  for (std::size_t k = 0; k < n_records; ++k) {
    const double t = static_cast<double>(k) * control_dt;
    const sim::TrajectoryRef ref = sim::gen_trajectory(plan.trajectory, t);
    const Vec3 u = control::pid_control(state, ref, plan.pid, params, pid, control_dt);

    LogRecord rec;
    rec.t = t;
    rec.q = state.p;
    rec.q_dot = state.v;
    rec.quat = state.quat;
    rec.u_motor = state.u_motor;
    rec.u_force = u;
    rec.f_true = sim::residual_force(state, cond, params);
    log.records.push_back(rec);

    for (std::size_t s = 0; s < sub; ++s) {
      state = sim::step_dynamics(state, u, field, params);
      cond = sim::advance_latent(cond, params.dt, latent_rng);
    }
  }
  return log;
}

std::vector<train::Dataset> collect_all(const CollectionPlan& plan, std::uint64_t seed) {
  plan.validate(0);
  const std::size_t n = plan.conditions.size();
  std::vector<train::Dataset> out(n);
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      const RawLog log = collect(plan, i, seed);
      BuildOptions opt;
      opt.noise_sigma = plan.noise_sigma;
      opt.seed = derive_seed(seed, static_cast<std::uint64_t>(plan.conditions[i].cond_id), 2);
      out[i] = build_dataset(log, plan.params, plan.conditions[i].cond_id, opt);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace hmac::pipeline
