#include "hmac/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hmac::experiment {

namespace fs = std::filesystem;

namespace {

std::uint64_t name_key(const std::string& name) {
  return std::stoull(pipeline::content_hash(name), nullptr, 16);
}

}  // namespace

Models load_models(const std::string& model_dir, const ExperimentConfig& cfg) {
  const fs::path dir(model_dir);
  for (const char* f : {"phi_m.txt", "nf_phi_m.txt", "training.json"}) {
    if (!fs::exists(dir / f)) throw ConfigError("missing model file " + (dir / f).string());
  }
  Models m;
  {
    std::ifstream in(dir / "training.json");
    std::stringstream ss;
    ss << in.rdbuf();
    try {
      const auto j = nlohmann::json::parse(ss.str());
      m.latent_zero = j.at("latent_zero").get<bool>();
      const auto& sc = j.at("feature_scale");
      m.scale_m = sc.at("phi_m").get<double>();
      m.scale_r = sc.at("phi_r").get<double>();
      m.scale_nf = sc.at("nf_phi_m").get<double>();
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error((dir / "training.json").string() + ": " + e.what());
    }
  }
  m.phi_m = net::load_mlp((dir / "phi_m.txt").string());
  m.nf_phi_m = net::load_mlp((dir / "nf_phi_m.txt").string());
  if (m.latent_zero) {
    m.phi_r = net::Mlp(cfg.nets.phi_r_dims, cfg.ssml.spectral_bound);
  } else {
    if (!fs::exists(dir / "phi_r.txt")) throw ConfigError("missing model file " + (dir / "phi_r.txt").string());
    m.phi_r = net::load_mlp((dir / "phi_r.txt").string());
  }
  if (m.phi_m.input_dim() != kInputDim || m.phi_m.output_dim() != 3 ||
      m.nf_phi_m.input_dim() != kInputDim || m.nf_phi_m.output_dim() != 3) {
    throw ConfigError("manageable model must map 11 inputs to 3 features");
  }
  if (m.phi_r.input_dim() != kInputDim || m.phi_r.output_dim() != 2) {
    throw ConfigError("latent model must map 11 inputs to 2 features");
  }
  return m;
}

FlightResult fly(const ExperimentConfig& cfg, const FlightScenario& scenario,
                 control::ControllerKind kind, std::uint64_t seed, const Models* models) {
  const sim::SimParams& params = cfg.params;
  const double ratio = cfg.sample_period / params.dt;
  const long sub = std::lround(ratio);
  if (sub < 1) throw ConfigError("control period shorter than the simulation step");
  const double control_dt = static_cast<double>(sub) * params.dt;

  const net::Mlp* phi_m = nullptr;
  const net::Mlp* phi_r = nullptr;
  if (kind != control::ControllerKind::pid) {
    if (models == nullptr) throw ConfigError("controller " + control::to_string(kind) + " needs models");
    phi_m = kind == control::ControllerKind::hmac ? &models->phi_m : &models->nf_phi_m;
    phi_r = &models->phi_r;
  }

  const std::uint64_t key = name_key(scenario.name);
  control::ControllerOptions opt;
  opt.kind = kind;
  opt.gains = cfg.gains;
  opt.pid = cfg.pid;
  opt.control_dt = control_dt;
  opt.noise_sigma = cfg.flight_noise_sigma;
  opt.noise_seed = derive_seed(seed, 200, key);
  if (models != nullptr) {
    opt.feature_scale_m = kind == control::ControllerKind::hmac ? models->scale_m : models->scale_nf;
    opt.feature_scale_r = models->scale_r;
  }
  control::FlightController ctl(opt, params, phi_m, phi_r);

  sim::DisturbanceCondition cond = cfg.condition(scenario.condition_id);
  std::mt19937_64 latent_rng(derive_seed(seed, 100, key));
  const sim::ForceField field = [&cond, &params](double, const Vec3& p, const Vec3& v) {
    return sim::manageable_force(p, v, cond.wm, params.drag) + sim::latent_force(v, cond.wr);
  };

  sim::RobotState state;
  {
    const sim::TrajectoryRef r0 = sim::gen_trajectory(scenario.trajectory, 0.0);
    state.p = r0.q_d;
    state.v = r0.qd_dot;
    state.quat = sim::attitude_from_force(-params.mass * params.gravity);
  }

  FlightResult res;
  res.telemetry.n_coeffs = kind == control::ControllerKind::pid    ? 0
                           : kind == control::ControllerKind::nf ? control::kManageableCoeffs
                                                                 : control::kCoeffs;
  const std::size_t n_ticks = static_cast<std::size_t>(std::llround(scenario.duration_s / control_dt)) + 1;
  res.telemetry.rows.reserve(n_ticks);
  bool crashed = false;
  for (std::size_t k = 0; k < n_ticks && !crashed; ++k) {
    const double t = static_cast<double>(k) * control_dt;
    const sim::TrajectoryRef ref = sim::gen_trajectory(scenario.trajectory, t);
    const Vec3 u = ctl.update(state, ref);

    TelemetryRow row;
    row.t = t;
    row.q = state.p;
    row.q_d = ref.q_d;
    row.u = u;
    if (kind != control::ControllerKind::pid) {
      const auto& a = ctl.adapt();
      row.a_hat = a.a_hat;
      row.p_trace = a.P.trace();
      row.p_min_diag = a.P.diagonal().minCoeff();
    }
    res.telemetry.rows.push_back(row);
    if (!((state.p - ref.q_d).norm() <= cfg.crash_threshold)) {
      crashed = true;
      break;
    }
    try {
      for (long s = 0; s < sub; ++s) {
        state = sim::step_dynamics(state, u, field, params);
        cond = sim::advance_latent(cond, params.dt, latent_rng);
      }
    } catch (const NumericalError&) {
      crashed = true;
    }
  }

  res.metrics = compute_metrics(res.telemetry, control_dt, cfg.psd_segment, crashed);
  res.metrics.controller = control::to_string(kind);
  res.metrics.scenario = scenario.name;
  res.metrics.trajectory = sim::to_string(scenario.trajectory.kind);
  res.metrics.seed = seed;
  res.metrics.floor_events = ctl.floor_events();
  res.metrics.fallback_events = ctl.fallback_events();
  res.metrics.rejected_updates = ctl.rejected_updates();
  return res;
}

}  // namespace hmac::experiment
