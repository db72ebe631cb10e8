#include "hmac/experiment.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace hmac::experiment {

using nlohmann::json;

namespace {

// Rejects keys outside `allowed` so typos do not silently fall back to defaults.
void check_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!ok.count(it.key())) throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
void read(const json& obj, const char* key, const std::string& where, T& out) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

Vec3 read_vec3(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) throw ConfigError(where + ": expected 3 numbers");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected 3 numbers");
    v(i) = j[i].get<double>();
  }
  return v;
}

void read_vec3(const json& obj, const char* key, const std::string& where, Vec3& out) {
  if (obj.contains(key)) out = read_vec3(obj.at(key), where + "." + key);
}

// scalar -> s I, list of n -> diagonal, n lists of n -> full matrix
Eigen::MatrixXd read_matrix(const json& j, int n, const std::string& where) {
  if (j.is_number()) return j.get<double>() * Eigen::MatrixXd::Identity(n, n);
  if (!j.is_array() || static_cast<int>(j.size()) != n) {
    throw ConfigError(where + ": expected a number, " + std::to_string(n) + " numbers or an " +
                      std::to_string(n) + "x" + std::to_string(n) + " matrix");
  }
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  if (j[0].is_number()) {
    for (int i = 0; i < n; ++i) {
      if (!j[i].is_number()) throw ConfigError(where + ": mixed diagonal entries");
      m(i, i) = j[i].get<double>();
    }
    return m;
  }
  for (int r = 0; r < n; ++r) {
    if (!j[r].is_array() || static_cast<int>(j[r].size()) != n) throw ConfigError(where + ": bad row");
    for (int c = 0; c < n; ++c) {
      if (!j[r][c].is_number()) throw ConfigError(where + ": bad entry");
      m(r, c) = j[r][c].get<double>();
    }
  }
  return m;
}

void read_mat3(const json& obj, const char* key, const std::string& where, Mat3& out) {
  if (obj.contains(key)) out = read_matrix(obj.at(key), 3, where + "." + key);
}

void read_matx(const json& obj, const char* key, int n, const std::string& where,
               Eigen::MatrixXd& out) {
  if (obj.contains(key)) out = read_matrix(obj.at(key), n, where + "." + key);
}

sim::TrajectorySpec read_trajectory(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "period", "center"});
  sim::TrajectorySpec spec;
  if (j.contains("kind")) {
    std::string kind;
    read(j, "kind", where, kind);
    try {
      spec.kind = sim::trajectory_kind_from_string(kind);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + ".kind: " + e.what());
    }
  }
  read(j, "period", where, spec.period);
  read_vec3(j, "center", where, spec.center);
  return spec;
}

sim::DisturbanceCondition read_condition(const json& j, const std::string& where) {
  check_keys(j, where, {"id", "wind", "latent"});
  sim::DisturbanceCondition c;
  if (!j.contains("id")) throw ConfigError(where + ": missing id");
  read(j, "id", where, c.cond_id);
  if (j.contains("wind")) {
    const json& w = j.at("wind");
    const std::string ww = where + ".wind";
    check_keys(w, ww, {"mean", "profile", "spatial_gain", "spatial_width"});
    read_vec3(w, "mean", ww, c.wm.mean);
    if (w.contains("profile")) {
      std::string p;
      read(w, "profile", ww, p);
      try {
        c.wm.profile = sim::wind_profile_from_string(p);
      } catch (const std::invalid_argument& e) {
        throw ConfigError(ww + ".profile: " + e.what());
      }
    }
    read(w, "spatial_gain", ww, c.wm.spatial_gain);
    read(w, "spatial_width", ww, c.wm.spatial_width);
  }
  if (j.contains("latent")) {
    const json& l = j.at("latent");
    const std::string lw = where + ".latent";
    check_keys(l, lw, {"state", "mean", "corr_time", "sigma", "wr_max", "gain", "speed_coupling"});
    read_vec3(l, "state", lw, c.wr.state);
    read_vec3(l, "mean", lw, c.wr.mean);
    read(l, "corr_time", lw, c.wr.corr_time);
    read(l, "sigma", lw, c.wr.sigma);
    read(l, "wr_max", lw, c.wr.wr_max);
    read(l, "gain", lw, c.wr.gain);
    read(l, "speed_coupling", lw, c.wr.speed_coupling);
  }
  return c;
}

json vec_json(const Vec3& v) { return json::array({v(0), v(1), v(2)}); }

json mat_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json trajectory_json(const sim::TrajectorySpec& s) {
  return {{"kind", sim::to_string(s.kind)}, {"period", s.period}, {"center", vec_json(s.center)}};
}

std::string canonical_scenario(const ExperimentConfig& c) {
  json j;
  j["sim"] = {{"mass", c.params.mass},
              {"gravity", vec_json(c.params.gravity)},
              {"dt", c.params.dt},
              {"attitude_tau", c.params.attitude_tau},
              {"drag", {{"linear", c.params.drag.linear}, {"quadratic", c.params.drag.quadratic}}},
              {"max_thrust", c.params.max_thrust},
              {"motor_tilt_gain", c.params.motor_tilt_gain}};
  json conds = json::array();
  for (const auto& d : c.conditions) {
    conds.push_back({{"id", d.cond_id},
                     {"wind",
                      {{"mean", vec_json(d.wm.mean)},
                       {"profile", sim::to_string(d.wm.profile)},
                       {"spatial_gain", d.wm.spatial_gain},
                       {"spatial_width", d.wm.spatial_width}}},
                     {"latent",
                      {{"state", vec_json(d.wr.state)},
                       {"mean", vec_json(d.wr.mean)},
                       {"corr_time", d.wr.corr_time},
                       {"sigma", d.wr.sigma},
                       {"wr_max", d.wr.wr_max},
                       {"gain", d.wr.gain},
                       {"speed_coupling", d.wr.speed_coupling}}}});
  }
  j["conditions"] = conds;
  j["collection"] = {{"conditions", c.collect_conditions},
                     {"duration_s", c.collect_duration_s},
                     {"sample_period", c.sample_period},
                     {"trajectory", trajectory_json(c.collect_trajectory)},
                     {"noise_sigma", c.collect_noise_sigma}};
  j["pid"] = {{"Kp", mat_json(c.pid.Kp)},
              {"Kd", mat_json(c.pid.Kd)},
              {"Ki", mat_json(c.pid.Ki)},
              {"integrator_limit", c.pid.integrator_limit}};
  return j.dump();
}

}  // namespace

const sim::DisturbanceCondition& ExperimentConfig::condition(int id) const {
  for (const auto& c : conditions) {
    if (c.cond_id == id) return c;
  }
  throw ConfigError("unknown condition id " + std::to_string(id));
}

pipeline::CollectionPlan ExperimentConfig::collection_plan() const {
  pipeline::CollectionPlan plan;
  for (int id : collect_conditions) plan.conditions.push_back(condition(id));
  plan.duration_s = collect_duration_s;
  plan.sample_period = sample_period;
  plan.trajectory = collect_trajectory;
  plan.params = params;
  plan.pid = pid;
  plan.noise_sigma = collect_noise_sigma;
  return plan;
}

std::string ExperimentConfig::scenario_hash() const { return pipeline::content_hash(scenario_canonical); }

std::vector<std::string> ExperimentConfig::validate() const {
  std::vector<std::string> warnings;
  auto wrap = [](const char* section, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError(std::string(section) + ": " + e.what());
    }
  };
  wrap("sim", [&] { params.validate(); });
  if (conditions.empty()) throw ConfigError("conditions: at least one condition is required");
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    const auto& c = conditions[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (conditions[j].cond_id == c.cond_id) {
        throw ConfigError("conditions: duplicate id " + std::to_string(c.cond_id));
      }
    }
    if (!(c.wr.corr_time >= 5.0)) throw ConfigError("conditions: latent corr_time must be >= 5 s");
    if (!(c.wr.sigma >= 0.0) || !(c.wr.wr_max > 0.0)) {
      throw ConfigError("conditions: latent sigma must be >= 0 and wr_max > 0");
    }
  }
  if (collect_conditions.size() < 2) {
    throw ConfigError("collection.conditions: training needs at least 2 conditions");
  }
  for (int id : collect_conditions) condition(id);
  wrap("pid", [&] { pid.validate(); });
  wrap("collection", [&] {
    collection_plan().validate(static_cast<std::size_t>(ssml.window));
  });
  wrap("training.daiml", [&] { daiml.validate(); });
  wrap("training.ssml", [&] { ssml.validate(); });
  if (outer_iters < 0) throw ConfigError("training.outer_iters must be >= 0");
  if (nets.phi_m_dims.size() < 2 || nets.phi_m_dims.front() != kInputDim ||
      nets.phi_m_dims.back() != 3) {
    throw ConfigError("training.phi_m_dims must run from 11 inputs to 3 outputs");
  }
  if (nets.phi_r_dims.size() < 2 || nets.phi_r_dims.front() != kInputDim ||
      nets.phi_r_dims.back() != 2) {
    throw ConfigError("training.phi_r_dims must run from 11 inputs to 2 outputs");
  }
  for (int d : nets.phi_m_dims) if (d < 1) throw ConfigError("training.phi_m_dims: bad width");
  for (int d : nets.phi_r_dims) if (d < 1) throw ConfigError("training.phi_r_dims: bad width");
  wrap("gains", [&] {
    for (auto& w : gains.validate()) warnings.push_back("gains: " + w);
  });
  if (controllers.empty()) throw ConfigError("flight.controllers: empty");
  if (scenarios.empty()) throw ConfigError("flight.scenarios: empty");
  for (std::size_t i = 0; i < scenarios.size(); ++i) {
    const auto& s = scenarios[i];
    if (s.name.empty() || s.name.find_first_of("/\\ ") != std::string::npos) {
      throw ConfigError("flight.scenarios: names must be non-empty without spaces or slashes");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (scenarios[j].name == s.name) throw ConfigError("flight.scenarios: duplicate " + s.name);
    }
    condition(s.condition_id);
    if (!(s.duration_s > 0.0)) throw ConfigError("flight.scenarios." + s.name + ": duration_s must be > 0");
    if (!(s.trajectory.period > 0.0)) throw ConfigError("flight.scenarios." + s.name + ": period must be > 0");
  }
  if (!(crash_threshold > 0.0)) throw ConfigError("flight.crash_threshold must be > 0");
  if (!(flight_noise_sigma >= 0.0)) throw ConfigError("flight.noise_sigma must be >= 0");
  if (psd_segment < 8) throw ConfigError("flight.psd_segment must be >= 8");
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  return warnings;
}

ExperimentConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check_keys(j, "config",
             {"sim", "conditions", "collection", "pid", "training", "gains", "flight", "seeds",
              "output_dir"});
  ExperimentConfig c;

  if (j.contains("sim")) {
    const json& s = j.at("sim");
    check_keys(s, "sim",
               {"mass", "gravity", "dt", "attitude_tau", "drag", "max_thrust", "motor_tilt_gain"});
    read(s, "mass", "sim", c.params.mass);
    read_vec3(s, "gravity", "sim", c.params.gravity);
    read(s, "dt", "sim", c.params.dt);
    read(s, "attitude_tau", "sim", c.params.attitude_tau);
    read(s, "max_thrust", "sim", c.params.max_thrust);
    read(s, "motor_tilt_gain", "sim", c.params.motor_tilt_gain);
    if (s.contains("drag")) {
      check_keys(s.at("drag"), "sim.drag", {"linear", "quadratic"});
      read(s.at("drag"), "linear", "sim.drag", c.params.drag.linear);
      read(s.at("drag"), "quadratic", "sim.drag", c.params.drag.quadratic);
    }
  }

  if (j.contains("conditions")) {
    if (!j.at("conditions").is_array()) throw ConfigError("conditions: expected a list");
    int i = 0;
    for (const auto& cj : j.at("conditions")) {
      c.conditions.push_back(read_condition(cj, "conditions[" + std::to_string(i++) + "]"));
    }
  }

  if (j.contains("collection")) {
    const json& s = j.at("collection");
    check_keys(s, "collection", {"conditions", "duration_s", "sample_period", "trajectory", "noise_sigma"});
    read(s, "conditions", "collection", c.collect_conditions);
    read(s, "duration_s", "collection", c.collect_duration_s);
    read(s, "sample_period", "collection", c.sample_period);
    read(s, "noise_sigma", "collection", c.collect_noise_sigma);
    if (s.contains("trajectory")) c.collect_trajectory = read_trajectory(s.at("trajectory"), "collection.trajectory");
  } else {
    for (const auto& d : c.conditions) c.collect_conditions.push_back(d.cond_id);
  }

  if (j.contains("pid")) {
    const json& s = j.at("pid");
    check_keys(s, "pid", {"Kp", "Kd", "Ki", "integrator_limit"});
    read_mat3(s, "Kp", "pid", c.pid.Kp);
    read_mat3(s, "Kd", "pid", c.pid.Kd);
    read_mat3(s, "Ki", "pid", c.pid.Ki);
    read(s, "integrator_limit", "pid", c.pid.integrator_limit);
  }

  if (j.contains("training")) {
    const json& s = j.at("training");
    check_keys(s, "training",
               {"outer_iters", "phi_m_dims", "phi_r_dims", "normalize_features", "daiml", "ssml"});
    read(s, "outer_iters", "training", c.outer_iters);
    read(s, "phi_m_dims", "training", c.nets.phi_m_dims);
    read(s, "phi_r_dims", "training", c.nets.phi_r_dims);
    read(s, "normalize_features", "training", c.normalize_features);
    if (s.contains("daiml")) {
      const json& d = s.at("daiml");
      const std::string w = "training.daiml";
      check_keys(d, w,
                 {"alpha", "lr_phi", "lr_disc", "epochs_per_round", "n_warmup_epochs", "batch_size",
                  "damping", "gamma", "spectral_bound", "disc_hidden"});
      read(d, "alpha", w, c.daiml.alpha);
      read(d, "lr_phi", w, c.daiml.lr_phi);
      read(d, "lr_disc", w, c.daiml.lr_disc);
      read(d, "epochs_per_round", w, c.daiml.epochs_per_round);
      read(d, "n_warmup_epochs", w, c.daiml.n_warmup_epochs);
      read(d, "batch_size", w, c.daiml.batch_size);
      read(d, "damping", w, c.daiml.damping);
      read(d, "gamma", w, c.daiml.gamma);
      read(d, "spectral_bound", w, c.daiml.spectral_bound);
      read(d, "disc_hidden", w, c.daiml.disc_hidden);
    }
    if (s.contains("ssml")) {
      const json& d = s.at("ssml");
      const std::string w = "training.ssml";
      check_keys(d, w,
                 {"window", "adapt_size", "gamma", "w_initial", "w_increment", "w_cap", "lr",
                  "epochs_per_round", "damping", "spectral_bound"});
      read(d, "window", w, c.ssml.window);
      read(d, "adapt_size", w, c.ssml.adapt_size);
      read(d, "gamma", w, c.ssml.gamma);
      read(d, "w_initial", w, c.ssml.w_initial);
      read(d, "w_increment", w, c.ssml.w_increment);
      read(d, "w_cap", w, c.ssml.w_cap);
      read(d, "lr", w, c.ssml.lr);
      read(d, "epochs_per_round", w, c.ssml.epochs_per_round);
      read(d, "damping", w, c.ssml.damping);
      read(d, "spectral_bound", w, c.ssml.spectral_bound);
    }
  }

  if (j.contains("gains")) {
    const json& s = j.at("gains");
    check_keys(s, "gains", {"K", "Lambda_track", "R", "Q_m", "Q_r", "lambda_m", "lambda_r", "p0"});
    read_mat3(s, "K", "gains", c.gains.K);
    read_mat3(s, "Lambda_track", "gains", c.gains.Lambda_track);
    read_mat3(s, "R", "gains", c.gains.R);
    read_matx(s, "Q_m", control::kManageableCoeffs, "gains", c.gains.Q_m);
    read_matx(s, "Q_r", control::kLatentCoeffs, "gains", c.gains.Q_r);
    read(s, "lambda_m", "gains", c.gains.lambda_m);
    read(s, "lambda_r", "gains", c.gains.lambda_r);
    read(s, "p0", "gains", c.gains.p0);
  }

  if (j.contains("flight")) {
    const json& s = j.at("flight");
    check_keys(s, "flight", {"controllers", "scenarios", "crash_threshold", "noise_sigma", "psd_segment"});
    if (s.contains("controllers")) {
      std::vector<std::string> names;
      read(s, "controllers", "flight", names);
      for (const auto& n : names) {
        try {
          c.controllers.push_back(control::controller_kind_from_string(n));
        } catch (const std::invalid_argument& e) {
          throw ConfigError(std::string("flight.controllers: ") + e.what());
        }
      }
    }
    if (s.contains("scenarios")) {
      if (!s.at("scenarios").is_array()) throw ConfigError("flight.scenarios: expected a list");
      int i = 0;
      for (const auto& sj : s.at("scenarios")) {
        const std::string w = "flight.scenarios[" + std::to_string(i++) + "]";
        check_keys(sj, w, {"name", "trajectory", "condition", "duration_s"});
        FlightScenario fs;
        read(sj, "name", w, fs.name);
        read(sj, "condition", w, fs.condition_id);
        read(sj, "duration_s", w, fs.duration_s);
        if (sj.contains("trajectory")) fs.trajectory = read_trajectory(sj.at("trajectory"), w + ".trajectory");
        c.scenarios.push_back(fs);
      }
    }
    read(s, "crash_threshold", "flight", c.crash_threshold);
    read(s, "noise_sigma", "flight", c.flight_noise_sigma);
    read(s, "psd_segment", "flight", c.psd_segment);
  }

  read(j, "seeds", "config", c.seeds);
  read(j, "output_dir", "config", c.output_dir);
  c.scenario_canonical = canonical_scenario(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace hmac::experiment
