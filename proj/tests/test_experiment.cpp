#include <doctest.h>

#include "harness.hpp"
#include "hmac/experiment.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <random>

using namespace hmac;
using namespace hmac::experiment;
namespace fs = std::filesystem;

namespace {

// collect + train once on the small config; reused by the flight tests.
const fs::path& trained_small_root() {
  static const fs::path root = [] {
    const fs::path dir = harness::scratch("exp_trained");
    const auto cfg = harness::parse(harness::small_config_json(1));
    cmd_collect(cfg, dir.string());
    cmd_train(cfg, dir.string());
    return dir;
  }();
  return root;
}

std::string run_cli(const std::string& args, int* status) {
  const std::string cmd = std::string(HMAC_CLI_PATH) + " " + args + " 2>&1 1>/dev/null";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  char buf[512];
  while (fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
  const int rc = pclose(pipe);
  *status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return out;
}

double mean_norm_y(const train::Dataset& d) {
  double s = 0.0;
  for (const auto& x : d.samples) s += x.y.norm();
  return s / static_cast<double>(d.size());
}

Telemetry sinusoid_fixture(double freq, double fs_hz, int n) {
  Telemetry tel;
  tel.n_coeffs = control::kCoeffs;
  for (int i = 0; i < n; ++i) {
    TelemetryRow r;
    r.t = i / fs_hz;
    r.a_hat = Eigen::VectorXd::Zero(control::kCoeffs);
    r.a_hat(0) = std::sin(2.0 * std::numbers::pi * freq * r.t);
    r.a_hat(control::kManageableCoeffs) = 0.5 * std::sin(2.0 * std::numbers::pi * 0.25 * freq * r.t);
    tel.rows.push_back(r);
  }
  return tel;
}

}  // namespace

TEST_CASE("default config parses and validates") {
  const auto cfg = load_config(harness::default_config_path());
  CHECK(cfg.validate().empty());
  CHECK(cfg.collect_conditions.size() == 3);
  CHECK(cfg.controllers.size() == 3);
  CHECK(cfg.seeds.size() >= 5);
  CHECK(cfg.condition(3).cond_id == 3);
}

TEST_CASE("config validation rejects bad inputs") {
  auto expect_error = [](nlohmann::json j, const char* needle) {
    bool threw = false;
    try {
      harness::parse(j).validate();
    } catch (const ConfigError& e) {
      threw = true;
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
    CHECK_MESSAGE(threw, needle);
  };
  auto j = harness::small_config_json();
  j["flight"]["controllers"] = {"pid", "indi"};
  expect_error(j, "unknown controller id");

  j = harness::small_config_json();
  j["training"]["ssml"]["adapt_size"] = 50;
  expect_error(j, "training.ssml");

  j = harness::small_config_json();
  j["collection"]["conditions"] = {1};
  expect_error(j, "at least 2 conditions");

  j = harness::small_config_json();
  j["seeds"] = nlohmann::json::array();
  expect_error(j, "seed");

  j = harness::small_config_json();
  j["flight"]["scenarios"][0]["condition"] = 42;
  expect_error(j, "unknown condition id 42");

  j = harness::small_config_json();
  j["gains"]["Kp"] = 3.0;
  expect_error(j, "unknown key 'Kp'");

  j = harness::small_config_json();
  j["gains"]["lambda_m"] = -1.0;
  expect_error(j, "gains");

  CHECK_THROWS_AS(parse_config("{ not json"), ConfigError);
}

TEST_CASE("gain matrices accept scalar, diagonal and full forms") {
  auto j = harness::small_config_json();
  j["gains"]["K"] = {1.0, 2.0, 3.0};
  j["gains"]["R"] = {{0.2, 0.01, 0.0}, {0.01, 0.2, 0.0}, {0.0, 0.0, 0.2}};
  j["gains"]["Q_r"] = 0.3;
  const auto cfg = harness::parse(j);
  CHECK(cfg.gains.K(1, 1) == 2.0);
  CHECK(cfg.gains.K(0, 1) == 0.0);
  CHECK(cfg.gains.R(0, 1) == 0.01);
  CHECK(cfg.gains.Q_r.rows() == 6);
  CHECK(cfg.gains.Q_r(5, 5) == 0.3);
}

TEST_CASE("channel-ordering warning surfaces through validation") {
  auto j = harness::small_config_json();
  j["gains"]["Q_r"] = 1.0;
  const auto warnings = harness::parse(j).validate();
  REQUIRE(!warnings.empty());
  CHECK(warnings.front().find("gains") == 0);
}

TEST_CASE("output root: flag beats environment beats config") {
  auto cfg = harness::parse(harness::small_config_json());
  cfg.output_dir = "from_config";
  ::unsetenv("HMAC_OUTPUT_ROOT");
  CHECK(resolve_output_root(cfg, "") == "from_config");
  ::setenv("HMAC_OUTPUT_ROOT", "/tmp/from_env", 1);
  CHECK(resolve_output_root(cfg, "") == "/tmp/from_env");
  CHECK(resolve_output_root(cfg, "flag") == "flag");
  ::unsetenv("HMAC_OUTPUT_ROOT");
}

TEST_CASE("collect: three one-minute conditions, deterministic, calm below windy") {
  const auto cfg = load_config(harness::default_config_path());
  const fs::path a = harness::scratch("collect_a"), b = harness::scratch("collect_b");
  cmd_collect(cfg, a.string());
  cmd_collect(cfg, b.string());
  const auto datasets = pipeline::load_manifest((a / "data" / "manifest.json").string());
  REQUIRE(datasets.size() == 3);
  for (const auto& d : datasets) {
    // 60 s at 100 Hz is 6001 records; the stencil drops two at each end.
    CHECK(d.size() == 5997);
  }
  CHECK(harness::snapshot(a) == harness::snapshot(b));

  const double calm = mean_norm_y(datasets[0]);
  CHECK(datasets[0].cond_id == 0);
  CHECK(calm < mean_norm_y(datasets[1]));
  CHECK(calm < mean_norm_y(datasets[2]));
  // Residual without wind is the latent channel plus noise: bounded by the
  // latent clamp (times its speed coupling) and a few noise sigmas.
  const auto& lp = cfg.condition(0).wr;
  CHECK(calm < std::sqrt(3.0) * lp.wr_max * lp.gain * (1.0 + lp.speed_coupling) + 5 * 0.005);
}

TEST_CASE("train: outer_iters = 0 emits the manageable model only, reruns are bitwise identical") {
  const auto cfg = harness::parse(harness::small_config_json(0));
  const fs::path a = harness::scratch("train0_a"), b = harness::scratch("train0_b");
  for (const auto& dir : {a, b}) {
    cmd_collect(cfg, dir.string());
    const auto res = cmd_train(cfg, dir.string());
    CHECK(std::find(res.written.begin(), res.written.end(), "models/phi_r.txt") == res.written.end());
  }
  CHECK(!fs::exists(a / "models" / "phi_r.txt"));
  const auto info = nlohmann::json::parse(harness::read_file(a / "models" / "training.json"));
  CHECK(info.at("latent_zero").get<bool>());
  CHECK(info.at("outer_completed").get<int>() == 0);
  CHECK(harness::read_file(a / "models" / "phi_m.txt") == harness::read_file(a / "models" / "nf_phi_m.txt"));
  CHECK(harness::snapshot(a / "models") == harness::snapshot(b / "models"));

  const Models m = load_models((a / "models").string(), cfg);
  CHECK(m.latent_zero);
  CHECK(m.phi_r.parameters().isZero(0.0));
}

TEST_CASE("train: outer-iteration totals decrease until early stopping") {
  const fs::path root = trained_small_root();
  auto cfg = harness::parse(harness::small_config_json(4));
  const fs::path dir = harness::scratch("train_hist");
  fs::copy(root / "data", dir / "data");
  cmd_train(cfg, dir.string());
  const auto info = nlohmann::json::parse(harness::read_file(dir / "models" / "training.json"));
  const bool stopped = info.at("early_stopped").get<bool>();

  std::istringstream in(harness::read_file(dir / "models" / "history.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<double> totals;
  while (std::getline(in, line)) {
    if (line.find(",total,") == std::string::npos) continue;
    const auto first = line.find(',');
    const auto second = line.find(',', first + 1);
    const auto third = line.find(',', second + 1);
    totals.push_back(std::stod(line.substr(second + 1, third - second - 1)));
  }
  REQUIRE(totals.size() >= 2);
  const std::size_t checked = stopped ? totals.size() - 1 : totals.size();
  for (std::size_t i = 1; i < checked; ++i) CHECK(totals[i] < totals[i - 1]);
  CHECK(totals.size() == static_cast<std::size_t>(info.at("outer_completed").get<int>()) + 1);
}

TEST_CASE("train refuses datasets from another scenario") {
  const fs::path root = trained_small_root();
  auto j = harness::small_config_json(1);
  j["conditions"][1]["wind"]["mean"] = {1.1, 0.0, 0.0};
  const fs::path dir = harness::scratch("train_stale");
  fs::copy(root / "data", dir / "data");
  CHECK_THROWS_AS(cmd_train(harness::parse(j), dir.string()), ConfigError);
}

TEST_CASE("fly: missing model files are rejected before any run") {
  const auto cfg = harness::parse(harness::small_config_json());
  const fs::path dir = harness::scratch("fly_nomodels");
  CHECK_THROWS_AS(cmd_fly(cfg, dir.string()), ConfigError);
  CHECK(!fs::exists(dir / "runs"));

  auto pid_only = harness::small_config_json();
  pid_only["flight"]["controllers"] = {"pid"};
  const auto res = cmd_fly(harness::parse(pid_only), dir.string());
  CHECK(res.written.size() == 2 * 2);
}

TEST_CASE("fly: hmac without disturbance tracks to 1e-4 m^2") {
  const fs::path root = trained_small_root();
  auto j = harness::small_config_json(1);
  j["conditions"].push_back({{"id", 9},
                             {"wind", {{"mean", {0.0, 0.0, 0.0}}}},
                             {"latent", {{"sigma", 0.0}, {"state", {0.0, 0.0, 0.0}}}}});
  const auto cfg = harness::parse(j);
  const Models models = load_models((root / "models").string(), cfg);
  for (auto kind : {sim::TrajectoryKind::hover, sim::TrajectoryKind::figure8}) {
    FlightScenario s;
    s.name = "calm";
    s.trajectory.kind = kind;
    s.condition_id = 9;
    s.duration_s = 20.0;
    const auto r = fly(cfg, s, control::ControllerKind::hmac, 1, &models);
    REQUIRE(r.metrics.mse.has_value());
    CHECK(!r.metrics.crashed);
    CHECK(*r.metrics.mse < 1e-4);
    CHECK(r.metrics.floor_events == 0);
    CHECK(r.metrics.fallback_events == 0);
  }
}

TEST_CASE("fly: position error beyond the threshold is a crash with missing mse") {
  auto j = harness::small_config_json();
  j["flight"]["crash_threshold"] = 0.01;
  j["pid"]["Kp"] = 0.5;
  j["pid"]["Kd"] = 0.5;
  j["pid"]["Ki"] = 0.0;
  const auto cfg = harness::parse(j);
  const auto r = fly(cfg, cfg.scenarios[0], control::ControllerKind::pid, 1, nullptr);
  CHECK(r.metrics.crashed);
  CHECK(!r.metrics.mse.has_value());
  CHECK(r.metrics.max_error > 0.01);
  CHECK(r.telemetry.rows.size() < 1001);
}

TEST_CASE("telemetry and metrics files round trip exactly") {
  const auto cfg = harness::parse(harness::small_config_json());
  const Models models = load_models((trained_small_root() / "models").string(), cfg);
  const auto r = fly(cfg, cfg.scenarios[0], control::ControllerKind::hmac, 3, &models);
  const std::string csv = telemetry_to_csv(r.telemetry);
  const Telemetry back = telemetry_from_csv(csv);
  REQUIRE(back.rows.size() == r.telemetry.rows.size());
  CHECK(back.n_coeffs == control::kCoeffs);
  CHECK(telemetry_to_csv(back) == csv);
  for (std::size_t i = 0; i < back.rows.size(); i += 97) {
    CHECK(back.rows[i].q == r.telemetry.rows[i].q);
    CHECK(back.rows[i].a_hat == r.telemetry.rows[i].a_hat);
  }
  const RunMetrics m = metrics_from_json(metrics_to_json(r.metrics));
  CHECK(m.mse == r.metrics.mse);
  CHECK(m.rmse_axis == r.metrics.rmse_axis);
  CHECK(m.centroid_r == r.metrics.centroid_r);
  CHECK(metrics_to_json(m) == metrics_to_json(r.metrics));
  CHECK_THROWS_AS(telemetry_from_csv(csv.substr(0, csv.size() - 3)), ParseError);
}

TEST_CASE("compute_metrics against a hand-built error series") {
  Telemetry tel;
  for (int i = 0; i < 4; ++i) {
    TelemetryRow r;
    r.t = i * 0.01;
    r.q_d = Vec3(1.0, 2.0, 3.0);
    r.q = r.q_d + Vec3(0.1 * i, 0.0, -0.2);
    tel.rows.push_back(r);
  }
  const RunMetrics m = compute_metrics(tel, 0.01, 8, false);
  // squared norms: 0.04, 0.05, 0.08, 0.13
  CHECK(*m.mse == doctest::Approx(0.075).epsilon(1e-12));
  CHECK(m.rmse_axis(0) == doctest::Approx(std::sqrt(0.14 / 4)).epsilon(1e-12));
  CHECK(m.rmse_axis(2) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(m.max_error == doctest::Approx(std::sqrt(0.13)).epsilon(1e-12));
  CHECK(!m.centroid_m.has_value());
}

TEST_CASE("welch psd: white noise integrates to its variance") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.7);
  std::vector<double> x(1 << 16);
  for (double& v : x) v = nd(rng);
  const double fs_hz = 100.0;
  const Psd p = welch_psd(x, fs_hz, 256);
  REQUIRE(p.freq.size() == 129);
  double area = 0.0;
  for (double v : p.power) area += v * fs_hz / 256;
  CHECK(area == doctest::Approx(0.49).epsilon(0.03));
  // flat spectrum: centroid near the middle of (0, fs/2]
  CHECK(*spectral_centroid(p) == doctest::Approx(25.0).epsilon(0.03));
}

TEST_CASE("welch psd: a 1 Hz sinusoid peaks at 1 Hz within one bin") {
  const double fs_hz = 100.0;
  const Telemetry tel = sinusoid_fixture(1.0, fs_hz, 6000);
  std::vector<double> col;
  for (const auto& r : tel.rows) col.push_back(r.a_hat(0));
  for (int seg : {512, 1000, 2048}) {
    const Psd p = welch_psd(col, fs_hz, seg);
    const auto peak = std::max_element(p.power.begin(), p.power.end()) - p.power.begin();
    const double bin = fs_hz / seg;
    CHECK(std::abs(p.freq[peak] - 1.0) <= bin);
  }
  const RunMetrics m = compute_metrics(tel, 1.0 / fs_hz, 2048, false);
  CHECK(*m.centroid_r < *m.centroid_m);
  CHECK(*m.centroid_m == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("report: no runs is an explicit error") {
  const fs::path dir = harness::scratch("report_empty");
  bool threw = false;
  try {
    cmd_report(dir.string());
  } catch (const std::runtime_error& e) {
    threw = true;
    CHECK(std::string(e.what()).find("no runs found") != std::string::npos);
  }
  CHECK(threw);
}

TEST_CASE("report: psd fixture, exact summary values, crash cells") {
  const fs::path dir = harness::scratch("report_fixture");
  const double fs_hz = 100.0;
  const Telemetry tel = sinusoid_fixture(1.0, fs_hz, 4000);
  RunMetrics m = compute_metrics(tel, 1.0 / fs_hz, 1024, false);
  m.controller = "hmac";
  m.scenario = "figure8_drift";
  m.trajectory = "figure8";
  m.seed = 7;
  m.mse = 0.1 / 3.0;
  harness::write_file(dir / "runs/figure8_drift/hmac/seed_7/telemetry.csv", telemetry_to_csv(tel));
  harness::write_file(dir / "runs/figure8_drift/hmac/seed_7/metrics.json", metrics_to_json(m));
  RunMetrics nf = m;
  nf.controller = "nf";
  nf.mse = 0.2 / 3.0;
  Telemetry tel_nf = tel;
  tel_nf.n_coeffs = control::kManageableCoeffs;
  for (auto& r : tel_nf.rows) r.a_hat.conservativeResize(control::kManageableCoeffs);
  harness::write_file(dir / "runs/figure8_drift/nf/seed_7/telemetry.csv", telemetry_to_csv(tel_nf));
  harness::write_file(dir / "runs/figure8_drift/nf/seed_7/metrics.json", metrics_to_json(nf));
  RunMetrics pid = m;
  pid.controller = "pid";
  pid.crashed = true;
  pid.mse.reset();
  pid.centroid_m.reset();
  pid.centroid_r.reset();
  harness::write_file(dir / "runs/figure8_drift/pid/seed_7/metrics.json", metrics_to_json(pid));

  const auto res = cmd_report(dir.string());
  CHECK(!res.warnings.empty());  // pid telemetry and residual inputs are absent

  const std::string summary = harness::read_file(dir / "report/summary.csv");
  char want[128];
  std::snprintf(want, sizeof want, "hmac,%.17g\n", *m.mse);
  CHECK(summary.find(want) != std::string::npos);
  CHECK(summary.find("pid,crash\n") != std::string::npos);
  CHECK(summary.find("controller,figure8_drift\n") == 0);
  // rows ordered pid, nf, hmac
  CHECK(summary.find("pid,") < summary.find("nf,"));
  CHECK(summary.find("nf,") < summary.find("hmac,"));

  std::istringstream runs(harness::read_file(dir / "report/runs.csv"));
  std::string line;
  std::getline(runs, line);
  int rows = 0;
  while (std::getline(runs, line)) {
    ++rows;
    if (line.find(",hmac,") == std::string::npos) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
    CHECK(std::stod(f[4]) == *m.mse);
    CHECK(std::stod(f[11]) == *m.centroid_m);
    CHECK(std::stod(f[12]) == *m.centroid_r);
  }
  CHECK(rows == 3);

  const std::string ratio = harness::read_file(dir / "report/ratio.csv");
  CHECK(ratio.find("figure8_drift,figure8,0.5,0.75") != std::string::npos);

  std::istringstream psd(harness::read_file(dir / "report/ahat/figure8_drift_hmac_seed7_psd.csv"));
  std::getline(psd, line);
  double best = -1.0, best_f = 0.0;
  while (std::getline(psd, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const double f = std::stod(line.substr(0, c1));
    const double pm = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
    if (pm > best) {
      best = pm;
      best_f = f;
    }
  }
  CHECK(std::abs(best_f - 1.0) <= fs_hz / 1024);
  CHECK(fs::exists(dir / "report/trajectory/figure8_drift_nf_seed7.csv"));
}

TEST_CASE("cli: errors are json lines on stderr with nonzero exit") {
  int status = 0;
  std::string err = run_cli("fly --config /nonexistent.json", &status);
  CHECK(status != 0);
  auto j = nlohmann::json::parse(err.substr(0, err.find('\n')));
  CHECK(j.at("level") == "error");
  CHECK(j.at("command") == "fly");
  CHECK(j.at("kind") == "config");

  err = run_cli("launch --config x.json", &status);
  CHECK(status != 0);
  j = nlohmann::json::parse(err.substr(0, err.find('\n')));
  CHECK(j.at("kind") == "usage");

  const fs::path dir = harness::scratch("cli_bad");
  auto bad = harness::small_config_json();
  bad["flight"]["controllers"] = {"hmac", "lqr"};
  harness::write_file(dir / "bad.json", bad.dump());
  err = run_cli("collect --config " + (dir / "bad.json").string() + " --out " + dir.string(), &status);
  CHECK(status == 2);
  j = nlohmann::json::parse(err.substr(0, err.find('\n')));
  CHECK(std::string(j.at("message")).find("lqr") != std::string::npos);

  err = run_cli("report --config " + harness::default_config_path() + " --out " + (dir / "empty").string(),
                &status);
  CHECK(status != 0);
  CHECK(err.find("no runs found") != std::string::npos);
}

TEST_CASE("cli: --seed list and env output root") {
  const fs::path dir = harness::scratch("cli_seed");
  auto j = harness::small_config_json();
  j["flight"]["controllers"] = {"pid"};
  harness::write_file(dir / "cfg.json", j.dump());
  ::setenv("HMAC_OUTPUT_ROOT", (dir / "env_root").c_str(), 1);
  int status = 0;
  run_cli("fly --config " + (dir / "cfg.json").string() + " --seed 11,12,13", &status);
  ::unsetenv("HMAC_OUTPUT_ROOT");
  CHECK(status == 0);
  for (int s : {11, 12, 13}) {
    CHECK(fs::exists(dir / "env_root/runs/figure8_drift/pid" / ("seed_" + std::to_string(s)) / "metrics.json"));
  }
  CHECK(!fs::exists(dir / "env_root/runs/figure8_drift/pid/seed_1"));
}
