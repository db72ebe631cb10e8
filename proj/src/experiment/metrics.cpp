#include "hmac/experiment.hpp"

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include <cerrno>
#include <cmath>
#include <complex>
#include <cstdio>
#include <cstdlib>
#include <numbers>
#include <sstream>

namespace hmac::experiment {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma - start));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  if (s.empty()) throw ParseError("empty field", line);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) throw ParseError("bad number '" + s + "'", line);
  return v;
}

std::string telemetry_header(int n) {
  std::string h = "t,qx,qy,qz,qdx,qdy,qdz,ux,uy,uz";
  for (int i = 0; i < n; ++i) h += ",a" + std::to_string(i);
  return h + ",p_trace,p_min_diag";
}

}  // namespace

std::string telemetry_to_csv(const Telemetry& tel) {
  std::string out = telemetry_header(tel.n_coeffs) + "\n";
  out.reserve(tel.rows.size() * (12 + tel.n_coeffs) * 24 + out.size());
  for (const auto& r : tel.rows) {
    out += fmt(r.t);
    for (int i = 0; i < 3; ++i) out += "," + fmt(r.q(i));
    for (int i = 0; i < 3; ++i) out += "," + fmt(r.q_d(i));
    for (int i = 0; i < 3; ++i) out += "," + fmt(r.u(i));
    for (int i = 0; i < tel.n_coeffs; ++i) out += "," + fmt(r.a_hat(i));
    out += "," + fmt(r.p_trace) + "," + fmt(r.p_min_diag) + "\n";
  }
  return out;
}

Telemetry telemetry_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError("missing telemetry header", lineno);
  const auto head = split(line);
  if (head.size() < 12) throw ParseError("telemetry header too short", lineno);
  Telemetry tel;
  tel.n_coeffs = static_cast<int>(head.size()) - 12;
  if (line != telemetry_header(tel.n_coeffs)) throw ParseError("unexpected telemetry header", lineno);
  while (std::getline(in, line)) {
    ++lineno;
    const auto f = split(line);
    if (f.size() != head.size()) throw ParseError("wrong column count", lineno);
    TelemetryRow r;
    std::size_t k = 0;
    r.t = parse_double(f[k++], lineno);
    for (int i = 0; i < 3; ++i) r.q(i) = parse_double(f[k++], lineno);
    for (int i = 0; i < 3; ++i) r.q_d(i) = parse_double(f[k++], lineno);
    for (int i = 0; i < 3; ++i) r.u(i) = parse_double(f[k++], lineno);
    r.a_hat.resize(tel.n_coeffs);
    for (int i = 0; i < tel.n_coeffs; ++i) r.a_hat(i) = parse_double(f[k++], lineno);
    r.p_trace = parse_double(f[k++], lineno);
    r.p_min_diag = parse_double(f[k++], lineno);
    tel.rows.push_back(std::move(r));
  }
  if (!text.empty() && text.back() != '\n') throw ParseError("truncated telemetry row", lineno);
  return tel;
}

std::string metrics_to_json(const RunMetrics& m) {
  nlohmann::ordered_json j;
  j["controller"] = m.controller;
  j["scenario"] = m.scenario;
  j["trajectory"] = m.trajectory;
  j["seed"] = m.seed;
  j["control_dt"] = m.control_dt;
  j["psd_segment"] = m.psd_segment;
  j["mse"] = m.mse ? nlohmann::ordered_json(*m.mse) : nlohmann::ordered_json(nullptr);
  j["rmse_axis"] = {m.rmse_axis(0), m.rmse_axis(1), m.rmse_axis(2)};
  j["max_error"] = m.max_error;
  j["crashed"] = m.crashed;
  j["ticks"] = m.ticks;
  j["centroid_m"] = m.centroid_m ? nlohmann::ordered_json(*m.centroid_m) : nlohmann::ordered_json(nullptr);
  j["centroid_r"] = m.centroid_r ? nlohmann::ordered_json(*m.centroid_r) : nlohmann::ordered_json(nullptr);
  j["floor_events"] = m.floor_events;
  j["fallback_events"] = m.fallback_events;
  j["rejected_updates"] = m.rejected_updates;
  return j.dump(2) + "\n";
}

RunMetrics metrics_from_json(const std::string& text) {
  RunMetrics m;
  try {
    const auto j = nlohmann::json::parse(text);
    auto opt = [&](const char* key) -> std::optional<double> {
      if (j.at(key).is_null()) return std::nullopt;
      return j.at(key).get<double>();
    };
    m.controller = j.at("controller").get<std::string>();
    m.scenario = j.at("scenario").get<std::string>();
    m.trajectory = j.at("trajectory").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.control_dt = j.at("control_dt").get<double>();
    m.psd_segment = j.at("psd_segment").get<int>();
    m.mse = opt("mse");
    for (int i = 0; i < 3; ++i) m.rmse_axis(i) = j.at("rmse_axis").at(i).get<double>();
    m.max_error = j.at("max_error").get<double>();
    m.crashed = j.at("crashed").get<bool>();
    m.ticks = j.at("ticks").get<std::size_t>();
    m.centroid_m = opt("centroid_m");
    m.centroid_r = opt("centroid_r");
    m.floor_events = j.at("floor_events").get<long>();
    m.fallback_events = j.at("fallback_events").get<long>();
    m.rejected_updates = j.at("rejected_updates").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("bad metrics file: ") + e.what());
  }
  return m;
}

Psd welch_psd(const std::vector<double>& x, double fs, int segment) {
  if (!(fs > 0.0)) throw std::invalid_argument("welch_psd: fs must be > 0");
  if (segment < 2) throw std::invalid_argument("welch_psd: segment must be >= 2");
  Psd psd;
  const std::size_t n = x.size();
  if (n < 2) return psd;
  const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(segment), n);
  const std::size_t step = std::max<std::size_t>(1, len / 2);
  const std::size_t bins = len / 2 + 1;

  std::vector<double> window(len);
  double wsum2 = 0.0;
  for (std::size_t i = 0; i < len; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(len));
    wsum2 += window[i] * window[i];
  }
  psd.freq.resize(bins);
  psd.power.assign(bins, 0.0);
  for (std::size_t k = 0; k < bins; ++k) psd.freq[k] = fs * static_cast<double>(k) / static_cast<double>(len);

  Eigen::FFT<double> fft;
  std::vector<double> seg(len);
  std::vector<std::complex<double>> spec;
  std::size_t count = 0;
  for (std::size_t start = 0; start + len <= n; start += step) {
    double mean = 0.0;
    for (std::size_t i = 0; i < len; ++i) mean += x[start + i];
    mean /= static_cast<double>(len);
    for (std::size_t i = 0; i < len; ++i) seg[i] = (x[start + i] - mean) * window[i];
    fft.fwd(spec, seg);
    for (std::size_t k = 0; k < bins; ++k) {
      double p = std::norm(spec[k]) / (fs * wsum2);
      const bool edge = k == 0 || (len % 2 == 0 && k == len / 2);
      if (!edge) p *= 2.0;
      psd.power[k] += p;
    }
    ++count;
  }
  for (double& p : psd.power) p /= static_cast<double>(count);
  return psd;
}

std::optional<double> spectral_centroid(const Psd& psd) {
  double num = 0.0, den = 0.0;
  for (std::size_t k = 1; k < psd.freq.size(); ++k) {
    num += psd.freq[k] * psd.power[k];
    den += psd.power[k];
  }
  if (!(den > 0.0)) return std::nullopt;
  return num / den;
}

Psd coefficient_block_psd(const Telemetry& tel, int begin, int end, double fs, int segment) {
  if (begin < 0 || end > tel.n_coeffs || begin >= end) {
    throw std::out_of_range("coefficient_block_psd: bad column range");
  }
  Psd total;
  std::vector<double> series(tel.rows.size());
  for (int c = begin; c < end; ++c) {
    for (std::size_t i = 0; i < tel.rows.size(); ++i) series[i] = tel.rows[i].a_hat(c);
    const Psd p = welch_psd(series, fs, segment);
    if (total.freq.empty()) {
      total = p;
    } else {
      for (std::size_t k = 0; k < p.power.size(); ++k) total.power[k] += p.power[k];
    }
  }
  return total;
}

RunMetrics compute_metrics(const Telemetry& tel, double control_dt, int psd_segment, bool crashed) {
  RunMetrics m;
  m.control_dt = control_dt;
  m.psd_segment = psd_segment;
  m.crashed = crashed;
  m.ticks = tel.rows.size();
  if (tel.rows.empty()) return m;
  double sq = 0.0;
  Vec3 axis = Vec3::Zero();
  for (const auto& r : tel.rows) {
    const Vec3 e = r.q - r.q_d;
    sq += e.squaredNorm();
    axis += e.cwiseAbs2();
    m.max_error = std::max(m.max_error, e.norm());
  }
  const double n = static_cast<double>(tel.rows.size());
  if (!crashed) m.mse = sq / n;
  m.rmse_axis = (axis / n).cwiseSqrt();
  const double fs = 1.0 / control_dt;
  if (tel.n_coeffs >= control::kManageableCoeffs && tel.rows.size() >= 2) {
    m.centroid_m = spectral_centroid(
        coefficient_block_psd(tel, 0, control::kManageableCoeffs, fs, psd_segment));
  }
  if (tel.n_coeffs >= control::kCoeffs && tel.rows.size() >= 2) {
    m.centroid_r = spectral_centroid(
        coefficient_block_psd(tel, control::kManageableCoeffs, control::kCoeffs, fs, psd_segment));
  }
  return m;
}

}  // namespace hmac::experiment
