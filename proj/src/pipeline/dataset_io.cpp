#include "hmac/pipeline.hpp"

#include <json.hpp>

#include <algorithm>
#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace hmac::pipeline {

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string column_header() {
  std::string h = "t";
  for (int i = 0; i < kInputDim; ++i) h += ",x" + std::to_string(i);
  for (int i = 0; i < 3; ++i) h += ",y" + std::to_string(i);
  return h;
}

double parse_double(const std::string& s, std::size_t line) {
  if (s.empty()) throw ParseError("empty field", line);
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || errno == ERANGE) {
    throw ParseError("bad number '" + s + "'", line);
  }
  return v;
}

std::string header_value(const std::string& line, const std::string& key, std::size_t lineno) {
  const std::string prefix = "# " + key + " ";
  if (line.rfind(prefix, 0) != 0) throw ParseError("expected '" + prefix + "<value>'", lineno);
  return line.substr(prefix.size());
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace

std::string dataset_to_csv(const train::Dataset& d) {
  std::string out;
  out.reserve(d.samples.size() * 15 * 24 + 128);
  out += "# hmac-dataset " + std::to_string(kDatasetFormatVersion) + "\n";
  out += "# cond_id " + std::to_string(d.cond_id) + "\n";
  out += "# dt " + fmt(d.dt) + "\n";
  out += column_header() + "\n";
  for (const auto& s : d.samples) {
    out += fmt(s.t);
    for (int i = 0; i < kInputDim; ++i) out += "," + fmt(s.x(i));
    for (int i = 0; i < 3; ++i) out += "," + fmt(s.y(i));
    out += "\n";
  }
  return out;
}

train::Dataset dataset_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&](const char* what) {
    if (!std::getline(in, line)) throw ParseError(std::string("missing ") + what, lineno + 1);
    ++lineno;
  };

  train::Dataset d;
  next("format header");
  const std::string version = header_value(line, "hmac-dataset", lineno);
  if (version != std::to_string(kDatasetFormatVersion)) {
    throw ParseError("unsupported dataset format version " + version, lineno);
  }
  next("cond_id header");
  d.cond_id = static_cast<int>(parse_double(header_value(line, "cond_id", lineno), lineno));
  next("dt header");
  d.dt = parse_double(header_value(line, "dt", lineno), lineno);
  if (!(d.dt > 0.0)) throw ParseError("dt must be > 0", lineno);
  next("column header");
  if (line != column_header()) throw ParseError("unexpected column header", lineno);

  constexpr std::size_t kCols = 1 + kInputDim + 3;
  std::vector<std::string> fields;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) throw ParseError("empty row", lineno);
    fields.clear();
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (fields.size() != kCols) {
      throw ParseError("expected " + std::to_string(kCols) + " columns, got " +
                       std::to_string(fields.size()), lineno);
    }
    train::Sample s;
    s.t = parse_double(fields[0], lineno);
    for (int i = 0; i < kInputDim; ++i) s.x(i) = parse_double(fields[1 + i], lineno);
    for (int i = 0; i < 3; ++i) s.y(i) = parse_double(fields[1 + kInputDim + i], lineno);
    if (!d.samples.empty() && !(s.t > d.samples.back().t)) {
      throw ParseError("timestamps not strictly increasing", lineno);
    }
    d.samples.push_back(s);
  }
  if (!text.empty() && text.back() != '\n') {
    throw ParseError("truncated row (no trailing newline)", lineno);
  }
  return d;
}

void save_dataset(const std::string& path, const train::Dataset& d) {
  write_file(path, dataset_to_csv(d));
}

train::Dataset load_dataset(const std::string& path) {
  try {
    return dataset_from_csv(read_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what(), e.line());
  }
}

void save_manifest(const std::string& path, const Manifest& m) {
  nlohmann::ordered_json j;
  j["format"] = "hmac-manifest";
  j["version"] = 1;
  j["seed"] = m.seed;
  j["scenario_hash"] = m.scenario_hash;
  j["conditions"] = nlohmann::ordered_json::array();
  for (const auto& c : m.conditions) {
    j["conditions"].push_back({{"cond_id", c.cond_id}, {"file", c.file}, {"rows", c.rows}});
  }
  write_file(path, j.dump(2) + "\n");
}

Manifest read_manifest(const std::string& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  Manifest m;
  try {
    if (j.at("format") != "hmac-manifest" || j.at("version") != 1) {
      throw std::runtime_error(path + ": not a version 1 manifest");
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.scenario_hash = j.at("scenario_hash").get<std::string>();
    for (const auto& c : j.at("conditions")) {
      m.conditions.push_back(
          {c.at("cond_id").get<int>(), c.at("file").get<std::string>(), c.at("rows").get<std::size_t>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(path + ": " + e.what());
  }
  std::sort(m.conditions.begin(), m.conditions.end(),
            [](const ManifestEntry& a, const ManifestEntry& b) { return a.cond_id < b.cond_id; });
  return m;
}

std::vector<train::Dataset> load_manifest(const std::string& path) {
  const Manifest m = read_manifest(path);
  const std::filesystem::path dir = std::filesystem::path(path).parent_path();
  std::vector<train::Dataset> out;
  for (const auto& c : m.conditions) {
    train::Dataset d = load_dataset((dir / c.file).string());
    if (d.cond_id != c.cond_id) {
      throw std::runtime_error(c.file + ": cond_id " + std::to_string(d.cond_id) +
                               " does not match manifest entry " + std::to_string(c.cond_id));
    }
    if (d.size() != c.rows) {
      throw std::runtime_error(c.file + ": " + std::to_string(d.size()) + " rows, manifest says " +
                               std::to_string(c.rows));
    }
    out.push_back(std::move(d));
  }
  return out;
}

std::string content_hash(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hmac::pipeline
