#include "hmac/net.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace hmac::net {

namespace {

constexpr const char* kMagic = "hmac-mlp-model";

void put_double(std::ostringstream& os, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  os << buf;
}

struct LineReader {
  std::istringstream in;
  std::size_t line_no = 0;

  explicit LineReader(const std::string& text) : in(text) {}

  std::string next(const char* expected_what) {
    std::string line;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    throw ParseError(std::string("model file truncated, expected ") + expected_what, line_no + 1);
  }
};

std::istringstream expect_keyword(const std::string& line, const std::string& keyword,
                                  std::size_t line_no) {
  std::istringstream ls(line);
  std::string word;
  ls >> word;
  if (word != keyword) {
    throw ParseError("model file: expected '" + keyword + "', found '" + word + "'", line_no);
  }
  return ls;
}

double parse_double(std::istringstream& ls, std::size_t line_no) {
  std::string tok;
  if (!(ls >> tok)) throw ParseError("model file: missing number", line_no);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(tok, &used);
  } catch (const std::exception&) {
    throw ParseError("model file: bad number '" + tok + "'", line_no);
  }
  if (used != tok.size()) throw ParseError("model file: bad number '" + tok + "'", line_no);
  return v;
}

void expect_end_of_line(std::istringstream& ls, std::size_t line_no) {
  std::string extra;
  if (ls >> extra) throw ParseError("model file: unexpected trailing token '" + extra + "'", line_no);
}

}  // namespace

std::string to_text(const Mlp& net) {
  std::ostringstream os;
  os << kMagic << ' ' << kModelFormatVersion << '\n';
  os << "dims";
  for (int d : net.dims()) os << ' ' << d;
  os << '\n';
  os << "spectral_bound ";
  put_double(os, net.spectral_bound());
  os << '\n';
  for (const auto& [key, value] : net.metadata) os << "meta " << key << ' ' << value << '\n';
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const auto& layer = net.layers()[l];
    os << "layer " << l << ' ' << layer.weight.rows() << ' ' << layer.weight.cols() << '\n';
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      os << 'w';
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        os << ' ';
        put_double(os, layer.weight(r, c));
      }
      os << '\n';
    }
    os << 'b';
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      os << ' ';
      put_double(os, layer.bias(r));
    }
    os << '\n';
  }
  os << "end\n";
  return os.str();
}

Mlp from_text(const std::string& text) {
  LineReader reader(text);
  {
    std::string line = reader.next("header");
    auto ls = expect_keyword(line, kMagic, reader.line_no);
    int version = 0;
    if (!(ls >> version)) throw ParseError("model file: missing format version", reader.line_no);
    if (version != kModelFormatVersion) {
      throw ParseError("model file: unsupported format version " + std::to_string(version),
                       reader.line_no);
    }
  }
  std::vector<int> dims;
  {
    std::string line = reader.next("dims");
    auto ls = expect_keyword(line, "dims", reader.line_no);
    int d = 0;
    while (ls >> d) dims.push_back(d);
    if (dims.size() < 2) throw ParseError("model file: need at least two dims", reader.line_no);
  }
  double bound = 0.0;
  {
    std::string line = reader.next("spectral_bound");
    auto ls = expect_keyword(line, "spectral_bound", reader.line_no);
    bound = parse_double(ls, reader.line_no);
  }
  Mlp net;
  try {
    net = Mlp(dims, bound);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("model file: ") + e.what(), reader.line_no);
  }
  std::string line = reader.next("layer");
  while (line.rfind("meta ", 0) == 0) {
    const std::string rest = line.substr(5);
    const auto space = rest.find(' ');
    if (space == std::string::npos) throw ParseError("model file: meta without value", reader.line_no);
    net.metadata[rest.substr(0, space)] = rest.substr(space + 1);
    line = reader.next("layer");
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto& layer = net.layers()[l];
    {
      auto ls = expect_keyword(line, "layer", reader.line_no);
      std::size_t idx = 0;
      Eigen::Index rows = 0, cols = 0;
      if (!(ls >> idx >> rows >> cols) || idx != l || rows != layer.weight.rows() ||
          cols != layer.weight.cols()) {
        throw ParseError("model file: layer header inconsistent with dims", reader.line_no);
      }
    }
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      line = reader.next("weight row");
      auto ls = expect_keyword(line, "w", reader.line_no);
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = parse_double(ls, reader.line_no);
      }
      expect_end_of_line(ls, reader.line_no);
    }
    line = reader.next("bias");
    auto ls = expect_keyword(line, "b", reader.line_no);
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = parse_double(ls, reader.line_no);
    expect_end_of_line(ls, reader.line_no);
    line = reader.next(l + 1 < net.num_layers() ? "layer" : "end");
  }
  expect_keyword(line, "end", reader.line_no);
  if (!net.finite()) throw ParseError("model file: non-finite parameter", reader.line_no);
  return net;
}

void save_mlp(const std::string& path, const Mlp& net) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
  out << to_text(net);
  if (!out) throw std::runtime_error("save_mlp: write failed for " + path);
}

Mlp load_mlp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

}  // namespace hmac::net
