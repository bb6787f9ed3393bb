#pragma once

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "preg/graph.hpp"
#include "preg/matrix.hpp"
#include "preg/rng.hpp"

namespace preg {

struct Dataset {
  Graph graph;
  DenseMatrix features;             // N×F
  std::vector<std::size_t> labels;  // length N, values in [0, C)
  std::vector<std::string> class_names;  // optional, length C when present
  std::size_t num_classes = 0;
};

struct SbmConfig {
  std::size_t blocks = 4;
  std::size_t nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 16;
  double center_separation = 1.0;
  double feature_noise_sd = 1.0;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::runtime_error file_error(const std::filesystem::path& file, std::size_t line,
                                     const std::string& what) {
  std::ostringstream os;
  os << file.string() << ":" << line << ": " << what;
  return std::runtime_error(os.str());
}

// Lines of a text file with 1-based numbers; '#' comments and blanks skipped.
inline std::vector<std::pair<std::size_t, std::string>> content_lines(
    const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw std::runtime_error("cannot open " + file.string());
  std::vector<std::pair<std::size_t, std::string>> out;
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    out.emplace_back(no, line);
  }
  return out;
}

inline double parse_double(const std::string& tok, const std::filesystem::path& file,
                           std::size_t line) {
  double v = 0.0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw file_error(file, line, "malformed number '" + tok + "'");
  if (!std::isfinite(v)) throw file_error(file, line, "non-finite value '" + tok + "'");
  return v;
}

inline std::size_t parse_index(const std::string& tok, const std::filesystem::path& file,
                               std::size_t line) {
  std::size_t v = 0;
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc{} || res.ptr != tok.data() + tok.size())
    throw file_error(file, line, "malformed integer '" + tok + "'");
  return v;
}

inline std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream is(line);
  std::string t;
  while (is >> t) toks.push_back(t);
  return toks;
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Reads edges.tsv ("src<TAB>dst" per line), features.txt (F doubles per line)
// and labels.txt (one class index per line) from dir; classes.txt is optional.
inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path ffeat = dir / "features.txt";
  const fs::path flab = dir / "labels.txt";
  const fs::path fedge = dir / "edges.tsv";
  for (const fs::path& f : {ffeat, flab, fedge})
    if (!fs::exists(f)) throw std::runtime_error("missing dataset file " + f.string());

  Dataset d;
  const auto feat_lines = detail::content_lines(ffeat);
  require(!feat_lines.empty(), "features.txt is empty");
  const std::size_t N = feat_lines.size();
  std::size_t F = 0;
  for (std::size_t i = 0; i < N; ++i) {
    const auto& [no, line] = feat_lines[i];
    const auto toks = detail::split_ws(line);
    if (i == 0) {
      F = toks.size();
      require(F >= 1, "features.txt: empty first row");
      d.features = DenseMatrix(N, F);
    }
    if (toks.size() != F)
      throw detail::file_error(ffeat, no, "expected " + std::to_string(F) + " values");
    for (std::size_t j = 0; j < F; ++j)
      d.features(i, j) = detail::parse_double(toks[j], ffeat, no);
  }

  const auto lab_lines = detail::content_lines(flab);
  if (lab_lines.size() != N)
    throw std::runtime_error(flab.string() + ": expected " + std::to_string(N) +
                             " labels, found " + std::to_string(lab_lines.size()));
  for (const auto& [no, line] : lab_lines) {
    const auto toks = detail::split_ws(line);
    if (toks.size() != 1) throw detail::file_error(flab, no, "expected one label");
    d.labels.push_back(detail::parse_index(toks[0], flab, no));
  }
  for (std::size_t y : d.labels) d.num_classes = std::max(d.num_classes, y + 1);
  require(d.num_classes >= 2, "labels.txt: need at least two classes");

  EdgeList edges;
  for (const auto& [no, line] : detail::content_lines(fedge)) {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw detail::file_error(fedge, no, "expected src<TAB>dst");
    const std::size_t s = detail::parse_index(line.substr(0, tab), fedge, no);
    const std::size_t t = detail::parse_index(line.substr(tab + 1), fedge, no);
    if (s >= N || t >= N) throw detail::file_error(fedge, no, "node index out of range");
    edges.emplace_back(s, t);
  }
  d.graph = build_graph(edges, N);

  const fs::path fcls = dir / "classes.txt";
  if (fs::exists(fcls)) {
    for (const auto& [no, line] : detail::content_lines(fcls)) d.class_names.push_back(line);
    if (d.class_names.size() != d.num_classes)
      throw std::runtime_error(fcls.string() + ": expected " +
                               std::to_string(d.num_classes) + " class names");
  }
  return d;
}

// Canonical byte-deterministic form: sorted edges once per pair (src <= dst),
// shortest round-trip decimals for features.
inline void write_dataset(const Dataset& d, const std::filesystem::path& dir) {
  require(d.features.cols >= 1, "write_dataset: feature dimension must be >= 1");
  require(d.features.rows == d.graph.num_nodes && d.labels.size() == d.graph.num_nodes,
          "write_dataset: inconsistent dataset");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "edges.tsv");
    if (!out) throw std::runtime_error("cannot write " + (dir / "edges.tsv").string());
    for (const auto& [s, t] : edge_list(d.graph)) out << s << '\t' << t << '\n';
  }
  {
    std::ofstream out(dir / "features.txt");
    if (!out) throw std::runtime_error("cannot write " + (dir / "features.txt").string());
    for (std::size_t i = 0; i < d.features.rows; ++i) {
      for (std::size_t j = 0; j < d.features.cols; ++j) {
        if (j) out << ' ';
        out << detail::format_double(d.features(i, j));
      }
      out << '\n';
    }
  }
  {
    std::ofstream out(dir / "labels.txt");
    if (!out) throw std::runtime_error("cannot write " + (dir / "labels.txt").string());
    for (std::size_t y : d.labels) out << y << '\n';
  }
  if (!d.class_names.empty()) {
    std::ofstream out(dir / "classes.txt");
    if (!out) throw std::runtime_error("cannot write " + (dir / "classes.txt").string());
    for (const auto& name : d.class_names) out << name << '\n';
  }
}

// Stochastic block model: intra-block edges with probability p_in, inter-block
// with p_out; features are the block center (center_separation · e_k) plus
// Gaussian noise; labels are block ids. Deterministic for a fixed seed.
// With require_connected, up to 20 consecutive seeds are tried.
inline Dataset generate_sbm(const SbmConfig& cfg, bool require_connected = false) {
  require(cfg.blocks >= 2, "generate_sbm: need at least two blocks");
  require(cfg.nodes_per_block >= 1, "generate_sbm: need at least one node per block");
  require(cfg.p_out >= 0.0 && cfg.p_out < cfg.p_in && cfg.p_in <= 1.0,
          "generate_sbm: need 0 <= p_out < p_in <= 1");
  require(cfg.feature_noise_sd >= 0.0, "generate_sbm: noise sd must be nonnegative");
  require(cfg.feature_dim >= cfg.blocks,
          "generate_sbm: feature_dim must be >= blocks (orthogonal centers)");
  const std::size_t N = cfg.blocks * cfg.nodes_per_block;

  for (std::uint64_t attempt = 0; attempt < 20; ++attempt) {
    Rng rng(derive_seed(cfg.seed + attempt, Stream::data));
    Dataset d;
    d.num_classes = cfg.blocks;
    d.labels.resize(N);
    for (std::size_t i = 0; i < N; ++i) d.labels[i] = i / cfg.nodes_per_block;

    EdgeList edges;
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = i + 1; j < N; ++j) {
        const double p = d.labels[i] == d.labels[j] ? cfg.p_in : cfg.p_out;
        if (rng.uniform() < p) edges.emplace_back(i, j);
      }
    d.graph = build_graph(edges, N);

    d.features = DenseMatrix(N, cfg.feature_dim);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t j = 0; j < cfg.feature_dim; ++j) {
        const double center = j == d.labels[i] ? cfg.center_separation : 0.0;
        d.features(i, j) = center + cfg.feature_noise_sd * rng.normal();
      }

    if (!require_connected || is_connected(d.graph)) return d;
  }
  throw std::runtime_error("generate_sbm: no connected graph in 20 seed attempts");
}

}  // namespace preg
