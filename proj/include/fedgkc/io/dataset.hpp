#pragma once

// On-disk dataset layout:
//   meta.json     {"name": str, "n": int, "f": int, "C": int}
//   edges.txt     one "u v" pair per line, zero based, undirected, no duplicates
//   features.txt  n lines of f space-separated reals
//   labels.txt    n lines of one integer in [0, C)

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "fedgkc/graph.hpp"
#include "fedgkc/io/text.hpp"
#include "fedgkc/rng.hpp"

namespace fedgkc::io {

enum class DatasetErrc {
  MissingFile = 1,
  CountMismatch = 2,
  IndexOutOfRange = 3,
  SelfLoop = 4,
  DuplicateEdge = 5,
  Malformed = 6,
};

inline std::string_view errc_name(DatasetErrc c) {
  switch (c) {
    case DatasetErrc::MissingFile: return "missing-file";
    case DatasetErrc::CountMismatch: return "count-mismatch";
    case DatasetErrc::IndexOutOfRange: return "index-out-of-range";
    case DatasetErrc::SelfLoop: return "self-loop";
    case DatasetErrc::DuplicateEdge: return "duplicate-edge";
    case DatasetErrc::Malformed: return "malformed";
  }
  return "?";
}

class DatasetError : public std::runtime_error {
 public:
  DatasetError(DatasetErrc code, std::string file, std::size_t line, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + file + (line ? ":" + std::to_string(line) : "") +
                           ": " + detail),
        code_(code),
        file_(std::move(file)),
        line_(line) {}

  DatasetErrc code() const { return code_; }
  const std::string& file() const { return file_; }
  /// 1-based line of the first offence, 0 when not line specific.
  std::size_t line() const { return line_; }

 private:
  DatasetErrc code_;
  std::string file_;
  std::size_t line_;
};

struct DatasetMeta {
  std::string name;
  std::size_t n = 0;
  std::size_t f = 0;
  std::size_t classes = 0;
};

namespace detail {

inline std::vector<std::string_view> split_lines(std::string_view text) {
  std::vector<std::string_view> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    start = end + 1;
  }
  // Trailing blank lines are tolerated.
  while (!lines.empty() && lines.back().find_first_not_of(" \t") == std::string_view::npos) lines.pop_back();
  return lines;
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

inline std::string read_required(const std::filesystem::path& dir, const std::string& name) {
  const auto path = dir / name;
  if (!std::filesystem::is_regular_file(path)) throw DatasetError(DatasetErrc::MissingFile, name, 0, path.string());
  return read_file(path);
}

inline void expect_lines(const std::string& file, std::size_t found, std::size_t expected) {
  if (found != expected)
    throw DatasetError(DatasetErrc::CountMismatch, file, 0,
                       "expected " + std::to_string(expected) + " lines, found " + std::to_string(found));
}

}  // namespace detail

inline DatasetMeta read_meta(const std::filesystem::path& dir) {
  const std::string text = detail::read_required(dir, "meta.json");
  DatasetMeta m;
  try {
    const auto j = nlohmann::json::parse(text);
    m.name = j.value("name", std::string{});
    m.n = j.at("n").get<std::size_t>();
    m.f = j.at("f").get<std::size_t>();
    m.classes = j.at("C").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(DatasetErrc::Malformed, "meta.json", 0, e.what());
  }
  if (m.n == 0 || m.f == 0 || m.classes < 2)
    throw DatasetError(DatasetErrc::Malformed, "meta.json", 0, "need n >= 1, f >= 1, C >= 2");
  return m;
}

/// Loads and validates a dataset directory. Errors carry a distinct code and
/// name the file and first offending line.
inline Graph load_dataset(const std::filesystem::path& dir) {
  const DatasetMeta meta = read_meta(dir);
  const std::string features_text = detail::read_required(dir, "features.txt");
  const std::string labels_text = detail::read_required(dir, "labels.txt");
  const std::string edges_text = detail::read_required(dir, "edges.txt");

  const auto feature_lines = detail::split_lines(features_text);
  detail::expect_lines("features.txt", feature_lines.size(), meta.n);
  Matrix features(static_cast<Eigen::Index>(meta.n), static_cast<Eigen::Index>(meta.f));
  for (std::size_t i = 0; i < meta.n; ++i) {
    const auto fields = detail::split_fields(feature_lines[i]);
    if (fields.size() != meta.f)
      throw DatasetError(DatasetErrc::CountMismatch, "features.txt", i + 1,
                         "expected " + std::to_string(meta.f) + " values, found " + std::to_string(fields.size()));
    for (std::size_t c = 0; c < meta.f; ++c) {
      double v = 0.0;
      if (!detail::parse_number(fields[c], v) || !std::isfinite(v))
        throw DatasetError(DatasetErrc::Malformed, "features.txt", i + 1, "bad value '" + std::string(fields[c]) + "'");
      features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
    }
  }

  const auto label_lines = detail::split_lines(labels_text);
  detail::expect_lines("labels.txt", label_lines.size(), meta.n);
  std::vector<int> labels(meta.n);
  for (std::size_t i = 0; i < meta.n; ++i) {
    const auto fields = detail::split_fields(label_lines[i]);
    long long y = -1;
    if (fields.size() != 1 || !detail::parse_number(fields[0], y))
      throw DatasetError(DatasetErrc::Malformed, "labels.txt", i + 1, "expected one integer");
    if (y < 0 || static_cast<std::size_t>(y) >= meta.classes)
      throw DatasetError(DatasetErrc::IndexOutOfRange, "labels.txt", i + 1,
                         "label " + std::to_string(y) + " outside [0, " + std::to_string(meta.classes) + ")");
    labels[i] = static_cast<int>(y);
  }

  std::vector<Edge> edges;
  std::set<Edge> seen;
  const auto edge_lines = detail::split_lines(edges_text);
  for (std::size_t l = 0; l < edge_lines.size(); ++l) {
    const auto fields = detail::split_fields(edge_lines[l]);
    long long u = -1, v = -1;
    if (fields.size() != 2 || !detail::parse_number(fields[0], u) || !detail::parse_number(fields[1], v))
      throw DatasetError(DatasetErrc::Malformed, "edges.txt", l + 1, "expected 'u v'");
    const auto n = static_cast<long long>(meta.n);
    if (u < 0 || v < 0 || u >= n || v >= n)
      throw DatasetError(DatasetErrc::IndexOutOfRange, "edges.txt", l + 1,
                         "endpoint outside [0, " + std::to_string(meta.n) + ")");
    if (u == v) throw DatasetError(DatasetErrc::SelfLoop, "edges.txt", l + 1, "self-loop on node " + std::to_string(u));
    Edge e{static_cast<NodeId>(std::min(u, v)), static_cast<NodeId>(std::max(u, v))};
    if (!seen.insert(e).second)
      throw DatasetError(DatasetErrc::DuplicateEdge, "edges.txt", l + 1,
                         "edge " + std::to_string(e.first) + " " + std::to_string(e.second) + " repeated");
    edges.push_back(e);
  }
  return Graph(meta.classes, std::move(features), std::move(labels), std::move(edges));
}

/// Writes `g` in the on-disk layout. Output bytes depend only on `g`.
inline void save_dataset(const Graph& g, const std::filesystem::path& dir, const std::string& name) {
  ensure_directory(dir);
  nlohmann::ordered_json meta;
  meta["name"] = name;
  meta["n"] = g.num_nodes();
  meta["f"] = g.num_features();
  meta["C"] = g.num_classes();
  write_file(dir / "meta.json", meta.dump(2) + "\n");

  std::string edges;
  for (const auto& [u, v] : g.edges()) edges += std::to_string(u) + ' ' + std::to_string(v) + '\n';
  write_file(dir / "edges.txt", edges);

  std::string features;
  const Matrix& x = g.features();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      if (c) features += ' ';
      features += format_double(x(i, c));
    }
    features += '\n';
  }
  write_file(dir / "features.txt", features);

  std::string labels;
  for (int y : g.labels()) labels += std::to_string(y) + '\n';
  write_file(dir / "labels.txt", labels);
}

struct SbmParams {
  std::vector<std::size_t> blocks;
  double p_in = 0.15;
  double p_out = 0.01;
  std::size_t features = 32;
  std::size_t classes = 0;  // 0: one class per block
  std::uint64_t seed = 0;
};

/// Stochastic block model with block b labelled b. Features are a one-hot
/// class indicator (column y mod f) plus unit Gaussian noise.
inline Graph generate_sbm(const SbmParams& p) {
  if (p.blocks.size() < 2) throw PreconditionError("gen_synthetic: need at least 2 blocks");
  const std::size_t classes = p.classes ? p.classes : p.blocks.size();
  if (classes != p.blocks.size()) throw PreconditionError("gen_synthetic: one class per block required");
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0 && p.p_out >= 0.0 && p.p_out <= 1.0))
    throw PreconditionError("gen_synthetic: probabilities must lie in [0,1]");
  if (!(p.p_in > p.p_out)) throw PreconditionError("gen_synthetic: p_in must exceed p_out");
  if (p.features == 0) throw PreconditionError("gen_synthetic: feature dimension must be positive");
  for (auto b : p.blocks)
    if (b == 0) throw PreconditionError("gen_synthetic: empty block");

  std::vector<int> labels;
  for (std::size_t b = 0; b < p.blocks.size(); ++b) labels.insert(labels.end(), p.blocks[b], static_cast<int>(b));
  const std::size_t n = labels.size();

  Rng edge_rng(derive_seed(p.seed, {0xed9eull}));
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (bernoulli(edge_rng, labels[u] == labels[v] ? p.p_in : p.p_out))
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));

  Rng feature_rng(derive_seed(p.seed, {0xfea7ull}));
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p.features));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(i, c) = standard_normal(feature_rng);
  for (std::size_t i = 0; i < n; ++i)
    x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(static_cast<std::size_t>(labels[i]) % p.features)) += 1.0;
  return Graph(classes, std::move(x), std::move(labels), std::move(edges));
}

inline Graph gen_synthetic(const SbmParams& p, const std::filesystem::path& dir) {
  Graph g = generate_sbm(p);
  save_dataset(g, dir, "sbm");
  return g;
}

}  // namespace fedgkc::io
