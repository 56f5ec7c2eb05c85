#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedgkc/errors.hpp"
#include "fedgkc/sparse_matrix.hpp"

namespace fedgkc {

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;
using NodeList = std::vector<NodeId>;

inline void warn(std::string_view message) { std::cerr << "warning: " << message << '\n'; }

/// Undirected, unweighted node-classification graph. Immutable once built:
/// the `with_*` members return modified copies.
class Graph {
 public:
  Graph() = default;

  /// Edges are canonicalised (u < v), sorted and deduplicated. Self-loops are
  /// rejected; they are added during normalisation instead.
  Graph(std::size_t num_classes, Matrix features, std::vector<int> labels, std::vector<Edge> edges)
      : classes_(num_classes), features_(std::move(features)), labels_(std::move(labels)) {
    const std::size_t n = static_cast<std::size_t>(features_.rows());
    if (labels_.size() != n)
      throw DimensionError("graph: " + std::to_string(labels_.size()) + " labels for " + std::to_string(n) +
                           " nodes");
    for (int y : labels_)
      if (y < 0 || static_cast<std::size_t>(y) >= classes_)
        throw PreconditionError("graph: label " + std::to_string(y) + " outside [0," + std::to_string(classes_) +
                                ")");
    for (auto& [u, v] : edges) {
      if (u >= n || v >= n) throw DimensionError("graph: edge endpoint out of range");
      if (u == v) throw PreconditionError("graph: self-loop on node " + std::to_string(u));
      if (u > v) std::swap(u, v);
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
    neighbors_.assign(n, {});
    for (const auto& [u, v] : edges_) {
      neighbors_[u].push_back(v);
      neighbors_[v].push_back(u);
    }
    for (auto& nb : neighbors_) std::sort(nb.begin(), nb.end());
  }

  std::size_t num_nodes() const { return labels_.size(); }
  std::size_t num_features() const { return static_cast<std::size_t>(features_.cols()); }
  std::size_t num_classes() const { return classes_; }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  const std::vector<int>& labels() const { return labels_; }
  std::span<const NodeId> neighbors(std::size_t i) const { return neighbors_[i]; }
  std::size_t degree(std::size_t i) const { return neighbors_[i].size(); }

  const NodeList& train() const { return train_; }
  const NodeList& val() const { return val_; }
  const NodeList& test() const { return test_; }

  Graph with_masks(NodeList train, NodeList val, NodeList test) const {
    std::vector<char> seen(num_nodes(), 0);
    for (NodeList* mask : {&train, &val, &test}) {
      std::sort(mask->begin(), mask->end());
      for (auto v : *mask) {
        if (v >= num_nodes()) throw DimensionError("graph: mask index out of range");
        if (seen[v]) throw PreconditionError("graph: masks overlap at node " + std::to_string(v));
        seen[v] = 1;
      }
    }
    Graph g = *this;
    g.train_ = std::move(train);
    g.val_ = std::move(val);
    g.test_ = std::move(test);
    return g;
  }

  /// Same nodes, labels and masks; edges restricted to `kept` (a subset of
  /// the current edge list) and features replaced.
  Graph with_structure(std::vector<Edge> kept, Matrix features) const {
    if (features.rows() != features_.rows() || features.cols() != features_.cols())
      throw DimensionError("graph: replacement features change shape");
    Graph g(classes_, std::move(features), labels_, std::move(kept));
    g.train_ = train_;
    g.val_ = val_;
    g.test_ = test_;
    return g;
  }

 private:
  std::size_t classes_ = 0;
  Matrix features_;
  std::vector<int> labels_;
  std::vector<Edge> edges_;
  std::vector<NodeList> neighbors_;
  NodeList train_, val_, test_;
};

/// D̃^{-1/2} (A + I) D̃^{-1/2}.
inline SparseMatrix normalize_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<double> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(n + 2 * g.num_edges());
  for (NodeId i = 0; i < n; ++i) entries.push_back({i, i, inv_sqrt[i] * inv_sqrt[i]});
  for (const auto& [u, v] : g.edges()) {
    const double w = inv_sqrt[u] * inv_sqrt[v];
    entries.push_back({u, v, w});
    entries.push_back({v, u, w});
  }
  return SparseMatrix::from_entries(n, std::move(entries), true);
}

/// D^{-1} A: row i averages the neighbours of i (zero row when isolated).
inline SparseMatrix mean_adjacency(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(2 * g.num_edges());
  for (NodeId i = 0; i < n; ++i) {
    const double w = g.degree(i) ? 1.0 / static_cast<double>(g.degree(i)) : 0.0;
    for (auto j : g.neighbors(i)) entries.push_back({i, j, w});
  }
  return SparseMatrix::from_entries(n, std::move(entries), false);
}

/// A + I, unnormalised (GIN aggregation with epsilon = 0).
inline SparseMatrix sum_adjacency_with_self(const Graph& g) {
  const std::size_t n = g.num_nodes();
  std::vector<SparseMatrix::Entry> entries;
  entries.reserve(n + 2 * g.num_edges());
  for (NodeId i = 0; i < n; ++i) entries.push_back({i, i, 1.0});
  for (const auto& [u, v] : g.edges()) {
    entries.push_back({u, v, 1.0});
    entries.push_back({v, u, 1.0});
  }
  return SparseMatrix::from_entries(n, std::move(entries), true);
}

/// Everything a model forward needs from a graph, precomputed once.
struct GraphView {
  Matrix features;
  SparseMatrix gcn;
  SparseMatrix mean;
  SparseMatrix sum_self;
  /// Sorted neighbourhood of each node including the node itself.
  std::vector<NodeList> attention;

  std::size_t num_nodes() const { return static_cast<std::size_t>(features.rows()); }

  static GraphView of(const Graph& g) {
    GraphView view;
    view.features = g.features();
    view.gcn = normalize_adjacency(g);
    view.mean = mean_adjacency(g);
    view.sum_self = sum_adjacency_with_self(g);
    view.attention.resize(g.num_nodes());
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
      auto& nb = view.attention[i];
      const auto src = g.neighbors(i);
      nb.assign(src.begin(), src.end());
      nb.insert(std::lower_bound(nb.begin(), nb.end(), i), i);
    }
    return view;
  }
};

/// Subgraph on `nodes` (re-indexed in the given order) keeping only edges
/// with both endpoints inside. Masks are not carried over.
inline Graph induced_subgraph(const Graph& g, std::span<const NodeId> nodes) {
  if (nodes.empty()) throw PreconditionError("induced_subgraph: empty node set");
  constexpr NodeId kAbsent = ~NodeId{0};
  std::vector<NodeId> local(g.num_nodes(), kAbsent);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    if (nodes[k] >= g.num_nodes()) throw DimensionError("induced_subgraph: node out of range");
    if (local[nodes[k]] != kAbsent) throw PreconditionError("induced_subgraph: duplicate node");
    local[nodes[k]] = static_cast<NodeId>(k);
  }
  Matrix features(static_cast<Eigen::Index>(nodes.size()), g.features().cols());
  std::vector<int> labels(nodes.size());
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    features.row(static_cast<Eigen::Index>(k)) = g.features().row(nodes[k]);
    labels[k] = g.labels()[nodes[k]];
  }
  std::vector<Edge> edges;
  for (const auto& [u, v] : g.edges())
    if (local[u] != kAbsent && local[v] != kAbsent) edges.emplace_back(local[u], local[v]);
  return Graph(g.num_classes(), std::move(features), std::move(labels), std::move(edges));
}

}  // namespace fedgkc
