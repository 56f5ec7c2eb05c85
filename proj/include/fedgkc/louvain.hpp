#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedgkc/graph.hpp"
#include "fedgkc/rng.hpp"

namespace fedgkc {

struct LouvainResult {
  /// Communities as sorted node lists, ordered by their smallest node.
  std::vector<NodeList> communities;
  /// Modularity after every local-moving pass, across all levels.
  std::vector<double> pass_modularity;
  double modularity = 0.0;
};

namespace detail {

struct WeightedGraph {
  std::vector<std::vector<std::pair<std::uint32_t, double>>> adj;  // no self entries
  std::vector<double> self;    // internal weight, counted twice like an undirected loop
  std::vector<double> degree;  // self + sum of adj weights
  double total = 0.0;          // 2m

  std::size_t size() const { return degree.size(); }

  static WeightedGraph from(const Graph& g) {
    WeightedGraph w;
    const std::size_t n = g.num_nodes();
    w.adj.resize(n);
    w.self.assign(n, 0.0);
    w.degree.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto j : g.neighbors(i)) w.adj[i].emplace_back(j, 1.0);
      w.degree[i] = static_cast<double>(g.degree(i));
      w.total += w.degree[i];
    }
    return w;
  }

  /// Collapses each community into one node.
  WeightedGraph aggregate(const std::vector<std::uint32_t>& comm, std::size_t count) const {
    WeightedGraph out;
    out.adj.resize(count);
    out.self.assign(count, 0.0);
    out.degree.assign(count, 0.0);
    out.total = total;
    std::vector<std::vector<std::pair<std::uint32_t, double>>> raw(count);
    for (std::size_t i = 0; i < size(); ++i) {
      const auto ci = comm[i];
      out.self[ci] += self[i];
      out.degree[ci] += degree[i];
      for (const auto& [j, wt] : adj[i]) {
        if (comm[j] == ci)
          out.self[ci] += wt;
        else
          raw[ci].emplace_back(comm[j], wt);
      }
    }
    for (std::size_t c = 0; c < count; ++c) {
      auto& r = raw[c];
      std::sort(r.begin(), r.end());
      for (const auto& [j, wt] : r) {
        if (!out.adj[c].empty() && out.adj[c].back().first == j)
          out.adj[c].back().second += wt;
        else
          out.adj[c].emplace_back(j, wt);
      }
    }
    return out;
  }
};

inline double modularity(const WeightedGraph& g, const std::vector<std::uint32_t>& comm) {
  if (g.total <= 0.0) return 0.0;
  std::vector<double> in(g.size(), 0.0), tot(g.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) {
    in[comm[i]] += g.self[i];
    tot[comm[i]] += g.degree[i];
    for (const auto& [j, wt] : g.adj[i])
      if (comm[j] == comm[i]) in[comm[i]] += wt;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < g.size(); ++c) q += in[c] / g.total - (tot[c] / g.total) * (tot[c] / g.total);
  return q;
}

/// Renumbers labels densely in order of first appearance; returns the count.
inline std::size_t renumber(std::vector<std::uint32_t>& comm) {
  constexpr std::uint32_t kUnset = ~std::uint32_t{0};
  std::vector<std::uint32_t> map(comm.size(), kUnset);
  std::uint32_t next = 0;
  for (auto& c : comm) {
    if (map[c] == kUnset) map[c] = next++;
    c = map[c];
  }
  return next;
}

}  // namespace detail

/// Newman-Girvan modularity of a node → community assignment.
inline double modularity(const Graph& g, std::span<const std::uint32_t> assignment) {
  if (assignment.size() != g.num_nodes()) throw DimensionError("modularity: assignment size mismatch");
  std::vector<std::uint32_t> comm(assignment.begin(), assignment.end());
  detail::renumber(comm);
  return detail::modularity(detail::WeightedGraph::from(g), comm);
}

namespace detail {

/// One multi-level run with node order shuffled per pass from `rng`.
inline LouvainResult louvain_once(const Graph& g, Rng& rng) {
  const std::size_t n = g.num_nodes();
  LouvainResult result;
  std::vector<std::uint32_t> assignment(n);
  std::iota(assignment.begin(), assignment.end(), 0u);
  detail::WeightedGraph level = detail::WeightedGraph::from(g);
  constexpr double kMinGain = 1e-12;
  constexpr int kMaxPasses = 1000;

  for (int depth = 0;; ++depth) {
    const std::size_t m = level.size();
    std::vector<std::uint32_t> comm(m);
    std::iota(comm.begin(), comm.end(), 0u);
    std::vector<double> tot = level.degree;
    std::vector<double> weight_to(m, 0.0);
    std::vector<std::uint32_t> touched;
    std::vector<std::uint32_t> order(m);
    std::iota(order.begin(), order.end(), 0u);

    double previous = detail::modularity(level, comm);
    bool moved_any = false;
    for (int pass = 0; pass < kMaxPasses; ++pass) {
      shuffle(order, rng);
      std::size_t moves = 0;
      for (auto i : order) {
        const auto current = comm[i];
        const double k = level.degree[i];
        touched.clear();
        for (const auto& [j, wt] : level.adj[i]) {
          if (weight_to[comm[j]] == 0.0) touched.push_back(comm[j]);
          weight_to[comm[j]] += wt;
        }
        tot[current] -= k;
        double best_gain = weight_to[current] - tot[current] * k / level.total;
        auto best = current;
        std::sort(touched.begin(), touched.end());
        for (auto c : touched) {
          const double gain = weight_to[c] - tot[c] * k / level.total;
          if (gain > best_gain + kMinGain) {
            best_gain = gain;
            best = c;
          }
        }
        tot[best] += k;
        if (best != current) {
          comm[i] = best;
          ++moves;
        }
        for (auto c : touched) weight_to[c] = 0.0;
        weight_to[current] = 0.0;
      }
      const double q = detail::modularity(level, comm);
      if (q < previous - 1e-10)
        throw std::logic_error("louvain: modularity decreased from " + std::to_string(previous) + " to " +
                               std::to_string(q));
      result.pass_modularity.push_back(q);
      previous = q;
      if (moves == 0) break;
      moved_any = true;
    }
    if (!moved_any) break;
    const std::size_t count = detail::renumber(comm);
    for (auto& a : assignment) a = comm[a];
    if (count == m) break;
    level = level.aggregate(comm, count);
  }

  detail::renumber(assignment);
  std::vector<NodeList> groups;
  for (NodeId v = 0; v < n; ++v) {
    if (assignment[v] >= groups.size()) groups.resize(assignment[v] + 1);
    groups[assignment[v]].push_back(v);
  }
  result.communities = std::move(groups);
  result.modularity = modularity(g, assignment);
  return result;
}

}  // namespace detail

/// Multi-level Louvain, restarted from several shuffled node orders derived
/// from `seed`; the highest-modularity run wins, earliest on ties. Within a
/// run, ties between candidate communities go to the lowest community index.
/// A single run often stops at poor local optima on small sparse graphs
/// (paths split into pairs), hence the generous default.
inline LouvainResult louvain(const Graph& g, std::uint64_t seed, int restarts = 32) {
  if (restarts < 1) throw PreconditionError("louvain: restarts must be >= 1");
  if (g.num_edges() == 0) {
    warn("louvain: graph has no edges; every node is its own community");
    LouvainResult result;
    for (NodeId i = 0; i < g.num_nodes(); ++i) result.communities.push_back({i});
    return result;
  }
  Rng rng(derive_seed(seed, {0x10a7a1full}));
  LouvainResult best = detail::louvain_once(g, rng);
  for (int r = 1; r < restarts; ++r) {
    auto candidate = detail::louvain_once(g, rng);
    if (candidate.modularity > best.modularity + 1e-12) best = std::move(candidate);
  }
  return best;
}

}  // namespace fedgkc
