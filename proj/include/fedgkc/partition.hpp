#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "fedgkc/graph.hpp"
#include "fedgkc/rng.hpp"

namespace fedgkc {

struct Partition {
  std::size_t num_clients = 0;
  std::vector<std::uint32_t> assignment;  // node -> client
  std::vector<NodeList> clients;          // sorted node lists
};

namespace detail {

/// Last node reached by a BFS from `start` inside the community.
inline NodeId farthest_inside(const Graph& g, const std::vector<char>& inside, NodeId start) {
  std::vector<char> seen(g.num_nodes(), 0);
  std::deque<NodeId> queue{start};
  seen[start] = 1;
  NodeId last = start;
  while (!queue.empty()) {
    last = queue.front();
    queue.pop_front();
    for (auto u : g.neighbors(last))
      if (inside[u] && !seen[u]) {
        seen[u] = 1;
        queue.push_back(u);
      }
  }
  return last;
}

/// Splits `community` into a BFS-connected first half and the remainder. The
/// BFS starts from the node farthest from a seeded start, so on chain-like
/// communities the remainder stays connected too.
inline std::pair<NodeList, NodeList> bfs_split(const Graph& g, const NodeList& community, Rng& rng) {
  std::vector<char> inside(g.num_nodes(), 0), taken(g.num_nodes(), 0);
  for (auto v : community) inside[v] = 1;
  const std::size_t target = community.size() / 2;
  NodeList first;
  std::deque<NodeId> queue;
  const NodeId start = community[static_cast<std::size_t>(uniform_index(rng, community.size()))];
  const NodeId root = farthest_inside(g, inside, start);
  std::size_t next_root = static_cast<std::size_t>(
      std::lower_bound(community.begin(), community.end(), root) - community.begin());
  while (first.size() < target) {
    if (queue.empty()) {
      while (taken[community[next_root]]) next_root = (next_root + 1) % community.size();
      taken[community[next_root]] = 1;
      queue.push_back(community[next_root]);
    }
    const NodeId v = queue.front();
    queue.pop_front();
    first.push_back(v);
    for (auto u : g.neighbors(v)) {
      if (inside[u] && !taken[u]) {
        taken[u] = 1;
        queue.push_back(u);
      }
    }
  }
  NodeList second;
  std::vector<char> in_first(g.num_nodes(), 0);
  for (auto v : first) in_first[v] = 1;
  for (auto v : community)
    if (!in_first[v]) second.push_back(v);
  std::sort(first.begin(), first.end());
  return {std::move(first), std::move(second)};
}

}  // namespace detail

/// Assigns communities to K clients. With at least K communities they stay
/// intact and are packed greedily (largest community to the currently
/// smallest client). With fewer, the largest community is repeatedly split
/// in two by BFS until K parts exist.
inline Partition allocate(const Graph& g, std::vector<NodeList> communities, std::size_t num_clients,
                          std::uint64_t seed) {
  if (num_clients == 0) throw PreconditionError("allocate: client count must be positive");
  if (g.num_nodes() < num_clients)
    throw PreconditionError("allocate: " + std::to_string(g.num_nodes()) + " nodes cannot fill " +
                            std::to_string(num_clients) + " clients");
  Rng rng(derive_seed(seed, {0xa110cull}));
  auto by_size = [](const NodeList& a, const NodeList& b) {
    return a.size() != b.size() ? a.size() > b.size() : a.front() < b.front();
  };
  std::erase_if(communities, [](const NodeList& c) { return c.empty(); });
  for (auto& c : communities) std::sort(c.begin(), c.end());

  while (communities.size() < num_clients) {
    std::sort(communities.begin(), communities.end(), by_size);
    auto [a, b] = detail::bfs_split(g, communities.front(), rng);
    communities.front() = std::move(a);
    communities.push_back(std::move(b));
  }
  std::sort(communities.begin(), communities.end(), by_size);

  Partition p;
  p.num_clients = num_clients;
  p.clients.assign(num_clients, {});
  p.assignment.assign(g.num_nodes(), 0);
  for (const auto& c : communities) {
    std::size_t smallest = 0;
    for (std::size_t k = 1; k < num_clients; ++k)
      if (p.clients[k].size() < p.clients[smallest].size()) smallest = k;
    p.clients[smallest].insert(p.clients[smallest].end(), c.begin(), c.end());
  }
  for (std::size_t k = 0; k < num_clients; ++k) {
    std::sort(p.clients[k].begin(), p.clients[k].end());
    for (auto v : p.clients[k]) p.assignment[v] = static_cast<std::uint32_t>(k);
  }
  return p;
}

struct SplitRatios {
  double train = 0.2;
  double val = 0.4;
  double test = 0.4;

  bool operator==(const SplitRatios&) const = default;
};

/// Label-stratified random train/val/test split. Set sizes are
/// floor(ratio * n) for train and val; the remainder goes to test. Nodes are
/// laid out on a stratified order (each class spread evenly) and the sets are
/// consecutive slices of it. Classes with fewer than 3 nodes are placed
/// uniformly at random instead.
inline Graph split_masks(const Graph& g, const SplitRatios& ratios, std::uint64_t seed) {
  for (double r : {ratios.train, ratios.val, ratios.test})
    if (r < 0.0 || r > 1.0) throw PreconditionError("split_masks: ratios must lie in [0,1]");
  if (std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9)
    throw PreconditionError("split_masks: ratios must sum to 1");
  const std::size_t n = g.num_nodes();
  Rng rng(derive_seed(seed, {0x5b117ull}));

  std::vector<NodeList> by_class(g.num_classes());
  for (NodeId v = 0; v < n; ++v) by_class[static_cast<std::size_t>(g.labels()[v])].push_back(v);

  std::vector<std::pair<double, NodeId>> keyed;
  keyed.reserve(n);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& members = by_class[c];
    if (members.empty()) continue;
    shuffle(members, rng);
    const bool stratify = members.size() >= 3;
    if (!stratify)
      warn("split_masks: class " + std::to_string(c) + " has " + std::to_string(members.size()) +
           " nodes; splitting it unstratified");
    for (std::size_t r = 0; r < members.size(); ++r) {
      const double key = stratify ? (static_cast<double>(r) + uniform01(rng)) / static_cast<double>(members.size())
                                  : uniform01(rng);
      keyed.emplace_back(key, members[r]);
    }
  }
  std::sort(keyed.begin(), keyed.end());

  auto count = [n](double ratio) {
    return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
  };
  std::size_t n_train = std::min(count(ratios.train), n);
  if (n_train == 0 && ratios.train > 0.0 && n > 0) n_train = 1;
  const std::size_t n_val = std::min(count(ratios.val), n - n_train);

  NodeList train, val, test;
  for (std::size_t k = 0; k < keyed.size(); ++k) {
    if (k < n_train)
      train.push_back(keyed[k].second);
    else if (k < n_train + n_val)
      val.push_back(keyed[k].second);
    else
      test.push_back(keyed[k].second);
  }
  return g.with_masks(std::move(train), std::move(val), std::move(test));
}

/// Edge removal plus column-wise attribute masking. Each edge is dropped with
/// probability `edge_drop`; each feature column is zeroed for all nodes with
/// probability `feature_mask`. Labels and masks are carried over.
inline Graph augment(const Graph& g, double edge_drop, double feature_mask, Rng& rng) {
  if (edge_drop < 0.0 || edge_drop >= 1.0 || feature_mask < 0.0 || feature_mask >= 1.0)
    throw PreconditionError("augment: rates must lie in [0,1)");
  std::vector<Edge> kept;
  kept.reserve(g.num_edges());
  for (const auto& e : g.edges())
    if (!bernoulli(rng, edge_drop)) kept.push_back(e);
  Matrix features = g.features();
  for (Eigen::Index c = 0; c < features.cols(); ++c)
    if (bernoulli(rng, feature_mask)) features.col(c).setZero();
  return g.with_structure(std::move(kept), std::move(features));
}

}  // namespace fedgkc
