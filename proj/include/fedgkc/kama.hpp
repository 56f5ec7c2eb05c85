#pragma once

// Knowledge-aware model aggregation: per-client weights from data volume and
// from a knowledge level computed on copilot predictions, then a convex
// combination of copilot parameters.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fedgkc/graph.hpp"
#include "fedgkc/tensor.hpp"

namespace fedgkc {

inline constexpr double kKnowledgeFloor = 1e-6;

enum class Strategy { FedGKC, UniformAvg, VolumeAvg, LocalOnly };

inline std::string_view strategy_name(Strategy s) {
  switch (s) {
    case Strategy::FedGKC: return "fedgkc";
    case Strategy::UniformAvg: return "uniform-avg";
    case Strategy::VolumeAvg: return "volume-avg";
    case Strategy::LocalOnly: return "local-only";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view s) {
  if (s == "fedgkc") return Strategy::FedGKC;
  if (s == "uniform-avg") return Strategy::UniformAvg;
  if (s == "volume-avg") return Strategy::VolumeAvg;
  if (s == "local-only") return Strategy::LocalOnly;
  throw PreconditionError("unknown strategy '" + std::string(s) + "'");
}

/// Which parts of the per-node knowledge score are active.
struct KnowledgeTerms {
  bool strength = true;
  bool clarity = true;
};

struct ClientReport {
  std::size_t client = 0;
  std::size_t volume = 0;  // N_k: training nodes
  double knowledge = 0.0;  // P_k
  Parameters copilot;
};

struct AggregationWeights {
  std::vector<double> volume;
  std::vector<double> knowledge;
  std::vector<double> total;
};

struct AggregationResult {
  Parameters global;
  AggregationWeights weights;
};

namespace detail {

inline std::vector<double> normalize(std::span<const double> values, std::string_view what) {
  const double total = std::accumulate(values.begin(), values.end(), 0.0);
  if (!(total > 0.0)) throw PreconditionError(std::string(what) + ": weights have zero total");
  std::vector<double> out(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) out[k] = values[k] / total;
  return out;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  return dot / std::sqrt(na * nb);
}

inline std::span<const double> row_span(const Matrix& m, std::size_t r) {
  return {m.data() + r * static_cast<std::size_t>(m.cols()), static_cast<std::size_t>(m.cols())};
}

/// First clarity term: (max − Σ others) / (M − 1).
inline double class_clarity(std::span<const double> p) {
  if (p.size() < 2) throw PreconditionError("knowledge_clarity: need at least 2 classes");
  const double mx = *std::max_element(p.begin(), p.end());
  const double rest = std::accumulate(p.begin(), p.end(), 0.0) - mx;
  return (mx - rest) / static_cast<double>(p.size() - 1);
}

}  // namespace detail

/// w_k = N_k / Σ N.
inline std::vector<double> volume_weights(std::span<const std::size_t> counts) {
  if (counts.empty()) throw PreconditionError("volume_weights: no clients");
  std::vector<double> v(counts.begin(), counts.end());
  for (auto c : counts)
    if (c == 0) throw PreconditionError("volume_weights: every client needs at least one training node");
  return detail::normalize(v, "volume_weights");
}

/// Max predicted probability of one node.
inline double knowledge_strength(std::span<const double> p) {
  if (p.empty()) throw PreconditionError("knowledge_strength: empty row");
  return *std::max_element(p.begin(), p.end());
}

/// Class clarity of `p` minus lambda times its mean cosine similarity to the
/// neighbour prediction rows (0 when there are none).
inline double knowledge_clarity(std::span<const double> p, const Matrix& neighbor_probs, double lambda) {
  const double clarity = detail::class_clarity(p);
  if (neighbor_probs.rows() == 0) return clarity;
  if (static_cast<std::size_t>(neighbor_probs.cols()) != p.size())
    throw DimensionError("knowledge_clarity: neighbour rows have the wrong width");
  double smooth = 0.0;
  for (Eigen::Index j = 0; j < neighbor_probs.rows(); ++j)
    smooth += detail::cosine(p, detail::row_span(neighbor_probs, static_cast<std::size_t>(j)));
  return clarity - lambda * smooth / static_cast<double>(neighbor_probs.rows());
}

/// Mean of strength + clarity over `nodes`, with neighbour rows taken from the
/// same full-graph prediction matrix. Clamped below at kKnowledgeFloor.
inline double knowledge_level(const Matrix& probs, const Graph& g, std::span<const NodeId> nodes, double lambda,
                              KnowledgeTerms terms = {}) {
  if (nodes.empty()) throw PreconditionError("knowledge_level: empty node set");
  if (static_cast<std::size_t>(probs.rows()) != g.num_nodes())
    throw DimensionError("knowledge_level: one prediction row per node required");
  double total = 0.0;
  for (auto i : nodes) {
    const auto p = detail::row_span(probs, i);
    double q = 0.0;
    if (terms.strength) q += knowledge_strength(p);
    if (terms.clarity) {
      q += detail::class_clarity(p);
      const auto nb = g.neighbors(i);
      if (!nb.empty()) {
        double smooth = 0.0;
        for (auto j : nb) smooth += detail::cosine(p, detail::row_span(probs, j));
        q -= lambda * smooth / static_cast<double>(nb.size());
      }
    }
    total += q;
  }
  return std::max(total / static_cast<double>(nodes.size()), kKnowledgeFloor);
}

/// w_k = P_k / Σ P.
inline std::vector<double> knowledge_weights(std::span<const double> levels) {
  if (levels.empty()) throw PreconditionError("knowledge_weights: no clients");
  return detail::normalize(levels, "knowledge_weights");
}

/// w_k = (w_vol + w_knowledge) / 2.
inline std::vector<double> total_weights(std::span<const double> volume, std::span<const double> knowledge) {
  if (volume.size() != knowledge.size()) throw DimensionError("total_weights: family sizes differ");
  std::vector<double> w(volume.size());
  for (std::size_t k = 0; k < w.size(); ++k) w[k] = 0.5 * (volume[k] + knowledge[k]);
  return w;
}

/// Σ_k w_k θ_k, evaluated as θ_0 + Σ_k w_k (θ_k − θ_0) and clamped to the
/// per-entry envelope of the inputs so identical inputs reproduce exactly.
inline Parameters weighted_average(std::span<const Parameters* const> snapshots, std::span<const double> weights) {
  if (snapshots.empty()) throw PreconditionError("weighted_average: no snapshots");
  if (snapshots.size() != weights.size()) throw DimensionError("weighted_average: weight count mismatch");
  const Parameters& anchor = *snapshots[0];
  for (const auto* s : snapshots) {
    if (s->size() != anchor.size()) throw DimensionError("weighted_average: parameter sets differ");
    for (const auto& [name, value] : anchor) {
      auto it = s->find(name);
      if (it == s->end() || it->second.rows() != value.rows() || it->second.cols() != value.cols())
        throw DimensionError("weighted_average: snapshot mismatch at '" + name + "'");
    }
  }
  Parameters out;
  for (const auto& [name, base] : anchor) {
    Matrix acc = base;
    Matrix lo = base, hi = base;
    for (std::size_t k = 1; k < snapshots.size(); ++k) {
      const Matrix& v = snapshots[k]->at(name);
      acc.noalias() += weights[k] * (v - base);
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    out.emplace(name, acc.cwiseMax(lo).cwiseMin(hi));
  }
  return out;
}

/// Server weights for `strategy` (local-only has none and is rejected).
inline AggregationWeights server_weights(std::span<const ClientReport> reports, Strategy strategy) {
  if (reports.empty()) throw PreconditionError("aggregate: no client reports");
  AggregationWeights w;
  std::vector<std::size_t> counts;
  std::vector<double> levels;
  for (const auto& r : reports) {
    counts.push_back(r.volume);
    levels.push_back(r.knowledge);
  }
  const std::size_t k = reports.size();
  switch (strategy) {
    case Strategy::FedGKC:
      w.volume = volume_weights(counts);
      w.knowledge = knowledge_weights(levels);
      w.total = total_weights(w.volume, w.knowledge);
      break;
    case Strategy::VolumeAvg:
      w.volume = volume_weights(counts);
      w.total = w.volume;
      break;
    case Strategy::UniformAvg:
      w.total.assign(k, 1.0 / static_cast<double>(k));
      break;
    case Strategy::LocalOnly:
      throw PreconditionError("aggregate: local-only performs no aggregation");
  }
  return w;
}

inline AggregationResult aggregate(std::span<const ClientReport> reports, Strategy strategy = Strategy::FedGKC) {
  AggregationResult result;
  result.weights = server_weights(reports, strategy);
  std::vector<const Parameters*> snapshots;
  for (const auto& r : reports) snapshots.push_back(&r.copilot);
  result.global = weighted_average(snapshots, result.weights.total);
  return result;
}

}  // namespace fedgkc
