#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "fedgkc/adam.hpp"
#include "fedgkc/graph.hpp"
#include "fedgkc/kama.hpp"
#include "fedgkc/louvain.hpp"
#include "fedgkc/models.hpp"
#include "fedgkc/partition.hpp"
#include "fedgkc/rng.hpp"
#include "fedgkc/smkd.hpp"

namespace fedgkc {

struct AblationFlags {
  bool disable_self_distill = false;
  bool disable_mutual = false;
  bool disable_kama_strength = false;
  bool disable_kama_clarity = false;

  bool operator==(const AblationFlags&) const = default;
};

struct FederationConfig {
  std::size_t clients = 0;
  int rounds = 100;
  int local_epochs = 3;
  HeterogeneityMode mode = HeterogeneityMode::Arch;
  Strategy strategy = Strategy::FedGKC;
  AblationFlags ablation;
  LossWeights weights;
  Arch copilot_arch = Arch::GCN;
  int copilot_depth = 2;
  std::size_t hidden = 64;
  AdamConfig optimizer;
  AugmentationConfig augmentation;
  bool resample_views = true;
  MutualView mutual_on_view = MutualView::Weak;
  KnowledgeNodeSet kama_node_set = KnowledgeNodeSet::Train;
  bool select_best_on_val = false;
  SplitRatios split;
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  ModelSpec copilot_spec() const {
    ModelSpec s;
    s.arch = copilot_arch;
    s.depth = copilot_depth;
    s.hidden = hidden;
    s.jumping_knowledge = copilot_arch == Arch::DeepGCN;
    return s;
  }

  void validate() const {
    if (clients < 1) throw PreconditionError("config: clients must be >= 1");
    if (rounds < 1) throw PreconditionError("config: rounds must be >= 1");
    if (local_epochs < 0) throw PreconditionError("config: local_epochs must be >= 0");
    if (workers < 1) throw PreconditionError("config: workers must be >= 1");
    weights.validate();
    copilot_spec().validate();
    const AugmentationConfig& a = augmentation;
    for (double r : {a.weak_edge_drop, a.weak_feature_mask, a.strong_edge_drop, a.strong_feature_mask})
      if (r < 0.0 || r >= 1.0) throw PreconditionError("config: augmentation rates must lie in [0,1)");
    if (optimizer.learning_rate <= 0.0) throw PreconditionError("config: learning rate must be positive");
    if (std::abs(split.train + split.val + split.test - 1.0) > 1e-9)
      throw PreconditionError("config: split ratios must sum to 1");
  }

  ClientRoundOptions round_options() const {
    ClientRoundOptions o;
    o.epochs = local_epochs;
    o.weights = weights;
    o.switches.mutual = !ablation.disable_mutual;
    o.switches.self_distill = !ablation.disable_self_distill;
    o.augmentation = augmentation;
    o.resample_views = resample_views;
    o.mutual_view = mutual_on_view;
    o.copilot_spec = copilot_spec();
    o.node_set = kama_node_set;
    o.terms.strength = !ablation.disable_kama_strength;
    o.terms.clarity = !ablation.disable_kama_clarity;
    return o;
  }

  bool operator==(const FederationConfig&) const = default;
};

struct ClientRecord {
  std::size_t client = 0;
  std::string arch;
  double copilot_loss = 0.0;
  double local_loss = 0.0;
  double test_accuracy = 0.0;
  double val_accuracy = 0.0;
  std::size_t volume = 0;
  double knowledge = 0.0;
  double weight = 0.0;  // 0 under local-only
};

struct RoundReport {
  int round = 0;
  std::vector<ClientRecord> clients;
  double mean_test_accuracy = 0.0;
};

struct Federation {
  std::vector<ClientState> clients;
  Parameters global_copilot;
};

struct RunResult {
  std::vector<RoundReport> reports;
  Federation final_state;
  std::optional<std::string> aborted;  // divergence diagnostics
};

struct ClientGraphs {
  LouvainResult communities;
  Partition partition;
  std::vector<Graph> graphs;
};

namespace seeds {
inline constexpr std::uint64_t kLouvain = 1;
inline constexpr std::uint64_t kAllocate = 2;
inline constexpr std::uint64_t kSplit = 3;
inline constexpr std::uint64_t kLocalInit = 4;
inline constexpr std::uint64_t kCopilotInit = 5;
inline constexpr std::uint64_t kRound = 6;
}  // namespace seeds

/// Louvain → allocate → induced subgraphs → per-client stratified splits.
inline ClientGraphs partition_dataset(const FederationConfig& cfg, const Graph& dataset) {
  if (dataset.num_nodes() < cfg.clients)
    throw PreconditionError("partition: " + std::to_string(dataset.num_nodes()) + " nodes cannot fill " +
                            std::to_string(cfg.clients) + " clients");
  ClientGraphs out;
  out.communities = louvain(dataset, derive_seed(cfg.seed, {seeds::kLouvain}));
  out.partition = allocate(dataset, out.communities.communities, cfg.clients, derive_seed(cfg.seed, {seeds::kAllocate}));
  for (std::size_t k = 0; k < cfg.clients; ++k) {
    Graph sub = induced_subgraph(dataset, out.partition.clients[k]);
    out.graphs.push_back(split_masks(sub, cfg.split, derive_seed(cfg.seed, {seeds::kSplit, k})));
  }
  return out;
}

/// Builds client states around already-split client graphs. Streams default
/// to the client index; equal streams give equal local initialisations and
/// equal augmentation draws.
inline Federation initialize_from_graphs(const FederationConfig& cfg, std::vector<Graph> graphs,
                                         std::vector<std::uint64_t> streams = {}) {
  cfg.validate();
  if (graphs.size() != cfg.clients) throw PreconditionError("initialize: one graph per client required");
  if (streams.empty())
    for (std::size_t k = 0; k < graphs.size(); ++k) streams.push_back(k);
  if (streams.size() != graphs.size()) throw PreconditionError("initialize: one stream per client required");
  const std::size_t f = graphs.front().num_features();
  const std::size_t c = graphs.front().num_classes();
  Federation fed;
  fed.global_copilot = init_model(cfg.copilot_spec(), f, c, derive_seed(cfg.seed, {seeds::kCopilotInit}));
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    ClientState s;
    s.id = k;
    s.stream = streams[k];
    s.graph = std::move(graphs[k]);
    if (s.graph.train().empty()) throw PreconditionError("initialize: client " + std::to_string(k) + " has no training nodes");
    s.view = GraphView::of(s.graph);
    s.local_spec = assign_spec(k, cfg.clients, cfg.mode, cfg.hidden);
    s.local = init_model(s.local_spec, f, c, derive_seed(cfg.seed, {seeds::kLocalInit, s.stream}));
    s.copilot = fed.global_copilot;
    s.local_optimizer.config = cfg.optimizer;
    s.copilot_optimizer.config = cfg.optimizer;
    s.volume = s.graph.train().size();
    fed.clients.push_back(std::move(s));
  }
  return fed;
}

inline Federation initialize(const FederationConfig& cfg, const Graph& dataset) {
  cfg.validate();
  return initialize_from_graphs(cfg, partition_dataset(cfg, dataset).graphs);
}

/// Fraction of `mask` rows whose argmax (lowest index on ties) equals the label.
inline double accuracy(const Matrix& logits, std::span<const int> labels, std::span<const NodeId> mask) {
  if (mask.empty()) throw PreconditionError("accuracy: empty mask");
  std::size_t correct = 0;
  for (auto v : mask) {
    Eigen::Index best = 0;
    logits.row(v).maxCoeff(&best);
    if (best == labels[v]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mask.size());
}

inline Matrix local_logits(const ClientState& s) {
  Tape tape;
  return forward(s.local_spec, s.local, s.view, tape, false).logits.value();
}

/// Local-model test accuracy on the unaugmented client graph.
inline double evaluate(const ClientState& s) {
  if (s.graph.test().empty()) throw PreconditionError("evaluate: client " + std::to_string(s.id) + " has an empty test mask");
  return accuracy(local_logits(s), s.graph.labels(), s.graph.test());
}

namespace detail {

/// Runs fn(0..count-1) on up to `workers` threads. The first failure in
/// index order is rethrown after all tasks finish.
inline void parallel_for(std::size_t count, std::size_t workers, const std::function<void(std::size_t)>& fn) {
  std::vector<std::exception_ptr> errors(count);
  auto guarded = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (workers <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) guarded(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < std::min(workers, count); ++w)
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) guarded(i);
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// T synchronous rounds: every client trains, the server aggregates copilots
/// with the configured strategy and broadcasts, then local models are
/// evaluated. Divergence stops the run and keeps the reports so far.
inline RunResult run(const FederationConfig& cfg, Federation fed) {
  cfg.validate();
  const ClientRoundOptions options = cfg.round_options();
  RunResult result;
  for (int t = 1; t <= cfg.rounds; ++t) {
    try {
      detail::parallel_for(fed.clients.size(), cfg.workers, [&](std::size_t k) {
        ClientState& s = fed.clients[k];
        Rng rng(derive_seed(cfg.seed, {seeds::kRound, s.stream, static_cast<std::uint64_t>(t)}));
        client_round(s, options, rng);
      });
    } catch (const DivergenceError& e) {
      result.aborted = "round " + std::to_string(t) + ": " + e.what();
      break;
    }

    RoundReport report;
    report.round = t;
    std::vector<double> weights(fed.clients.size(), 0.0);
    if (cfg.strategy != Strategy::LocalOnly) {
      std::vector<ClientReport> uploads;
      for (const auto& s : fed.clients) uploads.push_back({s.id, s.volume, s.knowledge, s.copilot});
      AggregationResult agg = aggregate(uploads, cfg.strategy);
      weights = agg.weights.total;
      fed.global_copilot = std::move(agg.global);
      for (auto& s : fed.clients) s.copilot = fed.global_copilot;
    }

    std::vector<ClientRecord> records(fed.clients.size());
    detail::parallel_for(fed.clients.size(), cfg.workers, [&](std::size_t k) {
      const ClientState& s = fed.clients[k];
      const Matrix logits = local_logits(s);
      ClientRecord& r = records[k];
      r.client = s.id;
      r.arch = s.local_spec.name();
      r.copilot_loss = s.copilot_loss;
      r.local_loss = s.local_loss;
      r.test_accuracy = s.graph.test().empty() ? 0.0 : accuracy(logits, s.graph.labels(), s.graph.test());
      r.val_accuracy = s.graph.val().empty() ? 0.0 : accuracy(logits, s.graph.labels(), s.graph.val());
      r.volume = s.volume;
      r.knowledge = s.knowledge;
      r.weight = weights[k];
    });
    double total = 0.0;
    for (const auto& r : records) total += r.test_accuracy;
    report.mean_test_accuracy = total / static_cast<double>(records.size());
    report.clients = std::move(records);
    result.reports.push_back(std::move(report));
  }
  result.final_state = std::move(fed);
  return result;
}

inline RunResult run(const FederationConfig& cfg, const Graph& dataset) { return run(cfg, initialize(cfg, dataset)); }

/// Mean over clients of final-round test accuracy, or, with
/// `select_best_on_val`, of each client's test accuracy at its best
/// validation round (earliest on ties).
inline double final_mean_accuracy(const std::vector<RoundReport>& reports, bool select_best_on_val = false) {
  if (reports.empty()) throw PreconditionError("final_mean_accuracy: no reports");
  if (!select_best_on_val) return reports.back().mean_test_accuracy;
  const std::size_t k = reports.front().clients.size();
  double total = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    double best_val = -1.0, test = 0.0;
    for (const auto& r : reports)
      if (r.clients[c].val_accuracy > best_val) {
        best_val = r.clients[c].val_accuracy;
        test = r.clients[c].test_accuracy;
      }
    total += test;
  }
  return total / static_cast<double>(k);
}

}  // namespace fedgkc
