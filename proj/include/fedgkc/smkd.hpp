#pragma once

// Client-side self-mutual knowledge distillation: the copilot and local
// objectives, the augmentation-based self-distillation term, and one round of
// local training for a (local, copilot) model pair.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "fedgkc/adam.hpp"
#include "fedgkc/graph.hpp"
#include "fedgkc/kama.hpp"
#include "fedgkc/models.hpp"
#include "fedgkc/partition.hpp"
#include "fedgkc/rng.hpp"
#include "fedgkc/tensor.hpp"

namespace fedgkc {

struct LossWeights {
  double alpha = 0.6;
  double beta = 0.2;
  double lambda_smooth = 0.1;

  void validate() const {
    if (alpha < 0.0 || alpha > 1.0) throw PreconditionError("loss weights: alpha must lie in [0,1]");
    if (beta < 0.0 || beta > 1.0) throw PreconditionError("loss weights: beta must lie in [0,1]");
    if (alpha + beta > 1.0 + 1e-12)
      throw PreconditionError("loss weights: alpha + beta must be <= 1 (got " + std::to_string(alpha + beta) + ")");
    if (lambda_smooth < 0.0) throw PreconditionError("loss weights: lambda must be >= 0");
  }

  bool operator==(const LossWeights&) const = default;
};

struct SmkdSwitches {
  bool mutual = true;
  bool self_distill = true;
};

struct AugmentationConfig {
  double weak_edge_drop = 0.1;
  double weak_feature_mask = 0.1;
  double strong_edge_drop = 0.4;
  double strong_feature_mask = 0.4;

  bool operator==(const AugmentationConfig&) const = default;
};

enum class MutualView { Weak, Original };
enum class KnowledgeNodeSet { Train, All };

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Σ_i Σ_{j ∈ N(i) ∪ {i}} KL(softmax(teacher_j) ‖ softmax(student_i)) / n.
/// The teacher side is a constant target.
inline Tensor neighborhood_loss(const Tensor& teacher_emb, const Tensor& student_emb, const Graph& g) {
  detail::require_same_shape("neighborhood_loss", teacher_emb, student_emb);
  if (static_cast<std::size_t>(student_emb.rows()) != g.num_nodes())
    throw DimensionError("neighborhood_loss: embeddings do not match graph size");
  const Matrix teacher = detail::softmax_rows(teacher_emb.value());
  Tensor student = softmax_rows(student_emb);
  const auto n = static_cast<double>(g.num_nodes());

  // Row j's negative entropy, and the teacher mass summed over each closed
  // neighbourhood: targets_i = Σ_{j ∈ N(i) ∪ {i}} teacher_j.
  Eigen::VectorXd self_term(teacher.rows());
  for (Eigen::Index j = 0; j < teacher.rows(); ++j) {
    double acc = 0.0;
    for (Eigen::Index d = 0; d < teacher.cols(); ++d) {
      const double t = teacher(j, d);
      if (t > 0.0) acc += t * std::log(std::max(t, kLogClamp));
    }
    self_term(j) = acc;
  }
  Matrix targets = teacher;
  double constant = 0.0;
  for (std::size_t i = 0; i < g.num_nodes(); ++i) {
    constant += self_term(static_cast<Eigen::Index>(i));
    for (auto j : g.neighbors(i)) {
      targets.row(static_cast<Eigen::Index>(i)) += teacher.row(j);
      constant += self_term(j);
    }
  }
  const Matrix& s = student.value();
  double cross = 0.0;
  for (Eigen::Index i = 0; i < s.rows(); ++i)
    for (Eigen::Index d = 0; d < s.cols(); ++d) cross += targets(i, d) * std::log(std::max(s(i, d), kLogClamp));
  const auto is = student.id();
  return student.tape().record(
      "neighborhood_loss", detail::scalar((constant - cross) / n), {student},
      [is, targets = std::move(targets), n](Tape& t, std::size_t self) {
        const double g = t.grad(self)(0, 0);
        const Matrix& s = t.value(is);
        Matrix ds = Matrix::Zero(s.rows(), s.cols());
        for (Eigen::Index i = 0; i < s.rows(); ++i)
          for (Eigen::Index d = 0; d < s.cols(); ++d)
            if (s(i, d) > kLogClamp) ds(i, d) = -g * targets(i, d) / (n * s(i, d));
        t.accumulate(is, ds);
      });
}

/// α·CE(y, student) + β·L_neigh(teacher → student) + (1−α−β)·KL(p_teacher ‖ p_student).
/// Teacher tensors are detached; CE runs on the training mask. Zero-weight
/// terms are skipped.
inline Tensor mutual_objective(const Graph& g, const Tensor& student_logits, const Tensor& teacher_logits,
                               const Tensor& student_emb, const Tensor& teacher_emb, const LossWeights& w) {
  w.validate();
  detail::require_same_shape("mutual_objective", student_logits, teacher_logits);
  Tape& tape = student_logits.tape();
  const double residual = std::max(0.0, 1.0 - w.alpha - w.beta);
  Tensor total = tape.constant(detail::scalar(0.0));
  if (w.alpha > 0.0) total = add(total, scale(cross_entropy(student_logits, g.labels(), g.train()), w.alpha));
  if (w.beta > 0.0) total = add(total, scale(neighborhood_loss(teacher_emb, student_emb, g), w.beta));
  if (residual > 0.0) {
    Tensor teacher = tape.constant(detail::softmax_rows(teacher_logits.value()));
    total = add(total, scale(kl_rows(teacher, softmax_rows(student_logits)), residual));
  }
  return total;
}

/// Copilot objective: the local model is the teacher.
inline Tensor copilot_objective(const Graph& g, const Tensor& copilot_logits, const Tensor& local_logits,
                                const Tensor& copilot_emb, const Tensor& local_emb, const LossWeights& w) {
  return mutual_objective(g, copilot_logits, local_logits, copilot_emb, local_emb, w);
}

/// Local mutual objective: the copilot is the teacher.
inline Tensor local_mutual_objective(const Graph& g, const Tensor& local_logits, const Tensor& copilot_logits,
                                     const Tensor& local_emb, const Tensor& copilot_emb, const LossWeights& w) {
  return mutual_objective(g, local_logits, copilot_logits, local_emb, copilot_emb, w);
}

/// MSE(e_weak, e_strong) + KL(p_weak ‖ p_strong); the weak view is the teacher.
inline Tensor self_distill_objective(const Tensor& weak_emb, const Tensor& strong_emb, const Tensor& weak_logits,
                                     const Tensor& strong_logits) {
  detail::require_same_shape("self_distill_objective", weak_logits, strong_logits);
  Tape& tape = strong_emb.tape();
  Tensor embedding_term = mse(detach(weak_emb), strong_emb);
  Tensor teacher = tape.constant(detail::softmax_rows(weak_logits.value()));
  return add(embedding_term, kl_rows(teacher, softmax_rows(strong_logits)));
}

/// Local objective: mutual term (or plain CE when mutual distillation is off)
/// plus self-distillation (when on). `local` is the forward on the mutual
/// view; `local_weak` / `local_strong` feed self-distillation.
inline Tensor local_objective(const Graph& g, const ModelOutput& local, const ModelOutput& copilot,
                              const ModelOutput& local_weak, const ModelOutput& local_strong, const LossWeights& w,
                              SmkdSwitches switches = {}) {
  Tensor total = switches.mutual
                     ? local_mutual_objective(g, local.logits, copilot.logits, local.embeddings, copilot.embeddings, w)
                     : cross_entropy(local.logits, g.labels(), g.train());
  if (switches.self_distill)
    total = add(total, self_distill_objective(local_weak.embeddings, local_strong.embeddings, local_weak.logits,
                                              local_strong.logits));
  return total;
}

struct ClientState {
  std::size_t id = 0;
  /// Key for this client's RNG streams; defaults to the client id.
  std::uint64_t stream = 0;
  Graph graph;
  GraphView view;  // unaugmented
  ModelSpec local_spec;
  Parameters local;
  Parameters copilot;
  AdamState local_optimizer;
  AdamState copilot_optimizer;
  std::size_t volume = 0;   // N_k
  double knowledge = 0.0;   // P_k
  Matrix copilot_predictions;
  double copilot_loss = 0.0;
  double local_loss = 0.0;
};

struct ClientRoundOptions {
  int epochs = 3;
  LossWeights weights;
  SmkdSwitches switches;
  AugmentationConfig augmentation;
  bool resample_views = true;
  MutualView mutual_view = MutualView::Weak;
  ModelSpec copilot_spec;
  KnowledgeNodeSet node_set = KnowledgeNodeSet::Train;
  KnowledgeTerms terms;
  double divergence_limit = 1e6;
};

namespace detail {

struct ViewPair {
  GraphView weak;
  GraphView strong;
};

inline ViewPair sample_views(const Graph& g, const AugmentationConfig& a, Rng& rng) {
  Graph weak = augment(g, a.weak_edge_drop, a.weak_feature_mask, rng);
  Graph strong = augment(g, a.strong_edge_drop, a.strong_feature_mask, rng);
  return {GraphView::of(weak), GraphView::of(strong)};
}

inline double checked_loss(const Tensor& loss, double limit, std::size_t client, int epoch, std::string_view which) {
  const double v = loss.item();
  if (!std::isfinite(v) || v > limit)
    throw DivergenceError("client " + std::to_string(client) + " epoch " + std::to_string(epoch) + ": " +
                          std::string(which) + " loss " + std::to_string(v) + " exceeds limit " +
                          std::to_string(limit));
  return v;
}

}  // namespace detail

/// One round of local training. Each epoch: sample weak/strong views, take an
/// Adam step on the copilot (mutual objective with the local model as
/// teacher), then re-forward and take an Adam step on the local model
/// (mutual + self-distillation). Afterwards N_k, P_k and the copilot's
/// prediction matrix are recorded for the server.
inline void client_round(ClientState& s, const ClientRoundOptions& o, Rng& rng) {
  o.weights.validate();
  if (o.epochs < 0) throw PreconditionError("client_round: epochs must be >= 0");
  const Graph& g = s.graph;
  std::optional<detail::ViewPair> views;
  try {
    for (int epoch = 0; epoch < o.epochs; ++epoch) {
      if (!views || o.resample_views) views = detail::sample_views(g, o.augmentation, rng);
      const GraphView& mutual_view = o.mutual_view == MutualView::Weak ? views->weak : s.view;

      {
        Tape tape;
        ModelOutput cop = forward(o.copilot_spec, s.copilot, mutual_view, tape, true);
        Tensor loss;
        if (o.switches.mutual) {
          ModelOutput loc = forward(s.local_spec, s.local, mutual_view, tape, false);
          loss = copilot_objective(g, cop.logits, loc.logits, cop.embeddings, loc.embeddings, o.weights);
        } else {
          loss = cross_entropy(cop.logits, g.labels(), g.train());
        }
        s.copilot_loss = detail::checked_loss(loss, o.divergence_limit, s.id, epoch, "copilot");
        tape.backward(loss);
        adam_step(s.copilot, gradients_of(cop.bound), s.copilot_optimizer);
      }

      {
        Tape tape;
        BoundParameters bound = bind_parameters(s.local, tape, true);
        ModelOutput loc = forward(s.local_spec, bound, mutual_view, tape);
        ModelOutput cop;
        if (o.switches.mutual) cop = forward(o.copilot_spec, s.copilot, mutual_view, tape, false);
        ModelOutput weak, strong;
        if (o.switches.self_distill) {
          weak = &mutual_view == &views->weak ? loc : forward(s.local_spec, bound, views->weak, tape);
          strong = forward(s.local_spec, bound, views->strong, tape);
        }
        Tensor loss = local_objective(g, loc, cop, weak, strong, o.weights, o.switches);
        s.local_loss = detail::checked_loss(loss, o.divergence_limit, s.id, epoch, "local");
        tape.backward(loss);
        adam_step(s.local, gradients_of(bound), s.local_optimizer);
      }
    }

    const GraphView* record_view = &s.view;
    if (o.mutual_view == MutualView::Weak) {
      if (!views) views = detail::sample_views(g, o.augmentation, rng);
      record_view = &views->weak;
    }
    Tape tape;
    ModelOutput cop = forward(o.copilot_spec, s.copilot, *record_view, tape, false);
    s.copilot_predictions = detail::softmax_rows(cop.logits.value());
  } catch (const DivergenceError&) {
    throw;
  } catch (const NumericError& e) {
    throw DivergenceError("client " + std::to_string(s.id) + ": " + e.what());
  }
  s.volume = g.train().size();
  if (o.node_set == KnowledgeNodeSet::Train) {
    s.knowledge = knowledge_level(s.copilot_predictions, g, g.train(), o.weights.lambda_smooth, o.terms);
  } else {
    NodeList all(g.num_nodes());
    for (NodeId v = 0; v < all.size(); ++v) all[v] = v;
    s.knowledge = knowledge_level(s.copilot_predictions, g, all, o.weights.lambda_smooth, o.terms);
  }
}

}  // namespace fedgkc
