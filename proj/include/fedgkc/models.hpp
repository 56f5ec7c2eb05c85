#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fedgkc/graph.hpp"
#include "fedgkc/rng.hpp"
#include "fedgkc/tensor.hpp"

namespace fedgkc {

enum class Arch { GCN, GAT, SAGE, GIN, SGC, DeepGCN };

inline std::string_view arch_name(Arch a) {
  switch (a) {
    case Arch::GCN: return "GCN";
    case Arch::GAT: return "GAT";
    case Arch::SAGE: return "SAGE";
    case Arch::GIN: return "GIN";
    case Arch::SGC: return "SGC";
    case Arch::DeepGCN: return "DeepGCN";
  }
  return "?";
}

inline Arch parse_arch(std::string_view s) {
  if (s == "GCN" || s == "gcn") return Arch::GCN;
  if (s == "GAT" || s == "gat") return Arch::GAT;
  if (s == "SAGE" || s == "sage" || s == "GraphSAGE") return Arch::SAGE;
  if (s == "GIN" || s == "gin") return Arch::GIN;
  if (s == "SGC" || s == "sgc") return Arch::SGC;
  if (s == "DeepGCN" || s == "deepgcn") return Arch::DeepGCN;
  throw PreconditionError("unknown architecture '" + std::string(s) + "'");
}

struct ModelSpec {
  Arch arch = Arch::GCN;
  int depth = 2;
  std::size_t hidden = 64;
  int heads = 2;                   // GAT only
  bool jumping_knowledge = false;  // DeepGCN only

  std::string name() const { return std::string(arch_name(arch)) + "-" + std::to_string(depth); }

  void validate() const {
    if (depth < 1) throw PreconditionError("model spec: depth must be >= 1");
    if (hidden == 0) throw PreconditionError("model spec: hidden width must be positive");
    if (arch == Arch::GAT && (heads < 1 || hidden % static_cast<std::size_t>(heads) != 0))
      throw PreconditionError("model spec: GAT hidden width must be divisible by the head count");
  }

  bool operator==(const ModelSpec&) const = default;
};

enum class HeterogeneityMode { Arch, Scale, Homo };

inline std::string_view mode_name(HeterogeneityMode m) {
  switch (m) {
    case HeterogeneityMode::Arch: return "arch";
    case HeterogeneityMode::Scale: return "scale";
    case HeterogeneityMode::Homo: return "homo";
  }
  return "?";
}

inline HeterogeneityMode parse_mode(std::string_view s) {
  if (s == "arch") return HeterogeneityMode::Arch;
  if (s == "scale") return HeterogeneityMode::Scale;
  if (s == "homo") return HeterogeneityMode::Homo;
  throw PreconditionError("unknown heterogeneity mode '" + std::string(s) + "'");
}

/// Local architecture of client k (zero-based), chosen by k mod 5.
inline ModelSpec assign_spec(std::size_t k, std::size_t num_clients, HeterogeneityMode mode, std::size_t hidden = 64) {
  if (k >= num_clients) throw PreconditionError("assign_spec: client index out of range");
  ModelSpec s;
  s.hidden = hidden;
  const std::size_t slot = k % 5;
  switch (mode) {
    case HeterogeneityMode::Homo:
      break;
    case HeterogeneityMode::Arch: {
      constexpr Arch kArchs[] = {Arch::GCN, Arch::GAT, Arch::SAGE, Arch::GIN, Arch::SGC};
      s.arch = kArchs[slot];
      break;
    }
    case HeterogeneityMode::Scale: {
      constexpr int kDepths[] = {2, 2, 4, 6, 8};
      s.depth = kDepths[slot];
      s.arch = slot == 0 ? Arch::SGC : (slot == 1 ? Arch::GCN : Arch::DeepGCN);
      s.jumping_knowledge = s.arch == Arch::DeepGCN;
      break;
    }
  }
  return s;
}

namespace detail {

inline Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, -bound, bound);
  return m;
}

inline std::string layer_name(int l, std::string_view leaf) { return "conv" + std::to_string(l) + "." + std::string(leaf); }

}  // namespace detail

/// Glorot-uniform weights and zero biases, drawn in a fixed order from `seed`.
inline Parameters init_model(const ModelSpec& spec, std::size_t num_features, std::size_t num_classes,
                             std::uint64_t seed) {
  spec.validate();
  if (num_features == 0 || num_classes == 0) throw PreconditionError("init_model: f and C must be positive");
  Rng rng(derive_seed(seed, {0x1417ull}));
  const auto h = static_cast<Eigen::Index>(spec.hidden);
  const auto f = static_cast<Eigen::Index>(num_features);
  Parameters p;
  auto weight = [&](const std::string& name, Eigen::Index r, Eigen::Index c) { p[name] = detail::glorot(r, c, rng); };
  auto bias = [&](const std::string& name, Eigen::Index c) { p[name] = Matrix::Zero(1, c); };

  switch (spec.arch) {
    case Arch::SGC:
      weight("lin.weight", f, h);
      bias("lin.bias", h);
      break;
    case Arch::GCN:
    case Arch::DeepGCN:
      for (int l = 0; l < spec.depth; ++l) {
        weight(detail::layer_name(l, "weight"), l == 0 ? f : h, h);
        bias(detail::layer_name(l, "bias"), h);
      }
      if (spec.arch == Arch::DeepGCN && spec.jumping_knowledge) {
        weight("jk.weight", h * spec.depth, h);
        bias("jk.bias", h);
      }
      break;
    case Arch::SAGE:
      for (int l = 0; l < spec.depth; ++l) {
        weight(detail::layer_name(l, "weight"), 2 * (l == 0 ? f : h), h);
        bias(detail::layer_name(l, "bias"), h);
      }
      break;
    case Arch::GIN:
      for (int l = 0; l < spec.depth; ++l) {
        weight(detail::layer_name(l, "mlp0.weight"), l == 0 ? f : h, h);
        bias(detail::layer_name(l, "mlp0.bias"), h);
        weight(detail::layer_name(l, "mlp1.weight"), h, h);
        bias(detail::layer_name(l, "mlp1.bias"), h);
      }
      break;
    case Arch::GAT: {
      const Eigen::Index width = h / spec.heads;
      for (int l = 0; l < spec.depth; ++l) {
        for (int k = 0; k < spec.heads; ++k) {
          const std::string head = "head" + std::to_string(k) + ".";
          weight(detail::layer_name(l, head + "weight"), l == 0 ? f : h, width);
          weight(detail::layer_name(l, head + "att_src"), width, 1);
          weight(detail::layer_name(l, head + "att_dst"), width, 1);
        }
        bias(detail::layer_name(l, "bias"), h);
      }
      break;
    }
  }
  weight("classifier.weight", h, static_cast<Eigen::Index>(num_classes));
  bias("classifier.bias", static_cast<Eigen::Index>(num_classes));
  return p;
}

inline constexpr double kAttentionSlope = 0.2;

/// Attention coefficients: for every node i, softmax over j ∈ N(i) ∪ {i} of
/// LeakyReLU(target_i + source_j). Rows are aligned with `neighborhoods`.
inline std::vector<std::vector<double>> attention_weights(const Matrix& source_scores, const Matrix& target_scores,
                                                          const std::vector<NodeList>& neighborhoods) {
  std::vector<std::vector<double>> alpha(neighborhoods.size());
  for (std::size_t i = 0; i < neighborhoods.size(); ++i) {
    const auto& nb = neighborhoods[i];
    auto& a = alpha[i];
    a.resize(nb.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < nb.size(); ++k) {
      const double e = target_scores(static_cast<Eigen::Index>(i), 0) + source_scores(nb[k], 0);
      a[k] = e > 0.0 ? e : kAttentionSlope * e;
      mx = std::max(mx, a[k]);
    }
    double z = 0.0;
    for (auto& v : a) z += (v = std::exp(v - mx));
    for (auto& v : a) v /= z;
  }
  return alpha;
}

/// out_i = Σ_j α_ij h_j with α from attention_weights. `neighborhoods` must
/// outlive the backward pass.
inline Tensor attention_aggregate(const Tensor& h, const Tensor& source_scores, const Tensor& target_scores,
                                  const std::vector<NodeList>& neighborhoods) {
  const auto n = h.rows();
  if (source_scores.rows() != n || target_scores.rows() != n || source_scores.cols() != 1 ||
      target_scores.cols() != 1 || static_cast<Eigen::Index>(neighborhoods.size()) != n)
    throw DimensionError("attention_aggregate: inconsistent shapes");
  auto alpha = attention_weights(source_scores.value(), target_scores.value(), neighborhoods);
  const Matrix& hv = h.value();
  Matrix out = Matrix::Zero(n, hv.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& nb = neighborhoods[static_cast<std::size_t>(i)];
    for (std::size_t k = 0; k < nb.size(); ++k) out.row(i).noalias() += alpha[static_cast<std::size_t>(i)][k] * hv.row(nb[k]);
  }
  const auto ih = h.id(), is = source_scores.id(), it = target_scores.id();
  const auto* nbs = &neighborhoods;
  return h.tape().record(
      "attention_aggregate", std::move(out), {h, source_scores, target_scores},
      [ih, is, it, nbs, alpha = std::move(alpha)](Tape& t, std::size_t self) {
        const Matrix& g = t.grad(self);
        const Matrix& hv = t.value(ih);
        const Matrix& src = t.value(is);
        const Matrix& dst = t.value(it);
        Matrix dh = Matrix::Zero(hv.rows(), hv.cols());
        Matrix dsrc = Matrix::Zero(src.rows(), 1);
        Matrix ddst = Matrix::Zero(dst.rows(), 1);
        std::vector<double> dalpha;
        for (std::size_t i = 0; i < nbs->size(); ++i) {
          const auto& nb = (*nbs)[i];
          const auto& a = alpha[i];
          const auto gi = g.row(static_cast<Eigen::Index>(i));
          dalpha.resize(nb.size());
          double weighted = 0.0;
          for (std::size_t k = 0; k < nb.size(); ++k) {
            dh.row(nb[k]).noalias() += a[k] * gi;
            dalpha[k] = gi.dot(hv.row(nb[k]));
            weighted += a[k] * dalpha[k];
          }
          for (std::size_t k = 0; k < nb.size(); ++k) {
            const double pre = dst(static_cast<Eigen::Index>(i), 0) + src(nb[k], 0);
            const double de = a[k] * (dalpha[k] - weighted) * (pre > 0.0 ? 1.0 : kAttentionSlope);
            ddst(static_cast<Eigen::Index>(i), 0) += de;
            dsrc(nb[k], 0) += de;
          }
        }
        t.accumulate(ih, dh);
        t.accumulate(is, dsrc);
        t.accumulate(it, ddst);
      });
}

using BoundParameters = std::map<std::string, Tensor>;

struct ModelOutput {
  Tensor embeddings;  // n × hidden, output of the feature extractor
  Tensor logits;      // n × C
  BoundParameters bound;
};

/// Places parameters on a tape, as variables when `trainable`, else constants.
inline BoundParameters bind_parameters(const Parameters& params, Tape& tape, bool trainable) {
  BoundParameters bound;
  for (const auto& [name, value] : params) bound.emplace(name, trainable ? tape.variable(value) : tape.constant(value));
  return bound;
}

/// Full-graph forward pass over already-bound parameters. Binding once and
/// running several forwards (e.g. on two augmented views) accumulates all
/// gradients into the same variables.
inline ModelOutput forward(const ModelSpec& spec, const BoundParameters& bound, const GraphView& view, Tape& tape) {
  ModelOutput out;
  out.bound = bound;
  auto param = [&](const std::string& name) -> const Tensor& {
    auto it = bound.find(name);
    if (it == bound.end()) throw PreconditionError("forward: missing parameter '" + name + "' for " + spec.name());
    return it->second;
  };
  auto linear = [&](const Tensor& x, const std::string& prefix) {
    return add_bias(matmul(x, param(prefix + "weight")), param(prefix + "bias"));
  };

  Tensor x = tape.constant(view.features);
  Tensor h = x;
  switch (spec.arch) {
    case Arch::SGC: {
      h = matmul(h, param("lin.weight"));
      for (int k = 0; k < spec.depth; ++k) h = spmm(view.gcn, h);
      h = add_bias(h, param("lin.bias"));
      break;
    }
    case Arch::GCN:
    case Arch::DeepGCN: {
      std::vector<Tensor> layers;
      for (int l = 0; l < spec.depth; ++l) {
        const std::string p = "conv" + std::to_string(l) + ".";
        h = relu(add_bias(spmm(view.gcn, matmul(h, param(p + "weight"))), param(p + "bias")));
        layers.push_back(h);
      }
      if (spec.arch == Arch::DeepGCN && spec.jumping_knowledge) h = relu(linear(concat_cols(layers), "jk."));
      break;
    }
    case Arch::SAGE: {
      for (int l = 0; l < spec.depth; ++l) {
        const std::string p = "conv" + std::to_string(l) + ".";
        h = relu(linear(concat_cols({h, spmm(view.mean, h)}), p));
      }
      break;
    }
    case Arch::GIN: {
      for (int l = 0; l < spec.depth; ++l) {
        const std::string p = "conv" + std::to_string(l) + ".";
        Tensor z = spmm(view.sum_self, h);
        z = relu(linear(z, p + "mlp0."));
        h = relu(linear(z, p + "mlp1."));
      }
      break;
    }
    case Arch::GAT: {
      for (int l = 0; l < spec.depth; ++l) {
        const std::string p = "conv" + std::to_string(l) + ".";
        std::vector<Tensor> heads;
        for (int k = 0; k < spec.heads; ++k) {
          const std::string hp = p + "head" + std::to_string(k) + ".";
          Tensor hk = matmul(h, param(hp + "weight"));
          Tensor src = matmul(hk, param(hp + "att_src"));
          Tensor dst = matmul(hk, param(hp + "att_dst"));
          heads.push_back(attention_aggregate(hk, src, dst, view.attention));
        }
        h = elu(add_bias(concat_cols(heads), param(p + "bias")));
      }
      break;
    }
  }
  if (static_cast<std::size_t>(h.cols()) != spec.hidden)
    throw DimensionError("forward: embedding width " + std::to_string(h.cols()) + " != hidden " +
                         std::to_string(spec.hidden));
  out.embeddings = h;
  out.logits = linear(h, "classifier.");
  return out;
}

/// Binds `params` on `tape` and runs the forward pass; gradients are
/// available through gradients_of(out.bound) after backward.
inline ModelOutput forward(const ModelSpec& spec, const Parameters& params, const GraphView& view, Tape& tape,
                           bool trainable) {
  return forward(spec, bind_parameters(params, tape, trainable), view, tape);
}

}  // namespace fedgkc
