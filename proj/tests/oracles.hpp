#pragma once

// Independent reference computations used by the unit and acceptance suites.
// Nothing here calls the code paths it is used to check.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fedgkc/fedgkc.hpp"

namespace oracle {

using fedgkc::BoundParameters;
using fedgkc::Graph;
using fedgkc::Matrix;
using fedgkc::Parameters;
using fedgkc::Tape;
using fedgkc::Tensor;

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst;  // parameter name with the largest error
};

using LossBuilder = std::function<Tensor(Tape&, const BoundParameters&)>;

/// Central finite differences with step h * max(1, |x|) against the tape's
/// gradients. The error of each parameter tensor is
/// ||analytic - numeric|| / max(||analytic||, ||numeric||), and the worst
/// tensor is reported. Tensors whose gradients are both below 1e-9 in norm
/// count as exact.
inline GradCheck check_gradients(const Parameters& at, const LossBuilder& build, double h = 1e-4) {
  Tape tape;
  auto bound = fedgkc::bind_parameters(at, tape, true);
  Tensor loss = build(tape, bound);
  tape.backward(loss);
  const auto analytic = fedgkc::gradients_of(bound);

  auto evaluate = [&](const Parameters& p) {
    Tape t;
    return build(t, fedgkc::bind_parameters(p, t, false)).item();
  };

  GradCheck result;
  Parameters probe = at;
  for (auto& [name, value] : probe) {
    Matrix numeric = Matrix::Zero(value.rows(), value.cols());
    for (Eigen::Index i = 0; i < value.size(); ++i) {
      const double x = value.data()[i];
      const double step = h * std::max(1.0, std::abs(x));
      value.data()[i] = x + step;
      const double up = evaluate(probe);
      value.data()[i] = x - step;
      const double down = evaluate(probe);
      value.data()[i] = x;
      numeric.data()[i] = (up - down) / (2.0 * step);
    }
    const Matrix& a = analytic.at(name);
    const double scale = std::max(a.norm(), numeric.norm());
    const double err = scale < 1e-9 ? 0.0 : (a - numeric).norm() / scale;
    if (err >= result.max_rel_error) {
      result.max_rel_error = err;
      result.worst = name;
    }
  }
  return result;
}

/// Undirected simple graph as an edge list on n nodes.
struct SimpleGraph {
  std::size_t n = 0;
  std::vector<std::pair<int, int>> edges;
};

/// Modularity straight from the definition:
/// Q = sum_c [ L_c / m - (D_c / 2m)^2 ].
inline double modularity(const SimpleGraph& g, const std::vector<int>& community) {
  const double m = static_cast<double>(g.edges.size());
  if (m == 0) return 0.0;
  int k = 0;
  for (int c : community) k = std::max(k, c + 1);
  std::vector<double> inside(static_cast<std::size_t>(k), 0.0), degree(static_cast<std::size_t>(k), 0.0);
  for (auto [u, v] : g.edges) {
    degree[static_cast<std::size_t>(community[static_cast<std::size_t>(u)])] += 1;
    degree[static_cast<std::size_t>(community[static_cast<std::size_t>(v)])] += 1;
    if (community[static_cast<std::size_t>(u)] == community[static_cast<std::size_t>(v)])
      inside[static_cast<std::size_t>(community[static_cast<std::size_t>(u)])] += 1;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < inside.size(); ++c) q += inside[c] / m - std::pow(degree[c] / (2 * m), 2);
  return q;
}

/// Maximum modularity over every set partition (restricted growth strings).
/// Feasible up to about 10 nodes.
inline double brute_force_max_modularity(const SimpleGraph& g) {
  const std::size_t n = g.n;
  std::vector<int> a(n, 0), running_max(n, 0);
  double best = modularity(g, a);
  if (n <= 1) return best;
  while (true) {
    std::size_t i = n - 1;
    while (i > 0 && a[i] == running_max[i - 1] + 1) --i;
    if (i == 0) break;
    ++a[i];
    for (std::size_t j = i + 1; j < n; ++j) a[j] = 0;
    for (std::size_t j = i; j < n; ++j) running_max[j] = std::max(running_max[j - 1], a[j]);
    best = std::max(best, modularity(g, a));
  }
  return best;
}

inline Graph to_graph(const SimpleGraph& s, std::size_t features = 1) {
  std::vector<fedgkc::Edge> edges;
  for (auto [u, v] : s.edges) edges.emplace_back(static_cast<fedgkc::NodeId>(u), static_cast<fedgkc::NodeId>(v));
  std::vector<int> labels(s.n, 0);
  for (std::size_t i = 0; i < s.n; ++i) labels[i] = static_cast<int>(i % 2);
  return Graph(2, Matrix::Ones(static_cast<Eigen::Index>(s.n), static_cast<Eigen::Index>(features)), labels, edges);
}

inline SimpleGraph complete(int n) {
  SimpleGraph g{static_cast<std::size_t>(n), {}};
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v) g.edges.emplace_back(u, v);
  return g;
}

inline SimpleGraph path(int n) {
  SimpleGraph g{static_cast<std::size_t>(n), {}};
  for (int u = 0; u + 1 < n; ++u) g.edges.emplace_back(u, u + 1);
  return g;
}

inline SimpleGraph star(int leaves) {
  SimpleGraph g{static_cast<std::size_t>(leaves + 1), {}};
  for (int v = 1; v <= leaves; ++v) g.edges.emplace_back(0, v);
  return g;
}

/// Two k-cliques joined by a single bridge edge.
inline SimpleGraph two_cliques(int k) {
  SimpleGraph g{static_cast<std::size_t>(2 * k), {}};
  for (int base : {0, k})
    for (int u = 0; u < k; ++u)
      for (int v = u + 1; v < k; ++v) g.edges.emplace_back(base + u, base + v);
  g.edges.emplace_back(k - 1, k);
  return g;
}

/// Small connected-ish random graph with Gaussian features and every class
/// present. Uses its own engine so fixtures do not depend on library RNG code.
inline Graph random_graph(std::size_t n, std::size_t f, std::size_t classes, double p, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<fedgkc::Edge> edges;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (b == a + 1 || u(eng) < p) edges.emplace_back(static_cast<fedgkc::NodeId>(a), static_cast<fedgkc::NodeId>(b));
  Matrix x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = z(eng);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
  return Graph(classes, std::move(x), std::move(labels), std::move(edges));
}

/// Graph with every node in the training mask.
inline Graph all_train(const Graph& g) {
  fedgkc::NodeList all(g.num_nodes());
  for (fedgkc::NodeId v = 0; v < all.size(); ++v) all[v] = v;
  return g.with_masks(all, {}, {});
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 eng(seed);
  std::normal_distribution<double> z(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = z(eng);
  return m;
}

/// Row-stochastic matrix via an explicit softmax.
inline Matrix random_probs(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
  Matrix m = random_matrix(rows, cols, seed);
  for (Eigen::Index r = 0; r < rows; ++r) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < cols; ++c) z += (m(r, c) = std::exp(m(r, c)));
    m.row(r) /= z;
  }
  return m;
}

/// KL(p || q) summed over one row pair, straight from the definition.
inline double kl(const Eigen::Ref<const fedgkc::RowVector>& p, const Eigen::Ref<const fedgkc::RowVector>& q) {
  double v = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c)
    if (p(c) > 0) v += p(c) * std::log(p(c) / q(c));
  return v;
}

inline Matrix softmax(const Matrix& x) {
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double z = 0.0;
    for (Eigen::Index c = 0; c < x.cols(); ++c) z += std::exp(x(r, c));
    for (Eigen::Index c = 0; c < x.cols(); ++c) out(r, c) = std::exp(x(r, c)) / z;
  }
  return out;
}

}  // namespace oracle
