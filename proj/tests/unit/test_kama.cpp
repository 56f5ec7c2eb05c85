#include <gtest/gtest.h>

#include <numeric>

#include "oracles.hpp"

using namespace fedgkc;

namespace {

double total(const std::vector<double>& w) { return std::accumulate(w.begin(), w.end(), 0.0); }

Parameters scalar_params(double v) { return {{"x", Matrix::Constant(1, 1, v)}}; }

ClientReport report(std::size_t id, std::size_t volume, double knowledge, Parameters p) {
  return ClientReport{id, volume, knowledge, std::move(p)};
}

const std::vector<double> kPeaked{0.7, 0.2, 0.1};

}  // namespace

TEST(VolumeWeights, Examples) {
  const auto w = volume_weights(std::vector<std::size_t>{100, 300});
  EXPECT_NEAR(w[0], 0.25, 1e-12);
  EXPECT_NEAR(w[1], 0.75, 1e-12);
  for (double v : volume_weights(std::vector<std::size_t>{7, 7, 7, 7})) EXPECT_NEAR(v, 0.25, 1e-12);
  EXPECT_EQ(volume_weights(std::vector<std::size_t>{42}), std::vector<double>{1.0});
}

TEST(VolumeWeights, RejectsEmptyClient) {
  EXPECT_THROW(volume_weights(std::vector<std::size_t>{3, 0}), PreconditionError);
  EXPECT_THROW(volume_weights(std::vector<std::size_t>{}), PreconditionError);
}

TEST(KnowledgeStrength, Examples) {
  EXPECT_NEAR(knowledge_strength(kPeaked), 0.7, 1e-12);
  EXPECT_NEAR(knowledge_strength(std::vector<double>(4, 0.25)), 0.25, 1e-12);
  EXPECT_NEAR(knowledge_strength(std::vector<double>{0, 1, 0}), 1.0, 1e-12);
}

TEST(KnowledgeClarity, Examples) {
  EXPECT_NEAR(knowledge_clarity(kPeaked, Matrix(0, 3), 0.1), 0.2, 1e-12);
  Matrix same(1, 3);
  same << 0.7, 0.2, 0.1;
  EXPECT_NEAR(knowledge_clarity(kPeaked, same, 0.1), 0.1, 1e-12);
  for (int m : {2, 3, 5, 10}) {
    const double expected = (2.0 / m - 1.0) / (m - 1.0);
    EXPECT_NEAR(knowledge_clarity(std::vector<double>(static_cast<std::size_t>(m), 1.0 / m), Matrix(0, m), 0.1),
                expected, 1e-12);
  }
}

TEST(KnowledgeClarity, SmoothingIsMeanCosineToNeighbours) {
  Matrix nb(2, 3);
  nb << 0.1, 0.2, 0.7, 0.7, 0.2, 0.1;
  const double c0 = (0.07 + 0.04 + 0.07) / (0.54);  // |p|^2 = 0.54 for both rows
  const double expected = 0.2 - 0.5 * (c0 + 1.0) / 2.0;
  EXPECT_NEAR(knowledge_clarity(kPeaked, nb, 0.5), expected, 1e-12);
}

TEST(KnowledgeClarity, NeedsTwoClasses) {
  EXPECT_THROW(knowledge_clarity(std::vector<double>{1.0}, Matrix(0, 1), 0.1), PreconditionError);
}

TEST(KnowledgeLevel, Examples) {
  Matrix p(1, 3);
  p << 0.7, 0.2, 0.1;
  const Graph single(3, Matrix::Zero(1, 1), {0}, {});
  EXPECT_NEAR(knowledge_level(p, single, std::vector<NodeId>{0}, 0.1), 0.9, 1e-12);

  Matrix onehot = Matrix::Zero(4, 3);
  for (int i = 0; i < 4; ++i) onehot(i, i % 3) = 1.0;
  const Graph edgeless(3, Matrix::Zero(4, 1), {0, 1, 2, 0}, {});
  EXPECT_NEAR(knowledge_level(onehot, edgeless, std::vector<NodeId>{0, 1, 2, 3}, 0.1), 1.5, 1e-12);
}

TEST(KnowledgeLevel, UniformRowsWithSimilarNeighboursClamp) {
  const int m = 50;
  const Graph g(static_cast<std::size_t>(m), Matrix::Zero(3, 1), {0, 1, 2}, {{0, 1}, {1, 2}});
  const Matrix p = Matrix::Constant(3, m, 1.0 / m);
  EXPECT_EQ(knowledge_level(p, g, std::vector<NodeId>{0, 1, 2}, 0.1), kKnowledgeFloor);
}

TEST(KnowledgeLevel, AveragesOverRequestedNodesOnly) {
  Matrix p(2, 2);
  p << 0.9, 0.1, 0.6, 0.4;
  const Graph g(2, Matrix::Zero(2, 1), {0, 1}, {});
  EXPECT_NEAR(knowledge_level(p, g, std::vector<NodeId>{1}, 0.1), 0.6 + 0.2, 1e-12);
  EXPECT_NEAR(knowledge_level(p, g, std::vector<NodeId>{0, 1}, 0.1), 0.5 * (0.9 + 0.8 + 0.6 + 0.2), 1e-12);
  EXPECT_THROW(knowledge_level(p, g, std::vector<NodeId>{}, 0.1), PreconditionError);
}

TEST(KnowledgeLevel, TermsCanBeSwitchedOff) {
  Matrix p(1, 3);
  p << 0.7, 0.2, 0.1;
  const Graph single(3, Matrix::Zero(1, 1), {0}, {});
  const std::vector<NodeId> nodes{0};
  EXPECT_NEAR(knowledge_level(p, single, nodes, 0.1, {true, false}), 0.7, 1e-12);
  EXPECT_NEAR(knowledge_level(p, single, nodes, 0.1, {false, true}), 0.2, 1e-12);
}

TEST(KnowledgeWeights, Examples) {
  const auto a = knowledge_weights(std::vector<double>{0.9, 0.9});
  EXPECT_NEAR(a[0], 0.5, 1e-12);
  EXPECT_NEAR(a[1], 0.5, 1e-12);
  const auto b = knowledge_weights(std::vector<double>{1.2, 0.6});
  EXPECT_NEAR(b[0], 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(b[1], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(knowledge_weights(std::vector<double>{0.3}), std::vector<double>{1.0});
}

TEST(TotalWeights, Examples) {
  const auto w = total_weights(std::vector<double>{0.25, 0.75}, std::vector<double>{0.5, 0.5});
  EXPECT_NEAR(w[0], 0.375, 1e-12);
  EXPECT_NEAR(w[1], 0.625, 1e-12);
  const std::vector<double> fam{0.1, 0.3, 0.6};
  const auto same = total_weights(fam, fam);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(same[k], fam[k], 1e-12);
  const std::vector<double> uni(4, 0.25);
  for (double v : total_weights(uni, uni)) EXPECT_NEAR(v, 0.25, 1e-12);
}

TEST(Aggregate, Examples) {
  std::vector<ClientReport> one{report(0, 5, 0.7, scalar_params(3.5))};
  EXPECT_EQ(aggregate(one).global, scalar_params(3.5));

  // N = [100, 300] and P = [0.9, 0.9] give w = [0.375, 0.625].
  std::vector<ClientReport> two{report(0, 100, 0.9, scalar_params(0.0)), report(1, 300, 0.9, scalar_params(10.0))};
  const auto r = aggregate(two);
  EXPECT_NEAR(r.weights.total[0], 0.375, 1e-12);
  EXPECT_NEAR(r.weights.total[1], 0.625, 1e-12);
  EXPECT_NEAR(r.global.at("x")(0, 0), 6.25, 1e-12);
}

TEST(Aggregate, IdenticalSnapshotsAreReproducedExactly) {
  const Parameters p = {{"a", oracle::random_matrix(3, 4, 1)}, {"b", oracle::random_matrix(1, 4, 2)}};
  std::vector<ClientReport> reports;
  for (std::size_t k = 0; k < 5; ++k) reports.push_back(report(k, 10 + 37 * k, 0.1 + 0.3 * k, p));
  for (Strategy s : {Strategy::FedGKC, Strategy::UniformAvg, Strategy::VolumeAvg})
    EXPECT_EQ(aggregate(reports, s).global, p) << strategy_name(s);
}

TEST(Aggregate, ShapeMismatchThrows) {
  std::vector<ClientReport> reports{report(0, 1, 1.0, scalar_params(1.0)),
                                    report(1, 1, 1.0, {{"x", Matrix::Zero(1, 2)}})};
  EXPECT_THROW(aggregate(reports), DimensionError);
  reports[1].copilot = {{"y", Matrix::Zero(1, 1)}};
  EXPECT_THROW(aggregate(reports), DimensionError);
}

TEST(Aggregate, LocalOnlyHasNoServerStep) {
  std::vector<ClientReport> reports{report(0, 1, 1.0, scalar_params(1.0))};
  EXPECT_THROW(aggregate(reports, Strategy::LocalOnly), PreconditionError);
}

TEST(Aggregate, RandomInstancesStayInEnvelopeWithNormalizedWeights) {
  std::mt19937_64 eng(2024);
  std::uniform_int_distribution<std::size_t> count(1, 500), clients(1, 8);
  std::uniform_real_distribution<double> level(1e-6, 2.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = clients(eng);
    std::vector<ClientReport> reports;
    for (std::size_t c = 0; c < k; ++c)
      reports.push_back(report(c, count(eng), level(eng),
                               {{"w", oracle::random_matrix(3, 2, eng(), 5.0)}, {"b", oracle::random_matrix(1, 2, eng())}}));
    const auto r = aggregate(reports);
    EXPECT_NEAR(total(r.weights.volume), 1.0, 1e-9);
    EXPECT_NEAR(total(r.weights.knowledge), 1.0, 1e-9);
    EXPECT_NEAR(total(r.weights.total), 1.0, 1e-9);
    for (double w : r.weights.total) {
      EXPECT_GT(w, 0.0);
      EXPECT_LE(w, 1.0);
    }
    for (const auto& [name, g] : r.global) {
      Matrix lo = reports[0].copilot.at(name), hi = lo;
      for (const auto& rep : reports) {
        lo = lo.cwiseMin(rep.copilot.at(name));
        hi = hi.cwiseMax(rep.copilot.at(name));
      }
      EXPECT_TRUE((g.array() >= lo.array()).all() && (g.array() <= hi.array()).all()) << name;
    }
  }
}

TEST(Aggregate, StrategiesCoincideForEqualVolumeAndKnowledge) {
  std::vector<ClientReport> reports;
  for (std::size_t k = 0; k < 4; ++k) reports.push_back(report(k, 25, 0.8, {{"w", oracle::random_matrix(2, 3, k)}}));
  const auto a = aggregate(reports, Strategy::FedGKC);
  const auto b = aggregate(reports, Strategy::UniformAvg);
  const auto c = aggregate(reports, Strategy::VolumeAvg);
  EXPECT_EQ(a.weights.total, b.weights.total);
  EXPECT_EQ(a.weights.total, c.weights.total);
  EXPECT_EQ(a.global, b.global);
  EXPECT_EQ(a.global, c.global);
}

TEST(Aggregate, SymmetricClientsGetEqualWeights) {
  const Graph g = oracle::random_graph(6, 2, 3, 0.4, 3);
  const Matrix probs = oracle::random_probs(6, 3, 5);
  const std::vector<NodeId> nodes{0, 2, 4};
  const double level = knowledge_level(probs, g, nodes, 0.1);
  std::vector<ClientReport> reports{report(0, 3, level, scalar_params(1.0)), report(1, 3, level, scalar_params(2.0)),
                                    report(2, 9, 2 * level, scalar_params(3.0))};
  const auto w = aggregate(reports).weights.total;
  EXPECT_EQ(w[0], w[1]);
  EXPECT_GT(w[2], w[0]);
}
