#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"

using namespace fedgkc;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (auto row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

constexpr double kElementary = 1e-4;

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  Tape t;
  Matrix x = oracle::random_matrix(2, 5, 1);
  EXPECT_EQ(matmul(t.constant(Matrix::Identity(2, 2)), t.constant(x)).value(), x);
}

TEST(Matmul, HandProduct) {
  Tape t;
  auto r = matmul(t.constant(mat({{1, 2}, {3, 4}})), t.constant(mat({{1}, {1}})));
  EXPECT_EQ(r.value(), mat({{3}, {7}}));
}

TEST(Matmul, ShapeMismatchThrows) {
  Tape t;
  EXPECT_THROW(matmul(t.constant(Matrix::Zero(2, 3)), t.constant(Matrix::Zero(2, 3))), DimensionError);
}

TEST(Matmul, GradientMatchesFiniteDifferences) {
  Parameters p{{"a", oracle::random_matrix(3, 4, 2)}, {"b", oracle::random_matrix(4, 2, 3)}};
  auto r = oracle::check_gradients(p, [](Tape&, const BoundParameters& b) { return sum(matmul(b.at("a"), b.at("b"))); });
  EXPECT_LT(r.max_rel_error, kElementary) << r.worst;
}

TEST(Spmm, IdentityLeavesMatrixUnchanged) {
  Tape t;
  Matrix x = oracle::random_matrix(4, 3, 4);
  EXPECT_EQ(spmm(SparseMatrix::identity(4), t.constant(x)).value(), x);
}

TEST(Spmm, NormalizedTwoNodeAdjacency) {
  Graph g(2, Matrix::Zero(2, 1), {0, 1}, {{0, 1}});
  Tape t;
  Matrix r = spmm(normalize_adjacency(g), t.constant(mat({{2}, {4}}))).value();
  EXPECT_LT((r - mat({{3}, {3}})).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Spmm, DimensionMismatchThrows) {
  Tape t;
  EXPECT_THROW(spmm(SparseMatrix::identity(3), t.constant(Matrix::Zero(4, 1))), DimensionError);
}

TEST(Spmm, GradientMatchesFiniteDifferencesForAsymmetricMatrix) {
  auto s = SparseMatrix::from_entries(3, {{0, 1, 0.5}, {1, 2, -2.0}, {2, 0, 1.5}, {2, 2, 0.25}}, false);
  Parameters p{{"x", oracle::random_matrix(3, 2, 5)}};
  Matrix w = oracle::random_matrix(3, 2, 6);
  auto r = oracle::check_gradients(p, [&](Tape& t, const BoundParameters& b) {
    return sum(matmul(spmm(s, b.at("x")), t.constant(w.transpose())));
  });
  EXPECT_LT(r.max_rel_error, kElementary);
}

TEST(SparseMatrix, RejectsDuplicatesRangeAndBrokenSymmetry) {
  EXPECT_THROW(SparseMatrix::from_entries(2, {{0, 1, 1.0}, {0, 1, 2.0}}, false), PreconditionError);
  EXPECT_THROW(SparseMatrix::from_entries(2, {{0, 2, 1.0}}, false), DimensionError);
  EXPECT_THROW(SparseMatrix::from_entries(2, {{0, 1, 1.0}}, true), PreconditionError);
  EXPECT_NO_THROW(SparseMatrix::from_entries(2, {{1, 0, 1.0}, {0, 1, 1.0}}, true));
}

TEST(SparseMatrix, EntriesAreSortedRowMajor) {
  auto s = SparseMatrix::from_entries(3, {{2, 0, 1.0}, {0, 2, 1.0}, {0, 1, 1.0}}, false);
  ASSERT_EQ(s.nnz(), 3u);
  EXPECT_EQ(s.entries()[0].col, 1u);
  EXPECT_EQ(s.entries()[1].col, 2u);
  EXPECT_EQ(s.entries()[2].row, 2u);
}

TEST(Softmax, SymmetricRowIsUniform) {
  Tape t;
  auto s = softmax_rows(t.constant(mat({{0, 0}})));
  EXPECT_DOUBLE_EQ(s.value()(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(s.value()(0, 1), 0.5);
}

TEST(Softmax, HandValues) {
  Tape t;
  auto s = softmax_rows(t.constant(mat({{std::log(1.0), std::log(3.0)}})));
  EXPECT_NEAR(s.value()(0, 0), 0.25, 1e-15);
  EXPECT_NEAR(s.value()(0, 1), 0.75, 1e-15);
}

TEST(Softmax, RowsSumToOneAndStayInOpenUnitInterval) {
  Tape t;
  auto s = softmax_rows(t.constant(oracle::random_matrix(5, 7, 7, 3.0)));
  for (Eigen::Index r = 0; r < 5; ++r) EXPECT_NEAR(s.value().row(r).sum(), 1.0, 1e-9);
  EXPECT_GT(s.value().minCoeff(), 0.0);
  EXPECT_LT(s.value().maxCoeff(), 1.0);
}

TEST(Softmax, LargeLogitsStayFinite) {
  Tape t;
  auto s = softmax_rows(t.constant(mat({{1000, 0, -1000}})));
  EXPECT_NEAR(s.value()(0, 0), 1.0, 1e-15);
}

TEST(Softmax, GradientMatchesFiniteDifferences) {
  Parameters p{{"x", oracle::random_matrix(4, 3, 8)}};
  Matrix w = oracle::random_matrix(4, 3, 9);
  auto r = oracle::check_gradients(p, [&](Tape& t, const BoundParameters& b) {
    return sum(matmul(softmax_rows(b.at("x")), t.constant(w.transpose())));
  });
  EXPECT_LT(r.max_rel_error, kElementary);
}

TEST(LogSoftmax, MatchesLogOfSoftmaxAndGradient) {
  Tape t;
  Matrix x = oracle::random_matrix(3, 4, 10);
  Matrix expected = oracle::softmax(x).array().log().matrix();
  EXPECT_LT((log_softmax_rows(t.constant(x)).value() - expected).cwiseAbs().maxCoeff(), 1e-12);
  Matrix w = oracle::random_matrix(3, 4, 11);
  auto r = oracle::check_gradients({{"x", x}}, [&](Tape& tp, const BoundParameters& b) {
    return sum(matmul(log_softmax_rows(b.at("x")), tp.constant(w.transpose())));
  });
  EXPECT_LT(r.max_rel_error, kElementary);
}

TEST(KlRows, IdenticalRowsGiveZero) {
  Tape t;
  Matrix p = oracle::random_probs(4, 3, 12);
  EXPECT_NEAR(kl_rows(t.constant(p), t.constant(p)).item(), 0.0, 1e-15);
}

TEST(KlRows, HandValue) {
  Tape t;
  const double expected = 0.5 * std::log(0.5 / 0.25) + 0.5 * std::log(0.5 / 0.75);
  EXPECT_NEAR(kl_rows(t.constant(mat({{0.5, 0.5}})), t.constant(mat({{0.25, 0.75}}))).item(), expected, 1e-15);
  EXPECT_NEAR(expected, 0.1438, 1e-4);
}

TEST(KlRows, AveragesOverRows) {
  Tape t;
  Matrix p = oracle::random_probs(3, 4, 13), q = oracle::random_probs(3, 4, 14);
  double expected = 0.0;
  for (Eigen::Index r = 0; r < 3; ++r) expected += oracle::kl(p.row(r), q.row(r));
  EXPECT_NEAR(kl_rows(t.constant(p), t.constant(q)).item(), expected / 3.0, 1e-14);
}

TEST(KlRows, GrowsAsStudentMovesAwayFromTeacher) {
  Matrix teacher = mat({{0.6, 0.3, 0.1}});
  double last = -1.0;
  for (int k = 0; k <= 8; ++k) {
    const double s = 0.1 * k;
    Matrix student = mat({{0.6 - 0.5 * s, 0.3 + 0.25 * s, 0.1 + 0.25 * s}});
    Tape t;
    const double v = kl_rows(t.constant(teacher), t.constant(student)).item();
    EXPECT_GT(v, last);
    last = v;
  }
}

TEST(KlRows, TeacherReceivesNoGradient) {
  Tape t;
  auto teacher = t.variable(oracle::random_probs(2, 3, 15));
  auto logits = t.variable(oracle::random_matrix(2, 3, 16));
  auto loss = kl_rows(teacher, softmax_rows(logits));
  t.backward(loss);
  EXPECT_EQ(teacher.grad(), Matrix::Zero(2, 3));
  EXPECT_GT(logits.grad().norm(), 0.0);
}

TEST(KlRows, GradientThroughStudentSoftmax) {
  Matrix teacher = oracle::random_probs(4, 3, 17);
  auto r = oracle::check_gradients({{"x", oracle::random_matrix(4, 3, 18)}}, [&](Tape& t, const BoundParameters& b) {
    return kl_rows(t.constant(teacher), softmax_rows(b.at("x")));
  });
  EXPECT_LT(r.max_rel_error, kElementary);
}

TEST(KlRows, ShapeMismatchThrows) {
  Tape t;
  EXPECT_THROW(kl_rows(t.constant(Matrix::Ones(2, 2) / 2), t.constant(Matrix::Ones(2, 3) / 3)), DimensionError);
}

TEST(CrossEntropy, SymmetricTwoClass) {
  Tape t;
  std::vector<int> y{0};
  std::vector<std::uint32_t> mask{0};
  EXPECT_NEAR(cross_entropy(t.constant(mat({{0, 0}})), y, mask).item(), std::log(2.0), 1e-15);
}

TEST(CrossEntropy, ConfidentCorrectIsNearZero) {
  Tape t;
  std::vector<int> y{0};
  std::vector<std::uint32_t> mask{0};
  EXPECT_LT(cross_entropy(t.constant(mat({{50, 0}})), y, mask).item(), 1e-20);
}

TEST(CrossEntropy, OnlyMaskedRowsCount) {
  Tape t;
  std::vector<int> y{0, 1, 0};
  std::vector<std::uint32_t> mask{1};
  auto logits = t.variable(mat({{9, -9}, {0, 0}, {-9, 9}}));
  auto loss = cross_entropy(logits, y, mask);
  EXPECT_NEAR(loss.item(), std::log(2.0), 1e-15);
  t.backward(loss);
  Matrix g = logits.grad();
  EXPECT_EQ(g.row(0).norm(), 0.0);
  EXPECT_EQ(g.row(2).norm(), 0.0);
}

TEST(CrossEntropy, EmptyMaskAndBadLabelsThrow) {
  Tape t;
  std::vector<int> y{0, 1};
  std::vector<std::uint32_t> none;
  EXPECT_THROW(cross_entropy(t.constant(Matrix::Zero(2, 2)), y, none), PreconditionError);
  std::vector<int> bad{0, 2};
  std::vector<std::uint32_t> mask{1};
  EXPECT_THROW(cross_entropy(t.constant(Matrix::Zero(2, 2)), bad, mask), PreconditionError);
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  std::vector<int> y{0, 2, 1, 2, 0};
  std::vector<std::uint32_t> mask{0, 2, 3};
  auto r = oracle::check_gradients({{"x", oracle::random_matrix(5, 3, 19)}}, [&](Tape&, const BoundParameters& b) {
    return cross_entropy(b.at("x"), y, mask);
  });
  EXPECT_LT(r.max_rel_error, kElementary);
}

TEST(Mse, Values) {
  Tape t;
  Matrix x = oracle::random_matrix(3, 3, 20);
  EXPECT_EQ(mse(t.constant(x), t.constant(x)).item(), 0.0);
  EXPECT_DOUBLE_EQ(mse(t.constant(mat({{1, 3}})), t.constant(mat({{0, 1}}))).item(), 2.5);
  Matrix y = oracle::random_matrix(3, 3, 21);
  EXPECT_EQ(mse(t.constant(x), t.constant(y)).item(), mse(t.constant(y), t.constant(x)).item());
}

TEST(Mse, GradientMatchesFiniteDifferences) {
  Parameters p{{"a", oracle::random_matrix(3, 2, 22)}, {"b", oracle::random_matrix(3, 2, 23)}};
  auto r = oracle::check_gradients(p, [](Tape&, const BoundParameters& b) { return mse(b.at("a"), b.at("b")); });
  EXPECT_LT(r.max_rel_error, kElementary);
}

TEST(ElementwiseOps, GradientsMatchFiniteDifferences) {
  Parameters p{{"x", oracle::random_matrix(4, 3, 24)}, {"y", oracle::random_matrix(4, 3, 25)},
               {"b", oracle::random_matrix(1, 3, 26)}};
  Matrix w = oracle::random_matrix(3, 9, 27);
  auto r = oracle::check_gradients(p, [&](Tape& t, const BoundParameters& b) {
    Tensor a = relu(add_bias(b.at("x"), b.at("b")));
    Tensor c = leaky_relu(sub(b.at("x"), b.at("y")), 0.2);
    Tensor d = elu(scale(add(b.at("x"), b.at("y")), 0.7));
    Tensor cat = concat_cols({a, c, d});
    return sum(matmul(cat, t.constant(w.transpose())));
  });
  EXPECT_LT(r.max_rel_error, kElementary) << r.worst;
}

TEST(ConcatCols, StacksColumnsInOrder) {
  Tape t;
  auto r = concat_cols({t.constant(mat({{1}, {2}})), t.constant(mat({{3, 4}, {5, 6}}))});
  EXPECT_EQ(r.value(), mat({{1, 3, 4}, {2, 5, 6}}));
  EXPECT_THROW(concat_cols({t.constant(Matrix::Zero(2, 1)), t.constant(Matrix::Zero(3, 1))}), DimensionError);
}

TEST(Backward, SumGivesUnitGradients) {
  Tape t;
  auto x = t.variable(oracle::random_matrix(3, 2, 28));
  t.backward(sum(x));
  EXPECT_EQ(x.grad(), Matrix::Ones(3, 2));
}

TEST(Backward, ConstantLossGivesZeroGradients) {
  Tape t;
  auto x = t.variable(oracle::random_matrix(3, 2, 29));
  auto loss = sum(t.constant(Matrix::Ones(2, 2)));
  t.backward(loss);
  EXPECT_EQ(x.grad(), Matrix::Zero(3, 2));
}

TEST(Backward, RejectsNonScalarAndSecondUse) {
  Tape t;
  auto x = t.variable(Matrix::Ones(2, 2));
  EXPECT_THROW(t.backward(x), DimensionError);
  auto loss = sum(x);
  t.backward(loss);
  EXPECT_THROW(t.backward(loss), PreconditionError);
}

TEST(Backward, SharedInputsAccumulate) {
  Tape t;
  auto x = t.variable(mat({{2.0}}));
  t.backward(sum(add(matmul(x, x), x)));  // x^2 + x
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 5.0);
}

TEST(Backward, DetachStopsGradient) {
  Tape t;
  auto x = t.variable(mat({{3.0}}));
  t.backward(sum(matmul(detach(x), x)));
  EXPECT_DOUBLE_EQ(x.grad()(0, 0), 3.0);
}

TEST(Backward, ReplayIsBitIdentical) {
  auto run = [] {
    Tape t;
    auto x = t.variable(oracle::random_matrix(4, 3, 30));
    auto w = t.variable(oracle::random_matrix(3, 2, 31));
    auto loss = sum(softmax_rows(matmul(x, w)));
    t.backward(loss);
    return std::make_pair(x.grad(), w.grad());
  };
  auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Tape, NonFiniteValuesAreRejected) {
  Tape t;
  Matrix m = Matrix::Ones(1, 1);
  m(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(t.constant(m), NumericError);
  auto big = t.constant(mat({{1e200}}));
  EXPECT_THROW(matmul(big, big), NumericError);
}

TEST(Tape, OperandsFromDifferentTapesAreRejected) {
  Tape a, b;
  EXPECT_THROW(add(a.constant(Matrix::Ones(1, 1)), b.constant(Matrix::Ones(1, 1))), PreconditionError);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParameters) {
  Parameters p{{"w", oracle::random_matrix(2, 2, 32)}};
  const Parameters before = p;
  AdamState s;
  s.config.weight_decay = 0.0;
  adam_step(p, {{"w", Matrix::Zero(2, 2)}}, s);
  EXPECT_EQ(p, before);
  EXPECT_EQ(s.step, 1);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Parameters p{{"w", Matrix::Zero(1, 1)}};
  AdamState s;
  s.config.learning_rate = 0.1;
  adam_step(p, {{"w", Matrix::Ones(1, 1)}}, s);
  EXPECT_NEAR(p.at("w")(0, 0), -0.1, 1e-8);
}

TEST(Adam, RepeatedStepsMoveMonotonically) {
  Parameters p{{"w", Matrix::Zero(1, 3)}};
  AdamState s;
  Matrix g(1, 3);
  g << 1.0, -2.0, 0.5;
  adam_step(p, {{"w", g}}, s);
  const Matrix first = p.at("w");
  adam_step(p, {{"w", g}}, s);
  for (Eigen::Index c = 0; c < 3; ++c) {
    EXPECT_LT(first(0, c) * g(0, c), 0.0);
    EXPECT_LT(p.at("w")(0, c) * g(0, c), first(0, c) * g(0, c));
  }
}

TEST(Adam, WeightDecayIsFoldedIntoTheGradient) {
  Parameters p{{"w", Matrix::Constant(1, 1, 2.0)}};
  AdamState s;
  s.config.weight_decay = 0.5;
  adam_step(p, {{"w", Matrix::Zero(1, 1)}}, s);  // effective gradient 1.0
  EXPECT_NEAR(p.at("w")(0, 0), 2.0 - s.config.learning_rate, 1e-8);
}

TEST(Adam, MissingOrMisshapenGradientThrows) {
  Parameters p{{"w", Matrix::Zero(2, 2)}};
  AdamState s;
  EXPECT_THROW(adam_step(p, {}, s), PreconditionError);
  EXPECT_THROW(adam_step(p, {{"w", Matrix::Zero(1, 2)}}, s), DimensionError);
  EXPECT_EQ(s.step, 0);
}
