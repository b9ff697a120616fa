#include "infocon/codebook.hpp"
#include "infocon/gradcheck.hpp"

#include "common.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace infocon {
namespace {

using testing::random_matrix;
using testing::random_unit;

Matrix unit_rows(Matrix m) {
  m.rowwise().normalize();
  return m;
}

TEST(Assign, SingleConcept) {
  const Matrix alpha = Matrix::Identity(1, 3);
  const Assignment a = assign(Matrix::Identity(1, 3), alpha, 0.1);
  EXPECT_EQ(a.probs(0, 0), 1.0);
  EXPECT_EQ(a.index[0], 0);
}

TEST(Assign, OrthogonalPair) {
  const Matrix alpha = Matrix::Identity(2, 2);
  const Assignment a = assign(alpha.topRows(1), alpha, 0.1);
  EXPECT_NEAR(a.probs(0, 0), 1.0 / (1.0 + std::exp(-10.0)), 1e-12);
  EXPECT_NEAR(a.probs(0, 0), 0.9999546, 1e-7);
  EXPECT_EQ(a.index[0], 0);
}

TEST(Assign, TiesGoToLowestIndex) {
  Matrix alpha(3, 3);
  alpha << 1, 0, 0, 0, 1, 0, 0, 0, 1;
  const Matrix z = Matrix::Constant(1, 3, 1.0 / std::sqrt(3.0));
  const Assignment a = assign(z, alpha, 0.1);
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(a.probs(0, k), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(a.index[0], 0);
}

TEST(Assign, ArgmaxDoesNotDependOnTemperature) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 50; ++i) {
    const Matrix alpha = unit_rows(random_matrix(5, 6, rng));
    const Matrix z = unit_rows(random_matrix(10, 6, rng));
    EXPECT_EQ(assign(z, alpha, 0.05).index, assign(z, alpha, 2.0).index);
  }
}

TEST(Assign, TapeProbabilitiesMatchTemplate) {
  std::mt19937_64 rng(2);
  const Matrix alpha = unit_rows(random_matrix(4, 5, rng));
  const Matrix z = unit_rows(random_matrix(7, 5, rng));
  ad::Tape tape(false);
  EXPECT_LT((assign_probs(tape.constant(z), alpha, 0.1).value() - assign(z, alpha, 0.1).probs).norm(), 1e-12);
  EXPECT_EQ(argmax_rows(assign(z, alpha, 0.1).probs), assign(z, alpha, 0.1).index);
}

TEST(StraightThrough, ForwardIsBitExactHardSelection) {
  std::mt19937_64 rng(3);
  nn::Rng init(4);
  for (int i = 0; i < 1000; ++i) {
    const Codebook cb = Codebook::random({4, 0.1, 0.9}, 6, 5, init);
    const Matrix z = unit_rows(random_matrix(3, 6, rng));
    const Assignment a = assign(z, cb.alpha.value, cb.tau);
    ad::Tape tape(false);
    const Selection s = straight_through_select(tape.constant(a.probs), a.index, cb);
    for (int r = 0; r < 3; ++r) {
      EXPECT_TRUE((s.alpha_eff.value().row(r).array() == cb.alpha.value.row(a.index[r]).array()).all());
      EXPECT_TRUE((s.p_eff.value().row(r).array() == cb.p.value.row(a.index[r]).array()).all());
    }
  }
}

TEST(StraightThrough, BackwardIsTheSoftMixture) {
  std::mt19937_64 rng(5);
  nn::Rng init(6);
  const Codebook cb = Codebook::random({3, 0.1, 0.9}, 8, 4, init);  // K = 3, M = 7
  Matrix z = unit_rows(random_matrix(4, 8, rng));
  const Matrix wa = random_matrix(4, 8, rng), wp = random_matrix(4, 4, rng);
  const auto hard = assign(z, cb.alpha.value, cb.tau).index;

  ad::Tape tape;
  ad::Var zv = tape.input(z);
  const Selection s = straight_through_select(assign_probs(zv, cb.alpha.value, cb.tau), hard, cb);
  tape.backward(ad::weighted_sum(s.alpha_eff, wa) + ad::weighted_sum(s.p_eff, wp));
  const Matrix analytic = zv.grad();

  auto soft = [&]() {
    const Matrix probs = assign(z, cb.alpha.value, cb.tau).probs;
    return ((probs * cb.alpha.value).array() * wa.array()).sum() + ((probs * cb.p.value).array() * wp.array()).sum();
  };
  const Matrix numeric = numeric_gradient(soft, z, 1e-4);
  EXPECT_LT(relative_error(analytic, numeric), 1e-4);
  EXPECT_GT(analytic.norm(), 0.0);
}

TEST(StraightThrough, NoGradientReachesConceptVectors) {
  std::mt19937_64 rng(7);
  nn::Rng init(8);
  Codebook cb = Codebook::random({3, 0.1, 0.9}, 5, 4, init);
  cb.p.zero_grad();
  const Matrix alpha_before = cb.alpha.value;
  ad::Tape tape;
  ad::Var probs = tape.input(assign(unit_rows(random_matrix(6, 5, rng)), cb.alpha.value, 0.1).probs);
  const Selection s = straight_through_select(probs, {0, 1, 2, 0, 1, 2}, cb);
  tape.backward(ad::sum(s.alpha_eff) + ad::sum(s.p_eff));
  EXPECT_EQ(cb.p.grad, Matrix::Zero(3, 4));
  EXPECT_EQ(cb.alpha.value, alpha_before);
  EXPECT_GT(probs.grad().norm(), 0.0);
}

TEST(StraightThrough, OffsetTurnsSoftForwardIntoHard) {
  std::mt19937_64 rng(9);
  const Matrix table = random_matrix(3, 4, rng);
  Matrix probs = random_matrix(5, 3, rng).array().exp();
  probs = probs.array().colwise() / probs.rowwise().sum().array();
  const std::vector<int> hard = {2, 0, 1, 1, 0};
  const Matrix offset = straight_through_offset(probs, table, hard);
  ad::Tape tape(false);
  const Matrix out = ad::straight_through(tape.constant(probs), table, hard, &offset).value();
  for (int r = 0; r < 5; ++r) EXPECT_LT((out.row(r) - table.row(hard[r])).norm(), 1e-14);
}

TEST(Ema, WorkedExample) {
  Matrix alpha(1, 2);
  alpha << 1, 0;
  Matrix z(1, 2);
  z << 0, 1;
  EXPECT_EQ(ema_update(alpha, z, {0}, 0.9), 1);
  EXPECT_NEAR(alpha(0, 0), 0.993884, 1e-6);
  EXPECT_NEAR(alpha(0, 1), 0.110431, 1e-6);
  // independent evaluation of normalize((0.9, 0.1))
  EXPECT_NEAR(alpha(0, 0), 0.9 / std::sqrt(0.82), 1e-15);
}

TEST(Ema, MeanEqualToPrototypeIsAFixedPoint) {
  std::mt19937_64 rng(10);
  Matrix alpha = unit_rows(random_matrix(2, 4, rng));
  const Matrix before = alpha;
  Matrix z(2, 4);
  z.row(0) = 2.0 * alpha.row(1);
  z.row(1) = 3.0 * alpha.row(1);
  ema_update(alpha, z, {1, 1}, 0.9);
  EXPECT_LT((alpha - before).norm(), 1e-15);
}

TEST(Ema, UnassignedAndCancellingConceptsAreUnchanged) {
  std::mt19937_64 rng(11);
  Matrix alpha = unit_rows(random_matrix(3, 4, rng));
  const Matrix before = alpha;
  const Vector u = random_unit(4, rng);
  Matrix z(3, 4);
  z.row(0) = u.transpose();
  z.row(1) = -u.transpose();
  z.row(2) = random_unit(4, rng).transpose();
  EXPECT_EQ(ema_update(alpha, z, {0, 0, 2}, 0.9), 1);
  EXPECT_EQ(alpha.row(0), before.row(0));
  EXPECT_EQ(alpha.row(1), before.row(1));
  EXPECT_NE(alpha.row(2), before.row(2));
}

TEST(Ema, PreservesUnitNorm) {
  std::mt19937_64 rng(12);
  std::uniform_int_distribution<int> pick(0, 4);
  Matrix alpha = unit_rows(random_matrix(5, 7, rng));
  for (int i = 0; i < 200; ++i) {
    const Matrix z = unit_rows(random_matrix(9, 7, rng));
    std::vector<int> hard(9);
    for (auto& h : hard) h = pick(rng);
    ema_update(alpha, z, hard, 0.9);
    for (int k = 0; k < 5; ++k) EXPECT_NEAR(alpha.row(k).norm(), 1.0, 1e-9);
  }
}

TEST(Ema, RejectsInvalidIndices) {
  Matrix alpha = Matrix::Identity(2, 2);
  EXPECT_THROW(ema_update(alpha, Matrix::Identity(1, 2), {2}, 0.9), std::out_of_range);
}

TEST(Entropy, OneHotIsZero) {
  const Matrix probs = Matrix::Identity(3, 3);
  EXPECT_DOUBLE_EQ(assignment_entropy_loss(probs, {0, 1, 2}), 0.0);
}

TEST(Entropy, SingleConceptAtHalf) {
  const Matrix probs = Matrix::Constant(4, 2, 0.5);
  EXPECT_NEAR(assignment_entropy_loss(probs, {1, 1, 1, 1}), 0.693147, 1e-6);
}

TEST(Entropy, AveragesOverActiveConcepts) {
  // per-concept mean -log p of 0.1 and 0.3
  Matrix probs = Matrix::Zero(3, 4);
  probs(0, 0) = std::exp(-0.1);
  probs(1, 2) = std::exp(-0.2);
  probs(2, 2) = std::exp(-0.4);
  EXPECT_NEAR(assignment_entropy_loss(probs, {0, 2, 2}), 0.2, 1e-12);
  EXPECT_NEAR(assignment_entropy_loss(probs, {0, 2, 2}, true), 0.4 / 4.0, 1e-12);
}

TEST(Entropy, TapeMatchesPlain) {
  std::mt19937_64 rng(13);
  Matrix probs = random_matrix(6, 3, rng).array().exp();
  probs = probs.array().colwise() / probs.rowwise().sum().array();
  const std::vector<int> hard = {0, 0, 2, 2, 2, 0};
  ad::Tape tape(false);
  EXPECT_NEAR(assignment_entropy_loss(tape.constant(probs), hard).scalar(), assignment_entropy_loss(probs, hard), 1e-15);
}

TEST(Codebook, RandomInitialisation) {
  nn::Rng rng(14);
  const Codebook cb = Codebook::random({6, 0.1, 0.9}, 33, 32, rng);
  EXPECT_EQ(cb.alpha.value.rows(), 6);
  EXPECT_EQ(cb.p.value.cols(), 32);
  EXPECT_EQ(cb.p.name, "codebook.p");
  for (int k = 0; k < 6; ++k) EXPECT_NEAR(cb.alpha.value.row(k).norm(), 1.0, 1e-12);
  const double sd = std::sqrt(cb.p.value.array().square().mean());
  EXPECT_GT(sd, 0.01);
  EXPECT_LT(sd, 0.03);
}

TEST(Codebook, ActiveConcepts) {
  EXPECT_EQ(active_concepts({3, 1, 3, 0}, 5), std::vector<int>({0, 1, 3}));
}

}  // namespace
}  // namespace infocon
