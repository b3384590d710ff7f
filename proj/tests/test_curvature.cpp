#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "corpus.hpp"
#include "res/curvature.hpp"

using namespace res;
using res::testing::update_corpus;

namespace {

double min_eig(const Matrix& m) {
  return Eigen::SelfAdjointEigenSolver<Matrix>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

TEST(Curvature, HandComputedUpdate) {
  // B = 2I, delta = 0.5, v = e1, r_hat = (3, 1): r~ = (2.5, 1), v'r~ = 2.5.
  // B+ = 2I + r~r~'/2.5 - 4 e1e1'/2 + 0.5 I
  //    = [[2 + 2.5 - 2 + 0.5, 1], [1, 2 + 0.4 + 0.5]] = [[3, 1], [1, 2.9]].
  HessianApprox H(2, 0.5, 2.0);
  const VariationPair pair(Vector{{1.0, 0.0}}, Vector{{3.0, 1.0}}, 0.5);
  EXPECT_DOUBLE_EQ(pair.r_tilde[0], 2.5);
  ASSERT_EQ(regularized_update(H, pair), UpdateStatus::accepted);
  EXPECT_NEAR(H.matrix()(0, 0), 3.0, 1e-15);
  EXPECT_NEAR(H.matrix()(0, 1), 1.0, 1e-15);
  EXPECT_NEAR(H.matrix()(1, 0), 1.0, 1e-15);
  EXPECT_NEAR(H.matrix()(1, 1), 2.9, 1e-15);
  // Secant: B+ v = r_hat.
  EXPECT_NEAR((H.matrix() * pair.v - pair.r_hat).norm(), 0.0, 1e-14);
}

TEST(Curvature, ScalarCaseIsExact) {
  // n = 1: B+ = r_hat / v whatever B was.
  HessianApprox H(1, 0.1, 5.0);
  const VariationPair pair(Vector{{2.0}}, Vector{{3.0}}, 0.1);
  ASSERT_EQ(regularized_update(H, pair), UpdateStatus::accepted);
  EXPECT_NEAR(H.matrix()(0, 0), 1.5, 1e-15);
}

TEST(Curvature, SecantAndFloorOnRandomCorpus) {
  const auto corpus = update_corpus(300, {1, 2, 5, 20, 50}, {0.0, 1e-3, 1e-1}, 17);
  for (const auto& c : corpus) {
    HessianApprox H = c.before;
    ASSERT_EQ(regularized_update(H, c.pair), UpdateStatus::accepted);
    const Matrix& B = H.matrix();
    EXPECT_LE((B * c.pair.v - c.pair.r_hat).norm(), 1e-8 * (1.0 + c.pair.r_hat.norm()));
    EXPECT_GE(min_eig(B), H.delta() - 1e-8);
    EXPECT_EQ(B, B.transpose());
  }
}

TEST(Curvature, DeltaZeroMatchesClassic) {
  const auto corpus = update_corpus(200, {1, 2, 5, 20, 50}, {0.0}, 23);
  for (const auto& c : corpus) {
    HessianApprox a = c.before, b = c.before;
    regularized_update(a, c.pair);
    classic_update(b, c.pair.v, c.pair.r_hat);
    EXPECT_LE((a.matrix() - b.matrix()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Curvature, ClassicRequiresDeltaZero) {
  HessianApprox H(3, 1e-3, 1.0);
  EXPECT_THROW(classic_update(H, Vector::Ones(3), Vector::Ones(3)), std::invalid_argument);
}

TEST(Curvature, ShermanMorrisonMatchesDirectInverse) {
  const auto corpus = update_corpus(150, {1, 2, 5, 20, 50}, {0.0, 1e-3, 1e-1}, 29);
  for (const auto& c : corpus) {
    HessianApprox next = c.before;
    regularized_update(next, c.pair);
    Matrix shifted = next.matrix();
    shifted.diagonal().array() -= next.delta();
    const Matrix direct = shifted.fullPivLu().inverse();
    const Matrix formula = inverse_of_shifted(c.before, c.pair);
    EXPECT_LE((formula - direct).norm() / direct.norm(), 1e-8);
  }
}

TEST(Curvature, GuardSkipsShortSteps) {
  HessianApprox H(3, 1e-3, 1.0);
  const Matrix before = H.matrix();
  EXPECT_EQ(regularized_update(H, VariationPair(Vector::Zero(3), Vector::Ones(3), 1e-3)),
            UpdateStatus::no_movement);
  EXPECT_EQ(regularized_update(H, VariationPair(Vector::Constant(3, 1e-13), Vector::Ones(3), 1e-3)),
            UpdateStatus::no_movement);
  EXPECT_EQ(H.matrix(), before);
}

TEST(Curvature, GuardSkipsNonPositiveCurvature) {
  HessianApprox H(2, 0.1, 1.0);
  const Matrix before = H.matrix();
  // r_hat = -v: r~'v < 0.
  EXPECT_EQ(regularized_update(H, VariationPair(Vector{{1.0, 0.0}}, Vector{{-1.0, 0.0}}, 0.1)),
            UpdateStatus::curvature_not_positive);
  // r_hat = delta v: r~ = 0, which the regularized update cannot use.
  EXPECT_EQ(regularized_update(H, VariationPair(Vector{{1.0, 0.0}}, Vector{{0.1, 0.0}}, 0.1)),
            UpdateStatus::curvature_not_positive);
  EXPECT_EQ(H.matrix(), before);
}

TEST(Curvature, DescentMatrixSpectrum) {
  const double delta = 1e-3, Gamma = 1e-4;
  const auto corpus = update_corpus(100, {2, 5, 20}, {delta}, 31);
  for (const auto& c : corpus) {
    HessianApprox H = c.before;
    regularized_update(H, c.pair);
    const Vector eig = Eigen::SelfAdjointEigenSolver<Matrix>(descent_matrix(H, Gamma)).eigenvalues();
    EXPECT_GE(eig.minCoeff(), Gamma);
    EXPECT_LE(eig.maxCoeff(), 1.0 / delta + Gamma + 1e-6);
  }
}

TEST(Curvature, DescentMatrixIdentityCase) {
  HessianApprox H(3, 0.0, 2.0);
  const Matrix D = descent_matrix(H, 0.25);
  EXPECT_TRUE(D.isApprox(0.75 * Matrix::Identity(3, 3)));
  EXPECT_THROW(descent_matrix(H, -1.0), std::invalid_argument);
}

TEST(Curvature, SingularEstimateIsReported) {
  HessianApprox H(Matrix::Zero(2, 2), 0.0);
  EXPECT_FALSE(factorize(H).has_value());
  EXPECT_THROW(descent_matrix(H, 0.0), InvariantError);
}

TEST(Curvature, ConstructorGuards) {
  EXPECT_THROW(HessianApprox(3, 1.0, 1.0), std::invalid_argument);
  EXPECT_THROW(HessianApprox(Matrix::Identity(2, 3), 0.0), std::invalid_argument);
  EXPECT_THROW(HessianApprox(Matrix::Identity(2, 2), -1.0), std::invalid_argument);
  EXPECT_THROW(VariationPair(Vector::Ones(2), Vector::Ones(3), 0.0), std::invalid_argument);
  HessianApprox H(2, 0.0, 1.0);
  EXPECT_THROW(regularized_update(H, VariationPair(Vector::Ones(3), Vector::Ones(3), 0.0)),
               std::invalid_argument);
}

TEST(Curvature, NonPositiveDefiniteInputTripsInvariant) {
  // An indefinite B breaks the v'Bv > 0 invariant.
  Matrix B(2, 2);
  B << 1.0, 0.0, 0.0, -1.0;
  HessianApprox H(B, 0.0);
  EXPECT_THROW(regularized_update(H, VariationPair(Vector{{0.0, 1.0}}, Vector{{0.0, 1.0}}, 0.0)),
               InvariantError);
}
