#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>

#include "weaklearn/kernels.hpp"

using namespace weaklearn;

namespace {

Mat random_points(Rng& rng, int n, int d, double scale = 1.0) {
  Mat X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = scale * rng.normal();
  return X;
}

}  // namespace

TEST(Kernel, Values) {
  GaussianKernel k(1.0);
  Vec x(2), y(2);
  x << 0.3, -1.2;
  EXPECT_EQ(k(x, x), 1.0);
  y << 1.3, -0.2;  // |x - y| = sqrt 2
  EXPECT_NEAR(k(x, y), std::exp(-1.0), 1e-15);
  EXPECT_THROW(k(x, Vec::Zero(3)), std::invalid_argument);
  EXPECT_THROW(GaussianKernel(0.0), std::invalid_argument);
}

TEST(Kernel, MatchesDistanceRecomputation) {
  Rng rng(1);
  GaussianKernel k(0.7);
  for (int t = 0; t < 50; ++t) {
    Vec x = rng.normal_vector(4), y = rng.normal_vector(4);
    double d2 = 0;
    for (int i = 0; i < 4; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    EXPECT_NEAR(k(x, y), std::exp(-d2 / (2 * 0.49)), 1e-15);
    EXPECT_EQ(k(x, y), k(y, x));
  }
}

TEST(Kernel, PartialPlugIn) {
  GaussianKernel k(1.0);
  Vec x = Vec::Zero(3), y = Vec::Zero(3);
  EXPECT_EQ(k.partial(1, x, x), 0.0);
  x[1] = 1.0;  // x - y = e_1
  EXPECT_NEAR(k.partial(1, x, y), -std::exp(-0.5), 1e-15);
  EXPECT_THROW(k.partial(3, x, y), std::out_of_range);
}

TEST(Kernel, Partial2AtDiagonal) {
  GaussianKernel k(0.5);
  Vec x = Vec::Constant(2, 0.4);
  EXPECT_NEAR(k.partial2(0, 0, x, x), 4.0, 1e-14);
  EXPECT_EQ(k.partial2(0, 1, x, x), 0.0);
}

TEST(Kernel, DerivativesMatchFiniteDifferences) {
  Rng rng(2);
  GaussianKernel k(0.8);
  const int d = 3;
  for (int t = 0; t < 100; ++t) {
    Vec x = rng.normal_vector(d) * 0.6, y = rng.normal_vector(d) * 0.6;
    for (int i = 0; i < d; ++i) {
      const double h = 1e-5;
      Vec xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      double fd = (k(xp, y) - k(xm, y)) / (2 * h);
      double an = k.partial(i, x, y);
      EXPECT_NEAR(an, fd, 1e-6);
      EXPECT_NEAR(an, -k.partial(i, y, x), 1e-15);
      for (int j = 0; j < d; ++j) {
        const double g = 1e-4;
        Vec yp = y, ym = y;
        yp[j] += g;
        ym[j] -= g;
        double fd2 = (k.partial(i, x, yp) - k.partial(i, x, ym)) / (2 * g);
        double an2 = k.partial2(i, j, x, y);
        EXPECT_NEAR(an2, fd2, 1e-4 * std::max(1.0, std::abs(an2)));
      }
    }
  }
}

TEST(Kernel, GramIsSymmetricPsd) {
  Rng rng(3);
  GaussianKernel k(1.3);
  for (int t = 0; t < 10; ++t) {
    Mat X = random_points(rng, 20, 3);
    Mat K = k.gram(X);
    EXPECT_LE((K - K.transpose()).cwiseAbs().maxCoeff(), 0.0);
    Eigen::SelfAdjointEigenSolver<Mat> es(K);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-8 * K.trace());
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 20; ++j) EXPECT_NEAR(K(i, j), k(Vec(X.row(i)), Vec(X.row(j))), 1e-13);
  }
}

TEST(Weights, KernelRidgeSinglePoint) {
  Mat X = Mat::Constant(1, 2, 0.5);
  auto w = fit_weights(WeightKind::kernel_ridge(0.0), X);
  EXPECT_NEAR(weights_at(w, Vec(X.row(0)))[0], 1.0, 1e-8);
}

TEST(Weights, KernelRidgeMatchesExplicitInverse) {
  Mat X(3, 1);
  X << 0.0, 0.5, 1.4;
  GaussianKernel k(0.6);
  const double lambda = 0.05;
  auto w = fit_weights(WeightKind::kernel_ridge(lambda), X, k);
  // explicit 3x3 inverse by cofactors
  Mat A = k.gram(X);
  A.diagonal().array() += 3 * lambda;
  Mat C(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      int r0 = (i + 1) % 3, r1 = (i + 2) % 3, c0 = (j + 1) % 3, c1 = (j + 2) % 3;
      C(j, i) = A(r0, c0) * A(r1, c1) - A(r0, c1) * A(r1, c0);
    }
  double det = A.row(0).dot(C.col(0));
  Mat inv = C / det;
  Vec x = Vec::Constant(1, 0.8);
  Vec expect = inv * k.column(X, x);
  EXPECT_LE((w.at(x) - expect).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Weights, KernelRidgeReproducesRidgePrediction) {
  Rng rng(4);
  Mat X = random_points(rng, 30, 2);
  Vec y = rng.normal_vector(30);
  GaussianKernel k(1.0);
  const double lambda = 1e-2;
  auto w = fit_weights(WeightKind::kernel_ridge(lambda), X, k);
  Mat A = k.gram(X);
  A.diagonal().array() += 30 * lambda;
  Vec coef = A.ldlt().solve(y);
  for (int t = 0; t < 10; ++t) {
    Vec x = rng.normal_vector(2);
    EXPECT_NEAR(w.at(x).dot(y), k.column(X, x).dot(coef), 1e-8);
  }
}

TEST(Weights, KnnUniformWhenKEqualsN) {
  Rng rng(5);
  Mat X = random_points(rng, 7, 2);
  auto w = fit_weights(WeightKind::knn(7), X);
  Vec a = w.at(rng.normal_vector(2));
  for (int i = 0; i < 7; ++i) EXPECT_NEAR(a[i], 1.0 / 7, 1e-15);
}

TEST(Weights, KnnIndicatorAtTrainingPoint) {
  Rng rng(6);
  Mat X = random_points(rng, 10, 2);
  auto w = fit_weights(WeightKind::knn(1), X);
  Vec a = w.at(X.row(3).transpose());
  EXPECT_EQ(a[3], 1.0);
  EXPECT_EQ(a.sum(), 1.0);
}

TEST(Weights, KnnTieSplitsMass) {
  Mat X(3, 1);
  X << -1.0, 1.0, 5.0;
  auto w = fit_weights(WeightKind::knn(1), X);
  Vec a = w.at(Vec::Zero(1));
  EXPECT_EQ(a[0], 0.5);  // (pk)^-1 with p = 2, k = 1
  EXPECT_EQ(a[1], 0.5);
  EXPECT_EQ(a[2], 0.0);

  Mat Y(4, 1);
  Y << 0.1, -1.0, 1.0, 5.0;
  auto w2 = fit_weights(WeightKind::knn(2), Y);
  Vec b = w2.at(Vec::Zero(1));
  EXPECT_EQ(b[0], 0.5);
  EXPECT_EQ(b[1], 0.25);  // (pk)^-1 with p = 2, k = 2
  EXPECT_EQ(b[2], 0.25);
}

TEST(Weights, KnnExactlyKNonzeroAndOrderInvariant) {
  Rng rng(7);
  Mat X = random_points(rng, 25, 3);
  auto w = fit_weights(WeightKind::knn(4), X);
  auto perm = rng.permutation(25);
  Mat Xp(25, 3);
  for (int i = 0; i < 25; ++i) Xp.row(i) = X.row(perm[i]);
  auto wp = fit_weights(WeightKind::knn(4), Xp);
  for (int t = 0; t < 20; ++t) {
    Vec x = rng.normal_vector(3);
    Vec a = w.at(x), b = wp.at(x);
    EXPECT_EQ((a.array() != 0).count(), 4);
    EXPECT_NEAR(a.sum(), 1.0, 1e-15);
    for (int i = 0; i < 25; ++i) EXPECT_EQ(b[i], a[perm[i]]);
  }
}

TEST(Weights, NadarayaWatsonNormalizedAndStable) {
  Rng rng(8);
  Mat X = random_points(rng, 15, 2);
  auto w = fit_weights(WeightKind::nadaraya_watson(0.08), X);
  Vec far = Vec::Constant(2, 100.0);
  Vec a = w.at(far);
  EXPECT_NEAR(a.sum(), 1.0, 1e-12);
  EXPECT_TRUE((a.array() >= 0).all());
  Vec x = rng.normal_vector(2);
  Vec b = w.at(x);
  Vec d2 = (X.rowwise() - x.transpose()).rowwise().squaredNorm();
  Vec ref = (-d2.array() / 0.08).exp();
  ref /= ref.sum();
  EXPECT_LE((b - ref).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Weights, AtRowsMatchesAt) {
  Rng rng(9);
  Mat X = random_points(rng, 12, 2);
  Mat Q = random_points(rng, 5, 2);
  for (auto kind : {WeightKind::kernel_ridge(0.1), WeightKind::knn(3), WeightKind::nadaraya_watson(0.5)}) {
    auto w = fit_weights(kind, X);
    Mat W = w.at_rows(Q);
    for (int q = 0; q < 5; ++q) EXPECT_LE((W.row(q).transpose() - w.at(Q.row(q).transpose())).norm(), 1e-10);
  }
}

TEST(Weights, InvalidK) {
  Mat X = Mat::Zero(3, 1);
  EXPECT_THROW(fit_weights(WeightKind::knn(4), X), std::invalid_argument);
  EXPECT_THROW(fit_weights(WeightKind::knn(0), X), std::invalid_argument);
}

TEST(Jitter, SingularMatrixGetsFactoredOrRejected) {
  Mat A = Mat::Ones(4, 4);  // rank one, PSD
  EXPECT_NO_THROW(factor_with_jitter(A));
  Mat B = -Mat::Identity(3, 3);
  EXPECT_THROW(factor_with_jitter(B), SingularMatrixError);
}

TEST(Nystrom, AllPointsWhenPEqualsN) {
  Rng rng(10);
  Mat X = random_points(rng, 10, 2);
  GaussianKernel k(1.0);
  auto a = select_anchors(X, 10, rng, k);
  for (int i = 0; i < 10; ++i) EXPECT_EQ(a.indices[i], i);
  EXPECT_THROW(select_anchors(X, 11, rng, k), std::invalid_argument);
}

TEST(Nystrom, DeterministicAndPrincipalSubmatrix) {
  Rng rng(11);
  Mat X = random_points(rng, 10, 2);
  GaussianKernel k(0.9);
  Rng r1(5), r2(5);
  auto a = select_anchors(X, 4, r1, k), b = select_anchors(X, 4, r2, k);
  EXPECT_EQ(a.indices, b.indices);
  Mat K = k.gram(X);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(a.K_pp(i, j), K(a.indices[i], a.indices[j]), 1e-13);
    for (int l = 0; l < 10; ++l) EXPECT_NEAR(a.K_np(l, i), K(l, a.indices[i]), 1e-13);
  }
  EXPECT_LE((a.K_pp - a.K_pp.transpose()).cwiseAbs().maxCoeff(), 0.0);
}
