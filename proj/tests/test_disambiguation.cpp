#include <gtest/gtest.h>

#include "weaklearn/disambiguation.hpp"

using namespace weaklearn;

namespace {

SparseRowMat dense_weights(const Mat& A) { return A.sparseView(); }

SparseRowMat uniform_weights(int n) { return dense_weights(Mat::Constant(n, n, 1.0 / n)); }

std::vector<int> minimizers(const LossSpec& loss, const Vec& xi) {
  auto E = loss.embedding();
  return detail::tied_minimizers(E.psi * xi, 1e-10);
}

std::vector<ConstraintSet> random_finite_sets(Rng& rng, int n, int K, double keep) {
  std::vector<ConstraintSet> sets;
  for (int i = 0; i < n; ++i) {
    std::vector<int> ys;
    for (int y = 0; y < K; ++y)
      if (rng.bernoulli(keep)) ys.push_back(y);
    if (ys.empty()) ys.push_back(static_cast<int>(rng.below(K)));
    sets.push_back(ConstraintSet::finite(ys));
  }
  return sets;
}

Mat random_points(Rng& rng, int n, int d) {
  Mat X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
  return X;
}

double total_variation(const Vec& f) {
  double v = 0.0;
  for (Eigen::Index k = 1; k < f.size(); ++k) v += std::abs(f[k] - f[k - 1]);
  return v;
}

}  // namespace

TEST(InitXi, SingletonIsItsEmbedding) {
  for (auto loss : {LossSpec::zero_one(4), abc_example_loss(), LossSpec::hamming(3)}) {
    auto E = loss.embedding();
    for (int y = 0; y < loss.size(); ++y)
      EXPECT_LE((init_xi(ConstraintSet::singleton(y), loss) - E.phi.row(y).transpose()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(InitXi, PairUnderZeroOne) {
  auto loss = LossSpec::zero_one(3);
  auto E = loss.embedding();
  Vec xi = init_xi(ConstraintSet::finite({0, 1}), loss);
  EXPECT_LE((xi - 0.5 * (E.phi.row(0) + E.phi.row(1)).transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ(minimizers(loss, xi), (std::vector<int>{0, 1}));
}

TEST(InitXi, KendallObservedCoordinates) {
  auto loss = LossSpec::kendall(3);
  Vec xi = init_xi(ConstraintSet::kendall_partial({{0, 1, 1}}), loss);
  EXPECT_EQ(xi.head(3), (Vec(3) << 1, 0, 0).finished());
  EXPECT_EQ(xi[3], 1.0);
  auto mins = minimizers(loss, xi);
  ASSERT_EQ(mins.size(), 3u);
  for (int z : mins) EXPECT_GT(loss.perms()[z][0], loss.perms()[z][1]);
}

TEST(InitXi, MinimizersAreTheSetByEnumeration) {
  // every subset of small spaces under losses that admit a flat profile
  for (auto loss : {LossSpec::zero_one(5), abc_example_loss()}) {
    const int K = loss.size();
    for (int mask = 1; mask < (1 << K); ++mask) {
      std::vector<int> S;
      for (int y = 0; y < K; ++y)
        if (mask >> y & 1) S.push_back(y);
      EXPECT_EQ(minimizers(loss, init_xi(ConstraintSet::finite(S), loss)), S) << "mask " << mask;
    }
  }
  Rng rng(1);
  for (int m = 3; m <= 4; ++m) {
    auto loss = LossSpec::kendall(m);
    for (int t = 0; t < 30; ++t) {
      Perm truth = rng.permutation(m);
      ConstraintSet::PairMap pm;
      for (auto [i, j] : pair_list(m))
        if (rng.bernoulli(0.5)) pm[{i, j}] = truth[i] > truth[j] ? 1 : -1;
      // a single observed coordinate gives a flat profile; several only bound the minimizers inside S
      auto S = ConstraintSet::kendall_partial(pm);
      for (int z : minimizers(loss, init_xi(S, loss))) EXPECT_TRUE(S.contains(loss.perms()[z]));
    }
  }
}

TEST(InitXi, RejectsUnsupportedKinds) {
  EXPECT_THROW(init_xi(ConstraintSet::interval(0, 1), LossSpec::zero_one(3)), std::invalid_argument);
}

TEST(Altmin, SingletonsAreFixed) {
  Rng rng(2);
  const int n = 15;
  std::vector<ConstraintSet> sets;
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) ys.push_back(static_cast<int>(rng.below(4))), sets.push_back(ConstraintSet::singleton(ys.back()));
  auto w = fit_weights(WeightKind::knn(4), random_points(rng, n, 2));
  auto r = disambiguate_altmin(DisambiguationProblem(w, sets, LossSpec::zero_one(4)));
  EXPECT_EQ(r.labels, ys);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_TRUE(r.converged);
}

TEST(Altmin, ClusterToyMatchesBruteForce) {
  // four clusters of three points, the first point of each cluster labelled
  Mat X(12, 2);
  const double cx[4] = {0, 10, 0, 10}, cy[4] = {0, 0, 10, 10};
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 3; ++k) X.row(3 * c + k) << cx[c] + 0.1 * k, cy[c] + 0.05 * k * k;
  std::vector<ConstraintSet> sets;
  for (int c = 0; c < 4; ++c) {
    sets.push_back(ConstraintSet::singleton(c));
    sets.push_back(ConstraintSet::full());
    sets.push_back(ConstraintSet::full());
  }
  auto loss = LossSpec::zero_one(4);
  DisambiguationProblem p(fit_weights(WeightKind::knn(3), X), sets, loss);
  auto r = disambiguate_altmin(p);
  for (int c = 0; c < 4; ++c)
    for (int k = 0; k < 3; ++k) EXPECT_EQ(r.labels[3 * c + k], c);
  // exhaustive search over the completions of the eight unlabelled points
  double best = 1e300;
  std::vector<int> y(12);
  for (int code = 0; code < (1 << 16); ++code) {
    int t = code;
    for (int i = 0; i < 12; ++i) {
      if (i % 3 == 0) y[i] = i / 3;
      else y[i] = t & 3, t >>= 2;
    }
    best = std::min(best, disambiguation_objective(p, y));
  }
  EXPECT_NEAR(disambiguation_objective(p, r.labels), best, 1e-12);
}

TEST(Altmin, SkewedAbcInstanceGoesToC) {
  auto loss = abc_example_loss();
  std::vector<ConstraintSet> sets;
  for (int k = 0; k < 5; ++k) sets.push_back(ConstraintSet::finite({0, 1, 2}));
  sets.push_back(ConstraintSet::finite({2}));
  sets.push_back(ConstraintSet::finite({0, 2}));
  sets.push_back(ConstraintSet::finite({1, 2}));
  auto r = disambiguate_altmin(DisambiguationProblem(uniform_weights(8), sets, loss));
  for (int y : r.labels) EXPECT_EQ(y, 2);
}

TEST(Altmin, FeasibleAndMonotone) {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const int n = 40, K = 5;
    auto sets = random_finite_sets(rng, n, K, 0.4);
    auto loss = t % 2 ? LossSpec::zero_one(K) : LossSpec::table(LossSpec::hamming(3).table().topLeftCorner(K, K));
    Mat X = random_points(rng, n, 2);
    WeightKind kind = t % 3 == 0 ? WeightKind::kernel_ridge(0.1) : WeightKind::knn(5);
    DisambiguationProblem p(fit_weights(kind, X), sets, loss);
    auto r = disambiguate_altmin(p);
    for (int i = 0; i < n; ++i) EXPECT_TRUE(sets[i].contains(r.labels[i]));
    for (std::size_t k = 1; k < r.objective.size(); ++k) EXPECT_LE(r.objective[k], r.objective[k - 1] + 1e-12);
  }
}

TEST(Altmin, CannotBeatBruteForceOnTinyProblems) {
  Rng rng(4);
  for (int t = 0; t < 20; ++t) {
    const int n = 6, K = 3;
    auto sets = random_finite_sets(rng, n, K, 0.5);
    DisambiguationProblem p(fit_weights(WeightKind::knn(3), random_points(rng, n, 2)), sets, LossSpec::zero_one(K));
    auto r = disambiguate_altmin(p);
    double best = 1e300;
    std::vector<int> y(n);
    for (int code = 0; code < 729; ++code) {
      int c = code;
      bool ok = true;
      for (int i = 0; i < n; ++i) y[i] = c % 3, c /= 3, ok = ok && sets[i].contains(y[i]);
      if (ok) best = std::min(best, disambiguation_objective(p, y));
    }
    EXPECT_GE(disambiguation_objective(p, r.labels), best - 1e-12);
  }
}

TEST(Decomposition, RebuildsTableWithConstantNorms) {
  for (auto loss : {LossSpec::zero_one(4), abc_example_loss(), LossSpec::hamming(3), LossSpec::kendall(3)}) {
    Mat L = loss.table();
    auto d = quadratic_decomposition(L);
    Mat R = d.psi * d.psi.transpose() - d.phi * d.phi.transpose();
    EXPECT_LE((R - L).cwiseAbs().maxCoeff(), 1e-10);
    for (int y = 0; y < L.rows(); ++y) {
      EXPECT_NEAR(d.psi.row(y).norm(), d.c, 1e-10);
      EXPECT_NEAR(d.phi.row(y).norm(), d.c, 1e-10);
    }
  }
  Mat bad(2, 2);
  bad << 0, 1, 2, 0;
  EXPECT_THROW(quadratic_decomposition(bad), std::invalid_argument);
}

TEST(SimplexProjection, MatchesBruteForceOnSmallVectors) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    Vec v = 2 * rng.normal_vector(3);
    Vec p = project_simplex(v);
    EXPECT_NEAR(p.sum(), 1.0, 1e-12);
    EXPECT_GE(p.minCoeff(), 0.0);
    double best = 1e300;
    for (int a = 0; a <= 400; ++a)
      for (int b = 0; a + b <= 400; ++b) {
        Vec q(3);
        q << a / 400.0, b / 400.0, (400 - a - b) / 400.0;
        best = std::min(best, (q - v).squaredNorm());
      }
    EXPECT_LE((p - v).squaredNorm(), best + 1e-12);
  }
}

TEST(Iqp, SingletonsAreFixed) {
  std::vector<ConstraintSet> sets{ConstraintSet::singleton(2), ConstraintSet::singleton(0), ConstraintSet::singleton(1)};
  auto r = disambiguate_iqp(DisambiguationProblem(uniform_weights(3), sets, LossSpec::zero_one(3)));
  EXPECT_EQ(r.labels, (std::vector<int>{2, 0, 1}));
}

TEST(Iqp, ConsensusWithoutContext) {
  std::vector<ConstraintSet> sets{ConstraintSet::finite({0, 1}), ConstraintSet::finite({1, 2}), ConstraintSet::singleton(1)};
  auto r = disambiguate_iqp(DisambiguationProblem(uniform_weights(3), sets, LossSpec::zero_one(3)));
  EXPECT_EQ(r.labels, (std::vector<int>{1, 1, 1}));
}

TEST(Iqp, FeasibleAndRelaxedObjectiveDecreases) {
  Rng rng(6);
  for (int t = 0; t < 10; ++t) {
    const int n = 30, K = 4;
    auto sets = random_finite_sets(rng, n, K, 0.5);
    DisambiguationProblem p(fit_weights(WeightKind::knn(5), random_points(rng, n, 2)), sets, LossSpec::zero_one(K));
    auto r = disambiguate_iqp(p);
    for (int i = 0; i < n; ++i) EXPECT_TRUE(sets[i].contains(r.labels[i]));
    for (std::size_t k = 1; k < r.relaxed.size(); ++k) EXPECT_LE(r.relaxed[k], r.relaxed[k - 1] + 1e-9);
  }
}

TEST(Supervised, Examples) {
  auto loss = LossSpec::zero_one(3);
  EXPECT_EQ(supervised_inference(Vec::Ones(1), loss, std::vector<int>{2}), 2);
  Vec a(3);
  a << 0.5, 0.3, 0.2;
  EXPECT_EQ(supervised_inference(a, loss, std::vector<int>{0, 0, 1}), 0);
  Vec b(3);
  b << 0.3, 0.3, 0.4;
  EXPECT_EQ(supervised_inference(b, loss, std::vector<int>{0, 1, 2}), 2);
}

TEST(Supervised, KendallMatchesBruteForce) {
  Rng rng(7);
  auto loss = LossSpec::kendall(3);
  for (int t = 0; t < 30; ++t) {
    std::vector<Perm> ys;
    Vec a(5);
    for (int i = 0; i < 5; ++i) ys.push_back(rng.permutation(3)), a[i] = rng.uniform(-0.2, 1.0);
    Perm z = supervised_inference(a, loss, ys);
    double best = 1e300, got = 0;
    for (const auto& p : loss.perms()) {
      double r = 0;
      for (int i = 0; i < 5; ++i) r += a[i] * loss(p, ys[i]);
      best = std::min(best, r);
    }
    for (int i = 0; i < 5; ++i) got += a[i] * loss(z, ys[i]);
    EXPECT_NEAR(got, best, 1e-12);
  }
}

TEST(Supervised, FullSupervisionReducesToInfimumEstimator) {
  Rng rng(8);
  const int n = 30, K = 4;
  WeakDataset<int> train;
  train.inputs = random_points(rng, n, 2);
  std::vector<int> ys;
  for (int i = 0; i < n; ++i) ys.push_back(static_cast<int>(rng.below(K))), train.constraints.push_back(ConstraintSet::singleton(ys.back()));
  auto loss = LossSpec::zero_one(K);
  auto w = std::make_shared<WeightingScheme>(fit_weights(WeightKind::knn(5), train.inputs));
  auto dis = disambiguate_altmin(DisambiguationProblem(*w, train.constraints, loss));
  EXPECT_EQ(dis.labels, ys);
  PartialEstimator est(w, loss, Principle::infimum);
  Mat Q = random_points(rng, 20, 2);
  auto batch = supervised_inference_batch(*w, loss, dis.labels, Q);
  for (int q = 0; q < 20; ++q) {
    Vec x = Q.row(q).transpose();
    int s = supervised_inference(w->at(x), loss, dis.labels);
    EXPECT_EQ(s, infer_classification(est, train, x).label);
    EXPECT_EQ(s, batch[q]);
  }
}

TEST(Rankings, FeasibleAndMonotone) {
  Rng rng(9);
  const int n = 20, m = 5;
  Mat X = random_points(rng, n, 2);
  std::vector<ConstraintSet> sets;
  for (int i = 0; i < n; ++i) {
    Perm truth = rng.permutation(m);
    ConstraintSet::PairMap pm;
    for (auto [a, b] : pair_list(m))
      if (rng.bernoulli(0.4)) pm[{a, b}] = truth[a] > truth[b] ? 1 : -1;
    sets.push_back(ConstraintSet::kendall_partial(pm));
  }
  auto r = disambiguate_rankings(DisambiguationProblem(fit_weights(WeightKind::knn(4), X), sets, LossSpec::kendall(m)));
  for (int i = 0; i < n; ++i) EXPECT_TRUE(sets[i].contains(r.labels[i]));
  for (std::size_t k = 1; k < r.objective.size(); ++k) EXPECT_LE(r.objective[k], r.objective[k - 1] + 1e-9);
}

TEST(Rankings, ConsistentDataRecoversTruth) {
  Rng rng(10);
  const int n = 8, m = 4;
  auto loss = LossSpec::kendall(m);
  Mat X = random_points(rng, n, 2);
  std::vector<ConstraintSet> sets;
  Perm truth = rng.permutation(m);
  for (int i = 0; i < n; ++i) {
    ConstraintSet::PairMap pm;
    for (auto [a, b] : pair_list(m))
      if (rng.bernoulli(0.5)) pm[{a, b}] = truth[a] > truth[b] ? 1 : -1;
    sets.push_back(ConstraintSet::kendall_partial(pm));
  }
  auto w = fit_weights(WeightKind::knn(8), X);
  auto r = disambiguate_rankings(DisambiguationProblem(w, sets, loss));
  for (int i = 0; i < n; ++i) EXPECT_EQ(r.labels[i], truth);
}

TEST(Intervals, SmootherPathThanInfimumEstimator) {
  // f(x) = sin(10 x), skewed intervals, kernel ridge weights as in the interval regression figure
  // averaged over draws: single small draws can go either way
  double tv_df = 0, tv_il = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    const int n = 10;
    Mat X(n, 1);
    std::vector<ConstraintSet> sets;
    for (int i = 0; i < n; ++i) {
      X(i, 0) = rng.uniform();
      const double y = std::sin(10 * X(i, 0));
      const double r = 1.0 - std::log(rng.uniform()) / 3.0;
      const double c = rng.uniform(0.0, r);
      const double mid = y + (y >= 0 ? 1.0 : -1.0) * c;
      sets.push_back(ConstraintSet::interval(mid - r, mid + r));
    }
    GaussianKernel k(0.1);
    auto w_il = std::make_shared<WeightingScheme>(fit_weights(WeightKind::kernel_ridge(1e-1), X, k));
    auto w_df = fit_weights(WeightKind::kernel_ridge(1e-6), X, k);
    WeakDataset<double> train;
    train.inputs = X;
    train.constraints = sets;
    PartialConfig cfg;
    cfg.explicit_grid = true, cfg.grid_lo = -6, cfg.grid_hi = 6;
    PartialEstimator il(w_il, LossSpec::squared(), Principle::infimum, cfg);
    auto dis = disambiguate_intervals(DisambiguationProblem(w_df, sets, LossSpec::squared()));
    for (int i = 0; i < n; ++i) EXPECT_TRUE(sets[i].contains(Vec::Constant(1, dis.labels[i])));
    Mat G(200, 1);
    for (int g = 0; g < 200; ++g) G(g, 0) = g / 199.0;
    Vec f_il = infer_interval_batch(il, train, G), f_df(200);
    for (int g = 0; g < 200; ++g) f_df[g] = supervised_inference(w_df.at(G.row(g).transpose()), dis.labels);
    tv_df += total_variation(f_df) / 20;
    tv_il += total_variation(f_il) / 20;
  }
  EXPECT_LT(tv_df, tv_il);
}
