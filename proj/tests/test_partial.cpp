#include <gtest/gtest.h>

#include <bit>

#include "weaklearn/partial.hpp"

using namespace weaklearn;

namespace {

Mat random_points(Rng& rng, int n, int d) {
  Mat X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
  return X;
}

// all labels within Hamming distance r of center, over m bits
ConstraintSet hamming_ball(int m, int center, double r) {
  std::vector<int> ys;
  for (int y = 0; y < (1 << m); ++y)
    if (std::popcount(static_cast<unsigned>(y ^ center)) <= r) ys.push_back(y);
  return ConstraintSet::finite(ys);
}

std::vector<ConstraintSet> abc_sets() {
  return {ConstraintSet::finite({0, 1, 2}), ConstraintSet::finite({2}), ConstraintSet::finite({0, 2}),
          ConstraintSet::finite({1, 2})};
}

Vec abc_weights() {
  Vec a(4);
  a << 5.0 / 8, 1.0 / 8, 1.0 / 8, 1.0 / 8;
  return a;
}

}  // namespace

TEST(SetLoss, FiniteMatchesDefinition) {
  auto loss = abc_example_loss();
  auto S = ConstraintSet::finite({1, 2});
  EXPECT_EQ(pointwise_set_loss(loss, Principle::infimum, 0, S), 1.0);
  EXPECT_EQ(pointwise_set_loss(loss, Principle::average, 1, S), 1.0);
  EXPECT_EQ(pointwise_set_loss(loss, Principle::supremum, 2, S), 2.0);
  EXPECT_THROW(pointwise_set_loss(loss, Principle::infimum, 0, ConstraintSet::finite({})), std::invalid_argument);
}

TEST(SetLoss, InfAvgSupOrdered) {
  Rng rng(1);
  auto loss = LossSpec::kendall(4);
  for (int t = 0; t < 50; ++t) {
    Perm truth = rng.permutation(4);
    ConstraintSet::PairMap pm;
    for (auto [i, j] : pair_list(4))
      if (rng.bernoulli(0.4)) pm[{i, j}] = truth[i] > truth[j] ? 1 : -1;
    auto S = ConstraintSet::kendall_partial(pm);
    int z = static_cast<int>(rng.below(24));
    double a = pointwise_set_loss(loss, Principle::infimum, z, S);
    double b = pointwise_set_loss(loss, Principle::average, z, S);
    double c = pointwise_set_loss(loss, Principle::supremum, z, S);
    EXPECT_LE(a, b + 1e-12);
    EXPECT_LE(b, c + 1e-12);
  }
}

TEST(SetLoss, IntervalLossesAgainstQuadrature) {
  Rng rng(2);
  for (int t = 0; t < 30; ++t) {
    double a = rng.uniform(-3, 1), b = a + rng.uniform(0.1, 2), c = b + rng.uniform(0, 1), d = c + rng.uniform(0.1, 1);
    auto S = ConstraintSet::intervals({{a, b}, {c, d}});
    double z = rng.uniform(-4, 5);
    for (auto loss : {LossSpec::squared(), LossSpec::absolute_deviation()}) {
      const int N = 200000;
      double inf = 1e300, sup = 0, mean = 0;
      const double total = (b - a) + (d - c);
      for (auto [lo, hi] : {std::pair{a, b}, std::pair{c, d}})
        for (int k = 0; k < N; ++k) {
          double y = lo + (k + 0.5) / N * (hi - lo);
          double l = loss(z, y);
          inf = std::min(inf, l);
          sup = std::max(sup, l);
          mean += l / N * (hi - lo) / total;
        }
      for (double y : {a, b, c, d}) inf = std::min(inf, loss(z, y)), sup = std::max(sup, loss(z, y));
      if (S.contains(Vec::Constant(1, z))) inf = 0.0;
      EXPECT_NEAR(pointwise_set_loss(loss, Principle::infimum, z, S), inf, 1e-12);
      EXPECT_NEAR(pointwise_set_loss(loss, Principle::supremum, z, S), sup, 1e-12);
      EXPECT_NEAR(pointwise_set_loss(loss, Principle::average, z, S), mean, 1e-6);
    }
  }
}

TEST(SetLoss, UnboundedSets) {
  auto half = ConstraintSet::interval(1.0, std::numeric_limits<double>::infinity());
  auto loss = LossSpec::squared();
  EXPECT_EQ(pointwise_set_loss(loss, Principle::infimum, 0.0, half), 1.0);
  EXPECT_EQ(pointwise_set_loss(loss, Principle::infimum, 5.0, half), 0.0);
  EXPECT_THROW(pointwise_set_loss(loss, Principle::supremum, 0.0, half), std::invalid_argument);
  EXPECT_THROW(pointwise_set_loss(loss, Principle::average, 0.0, half), std::invalid_argument);
}

TEST(Classification, PointwiseExample) {
  auto loss = abc_example_loss();
  auto sets = abc_sets();
  Vec a = abc_weights();
  EXPECT_EQ(infer_classification_weights(loss, Principle::infimum, sets, a).label, 2);
  EXPECT_EQ(infer_classification_weights(loss, Principle::average, sets, a).label, 0);
  EXPECT_EQ(infer_classification_weights(loss, Principle::supremum, sets, a).label, 0);
  auto r = infer_classification_weights(loss, Principle::supremum, sets, a).risk;
  EXPECT_NEAR(r[0], 1.0, 1e-15);
  EXPECT_NEAR(r[1], 2.0, 1e-15);
  EXPECT_NEAR(r[2], 13.0 / 8, 1e-15);
}

TEST(Classification, DecodeExample) {
  auto loss = abc_example_loss();
  Vec q(3);
  q << 13.0 / 48, 13.0 / 48, 22.0 / 48;
  EXPECT_EQ(decode_distribution(loss, q), 0);
  EXPECT_EQ(decode(loss, q), 0);
  EXPECT_THROW(decode(loss, Vec::Zero(2)), std::invalid_argument);
}

TEST(Classification, DecodeMatchesRiskMinimizer) {
  Rng rng(3);
  for (auto loss : {LossSpec::zero_one(5), LossSpec::hamming(3), LossSpec::kendall(4), abc_example_loss()}) {
    const int K = loss.size();
    Mat L = loss.table();
    for (int t = 0; t < 50; ++t) {
      Vec q(K);
      for (int y = 0; y < K; ++y) q[y] = rng.uniform();
      q /= q.sum();
      Vec risk = L * q;
      Eigen::Index best;
      risk.minCoeff(&best);
      EXPECT_NEAR(risk[decode_distribution(loss, q)], risk[best], 1e-12);
    }
  }
}

TEST(Classification, DegenerateWhenNoInformation) {
  auto loss = LossSpec::zero_one(4);
  std::vector<ConstraintSet> sets(3, ConstraintSet::full());
  auto d = infer_classification_weights(loss, Principle::infimum, sets, Vec::Constant(3, 1.0 / 3));
  EXPECT_TRUE(d.degenerate);
  EXPECT_EQ(d.label, 0);
  auto e = infer_classification_weights(loss, Principle::infimum, {ConstraintSet::singleton(2)}, Vec::Ones(1));
  EXPECT_FALSE(e.degenerate);
  EXPECT_EQ(e.label, 2);
}

TEST(Classification, InfimumEqualsDecodeOfSetMass) {
  Rng rng(4);
  const int m = 5, n = 40;
  auto loss = LossSpec::zero_one(m);
  Mat X = random_points(rng, n, 2);
  std::vector<ConstraintSet> sets;
  for (int i = 0; i < n; ++i) {
    std::vector<int> ys;
    for (int y = 0; y < m; ++y)
      if (rng.bernoulli(0.4)) ys.push_back(y);
    if (ys.empty()) ys.push_back(static_cast<int>(rng.below(m)));
    sets.push_back(ConstraintSet::finite(ys));
  }
  for (auto kind : {WeightKind::knn(5), WeightKind::kernel_ridge(0.05), WeightKind::nadaraya_watson(0.5)}) {
    auto w = fit_weights(kind, X);
    for (int t = 0; t < 30; ++t) {
      Vec a = w.at(rng.normal_vector(2));
      Vec g = Vec::Zero(m);
      for (int i = 0; i < n; ++i)
        for (int y = 0; y < m; ++y) g[y] += a[i] * (sets[i].contains(y) ? 0.0 : 1.0);
      EXPECT_EQ(infer_classification_weights(loss, Principle::infimum, sets, a).label, decode(loss, g));
    }
  }
}

TEST(Classification, EstimatorAndBatchAgree) {
  Rng rng(5);
  const int n = 30;
  WeakDataset<int> train;
  train.inputs = random_points(rng, n, 2);
  for (int i = 0; i < n; ++i) train.constraints.push_back(ConstraintSet::finite({int(rng.below(3)), int(rng.below(3))}));
  auto w = std::make_shared<WeightingScheme>(fit_weights(WeightKind::knn(4), train.inputs));
  PartialEstimator est(w, LossSpec::zero_one(3), Principle::infimum);
  Mat Q = random_points(rng, 10, 2);
  auto batch = infer_classification_batch(est, train, Q);
  for (int q = 0; q < 10; ++q) EXPECT_EQ(batch[q], infer_classification(est, train, Q.row(q).transpose()).label);
}

TEST(Multilabel, ScoresAndThreshold) {
  std::vector<ConstraintSet> sets{ConstraintSet::tags({0, 1}, {2}), ConstraintSet::tags({2}, {0}), ConstraintSet::full()};
  Vec a(3);
  a << 0.5, 0.3, 0.2;
  Vec h = multilabel_scores(4, sets, a);
  EXPECT_NEAR(h[0], 0.2, 1e-15);
  EXPECT_NEAR(h[1], 0.5, 1e-15);
  EXPECT_NEAR(h[2], -0.2, 1e-15);
  EXPECT_EQ(h[3], 0.0);
  EXPECT_EQ(multilabel_decide(h, MultilabelMode::threshold(0.0)), (std::vector<int>{1, 1, 0, 0}));
  EXPECT_EQ(multilabel_decide(h, MultilabelMode::threshold(0.3)), (std::vector<int>{0, 1, 0, 0}));
  EXPECT_EQ(multilabel_decide(h, MultilabelMode::topk(1)), (std::vector<int>{0, 1, 0, 0}));
  EXPECT_EQ(multilabel_decide(h, MultilabelMode::topk(3)), (std::vector<int>{1, 1, 0, 1}));
  EXPECT_THROW(multilabel_decide(h, MultilabelMode::topk(5)), std::invalid_argument);
}

TEST(Multilabel, TopKTiesTowardSmallestIndex) {
  Vec h = Vec::Zero(4);
  EXPECT_EQ(multilabel_decide(h, MultilabelMode::topk(2)), (std::vector<int>{1, 1, 0, 0}));
}

TEST(Multilabel, ThresholdIsInfimumHammingMinimizer) {
  Rng rng(6);
  const int m = 5;
  auto loss = LossSpec::hamming(m);
  for (int t = 0; t < 40; ++t) {
    std::vector<ConstraintSet> sets;
    for (int i = 0; i < 8; ++i) {
      std::vector<int> P, N;
      for (int j = 0; j < m; ++j) {
        double u = rng.uniform();
        if (u < 0.3) P.push_back(j);
        else if (u < 0.6) N.push_back(j);
      }
      sets.push_back(ConstraintSet::tags(P, N));
    }
    Vec a = Vec::Zero(8);
    for (int i = 0; i < 8; ++i) a[i] = rng.uniform();
    auto bits = multilabel_decide(multilabel_scores(m, sets, a), MultilabelMode::threshold(0.0));
    int id = 0;
    for (int j = 0; j < m; ++j) id |= bits[j] << j;
    for (auto p : {Principle::infimum, Principle::average, Principle::supremum}) {
      auto d = infer_classification_weights(loss, p, sets, a);
      EXPECT_NEAR(d.risk[d.label], d.risk[id], 1e-12) << principle_name(p);
    }
  }
}

TEST(Multilabel, InfimumBeatsSupremumOnHammingBalls) {
  // 50 training points, six tags from random hyperplanes, Hamming-ball supervision
  Rng rng(7);
  const int m = 6, n = 50, d = 3;
  Mat W = random_points(rng, m, d);
  auto label_of = [&](const Vec& x) {
    int y = 0;
    for (int j = 0; j < m; ++j) y |= (W.row(j).dot(x) > 0 ? 1 : 0) << j;
    return y;
  };
  WeakDataset<int> train;
  train.inputs = random_points(rng, n, d);
  for (int i = 0; i < n; ++i) {
    int y = label_of(train.inputs.row(i).transpose());
    double r = rng.uniform(0.0, 0.5 * (m + 1));
    int center = y;
    for (int f = 0; f < static_cast<int>(r); ++f) center ^= 1 << rng.below(m);
    train.constraints.push_back(hamming_ball(m, center, r));
    train.truths.push_back(y);
  }
  auto loss = LossSpec::hamming(m);
  auto w = std::make_shared<WeightingScheme>(fit_weights(WeightKind::knn(5), train.inputs));
  Mat Q = random_points(rng, 300, d);
  double risk[2] = {0, 0};
  int idx = 0;
  for (auto p : {Principle::infimum, Principle::supremum}) {
    PartialEstimator est(w, loss, p);
    auto pred = infer_classification_batch(est, train, Q);
    for (int q = 0; q < Q.rows(); ++q) risk[idx] += loss(pred[q], label_of(Q.row(q).transpose())) / Q.rows();
    ++idx;
  }
  EXPECT_LE(risk[0], risk[1]);
}

TEST(Regression, SingleIntervalPicksItsMiddle) {
  auto loss = LossSpec::squared();
  std::vector<ConstraintSet> sets{ConstraintSet::interval(1.0, 2.0)};
  PartialConfig cfg;
  auto grid = regression_grid(sets, cfg);
  EXPECT_NEAR(grid.lo, 0.9, 1e-15);
  EXPECT_NEAR(grid.hi, 2.1, 1e-15);
  const double step = (grid.hi - grid.lo) / (grid.points - 1);
  for (auto p : {Principle::infimum, Principle::average, Principle::supremum})
    EXPECT_LE(std::abs(infer_interval_weights(loss, p, sets, Vec::Ones(1), cfg) - 1.5), 0.5 * step + 1e-12);
}

TEST(Regression, AverageOfSymmetricUnionIsZero) {
  std::vector<ConstraintSet> sets{ConstraintSet::intervals({{-2, -1}, {1, 2}})};
  auto grid = regression_grid(sets, {});
  const double step = (grid.hi - grid.lo) / (grid.points - 1);
  double z = infer_interval_weights(LossSpec::squared(), Principle::average, sets, Vec::Ones(1));
  EXPECT_LE(std::abs(z), 0.5 * step + 1e-12);
  // the infimum principle lands inside one of the pieces
  double zi = infer_interval_weights(LossSpec::squared(), Principle::infimum, sets, Vec::Ones(1));
  EXPECT_TRUE(sets[0].contains(Vec::Constant(1, zi)));
}

TEST(Regression, MatchesFineGridSearch) {
  Rng rng(8);
  for (int t = 0; t < 20; ++t) {
    std::vector<ConstraintSet> sets;
    for (int i = 0; i < 3; ++i) {
      double a = rng.uniform(-2, 2);
      sets.push_back(ConstraintSet::interval(a, a + rng.uniform(0.2, 1.5)));
    }
    Vec al(3);
    for (int i = 0; i < 3; ++i) al[i] = rng.uniform(0.1, 1.0);
    auto grid = regression_grid(sets, {});
    const double step = (grid.hi - grid.lo) / (grid.points - 1);
    for (auto loss : {LossSpec::squared(), LossSpec::absolute_deviation()})
      for (auto p : {Principle::infimum, Principle::average, Principle::supremum}) {
        double z = infer_interval_weights(loss, p, sets, al);
        auto risk = [&](double v) {
          double r = 0;
          for (int i = 0; i < 3; ++i) r += al[i] * pointwise_set_loss(loss, p, v, sets[i]);
          return r;
        };
        const int N = 100000;
        double best = 1e300;
        for (int k = 0; k < N; ++k) best = std::min(best, risk(grid.lo + (grid.hi - grid.lo) * k / (N - 1)));
        // Lipschitz slack over half a grid step
        double lip = 0;
        for (int i = 0; i < 3; ++i) lip += al[i] * (loss.kind() == LossSpec::Kind::squared ? 2 * (grid.hi - grid.lo) : 1.0);
        EXPECT_LE(risk(z), best + lip * step + 1e-12);
      }
  }
}

TEST(Regression, BatchAgreesWithSingle) {
  Rng rng(9);
  WeakDataset<double> train;
  train.inputs = random_points(rng, 25, 1);
  for (int i = 0; i < 25; ++i) {
    double y = train.inputs(i, 0);
    train.constraints.push_back(ConstraintSet::interval(y - rng.uniform(), y + rng.uniform()));
  }
  auto w = std::make_shared<WeightingScheme>(fit_weights(WeightKind::kernel_ridge(0.01), train.inputs));
  PartialEstimator est(w, LossSpec::squared(), Principle::infimum);
  Mat Q = random_points(rng, 6, 1);
  Vec b = infer_interval_batch(est, train, Q);
  for (int q = 0; q < 6; ++q) EXPECT_NEAR(b[q], infer_interval_regression(est, train, Q.row(q).transpose()), 1e-12);
}

TEST(Ranking, ObjectiveNondecreasing) {
  Rng rng(10);
  const int m = 5, n = 20;
  for (int t = 0; t < 20; ++t) {
    std::vector<ConstraintSet> sets;
    for (int i = 0; i < n; ++i) {
      Perm truth = rng.permutation(m);
      ConstraintSet::PairMap pm;
      for (auto [a, b] : pair_list(m))
        if (rng.bernoulli(0.3)) pm[{a, b}] = truth[a] > truth[b] ? 1 : -1;
      sets.push_back(ConstraintSet::kendall_partial(pm));
    }
    Vec al(n);
    for (int i = 0; i < n; ++i) al[i] = rng.uniform(-0.2, 1.0);
    auto r = infer_ranking_weights(m, sets, al);
    ASSERT_FALSE(r.objective.empty());
    for (std::size_t k = 1; k < r.objective.size(); ++k) EXPECT_GE(r.objective[k], r.objective[k - 1] - 1e-12);
    EXPECT_TRUE(is_permutation(r.sigma));
    EXPECT_LE(r.iterations, 50);
  }
}

TEST(Ranking, FullObservationsGiveWeightedKemeny) {
  Rng rng(11);
  const int m = 5;
  auto loss = LossSpec::kendall(m);
  for (int t = 0; t < 20; ++t) {
    std::vector<ConstraintSet> sets;
    std::vector<Perm> ys;
    for (int i = 0; i < 7; ++i) {
      ys.push_back(rng.permutation(m));
      ConstraintSet::PairMap pm;
      for (auto [a, b] : pair_list(m)) pm[{a, b}] = ys.back()[a] > ys.back()[b] ? 1 : -1;
      sets.push_back(ConstraintSet::kendall_partial(pm));
    }
    Vec al(7);
    for (int i = 0; i < 7; ++i) al[i] = rng.uniform();
    double best = 1e300;
    for (const auto& z : loss.perms()) {
      double r = 0;
      for (int i = 0; i < 7; ++i) r += al[i] * loss(z, ys[i]);
      best = std::min(best, r);
    }
    auto res = infer_ranking_weights(m, sets, al);
    double got = 0;
    for (int i = 0; i < 7; ++i) got += al[i] * loss(res.sigma, ys[i]);
    EXPECT_NEAR(got, best, 1e-9);
  }
}

TEST(Ranking, ConsistentPartialDataRecoversTruth) {
  Rng rng(12);
  const int m = 6, n = 15;
  for (int t = 0; t < 10; ++t) {
    Perm truth = rng.permutation(m);
    std::vector<ConstraintSet> sets;
    for (int i = 0; i < n; ++i) {
      ConstraintSet::PairMap pm;
      for (auto [a, b] : pair_list(m))
        if (rng.bernoulli(0.4)) pm[{a, b}] = truth[a] > truth[b] ? 1 : -1;
      sets.push_back(ConstraintSet::kendall_partial(pm));
    }
    auto r = infer_ranking_weights(m, sets, Vec::Constant(n, 1.0 / n));
    EXPECT_EQ(r.sigma, truth);
  }
}
