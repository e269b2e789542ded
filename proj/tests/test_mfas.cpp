#include <gtest/gtest.h>

#include "weaklearn/mfas.hpp"

using namespace weaklearn;

namespace {

MfasInstance gaussian_instance(Rng& rng, int m) { return MfasInstance(m, rng.normal_vector(num_pairs(m))); }

// random partial order drawn from a hidden permutation
ConstraintSet random_fixed(Rng& rng, int m, double keep) {
  Perm truth = rng.permutation(m);
  std::vector<std::tuple<int, int, int>> e;
  for (auto [i, j] : pair_list(m))
    if (rng.bernoulli(keep)) e.emplace_back(i, j, truth[i] > truth[j] ? 1 : -1);
  return ConstraintSet::kendall_partial(e);
}

}  // namespace

TEST(Simplex, SmallKnownProgram) {
  // max x + y st x + 2y <= 4, 3x + y <= 6  -> (1.6, 1.2)
  Mat A(2, 2);
  A << 1, 2, 3, 1;
  Vec b(2), c(2);
  b << 4, 6;
  c << -1, -1;
  auto r = solve_lp_min(A, b, c);
  ASSERT_EQ(r.status, LpResult::Status::optimal);
  EXPECT_NEAR(r.x[0], 1.6, 1e-12);
  EXPECT_NEAR(r.x[1], 1.2, 1e-12);
}

TEST(Simplex, NegativeRhsNeedsPhaseOne) {
  // x >= 1 (as -x <= -1), x <= 3, minimize x
  Mat A(2, 1);
  A << -1, 1;
  Vec b(2), c(1);
  b << -1, 3;
  c << 1;
  auto r = solve_lp_min(A, b, c);
  ASSERT_EQ(r.status, LpResult::Status::optimal);
  EXPECT_NEAR(r.x[0], 1.0, 1e-12);
}

TEST(Simplex, DetectsInfeasibleAndUnbounded) {
  Mat A(2, 1);
  A << -1, 1;
  Vec b(2), c(1);
  b << -3, 1;
  c << 1;
  EXPECT_EQ(solve_lp_min(A, b, c).status, LpResult::Status::infeasible);
  Mat B(1, 1);
  B << -1;
  Vec bb(1), cc(1);
  bb << 0;
  cc << -1;
  EXPECT_EQ(solve_lp_min(B, bb, cc).status, LpResult::Status::unbounded);
}

TEST(Brute, TwoItems) {
  MfasInstance inst(2, Vec::Constant(1, -1.0));
  auto s = solve_brute(inst);
  EXPECT_EQ(s.objective, -1.0);
  EXPECT_EQ(embed_kendall(s.sigma)[0], 1.0);
}

TEST(Brute, AllNegativeObjective) {
  MfasInstance inst(3, Vec::Constant(3, -1.0));
  auto s = solve_brute(inst);
  EXPECT_EQ(s.objective, -3.0);
  EXPECT_EQ(s.sigma, (Perm{2, 1, 0}));
}

TEST(Brute, ForcedCompletionIgnoresObjective) {
  Rng rng(1);
  auto fixed = ConstraintSet::kendall_partial({{0, 1, 1}, {1, 2, 1}});
  for (int t = 0; t < 5; ++t) {
    MfasInstance inst(3, rng.normal_vector(3), fixed);
    EXPECT_EQ(solve_brute(inst).sigma, (Perm{2, 1, 0}));
    EXPECT_EQ(solve_lp(inst).sigma, (Perm{2, 1, 0}));
    EXPECT_EQ(solve_heuristic(inst).sigma, (Perm{2, 1, 0}));
  }
}

TEST(Brute, InfeasibleConstraints) {
  auto cyc = ConstraintSet::kendall_partial({{0, 1, 1}, {1, 2, 1}, {0, 2, -1}});
  MfasInstance inst(3, Vec::Zero(3), cyc);
  EXPECT_THROW(solve_brute(inst), InfeasibleError);
  EXPECT_THROW(solve_lp(inst), InfeasibleError);
  EXPECT_THROW(solve_heuristic(inst), InfeasibleError);
}

TEST(Transitivity, RowsEnumerateTriplesOnce) {
  for (int m = 3; m <= 7; ++m) {
    TransitivityLP tl(m);
    EXPECT_EQ(tl.rows.rows(), m * (m - 1) * (m - 2) / 6);
    for (int r = 0; r < tl.rows.rows(); ++r) EXPECT_EQ(tl.rows.row(r).cwiseAbs().sum(), 3.0);
    // every permutation embedding lies in the polytope
    for (const auto& p : all_permutations(m)) {
      Vec t = tl.rows * embed_kendall(p);
      ASSERT_LE(t.cwiseAbs().maxCoeff(), 1.0);
    }
  }
}

TEST(Lp, ExactForThreeItems) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    auto inst = gaussian_instance(rng, 3);
    auto lp = solve_lp(inst);
    ASSERT_TRUE(lp.exact);
    for (int e = 0; e < 3; ++e) ASSERT_EQ(std::abs(lp.x[e]), 1.0);
    EXPECT_NEAR(lp.objective, solve_brute(inst).objective, 1e-9);
  }
}

TEST(Lp, ExactForFourItemsWithConstraints) {
  Rng rng(3);
  for (int t = 0; t < 500; ++t) {
    MfasInstance inst(4, rng.normal_vector(6), random_fixed(rng, 4, t < 100 ? 0.0 : 0.3));
    auto lp = solve_lp(inst);
    auto bf = solve_brute(inst);
    ASSERT_TRUE(lp.exact) << "instance " << t;
    ASSERT_NEAR(lp.objective, bf.objective, 1e-9);
    ASSERT_NEAR(lp.value, lp.objective, 1e-9);
    ASSERT_TRUE(inst.feasible(lp.sigma));
  }
}

TEST(Lp, LowerBoundsBruteForce) {
  Rng rng(4);
  int exact = 0;
  for (int t = 0; t < 60; ++t) {
    int m = 5 + t % 3;
    MfasInstance inst(m, rng.normal_vector(num_pairs(m)), random_fixed(rng, m, 0.2));
    auto lp = solve_lp(inst);
    auto bf = solve_brute(inst);
    EXPECT_LE(lp.value, bf.objective + 1e-9);
    EXPECT_GE(lp.objective, bf.objective - 1e-9);
    EXPECT_TRUE(inst.feasible(lp.sigma));
    if (lp.exact) {
      ++exact;
      EXPECT_NEAR(lp.value, bf.objective, 1e-9);
      EXPECT_EQ(embed_kendall(lp.sigma), lp.x);
    }
  }
  EXPECT_GT(exact, 0);
}

TEST(Lp, ZeroObjectiveStillFeasible) {
  auto fixed = ConstraintSet::kendall_partial({{3, 1, 1}});
  MfasInstance inst(4, Vec::Zero(6), fixed);
  auto lp = solve_lp(inst);
  EXPECT_TRUE(inst.feasible(lp.sigma));
}

TEST(Lp, RowsumRoundingRespectsFixedPairs) {
  // a fractional point of the polytope with x_01 fixed
  Vec x(3);
  x << 1.0, 0.0, 0.0;
  Perm s = rowsum_rounding(x, 3);
  EXPECT_GT(s[0], s[1]);
}

TEST(Heuristic, RecoversOrderWithMargin) {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const int m = 7;
    Perm truth = rng.permutation(m);
    Vec c = -embed_kendall(truth) + 0.3 * rng.normal_vector(num_pairs(m));
    MfasInstance inst(m, c);
    EXPECT_EQ(solve_heuristic(inst).sigma, truth);
  }
}

TEST(Heuristic, FeasibleAndNoWorseThanItsStart) {
  Rng rng(6);
  for (int t = 0; t < 100; ++t) {
    const int m = 6;
    MfasInstance inst(m, rng.normal_vector(num_pairs(m)), random_fixed(rng, m, 0.3));
    Perm init;
    auto h = solve_heuristic(inst, &init);
    EXPECT_TRUE(inst.feasible(h.sigma));
    EXPECT_TRUE(inst.feasible(init));
    EXPECT_LE(h.objective, inst.objective(init) + 1e-12);
  }
}

TEST(Heuristic, CloseToLpOnEightItems) {
  Rng rng(7);
  int close = 0;
  for (int t = 0; t < 100; ++t) {
    auto inst = gaussian_instance(rng, 8);
    auto lp = solve_lp(inst);
    auto h = solve_heuristic(inst);
    if (h.objective <= lp.value + 0.05 * std::abs(lp.value)) ++close;
  }
  EXPECT_GE(close, 90);
}
