#include <gtest/gtest.h>

#include "oracles.hpp"
#include "random_qp.hpp"

using namespace dimwhatif;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

}  // namespace

TEST(QpSolve, UnconstrainedMatchesMinimumNormLift) {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const std::size_t d = 2 + rng.below(10);
        const Matrix e = oracle::random_orthonormal(d, rng);
        const Point2 target(rng.normal(), rng.normal());
        const QpSolution s = solve(unconstrained_problem(e, target, 1e-8));
        ASSERT_EQ(s.status, QpStatus::optimal);
        EXPECT_LE((s.delta_x - e * target).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE(s.kkt_violation, 1e-6);
    }
}

TEST(QpSolve, DefaultRidgeStillCloseToMinimumNormLift) {
    Rng rng(2);
    const Matrix e = oracle::random_orthonormal(5, rng);
    const Point2 target(0.3, -0.8);
    const QpSolution s = solve(unconstrained_problem(e, target));
    EXPECT_LE((s.delta_x - e * target).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(QpSolve, LockedFirstCoordinateWithIdentityEmbedding) {
    // Grid oracle over the two free coordinates gives (0, b, 0), residual |a|.
    const Matrix e = oracle::identity_embedding(3);
    for (const auto& [a, b] : std::vector<std::pair<double, double>>{{0.7, -0.4}, {-2.0, 1.5}, {0.0, 0.25}}) {
        QpProblem p = unconstrained_problem(e, Point2(a, b), 1e-10);
        p.eq_matrix = (Matrix(1, 3) << 1, 0, 0).finished();
        p.eq_rhs = Vector::Zero(1);
        const QpSolution s = solve(p);
        ASSERT_EQ(s.status, QpStatus::optimal);
        EXPECT_NEAR(s.delta_x(0), 0.0, 1e-12);
        EXPECT_NEAR(s.delta_x(1), b, 1e-8);
        EXPECT_NEAR(s.delta_x(2), 0.0, 1e-12);
        EXPECT_NEAR(s.residual, std::abs(a), 1e-8);

        const auto grid = oracle::grid_refine(oracle::to_mat(e), {a, b}, {-3, -3, -3}, {3, 3, 3}, {1, 0, 0},
                                              {0, 0, 0}, 1e-10, 3, 61);
        EXPECT_NEAR(s.delta_x(1), grid.z[1], 2 * grid.final_step);
        EXPECT_NEAR(s.delta_x(2), grid.z[2], 2 * grid.final_step);
    }
}

TEST(QpSolve, ContradictoryConstraintsAreInfeasible) {
    QpProblem p = unconstrained_problem(oracle::identity_embedding(3), Point2(1, 1));
    p.eq_matrix = (Matrix(1, 3) << 1, 0, 0).finished();
    p.eq_rhs = Vector::Constant(1, 1.0);
    p.upper(0) = 0.0;
    EXPECT_EQ(solve(p).status, QpStatus::infeasible);
}

TEST(QpSolve, InconsistentEqualitiesAreInfeasible) {
    QpProblem p = unconstrained_problem(oracle::identity_embedding(3), Point2(1, 1));
    p.eq_matrix = (Matrix(2, 3) << 1, 1, 0, 2, 2, 0).finished();
    p.eq_rhs = (Vector(2) << 1, 3).finished();
    EXPECT_EQ(solve(p).status, QpStatus::infeasible);
    // Consistent duplicate rows are accepted.
    p.eq_rhs = (Vector(2) << 1, 2).finished();
    const QpSolution s = solve(p);
    EXPECT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.delta_x(0) + s.delta_x(1), 1.0, 1e-10);
}

TEST(QpSolve, EqualityConflictsWithLowerBound) {
    QpProblem p = unconstrained_problem(oracle::identity_embedding(4), Point2(0, 0));
    p.eq_matrix = (Matrix(1, 4) << 1, 1, 0, 0).finished();
    p.eq_rhs = Vector::Constant(1, -1.0);
    p.lower(0) = 0.0;
    p.lower(1) = 0.0;
    EXPECT_EQ(solve(p).status, QpStatus::infeasible);
}

TEST(QpSolve, MalformedBoundsRejectedBeforeSolving) {
    QpProblem p = unconstrained_problem(oracle::identity_embedding(3), Point2(1, 1));
    p.lower(1) = 1.0;
    p.upper(1) = 0.0;
    try {
        (void)solve(p);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), "malformed_bounds");
    }
    p = unconstrained_problem(oracle::identity_embedding(3), Point2(1, 1));
    p.ridge = 0.0;
    EXPECT_THROW((void)solve(p), Error);
}

TEST(QpSolve, BoxActiveSolutionIsClipped) {
    // Identity embedding, target outside the box in both coordinates.
    QpProblem p = unconstrained_problem(oracle::identity_embedding(3), Point2(2, -3), 1e-10);
    p.upper(0) = 1.0;
    p.lower(1) = -0.5;
    const QpSolution s = solve(p);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.delta_x(0), 1.0, 1e-12);
    EXPECT_NEAR(s.delta_x(1), -0.5, 1e-12);
    EXPECT_NEAR(s.residual, std::hypot(1.0, 2.5), 1e-8);
    EXPECT_GT(s.upper_multipliers(0), 0.0);
    EXPECT_GT(s.lower_multipliers(1), 0.0);
}

TEST(QpSolve, ReducedGradientVanishesOnFreeCoordinates) {
    Rng rng(77);
    for (int t = 0; t < 200; ++t) {
        const auto rp = random_qp::make(rng);
        const QpSolution s = solve(rp.problem);
        if (s.status != QpStatus::optimal) continue;
        EXPECT_LE(s.kkt_violation, 1e-6);
        EXPECT_LE(random_qp::reduced_gradient(rp.problem, s.delta_x), 1e-6);
    }
}

TEST(QpSolve, TighteningABoundNeverLowersTheOptimum) {
    Rng rng(91);
    for (int t = 0; t < 200; ++t) {
        auto rp = random_qp::make(rng);
        const QpSolution loose = solve(rp.problem);
        if (loose.status != QpStatus::optimal) continue;
        const auto i = static_cast<Eigen::Index>(rng.below(rp.problem.dims()));
        QpProblem tight = rp.problem;
        const double mid = 0.5 * (tight.lower(i) + tight.upper(i));
        if (rng.uniform() < 0.5) tight.lower(i) = std::min(mid, tight.upper(i));
        else tight.upper(i) = std::max(mid, tight.lower(i));
        const QpSolution s = solve(tight);
        if (s.status != QpStatus::optimal) continue;
        EXPECT_GE(qp_objective(tight, s.delta_x), qp_objective(rp.problem, loose.delta_x) - 1e-10);
    }
}

TEST(QpSolve, DeterministicBitIdentical) {
    Rng rng(5);
    for (int t = 0; t < 50; ++t) {
        const auto rp = random_qp::make(rng);
        const QpSolution a = solve(rp.problem);
        const QpSolution b = solve(rp.problem);
        EXPECT_EQ(a.status, b.status);
        EXPECT_EQ(a.delta_x, b.delta_x);
        EXPECT_EQ(a.residual, b.residual);
    }
}

TEST(QpSolve, InfiniteBoundsOnOneSide) {
    QpProblem p = unconstrained_problem(oracle::identity_embedding(2), Point2(-1, 5), 1e-10);
    p.lower(0) = 0.0;
    p.upper(1) = kInf;
    const QpSolution s = solve(p);
    ASSERT_EQ(s.status, QpStatus::optimal);
    EXPECT_NEAR(s.delta_x(0), 0.0, 1e-12);
    EXPECT_NEAR(s.delta_x(1), 5.0, 1e-8);
}
