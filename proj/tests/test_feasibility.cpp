#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_support.hpp"

using namespace dimwhatif;

namespace {

enum class Side { feasible, infeasible, straddles };

// Analytic half-plane x >= boundary, judged for a whole cell.
Side cell_side(const FeasibilityMap& m, std::size_t ix, std::size_t iy, double boundary) {
    const double left = m.center(ix, iy).x() - 0.5 * m.cell_size.x();
    const double right = left + m.cell_size.x();
    if (left > boundary) return Side::feasible;
    if (right < boundary) return Side::infeasible;
    return Side::straddles;
}

}  // namespace

TEST(ComputeMap, EmptyConstraintsAllFeasible) {
    const auto ds = test_support::oecd();
    Session s(ds, test_support::model_of(fit_pca(*ds)));
    s.select(3);
    const FeasibilityMap m = compute_map(s);
    EXPECT_EQ(m.mask.size(), 100u);
    for (bool b : m.mask) EXPECT_TRUE(b);
    EXPECT_FALSE(m.contradictory);
}

TEST(ComputeMap, HalfPlaneMatchesAnalyticOracle) {
    const Session s = test_support::half_plane_session();
    const double boundary = s.position().x();
    const FeasibilityMap m = compute_map(s, 10, 10);
    std::size_t checked = 0;
    for (std::size_t iy = 0; iy < 10; ++iy) {
        for (std::size_t ix = 0; ix < 10; ++ix) {
            const double cx = m.center(ix, iy).x();
            if (std::abs(cx - boundary) < m.cell_size.x()) continue;
            EXPECT_EQ(m.feasible(ix, iy), cx >= boundary) << ix << "," << iy;
            ++checked;
        }
    }
    EXPECT_GE(checked, 50u);
}

TEST(ComputeMap, GridCoversExpandedBoundingBox) {
    const Session s = test_support::half_plane_session();
    const FeasibilityMap m = compute_map(s, 7, 9);
    const Matrix& pos = s.layout().positions;
    for (int a = 0; a < 2; ++a) {
        const double lo = pos.col(a).minCoeff(), hi = pos.col(a).maxCoeff();
        const double pad = 0.05 * (hi - lo);
        const double count = a == 0 ? 7.0 : 9.0;
        EXPECT_LE(m.origin(a), lo - pad + 1e-12);
        EXPECT_GE(m.origin(a) + count * m.cell_size(a), hi + pad - 1e-12);
    }
}

TEST(ComputeMap, LockAllOnlyContainingCellFeasible) {
    const auto ds = test_support::oecd();
    Session s(ds, test_support::model_of(fit_pca(*ds)));
    ConstraintSet cs(8);
    cs.lock_all();
    s.set_constraints(cs);
    s.select(5);
    const FeasibilityMap m = compute_map(s);
    const Point2 rel = (s.position() - m.origin).cwiseQuotient(m.cell_size);
    const auto cx = static_cast<std::size_t>(std::floor(rel.x()));
    const auto cy = static_cast<std::size_t>(std::floor(rel.y()));
    for (std::size_t iy = 0; iy < 10; ++iy)
        for (std::size_t ix = 0; ix < 10; ++ix) EXPECT_EQ(m.feasible(ix, iy), ix == cx && iy == cy);
}

TEST(ComputeMap, ContradictoryConstraintsFlagged) {
    Session s = test_support::half_plane_session();
    ConstraintSet cs(3);
    cs.lock(1);
    cs.bound(1, 10.0, 11.0);  // current value -0.7 is outside the box
    s.set_constraints(cs);
    const FeasibilityMap m = compute_map(s, 4, 4);
    EXPECT_TRUE(m.contradictory);
    for (bool b : m.mask) EXPECT_FALSE(b);
}

TEST(ComputeMap, ExactlyOneSolverCallPerCell) {
    const Session s = test_support::half_plane_session();
    for (const auto& [nx, ny] : std::vector<std::pair<std::size_t, std::size_t>>{{1, 1}, {10, 10}, {3, 17}}) {
        EXPECT_EQ(compute_map(s, nx, ny).solver_calls, nx * ny);
    }
    EXPECT_THROW((void)compute_map(s, 0, 5), Error);
}

TEST(ComputeMap, ConsistentWithCheckPosition) {
    const Session s = test_support::half_plane_session();
    const FeasibilityMap m = compute_map(s, 12, 8);
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = 0; ix < m.nx; ++ix)
            EXPECT_EQ(check_position(s, m.center(ix, iy)).feasible, m.feasible(ix, iy));
}

TEST(ComputeMap, DoublingResolutionKeepsDecidedCells) {
    const Session s = test_support::half_plane_session();
    const double boundary = s.position().x();
    for (std::size_t res : {5u, 10u, 20u}) {
        for (const FeasibilityMap& m : {compute_map(s, res, res), compute_map(s, 2 * res, 2 * res)}) {
            for (std::size_t iy = 0; iy < m.ny; ++iy) {
                for (std::size_t ix = 0; ix < m.nx; ++ix) {
                    const Side side = cell_side(m, ix, iy, boundary);
                    if (side == Side::straddles) continue;
                    EXPECT_EQ(m.feasible(ix, iy), side == Side::feasible);
                }
            }
        }
    }
}

TEST(CheckPosition, Examples) {
    const auto ds = test_support::oecd();
    Session s(ds, test_support::model_of(fit_pca(*ds)));
    s.select(0);
    EXPECT_TRUE(check_position(s, s.position()).feasible);

    const Session hp = test_support::half_plane_session();
    const auto left = check_position(hp, hp.position() - Point2(1.0, 0.0));
    EXPECT_FALSE(left.feasible);
    EXPECT_EQ(left.violated_features, (std::vector<std::size_t>{0}));
    EXPECT_TRUE(check_position(hp, hp.position() + Point2(1.0, 0.5)).feasible);

    ConstraintSet cs(8);
    cs.lock_all();
    s.set_constraints(cs);
    const auto fixed = check_position(s, s.position());
    EXPECT_TRUE(fixed.feasible);
    EXPECT_TRUE(fixed.violated_features.empty());
}

TEST(FeasibilityOutput, JsonAndPgm) {
    const Session s = test_support::half_plane_session();
    const FeasibilityMap m = compute_map(s, 4, 3);
    const auto j = to_json(m);
    EXPECT_EQ(j["nx"], 4);
    EXPECT_EQ(j["ny"], 3);
    EXPECT_EQ(j["mask"].size(), 12u);
    const std::string pgm = to_pgm(m);
    EXPECT_EQ(pgm.rfind("P2\n4 3\n255\n", 0), 0u);
    std::istringstream in(pgm.substr(std::string("P2\n4 3\n255\n").size()));
    // Top image row is the largest-y grid row.
    for (std::size_t row = 0; row < 3; ++row)
        for (std::size_t ix = 0; ix < 4; ++ix) {
            int v;
            in >> v;
            EXPECT_EQ(v, m.feasible(ix, 2 - row) ? 255 : 0);
        }
}
