#pragma once

#include <cmath>
#include <sstream>
#include <vector>

#include "dimwhatif/session.hpp"

namespace dimwhatif {

// Binary reachability raster over the projection plane. Cell (ix, iy) has
// center origin + ((ix + 0.5) cx, (iy + 0.5) cy); mask is row-major with iy
// as the row.
struct FeasibilityMap {
    Point2 origin = Point2::Zero();
    Point2 cell_size = Point2::Ones();
    std::size_t nx = 0;
    std::size_t ny = 0;
    std::vector<bool> mask;
    double tolerance = 0.0;
    bool contradictory = false;  // constraints admit no point at all
    std::size_t solver_calls = 0;

    Point2 center(std::size_t ix, std::size_t iy) const {
        return origin + Point2((static_cast<double>(ix) + 0.5) * cell_size.x(),
                               (static_cast<double>(iy) + 0.5) * cell_size.y());
    }
    bool feasible(std::size_t ix, std::size_t iy) const { return mask[iy * nx + ix]; }
};

struct PositionCheck {
    bool feasible = true;
    std::vector<std::size_t> violated_features;
};

namespace detail {

// 1-D grid covering [lo, hi] with `count` cells, shifted so that `anchor`
// sits exactly on a cell center.
inline std::pair<double, double> anchored_axis(double lo, double hi, double anchor, std::size_t count) {
    if (count == 1) {
        double size = 2.0 * std::max(anchor - lo, hi - anchor);
        if (!(size > 0.0)) size = 1.0;
        return {anchor - 0.5 * size, size};
    }
    double size = (hi - lo) / static_cast<double>(count - 1);
    if (!(size > 0.0)) size = 1.0 / static_cast<double>(count - 1);
    const double j = std::clamp(std::ceil((anchor - lo) / size - 0.5), 0.0, static_cast<double>(count - 1));
    return {anchor - (j + 0.5) * size, size};
}

inline bool target_feasible(const DragResult& r, double tolerance) {
    return r.status == QpStatus::optimal && r.applied && r.residual <= tolerance && r.violated.empty();
}

}  // namespace detail

inline PositionCheck check_position(const Session& s, const Point2& target) {
    const DragResult r = s.evaluate_target(target);
    PositionCheck out;
    out.feasible = is_linear(s.model()) ? detail::target_feasible(r, s.reach_tolerance()) : r.applied;
    out.violated_features = r.violated;
    return out;
}

// Grid over the current layout's bounding box expanded by 5% on each side,
// anchored on the selected point. Each cell is an independent constrained
// backward projection from the current working point toward the cell center.
inline FeasibilityMap compute_map(const Session& s, std::size_t nx = 10, std::size_t ny = 10) {
    require(nx >= 1 && ny >= 1, "invalid_resolution", "feasibility map resolution must be at least 1x1");
    require(nx * ny <= 4'000'000, "invalid_resolution", "feasibility map resolution too large");
    const Point2 anchor = s.position();
    const Matrix& pos = s.layout().positions;
    Point2 lo = pos.colwise().minCoeff().transpose();
    Point2 hi = pos.colwise().maxCoeff().transpose();
    for (int a = 0; a < 2; ++a) {
        const double extent = hi(a) - lo(a);
        const double pad = extent > 0.0 ? 0.05 * extent : 0.5;
        lo(a) -= pad;
        hi(a) += pad;
    }
    FeasibilityMap map;
    map.nx = nx;
    map.ny = ny;
    const auto [ox, cx] = detail::anchored_axis(lo.x(), hi.x(), anchor.x(), nx);
    const auto [oy, cy] = detail::anchored_axis(lo.y(), hi.y(), anchor.y(), ny);
    map.origin = Point2(ox, oy);
    map.cell_size = Point2(cx, cy);
    map.tolerance = s.reach_tolerance();
    map.mask.assign(nx * ny, false);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t ix = 0; ix < nx; ++ix) {
            const DragResult r = s.evaluate_target(map.center(ix, iy));
            ++map.solver_calls;
            if (r.status == QpStatus::infeasible && is_linear(s.model())) map.contradictory = true;
            map.mask[iy * nx + ix] =
                is_linear(s.model()) ? detail::target_feasible(r, map.tolerance) : r.applied;
        }
    }
    return map;
}

inline nlohmann::json to_json(const FeasibilityMap& m) {
    nlohmann::json mask = nlohmann::json::array();
    for (bool b : m.mask) mask.push_back(b);
    return {{"origin", {m.origin.x(), m.origin.y()}},
            {"cell_size", {m.cell_size.x(), m.cell_size.y()}},
            {"nx", m.nx},
            {"ny", m.ny},
            {"mask", std::move(mask)},
            {"tolerance", m.tolerance},
            {"contradictory", m.contradictory}};
}

// Plain PGM (P2): 0 = infeasible, 255 = feasible. The first image row is
// the top of the plane (largest y).
inline std::string to_pgm(const FeasibilityMap& m) {
    std::ostringstream out;
    out << "P2\n" << m.nx << ' ' << m.ny << "\n255\n";
    for (std::size_t row = 0; row < m.ny; ++row) {
        const std::size_t iy = m.ny - 1 - row;
        for (std::size_t ix = 0; ix < m.nx; ++ix) {
            out << (ix ? " " : "") << (m.feasible(ix, iy) ? 255 : 0);
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace dimwhatif
