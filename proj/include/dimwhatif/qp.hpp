#pragma once

#include <Eigen/Cholesky>
#include <Eigen/QR>

#include <limits>
#include <string>
#include <vector>

#include "dimwhatif/dataset.hpp"

namespace dimwhatif {

// minimize ||E^T dx - target||^2 + ridge ||dx||^2
// subject to  eq_matrix dx = eq_rhs,  lower <= dx <= upper
struct QpProblem {
    Matrix objective_matrix;  // E, d x 2
    Point2 target = Point2::Zero();
    Matrix eq_matrix;  // k x d, k may be 0
    Vector eq_rhs;
    Vector lower;  // -inf allowed
    Vector upper;  // +inf allowed
    double ridge = 1e-6;

    std::size_t dims() const { return static_cast<std::size_t>(objective_matrix.rows()); }
};

// Problem with no equalities and infinite bounds.
inline QpProblem unconstrained_problem(const Matrix& objective, const Point2& target, double ridge = 1e-6) {
    const Eigen::Index d = objective.rows();
    QpProblem p;
    p.objective_matrix = objective;
    p.target = target;
    p.eq_matrix = Matrix(0, d);
    p.eq_rhs = Vector(0);
    p.lower = Vector::Constant(d, -std::numeric_limits<double>::infinity());
    p.upper = Vector::Constant(d, std::numeric_limits<double>::infinity());
    p.ridge = ridge;
    return p;
}

enum class QpStatus { optimal, infeasible, iteration_limit };

inline const char* to_string(QpStatus s) {
    switch (s) {
        case QpStatus::optimal: return "optimal";
        case QpStatus::infeasible: return "infeasible";
        case QpStatus::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

struct QpSolution {
    Vector delta_x;
    double residual = 0.0;  // ||E^T dx - target||
    QpStatus status = QpStatus::optimal;
    double kkt_violation = 0.0;
    // Multipliers of the final active set, >= 0 for bounds and free in sign
    // for equalities. Zero for inactive constraints.
    Vector lower_multipliers;
    Vector upper_multipliers;
    Vector eq_multipliers;
    int active_set_changes = 0;
};

// Objective value ||E^T dx - target||^2 + ridge ||dx||^2.
inline double qp_objective(const QpProblem& p, const Vector& dx) {
    return (p.objective_matrix.transpose() * dx - p.target).squaredNorm() + p.ridge * dx.squaredNorm();
}

inline void validate(const QpProblem& p) {
    const Eigen::Index d = p.objective_matrix.rows();
    require(p.objective_matrix.cols() == 2, "dimension_mismatch", "objective matrix must have 2 columns");
    require(p.lower.size() == d && p.upper.size() == d, "dimension_mismatch", "bound vectors must have length d");
    require(p.eq_matrix.rows() == p.eq_rhs.size(), "dimension_mismatch", "equality rows and rhs length differ");
    require(p.eq_matrix.rows() == 0 || p.eq_matrix.cols() == d, "dimension_mismatch",
            "equality matrix must have d columns");
    require(p.ridge > 0.0 && std::isfinite(p.ridge), "malformed_problem", "ridge must be positive and finite");
    require(p.target.allFinite() && p.objective_matrix.allFinite() && p.eq_matrix.allFinite() &&
                p.eq_rhs.allFinite(),
            "non_finite_value", "problem data must be finite");
    for (Eigen::Index i = 0; i < d; ++i) {
        require(!std::isnan(p.lower(i)) && !std::isnan(p.upper(i)), "malformed_bounds", "NaN bound");
        require(p.lower(i) <= p.upper(i), "malformed_bounds",
                "lower bound exceeds upper bound for coordinate " + std::to_string(i));
        require(p.lower(i) < std::numeric_limits<double>::infinity() &&
                    p.upper(i) > -std::numeric_limits<double>::infinity(),
                "malformed_bounds", "bound excludes every finite value for coordinate " + std::to_string(i));
    }
}

namespace detail {

// Goldfarb-Idnani dual active-set method for the strictly convex QP
//   min 1/2 x^T G x + a^T x  s.t.  N_eq^T x = b_eq,  N_in^T x >= b_in.
// Starts from the unconstrained minimizer and adds violated constraints one
// at a time while keeping dual feasibility, so no feasible starting point is
// needed and an empty feasible set is detected directly.
class DualActiveSet {
public:
    struct Constraint {
        Vector normal;
        double rhs = 0.0;
        bool equality = false;
    };

    DualActiveSet(const Matrix& hessian, const Vector& linear, std::vector<Constraint> constraints, int change_limit)
        : g_(hessian), a_(linear), constraints_(std::move(constraints)), change_limit_(change_limit) {
        const Eigen::Index d = hessian.rows();
        Eigen::LLT<Matrix> llt(hessian);
        require(llt.info() == Eigen::Success, "qp_not_convex", "QP Hessian is not positive definite");
        // J = L^{-T}, so that G^{-1} = J J^T.
        j_ = llt.matrixU().solve(Matrix::Identity(d, d));
        x_ = -llt.solve(linear);
    }

    QpStatus run() {
        for (std::size_t c = 0; c < constraints_.size(); ++c) {
            if (!constraints_[c].equality) continue;
            if (!add_equality(c)) return QpStatus::infeasible;
        }
        int changes = 0;
        for (;;) {
            // Most violated inactive inequality.
            std::size_t p = constraints_.size();
            double worst = 0.0;
            for (std::size_t c = 0; c < constraints_.size(); ++c) {
                if (constraints_[c].equality || is_active(c)) continue;
                const double s = slack(c);
                if (s < -feasibility_tolerance(c) && s < worst) {
                    worst = s;
                    p = c;
                }
            }
            if (p == constraints_.size()) {
                changes_ = changes;
                return QpStatus::optimal;
            }

            double u_plus = 0.0;
            for (;;) {
                if (++changes > change_limit_) {
                    changes_ = changes;
                    return QpStatus::iteration_limit;
                }
                const auto [z, r, dependent] = directions(constraints_[p].normal);

                // Partial step: largest dual step keeping active inequality
                // multipliers non-negative.
                double t1 = std::numeric_limits<double>::infinity();
                std::size_t drop = active_.size();
                for (std::size_t k = 0; k < active_.size(); ++k) {
                    if (constraints_[active_[k]].equality || r(static_cast<Eigen::Index>(k)) <= 0.0) continue;
                    const double ratio = u_[k] / r(static_cast<Eigen::Index>(k));
                    if (ratio < t1) {
                        t1 = ratio;
                        drop = k;
                    }
                }
                // Full step: makes constraint p active.
                double t2 = std::numeric_limits<double>::infinity();
                if (!dependent) t2 = -slack(p) / z.dot(constraints_[p].normal);

                const double t = std::min(t1, t2);
                if (!std::isfinite(t)) return QpStatus::infeasible;

                for (std::size_t k = 0; k < active_.size(); ++k) u_[k] -= t * r(static_cast<Eigen::Index>(k));
                u_plus += t;
                if (std::isfinite(t2)) x_ += t * z;

                if (t2 <= t1) {
                    active_.push_back(p);
                    u_.push_back(u_plus);
                    break;
                }
                remove_active(drop);
            }
        }
    }

    const Vector& x() const { return x_; }
    int changes() const { return changes_; }

    // Multiplier for every constraint (zero when inactive).
    std::vector<double> multipliers() const {
        std::vector<double> out(constraints_.size(), 0.0);
        for (std::size_t k = 0; k < active_.size(); ++k) out[active_[k]] = u_[k];
        return out;
    }

private:
    struct Directions {
        Vector z;  // primal step direction
        Vector r;  // change of active multipliers per unit step
        bool dependent = false;
    };

    double slack(std::size_t c) const { return constraints_[c].normal.dot(x_) - constraints_[c].rhs; }

    double feasibility_tolerance(std::size_t c) const {
        return 1e-12 * (1.0 + std::abs(constraints_[c].rhs) + x_.cwiseAbs().maxCoeff());
    }

    bool is_active(std::size_t c) const {
        for (std::size_t a : active_) {
            if (a == c) return true;
        }
        return false;
    }

    Directions directions(const Vector& normal) const {
        const Eigen::Index d = x_.size();
        const auto q = static_cast<Eigen::Index>(active_.size());
        Directions out;
        const Vector dvec = j_.transpose() * normal;
        if (q == 0) {
            out.z = j_ * dvec;
            out.r = Vector(0);
            out.dependent = dvec.norm() == 0.0;
            return out;
        }
        Matrix n_active(d, q);
        for (Eigen::Index k = 0; k < q; ++k) n_active.col(k) = constraints_[active_[static_cast<std::size_t>(k)]].normal;
        const Eigen::HouseholderQR<Matrix> qr(j_.transpose() * n_active);
        const Matrix q_full = qr.householderQ();
        const Matrix r_upper = qr.matrixQR().topRows(q).triangularView<Eigen::Upper>();
        const Vector dq = q_full.transpose() * dvec;
        const Matrix jq = j_ * q_full;
        const Vector d2 = dq.tail(d - q);
        out.z = jq.rightCols(d - q) * d2;
        out.r = r_upper.triangularView<Eigen::Upper>().solve(dq.head(q));
        out.dependent = d2.norm() <= 1e-10 * dq.norm();
        return out;
    }

    bool add_equality(std::size_t c) {
        const auto [z, r, dependent] = directions(constraints_[c].normal);
        const double s = slack(c);
        if (dependent) {
            // Linearly dependent on earlier equalities: redundant when
            // consistent, contradictory otherwise.
            return std::abs(s) <= 1e-9 * (1.0 + std::abs(constraints_[c].rhs));
        }
        const double t = -s / z.dot(constraints_[c].normal);
        x_ += t * z;
        for (std::size_t k = 0; k < active_.size(); ++k) u_[k] -= t * r(static_cast<Eigen::Index>(k));
        active_.push_back(c);
        u_.push_back(t);
        return true;
    }

    void remove_active(std::size_t k) {
        active_.erase(active_.begin() + static_cast<std::ptrdiff_t>(k));
        u_.erase(u_.begin() + static_cast<std::ptrdiff_t>(k));
    }

    Matrix g_;
    Vector a_;
    std::vector<Constraint> constraints_;
    int change_limit_;
    Matrix j_;
    Vector x_;
    std::vector<std::size_t> active_;
    std::vector<double> u_;
    int changes_ = 0;
};

}  // namespace detail

inline QpSolution solve(const QpProblem& p) {
    validate(p);
    const Eigen::Index d = p.objective_matrix.rows();
    const Matrix& e = p.objective_matrix;
    const Matrix hessian = 2.0 * (e * e.transpose() + p.ridge * Matrix::Identity(d, d));
    const Vector linear = -2.0 * (e * p.target);

    std::vector<detail::DualActiveSet::Constraint> constraints;
    std::vector<std::pair<Eigen::Index, int>> origin;  // (index, kind) kind: 0 eq, 1 lower, 2 upper
    for (Eigen::Index k = 0; k < p.eq_matrix.rows(); ++k) {
        constraints.push_back({p.eq_matrix.row(k).transpose(), p.eq_rhs(k), true});
        origin.emplace_back(k, 0);
    }
    for (Eigen::Index i = 0; i < d; ++i) {
        if (std::isfinite(p.lower(i))) {
            constraints.push_back({Vector::Unit(d, i), p.lower(i), false});
            origin.emplace_back(i, 1);
        }
        if (std::isfinite(p.upper(i))) {
            constraints.push_back({-Vector::Unit(d, i), -p.upper(i), false});
            origin.emplace_back(i, 2);
        }
    }

    detail::DualActiveSet solver(hessian, linear, constraints, static_cast<int>(10 * std::max<Eigen::Index>(d, 1)));
    QpSolution out;
    out.status = solver.run();
    out.delta_x = solver.x();
    if (out.status == QpStatus::optimal) {
        // Coordinates pinned by a single-coordinate equality take their exact value.
        for (Eigen::Index k = 0; k < p.eq_matrix.rows(); ++k) {
            Eigen::Index pinned = -1;
            int nonzeros = 0;
            for (Eigen::Index i = 0; i < d; ++i) {
                if (p.eq_matrix(k, i) != 0.0) {
                    pinned = i;
                    ++nonzeros;
                }
            }
            if (nonzeros == 1) out.delta_x(pinned) = p.eq_rhs(k) / p.eq_matrix(k, pinned);
        }
    }
    out.active_set_changes = solver.changes();
    out.residual = (e.transpose() * out.delta_x - p.target).norm();
    out.lower_multipliers = Vector::Zero(d);
    out.upper_multipliers = Vector::Zero(d);
    out.eq_multipliers = Vector::Zero(p.eq_matrix.rows());

    const auto u = solver.multipliers();
    // Stationarity: G x + a = sum_j u_j n_j.
    Vector stationarity = hessian * out.delta_x + linear;
    double violation = 0.0;
    for (std::size_t c = 0; c < constraints.size(); ++c) {
        stationarity -= u[c] * constraints[c].normal;
        const double s = constraints[c].normal.dot(out.delta_x) - constraints[c].rhs;
        if (constraints[c].equality) {
            violation = std::max(violation, std::abs(s));
        } else {
            violation = std::max({violation, -s, -u[c], std::abs(u[c] * s)});
        }
        const auto [index, kind] = origin[c];
        if (kind == 0) out.eq_multipliers(index) = u[c];
        if (kind == 1) out.lower_multipliers(index) = u[c];
        if (kind == 2) out.upper_multipliers(index) = u[c];
    }
    out.kkt_violation = std::max(violation, stationarity.cwiseAbs().maxCoeff());
    return out;
}

inline nlohmann::json to_json(const QpSolution& s) {
    return {{"delta_x", std::vector<double>(s.delta_x.data(), s.delta_x.data() + s.delta_x.size())},
            {"residual", s.residual},
            {"status", to_string(s.status)},
            {"kkt_violation", s.kkt_violation}};
}

}  // namespace dimwhatif
