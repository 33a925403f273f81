#pragma once

#include <limits>
#include <optional>
#include <vector>

#include "dimwhatif/pca.hpp"
#include "dimwhatif/qp.hpp"

namespace dimwhatif {

// Per-feature user constraint in absolute feature units. A lock without a
// value pins the feature at whatever value it has when a drag starts.
struct FeatureConstraint {
    bool locked = false;
    std::optional<double> lock_value;
    std::optional<double> lower;
    std::optional<double> upper;

    bool active() const { return locked || lower || upper; }
};

class ConstraintSet {
public:
    ConstraintSet() = default;
    explicit ConstraintSet(std::size_t features) : features_(features) {}

    std::size_t size() const { return features_.size(); }
    bool empty() const {
        for (const auto& f : features_) {
            if (f.active()) return false;
        }
        return true;
    }

    const FeatureConstraint& operator[](std::size_t i) const { return features_.at(i); }
    FeatureConstraint& operator[](std::size_t i) { return features_.at(i); }

    ConstraintSet& lock(std::size_t i, std::optional<double> value = std::nullopt) {
        features_.at(i).locked = true;
        features_.at(i).lock_value = value;
        return *this;
    }
    ConstraintSet& bound(std::size_t i, std::optional<double> lower, std::optional<double> upper) {
        features_.at(i).lower = lower;
        features_.at(i).upper = upper;
        return *this;
    }
    ConstraintSet& lock_all() {
        for (auto& f : features_) f.locked = true;
        return *this;
    }

    void validate() const {
        for (std::size_t i = 0; i < features_.size(); ++i) {
            const auto& f = features_[i];
            const std::string where = " for feature " + std::to_string(i);
            for (const auto& v : {f.lock_value, f.lower, f.upper}) {
                require(!v || std::isfinite(*v), "malformed_constraints", "non-finite constraint value" + where);
            }
            require(!(f.lower && f.upper) || *f.lower <= *f.upper, "malformed_constraints",
                    "lower bound exceeds upper bound" + where);
            if (f.locked && f.lock_value) {
                require(!f.lower || *f.lock_value >= *f.lower, "malformed_constraints",
                        "lock value below lower bound" + where);
                require(!f.upper || *f.lock_value <= *f.upper, "malformed_constraints",
                        "lock value above upper bound" + where);
            }
        }
    }

private:
    std::vector<FeatureConstraint> features_;
};

// Constraints expressed on the change dx from a base point x.
struct DeltaConstraints {
    std::vector<std::size_t> locked;  // dx_i = lock_rhs[k]
    std::vector<double> lock_rhs;
    Vector lower;
    Vector upper;
};

inline DeltaConstraints to_delta(const ConstraintSet& cs, const Vector& x) {
    require(static_cast<Eigen::Index>(cs.size()) == x.size(), "dimension_mismatch",
            "constraint set size does not match the feature count");
    cs.validate();
    constexpr double inf = std::numeric_limits<double>::infinity();
    DeltaConstraints out;
    out.lower = Vector::Constant(x.size(), -inf);
    out.upper = Vector::Constant(x.size(), inf);
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const auto& f = cs[i];
        if (f.locked) {
            out.locked.push_back(i);
            out.lock_rhs.push_back(f.lock_value ? *f.lock_value - x(k) : 0.0);
        }
        if (f.lower) out.lower(k) = *f.lower - x(k);
        if (f.upper) out.upper(k) = *f.upper - x(k);
    }
    return out;
}

// Inverse of to_delta for the bounds: absolute lower/upper per feature.
inline std::pair<Vector, Vector> to_absolute_bounds(const DeltaConstraints& dc, const Vector& x) {
    return {dc.lower + x, dc.upper + x};
}

// The backward-projection QP for a linear model in its scaled coordinates
// z = dx ./ scale, so that the objective matrix is the orthonormal E.
inline QpProblem make_qp(const PcaModel& model, const DeltaConstraints& dc, const Point2& delta_y,
                         double ridge = 1e-6) {
    const auto d = static_cast<Eigen::Index>(model.dims());
    QpProblem p;
    p.objective_matrix = model.components;
    p.target = delta_y;
    p.eq_matrix = Matrix::Zero(static_cast<Eigen::Index>(dc.locked.size()), d);
    p.eq_rhs = Vector(static_cast<Eigen::Index>(dc.locked.size()));
    for (std::size_t k = 0; k < dc.locked.size(); ++k) {
        const auto i = static_cast<Eigen::Index>(dc.locked[k]);
        p.eq_matrix(static_cast<Eigen::Index>(k), i) = 1.0;
        p.eq_rhs(static_cast<Eigen::Index>(k)) = dc.lock_rhs[k] / model.scale(i);
    }
    p.lower = dc.lower.cwiseQuotient(model.scale);
    p.upper = dc.upper.cwiseQuotient(model.scale);
    p.ridge = ridge;
    return p;
}

// Features whose absolute value breaks a constraint by more than `tol`.
// `lock_base` supplies the value a value-less lock pins to.
inline std::vector<std::size_t> violated_features(const ConstraintSet& cs, const Vector& x, const Vector& lock_base,
                                                  double tol = 1e-8) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const auto& f = cs[i];
        const double slack = tol * (1.0 + std::abs(x(k)));
        bool bad = false;
        if (f.lower && x(k) < *f.lower - slack) bad = true;
        if (f.upper && x(k) > *f.upper + slack) bad = true;
        if (f.locked && std::abs(x(k) - f.lock_value.value_or(lock_base(k))) > slack) bad = true;
        if (bad) out.push_back(i);
    }
    return out;
}

inline nlohmann::json to_json(const ConstraintSet& cs) {
    nlohmann::json arr = nlohmann::json::array();
    for (std::size_t i = 0; i < cs.size(); ++i) {
        const auto& f = cs[i];
        if (!f.active()) continue;
        nlohmann::json j{{"feature", i}};
        if (f.locked) j["locked"] = true;
        if (f.lock_value) j["lock_value"] = *f.lock_value;
        if (f.lower) j["lower"] = *f.lower;
        if (f.upper) j["upper"] = *f.upper;
        arr.push_back(std::move(j));
    }
    return arr;
}

// Accepts [{feature: index-or-name, locked, lock_value, lower, upper}, ...].
inline ConstraintSet constraints_from_json(const nlohmann::json& arr, const Dataset& ds) {
    ConstraintSet cs(ds.cols());
    require(arr.is_array(), "malformed_constraints", "constraints must be a JSON array");
    for (const auto& j : arr) {
        std::size_t i = 0;
        const auto& feature = j.at("feature");
        if (feature.is_string()) {
            const auto found = ds.find_feature(feature.get<std::string>());
            require(found.has_value(), "unknown_feature", "unknown feature '" + feature.get<std::string>() + "'");
            i = *found;
        } else {
            i = feature.get<std::size_t>();
            require(i < ds.cols(), "unknown_feature", "feature index " + std::to_string(i) + " out of range");
        }
        auto& f = cs[i];
        f.locked = j.value("locked", false);
        if (j.contains("lock_value") && !j["lock_value"].is_null()) f.lock_value = j["lock_value"].get<double>();
        if (f.lock_value) f.locked = true;
        if (j.contains("lower") && !j["lower"].is_null()) f.lower = j["lower"].get<double>();
        if (j.contains("upper") && !j["upper"].is_null()) f.upper = j["upper"].get<double>();
    }
    cs.validate();
    return cs;
}

}  // namespace dimwhatif
