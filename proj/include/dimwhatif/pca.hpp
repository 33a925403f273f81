#pragma once

#include <Eigen/Eigenvalues>

#include <array>
#include <cmath>

#include "dimwhatif/dataset.hpp"

namespace dimwhatif {

// Planar coordinates, one row per dataset row.
struct Layout {
    Matrix positions;  // n x 2
    double width = 0.0;

    Point2 position(std::size_t row) const { return positions.row(static_cast<Eigen::Index>(row)).transpose(); }
    std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
};

inline Layout make_layout(Matrix positions) {
    Layout layout;
    layout.width = positions.rows() > 0 ? positions.col(0).maxCoeff() - positions.col(0).minCoeff() : 0.0;
    layout.positions = std::move(positions);
    return layout;
}

// Two-component PCA. With `standardize` the features are divided by their
// population standard deviation before projecting; `scale` holds those
// divisors (all ones otherwise).
struct PcaModel {
    Vector mean;
    Matrix components;  // d x 2, orthonormal columns e0, e1
    std::array<double, 2> explained_variance{0.0, 0.0};
    bool standardize = false;
    Vector scale;
    bool degenerate_axes = false;

    std::size_t dims() const { return static_cast<std::size_t>(mean.size()); }

    // Maps a feature-space change to a planar change: dy = (dx ./ scale) E.
    // Row i of this matrix is the planar velocity of feature i.
    Matrix effective_projection() const { return scale.cwiseInverse().asDiagonal() * components; }
};

namespace detail {

inline void fix_component_signs(Matrix& components) {
    for (Eigen::Index c = 0; c < components.cols(); ++c) {
        Eigen::Index arg = 0;
        components.col(c).cwiseAbs().maxCoeff(&arg);
        if (components(arg, c) < 0.0) components.col(c) *= -1.0;
    }
}

// Top-2 eigenpairs of a symmetric covariance matrix.
inline PcaModel pca_from_covariance(Vector mean, const Matrix& covariance, bool standardize, Vector scale) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(covariance);
    require(eig.info() == Eigen::Success, "eigensolver_failure", "symmetric eigensolver did not converge");
    const auto& values = eig.eigenvalues();  // ascending
    const Eigen::Index d = values.size();
    const double top = values(d - 1);
    const double magnitude = covariance.cwiseAbs().maxCoeff();
    require(top > 1e-14 * std::max(1.0, magnitude) && top > 0.0, "degenerate_covariance",
            "degenerate covariance: all rows are identical");

    PcaModel model;
    model.mean = std::move(mean);
    model.standardize = standardize;
    model.scale = std::move(scale);
    model.components.resize(d, 2);
    model.components.col(0) = eig.eigenvectors().col(d - 1);
    model.components.col(1) = eig.eigenvectors().col(d - 2);
    fix_component_signs(model.components);
    model.explained_variance = {std::max(0.0, top), std::max(0.0, values(d - 2))};
    model.degenerate_axes = std::abs(values(d - 1) - values(d - 2)) <= 1e-12 * top;
    return model;
}

}  // namespace detail

inline PcaModel fit_pca(const Dataset& ds, bool standardize = false) {
    const Matrix& x = ds.values();
    const Eigen::Index d = x.cols();
    Vector mean = x.colwise().mean().transpose();
    Matrix centered = x.rowwise() - mean.transpose();
    Vector scale = Vector::Ones(d);
    if (standardize) {
        for (Eigen::Index c = 0; c < d; ++c) {
            const double sd = std::sqrt(centered.col(c).squaredNorm() / static_cast<double>(x.rows()));
            require(sd > 0.0, "constant_feature",
                    "cannot standardize constant feature '" + ds.feature_names()[static_cast<std::size_t>(c)] + "'");
            scale(c) = sd;
        }
        centered = centered * scale.cwiseInverse().asDiagonal();
    }
    const Matrix covariance = (centered.transpose() * centered) / static_cast<double>(x.rows());
    return detail::pca_from_covariance(std::move(mean), covariance, standardize, std::move(scale));
}

// Flips components of `model` so each has a non-negative dot product with
// the matching component of `reference`.
inline void align_signs(PcaModel& model, const PcaModel& reference) {
    for (Eigen::Index c = 0; c < 2; ++c) {
        if (model.components.col(c).dot(reference.components.col(c)) < 0.0) model.components.col(c) *= -1.0;
    }
}

inline void check_dims(const PcaModel& model, Eigen::Index size) {
    require(size == model.mean.size(), "dimension_mismatch",
            "expected " + std::to_string(model.mean.size()) + " features, got " + std::to_string(size));
}

inline Point2 project(const PcaModel& model, const Vector& x) {
    check_dims(model, x.size());
    return model.components.transpose() * (x - model.mean).cwiseQuotient(model.scale);
}

inline Layout project_all(const PcaModel& model, const Dataset& ds) {
    check_dims(model, static_cast<Eigen::Index>(ds.cols()));
    const Matrix centered =
        (ds.values().rowwise() - model.mean.transpose()) * model.scale.cwiseInverse().asDiagonal();
    return make_layout(centered * model.components);
}

inline Point2 forward_project(const PcaModel& model, const Vector& delta_x) {
    check_dims(model, delta_x.size());
    require(delta_x.allFinite(), "non_finite_value", "feature change contains non-finite values");
    return model.components.transpose() * delta_x.cwiseQuotient(model.scale);
}

// Minimum-norm lift dx = dy E^T (in standardized units when the model
// standardizes).
inline Vector backward_unconstrained(const PcaModel& model, const Point2& delta_y) {
    require(delta_y.allFinite(), "non_finite_value", "planar change contains non-finite values");
    return (model.components * delta_y).cwiseProduct(model.scale);
}

inline nlohmann::json to_json(const PcaModel& m) {
    nlohmann::json j;
    j["mean"] = std::vector<double>(m.mean.data(), m.mean.data() + m.mean.size());
    nlohmann::json columns = nlohmann::json::array();
    for (Eigen::Index c = 0; c < 2; ++c) {
        const Vector col = m.components.col(c);
        columns.push_back(std::vector<double>(col.data(), col.data() + col.size()));
    }
    j["components"] = std::move(columns);
    j["explained_variance"] = m.explained_variance;
    j["standardize"] = m.standardize;
    if (m.standardize) j["scale"] = std::vector<double>(m.scale.data(), m.scale.data() + m.scale.size());
    j["degenerate_axes"] = m.degenerate_axes;
    return j;
}

inline PcaModel pca_from_json(const nlohmann::json& j) {
    PcaModel m;
    const auto mean = j.at("mean").get<std::vector<double>>();
    m.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size()));
    const auto& columns = j.at("components");
    require(columns.size() == 2, "malformed_model", "PCA model needs exactly 2 component columns");
    m.components.resize(m.mean.size(), 2);
    for (Eigen::Index c = 0; c < 2; ++c) {
        const auto col = columns[static_cast<std::size_t>(c)].get<std::vector<double>>();
        require(static_cast<Eigen::Index>(col.size()) == m.mean.size(), "malformed_model",
                "component length does not match mean length");
        m.components.col(c) = Eigen::Map<const Vector>(col.data(), m.mean.size());
    }
    m.explained_variance = j.at("explained_variance").get<std::array<double, 2>>();
    m.standardize = j.value("standardize", false);
    m.scale = Vector::Ones(m.mean.size());
    if (m.standardize) {
        const auto scale = j.at("scale").get<std::vector<double>>();
        require(static_cast<Eigen::Index>(scale.size()) == m.mean.size(), "malformed_model",
                "scale length does not match mean length");
        m.scale = Eigen::Map<const Vector>(scale.data(), m.mean.size());
    }
    m.degenerate_axes = j.value("degenerate_axes", false);
    return m;
}

}  // namespace dimwhatif
