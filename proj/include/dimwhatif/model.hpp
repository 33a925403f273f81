#pragma once

#include <variant>

#include "dimwhatif/autoencoder.hpp"
#include "dimwhatif/pca.hpp"

namespace dimwhatif {

// A fitted reduction: linear (PCA) or nonlinear (autoencoder). Both map a
// feature vector to a planar position; the linear backend additionally has
// exact delta forms and a constrained inverse.
using DrModel = std::variant<PcaModel, AutoencoderModel>;

inline bool is_linear(const DrModel& m) { return std::holds_alternative<PcaModel>(m); }

inline const char* backend_name(const DrModel& m) { return is_linear(m) ? "pca" : "autoencoder"; }

inline std::size_t dims(const DrModel& m) {
    return std::visit([](const auto& model) { return model.dims(); }, m);
}

inline Point2 map_point(const DrModel& m, const Vector& x) {
    if (const auto* pca = std::get_if<PcaModel>(&m)) return project(*pca, x);
    return encode(std::get<AutoencoderModel>(m), x);
}

inline Layout layout_of(const DrModel& m, const Dataset& ds) {
    if (const auto* pca = std::get_if<PcaModel>(&m)) return project_all(*pca, ds);
    return make_layout(encode_rows(std::get<AutoencoderModel>(m), ds.values()));
}

// Linear [d, 2, d] autoencoder that reproduces a PCA model exactly:
// encoder E^T, decoder E, input scaling by the model's mean and scale.
inline AutoencoderModel linear_autoencoder(const PcaModel& pca) {
    const std::size_t d = pca.dims();
    AutoencoderModel m;
    m.layer_sizes = {d, 2, d};
    m.activation = Activation::linear;
    m.layers.push_back({pca.components.transpose(), Vector::Zero(2)});
    m.layers.push_back({pca.components, Vector::Zero(static_cast<Eigen::Index>(d))});
    m.input_center = pca.mean;
    m.input_half_range = pca.scale;
    return m;
}

inline nlohmann::json to_json(const DrModel& m) {
    nlohmann::json j = std::visit([](const auto& model) { return to_json(model); }, m);
    j["backend"] = backend_name(m);
    return j;
}

inline DrModel model_from_json(const nlohmann::json& j) {
    const auto backend = j.value("backend", std::string("pca"));
    if (backend == "pca") return pca_from_json(j);
    if (backend == "autoencoder" || backend == "ae") return autoencoder_from_json(j);
    throw Error("unknown_backend", "unknown backend '" + backend + "'");
}

}  // namespace dimwhatif
