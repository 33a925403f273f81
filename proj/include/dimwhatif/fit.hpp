#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dimwhatif/model.hpp"

namespace dimwhatif {

// Everything needed to fit a model from a dataset.
struct FitOptions {
    std::string backend = "pca";  // "pca" or "autoencoder"
    bool standardize = false;
    // Autoencoder only. Empty layers means {d, h, 2, h, d} with h = clamp(d, 4, 64).
    std::vector<std::size_t> layers;
    TrainOptions train;
};

inline std::string canonical_backend(const std::string& name) {
    if (name == "pca") return "pca";
    if (name == "ae" || name == "autoencoder") return "autoencoder";
    throw Error("unknown_backend", "unknown backend '" + name + "'; expected pca or autoencoder");
}

inline std::vector<std::size_t> default_layers(std::size_t d) {
    const std::size_t h = std::clamp<std::size_t>(d, 4, 64);
    return {d, h, 2, h, d};
}

inline DrModel fit_model(const Dataset& ds, const FitOptions& opts) {
    const std::string backend = canonical_backend(opts.backend);
    if (backend == "pca") return fit_pca(ds, opts.standardize);
    std::vector<std::size_t> layers = opts.layers.empty() ? default_layers(ds.cols()) : opts.layers;
    if (opts.train.epochs == 0) return initialize_autoencoder(ds, std::move(layers), opts.train);
    return train(ds, std::move(layers), opts.train);
}

// Accepts {backend, standardize, layers, epochs, batch, learning_rate, seed, activation}.
inline FitOptions fit_options_from_json(const nlohmann::json& j) {
    require(j.is_object() || j.is_null(), "bad_request", "fit options must be a JSON object");
    FitOptions o;
    if (j.is_null()) return o;
    try {
        o.backend = canonical_backend(j.value("backend", o.backend));
        o.standardize = j.value("standardize", o.standardize);
        o.layers = j.value("layers", o.layers);
        o.train.epochs = j.value("epochs", o.train.epochs);
        o.train.batch = j.value("batch", o.train.batch);
        o.train.learning_rate = j.value("learning_rate", o.train.learning_rate);
        o.train.seed = j.value("seed", o.train.seed);
        if (j.contains("activation")) o.train.activation = activation_from_string(j["activation"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw Error("bad_request", std::string("invalid fit options: ") + e.what());
    }
    return o;
}

inline nlohmann::json to_json(const FitOptions& o) {
    return {{"backend", canonical_backend(o.backend)},
            {"standardize", o.standardize},
            {"layers", o.layers},
            {"epochs", o.train.epochs},
            {"batch", o.train.batch},
            {"learning_rate", o.train.learning_rate},
            {"seed", o.train.seed},
            {"activation", to_string(o.train.activation)}};
}

// A fitted model together with the dataset it was fitted on, so that later
// commands can address rows by id.
struct ModelBundle {
    std::shared_ptr<const Dataset> dataset;
    std::shared_ptr<const DrModel> model;
};

inline nlohmann::json to_json(const ModelBundle& b) {
    return {{"format", "dimwhatif-model"}, {"version", 1}, {"model", to_json(*b.model)}, {"dataset", to_json(*b.dataset)}};
}

inline ModelBundle bundle_from_json(const nlohmann::json& j) {
    try {
        require(j.value("format", std::string()) == "dimwhatif-model", "invalid_model", "not a dimwhatif model file");
        auto ds = std::make_shared<const Dataset>(dataset_from_json(j.at("dataset")));
        auto model = std::make_shared<const DrModel>(model_from_json(j.at("model")));
        require(dims(*model) == ds->cols(), "dimension_mismatch", "model and embedded dataset feature counts differ");
        return {std::move(ds), std::move(model)};
    } catch (const nlohmann::json::exception& e) {
        throw Error("invalid_model", std::string("malformed model file: ") + e.what());
    }
}

}  // namespace dimwhatif
