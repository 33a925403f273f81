#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dimwhatif/dataset.hpp"
#include "dimwhatif/rng.hpp"

namespace dimwhatif {

enum class Activation { tanh, linear };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "linear"; }

inline Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::tanh;
    if (s == "linear") return Activation::linear;
    throw Error("unknown_activation", "unknown activation '" + s + "'");
}

struct DenseLayer {
    Matrix weights;  // out x in
    Vector bias;     // out
};

struct TrainingReport {
    std::size_t epochs = 0;
    double initial_error = 0.0;
    double final_error = 0.0;
    std::vector<double> history;  // training error after each epoch
};

// Symmetric fully connected autoencoder with a 2-unit bottleneck. Hidden
// layers (bottleneck included) use `activation`; the output layer is linear.
// Inputs are mapped affinely to [-1, 1] per feature before the first layer.
struct AutoencoderModel {
    std::vector<std::size_t> layer_sizes;
    std::vector<DenseLayer> layers;
    Activation activation = Activation::tanh;
    Vector input_center;
    Vector input_half_range;
    std::uint64_t seed = 0;
    TrainingReport report;

    std::size_t dims() const { return layer_sizes.front(); }
    std::size_t bottleneck_layer() const { return layer_sizes.size() / 2; }  // index into layer_sizes
};

inline void validate_layer_sizes(const std::vector<std::size_t>& sizes) {
    require(sizes.size() >= 3 && sizes.size() % 2 == 1, "invalid_architecture",
            "autoencoder needs an odd number (>= 3) of layer sizes");
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        require(sizes[i] >= 1, "invalid_architecture", "layer sizes must be positive");
        require(sizes[i] == sizes[sizes.size() - 1 - i], "invalid_architecture", "layer sizes must be symmetric");
    }
    require(sizes[sizes.size() / 2] == 2, "invalid_architecture", "bottleneck layer must have exactly 2 units");
}

// Untrained model with Xavier-uniform weights, zero biases and identity
// input scaling.
inline AutoencoderModel make_autoencoder(std::vector<std::size_t> layer_sizes, Activation activation,
                                         std::uint64_t seed) {
    validate_layer_sizes(layer_sizes);
    AutoencoderModel m;
    m.layer_sizes = std::move(layer_sizes);
    m.activation = activation;
    m.seed = seed;
    const auto d = static_cast<Eigen::Index>(m.layer_sizes.front());
    m.input_center = Vector::Zero(d);
    m.input_half_range = Vector::Ones(d);
    Rng rng(seed);
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(m.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(m.layer_sizes[l + 1]);
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        DenseLayer layer{Matrix(out, in), Vector::Zero(out)};
        for (Eigen::Index r = 0; r < out; ++r) {
            for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = rng.uniform(-limit, limit);
        }
        m.layers.push_back(std::move(layer));
    }
    return m;
}

namespace detail {

inline Matrix activate(const Matrix& z, Activation a) { return a == Activation::tanh ? Matrix(z.array().tanh()) : z; }

// Columns are samples. Returns the activations of every layer; entry 0 is
// the input.
inline std::vector<Matrix> forward_pass(const AutoencoderModel& m, const Matrix& input, std::size_t first_layer,
                                        std::size_t last_layer) {
    std::vector<Matrix> acts;
    acts.reserve(last_layer - first_layer + 1);
    acts.push_back(input);
    for (std::size_t l = first_layer; l < last_layer; ++l) {
        Matrix z = (m.layers[l].weights * acts.back()).colwise() + m.layers[l].bias;
        const bool output_layer = l + 1 == m.layers.size();
        acts.push_back(output_layer ? z : activate(z, m.activation));
    }
    return acts;
}

inline Matrix scale_rows(const AutoencoderModel& m, const Matrix& rows) {
    return ((rows.rowwise() - m.input_center.transpose()).array().rowwise() /
            m.input_half_range.transpose().array())
        .matrix()
        .transpose();
}

// Mean squared error per element over columns of `scaled` (d x n).
inline double loss(const AutoencoderModel& m, const Matrix& scaled) {
    const auto acts = forward_pass(m, scaled, 0, m.layers.size());
    return (acts.back() - scaled).squaredNorm() / static_cast<double>(scaled.size());
}

// Gradient of `loss` with respect to every weight and bias.
inline std::vector<DenseLayer> loss_gradient(const AutoencoderModel& m, const Matrix& scaled) {
    const auto acts = forward_pass(m, scaled, 0, m.layers.size());
    std::vector<DenseLayer> grads(m.layers.size());
    Matrix delta = (acts.back() - scaled) * (2.0 / static_cast<double>(scaled.size()));
    for (std::size_t l = m.layers.size(); l-- > 0;) {
        grads[l].weights = delta * acts[l].transpose();
        grads[l].bias = delta.rowwise().sum();
        if (l == 0) break;
        Matrix back = m.layers[l].weights.transpose() * delta;
        if (m.activation == Activation::tanh) back.array() *= 1.0 - acts[l].array().square();
        delta = std::move(back);
    }
    return grads;
}

}  // namespace detail

inline void check_dims(const AutoencoderModel& m, Eigen::Index size) {
    require(size == static_cast<Eigen::Index>(m.dims()), "dimension_mismatch",
            "expected " + std::to_string(m.dims()) + " features, got " + std::to_string(size));
}

inline Point2 encode(const AutoencoderModel& m, const Vector& x) {
    check_dims(m, x.size());
    require(x.allFinite(), "non_finite_value", "encode input contains non-finite values");
    const Matrix scaled = (x - m.input_center).cwiseQuotient(m.input_half_range);
    const auto acts = detail::forward_pass(m, scaled, 0, m.bottleneck_layer());
    return acts.back().col(0);
}

inline Vector decode(const AutoencoderModel& m, const Point2& y) {
    require(y.allFinite(), "non_finite_value", "decode input contains non-finite values");
    const auto acts = detail::forward_pass(m, Matrix(y), m.bottleneck_layer(), m.layers.size());
    return acts.back().col(0).cwiseProduct(m.input_half_range) + m.input_center;
}

// Batch encode of every dataset row.
inline Matrix encode_rows(const AutoencoderModel& m, const Matrix& rows) {
    check_dims(m, rows.cols());
    const auto acts = detail::forward_pass(m, detail::scale_rows(m, rows), 0, m.bottleneck_layer());
    return acts.back().transpose();
}

// Mean squared reconstruction error per element, in the scaled input space.
inline double reconstruction_error(const AutoencoderModel& m, const Matrix& rows) {
    check_dims(m, rows.cols());
    return detail::loss(m, detail::scale_rows(m, rows));
}

struct TrainOptions {
    std::size_t epochs = 500;
    std::size_t batch = 16;
    double learning_rate = 0.05;
    std::uint64_t seed = 1;
    Activation activation = Activation::tanh;
};

// Model as training would start: seeded weights plus input scaling fitted to
// the data's per-feature range.
inline AutoencoderModel initialize_autoencoder(const Dataset& ds, std::vector<std::size_t> layer_sizes,
                                               const TrainOptions& opts) {
    validate_layer_sizes(layer_sizes);
    require(layer_sizes.front() == ds.cols(), "dimension_mismatch",
            "first layer size must equal the feature count " + std::to_string(ds.cols()));
    AutoencoderModel m = make_autoencoder(std::move(layer_sizes), opts.activation, opts.seed);
    const Matrix& x = ds.values();
    const Vector lo = x.colwise().minCoeff().transpose();
    const Vector hi = x.colwise().maxCoeff().transpose();
    m.input_center = (lo + hi) / 2.0;
    m.input_half_range = (hi - lo) / 2.0;
    for (Eigen::Index i = 0; i < m.input_half_range.size(); ++i) {
        if (m.input_half_range(i) <= 0.0) m.input_half_range(i) = 1.0;
    }
    const double err = reconstruction_error(m, x);
    m.report = {0, err, err, {}};
    return m;
}

// Plain mini-batch SGD on the mean squared reconstruction error.
inline AutoencoderModel train(const Dataset& ds, std::vector<std::size_t> layer_sizes, const TrainOptions& opts) {
    require(opts.batch >= 1 && ds.rows() >= opts.batch, "invalid_hyperparameters",
            "batch size must be in [1, n]");
    require(opts.learning_rate > 0.0 && std::isfinite(opts.learning_rate), "invalid_hyperparameters",
            "learning rate must be positive");
    AutoencoderModel m = initialize_autoencoder(ds, std::move(layer_sizes), opts);
    const Matrix scaled = detail::scale_rows(m, ds.values());
    Rng rng(opts.seed ^ 0x5eedULL);
    std::vector<Eigen::Index> order(ds.rows());
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    for (std::size_t epoch = 0; epoch < opts.epochs; ++epoch) {
        rng.shuffle(order.begin(), order.end());
        for (std::size_t start = 0; start < order.size(); start += opts.batch) {
            const std::size_t end = std::min(order.size(), start + opts.batch);
            Matrix batch(scaled.rows(), static_cast<Eigen::Index>(end - start));
            for (std::size_t k = start; k < end; ++k) batch.col(static_cast<Eigen::Index>(k - start)) = scaled.col(order[k]);
            const auto grads = detail::loss_gradient(m, batch);
            for (std::size_t l = 0; l < m.layers.size(); ++l) {
                m.layers[l].weights -= opts.learning_rate * grads[l].weights;
                m.layers[l].bias -= opts.learning_rate * grads[l].bias;
            }
        }
        const double err = detail::loss(m, scaled);
        if (!std::isfinite(err)) {
            throw Error("training_diverged", "training diverged at epoch " + std::to_string(epoch));
        }
        m.report.history.push_back(err);
    }
    m.report.epochs = opts.epochs;
    m.report.final_error = detail::loss(m, scaled);
    return m;
}

// Max relative discrepancy between backpropagated gradients and central
// differences (step 1e-5) at `probe_count` randomly chosen parameters. The
// loss is evaluated on `rows` (raw feature units).
inline double gradient_check(const AutoencoderModel& m, const Matrix& rows, std::size_t probe_count,
                             std::uint64_t seed = 7) {
    check_dims(m, rows.cols());
    const Matrix scaled = detail::scale_rows(m, rows);
    const auto grads = detail::loss_gradient(m, scaled);

    std::size_t total = 0;
    for (const auto& layer : m.layers) total += static_cast<std::size_t>(layer.weights.size() + layer.bias.size());
    Rng rng(seed);
    AutoencoderModel probe = m;
    constexpr double h = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < probe_count; ++k) {
        auto flat = static_cast<Eigen::Index>(rng.below(total));
        std::size_t l = 0;
        while (flat >= m.layers[l].weights.size() + m.layers[l].bias.size()) {
            flat -= m.layers[l].weights.size() + m.layers[l].bias.size();
            ++l;
        }
        const bool is_weight = flat < m.layers[l].weights.size();
        double& param = is_weight ? probe.layers[l].weights.data()[flat]
                                  : probe.layers[l].bias.data()[flat - m.layers[l].weights.size()];
        const double analytic = is_weight ? grads[l].weights.data()[flat]
                                          : grads[l].bias.data()[flat - m.layers[l].weights.size()];
        const double saved = param;
        param = saved + h;
        const double up = detail::loss(probe, scaled);
        param = saved - h;
        const double down = detail::loss(probe, scaled);
        param = saved;
        const double numeric = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
        const double rel = std::abs(analytic - numeric) == 0.0 ? 0.0 : std::abs(analytic - numeric) / denom;
        worst = std::max(worst, rel);
    }
    return worst;
}

// Convenience overload on `sample_count` seeded random inputs in [-1, 1].
inline double gradient_check(const AutoencoderModel& m, std::size_t probe_count, std::uint64_t seed = 7,
                             std::size_t sample_count = 8) {
    Rng rng(seed ^ 0xda7aULL);
    Matrix rows(static_cast<Eigen::Index>(sample_count), static_cast<Eigen::Index>(m.dims()));
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < rows.cols(); ++c) {
            rows(r, c) = m.input_center(c) + m.input_half_range(c) * rng.uniform(-1.0, 1.0);
        }
    }
    return gradient_check(m, rows, probe_count, seed);
}

inline nlohmann::json to_json(const AutoencoderModel& m) {
    nlohmann::json weights = nlohmann::json::array();
    nlohmann::json biases = nlohmann::json::array();
    for (const auto& layer : m.layers) {
        std::vector<double> w;
        w.reserve(static_cast<std::size_t>(layer.weights.size()));
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.push_back(layer.weights(r, c));
        }
        weights.push_back(std::move(w));
        biases.push_back(std::vector<double>(layer.bias.data(), layer.bias.data() + layer.bias.size()));
    }
    const auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    return {{"layer_sizes", m.layer_sizes},
            {"activation", to_string(m.activation)},
            {"weights", std::move(weights)},
            {"biases", std::move(biases)},
            {"input_scale", {{"center", vec(m.input_center)}, {"half_range", vec(m.input_half_range)}}},
            {"seed", m.seed},
            {"training_report",
             {{"epochs", m.report.epochs},
              {"initial_error", m.report.initial_error},
              {"final_error", m.report.final_error},
              {"history", m.report.history}}}};
}

inline AutoencoderModel autoencoder_from_json(const nlohmann::json& j) {
    AutoencoderModel m;
    m.layer_sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    validate_layer_sizes(m.layer_sizes);
    m.activation = activation_from_string(j.at("activation").get<std::string>());
    m.seed = j.value("seed", std::uint64_t{0});
    const auto& weights = j.at("weights");
    const auto& biases = j.at("biases");
    require(weights.size() + 1 == m.layer_sizes.size() && biases.size() == weights.size(), "malformed_model",
            "weight/bias arrays do not match layer sizes");
    for (std::size_t l = 0; l + 1 < m.layer_sizes.size(); ++l) {
        const auto in = static_cast<Eigen::Index>(m.layer_sizes[l]);
        const auto out = static_cast<Eigen::Index>(m.layer_sizes[l + 1]);
        const auto w = weights[l].get<std::vector<double>>();
        const auto b = biases[l].get<std::vector<double>>();
        require(static_cast<Eigen::Index>(w.size()) == in * out && static_cast<Eigen::Index>(b.size()) == out,
                "malformed_model", "layer " + std::to_string(l) + " has the wrong parameter count");
        DenseLayer layer{Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                             w.data(), out, in),
                         Eigen::Map<const Vector>(b.data(), out)};
        m.layers.push_back(std::move(layer));
    }
    const auto center = j.at("input_scale").at("center").get<std::vector<double>>();
    const auto half = j.at("input_scale").at("half_range").get<std::vector<double>>();
    require(center.size() == m.dims() && half.size() == m.dims(), "malformed_model", "input scale length mismatch");
    m.input_center = Eigen::Map<const Vector>(center.data(), static_cast<Eigen::Index>(center.size()));
    m.input_half_range = Eigen::Map<const Vector>(half.data(), static_cast<Eigen::Index>(half.size()));
    if (j.contains("training_report")) {
        const auto& r = j.at("training_report");
        m.report.epochs = r.value("epochs", std::size_t{0});
        m.report.initial_error = r.value("initial_error", 0.0);
        m.report.final_error = r.value("final_error", 0.0);
        m.report.history = r.value("history", std::vector<double>{});
    }
    return m;
}

}  // namespace dimwhatif
