#pragma once

#include <algorithm>
#include <vector>

#include "dimwhatif/session.hpp"

namespace dimwhatif {

struct ProlineSample {
    double value;
    Point2 position;
};

struct Proline {
    std::size_t feature = 0;
    std::vector<ProlineSample> samples;  // strictly increasing values over [min, max]
    Point2 mean_marker = Point2::Zero();
    Point2 sigma_down = Point2::Zero();
    Point2 sigma_up = Point2::Zero();
    std::vector<Point2> green;  // values in [x_i, mu + sigma]
    std::vector<Point2> red;    // values in [mu - sigma, x_i]
    double relevance = 0.0;     // polyline arc length
    double variance = 0.0;      // feature variance, the alternative ranking key
    bool degenerate = false;    // zero-variance feature, single sample
};

// How the sampling step for feature i is chosen.
struct StepPolicy {
    enum class Kind { sigma_fraction, fixed, sample_count } kind = Kind::sigma_fraction;
    double value = 1.0 / 8.0;

    static StepPolicy sigma_fraction(double c) { return {Kind::sigma_fraction, c}; }
    static StepPolicy fixed(double step) { return {Kind::fixed, step}; }
    // Evenly spaced samples over [min, max], endpoints included.
    static StepPolicy sample_count(std::size_t count) { return {Kind::sample_count, static_cast<double>(count)}; }

    double step_for(const FeatureStats& s) const {
        const double range = s.max - s.min;
        switch (kind) {
            case Kind::sigma_fraction: return value * s.std;
            case Kind::fixed: return value;
            case Kind::sample_count: return value > 1.0 ? range / (value - 1.0) : range;
        }
        return range;
    }
};

enum class RelevanceMode { path_length, variance };

namespace detail {

// Planar position of `base` with feature i replaced by each requested value.
class FeatureSweep {
public:
    FeatureSweep(const DrModel& model, const Vector& base) : model_(model), base_(base) {
        if (const auto* pca = std::get_if<PcaModel>(&model_)) {
            base_position_ = project(*pca, base_);
            velocity_ = pca->effective_projection();
        }
    }

    Point2 at(std::size_t feature, double value) const {
        const auto i = static_cast<Eigen::Index>(feature);
        if (is_linear(model_)) return base_position_ + (value - base_(i)) * velocity_.row(i).transpose();
        Vector x = base_;
        x(i) = value;
        return map_point(model_, x);
    }

private:
    const DrModel& model_;
    const Vector& base_;
    Point2 base_position_ = Point2::Zero();
    Matrix velocity_;
};

inline std::vector<Point2> segment(const FeatureSweep& sweep, std::size_t feature,
                                   const std::vector<ProlineSample>& samples, double from, double to) {
    std::vector<Point2> out;
    if (!(from <= to)) return out;
    out.push_back(sweep.at(feature, from));
    for (const auto& s : samples) {
        if (s.value > from && s.value < to) out.push_back(s.position);
    }
    if (to > from) out.push_back(sweep.at(feature, to));
    return out;
}

inline Proline build_proline(const Dataset& ds, const DrModel& model, const Vector& base, std::size_t feature,
                             const StepPolicy& policy) {
    require(feature < ds.cols(), "index_out_of_range", "feature " + std::to_string(feature) + " out of range");
    const FeatureStats s = ds.stats(feature);
    const FeatureSweep sweep(model, base);
    Proline p;
    p.feature = feature;
    p.variance = s.std * s.std;
    const double x = std::clamp(base(static_cast<Eigen::Index>(feature)), s.min, s.max);
    const double lo = std::clamp(s.mean - s.std, s.min, s.max);
    const double hi = std::clamp(s.mean + s.std, s.min, s.max);

    if (s.max <= s.min) {
        p.degenerate = true;
        p.samples.push_back({s.min, sweep.at(feature, s.min)});
        p.mean_marker = p.sigma_down = p.sigma_up = p.samples.front().position;
        return p;
    }

    const double range = s.max - s.min;
    double step = policy.step_for(s);
    require(step > 0.0 && std::isfinite(step), "invalid_step", "proline step must be positive");
    // Bounded so a tiny step cannot exhaust memory.
    step = std::max(step, range / 1e6);
    for (std::size_t k = 0;; ++k) {
        const double v = s.min + static_cast<double>(k) * step;
        if (v >= s.max - 1e-12 * range) break;
        p.samples.push_back({v, sweep.at(feature, v)});
    }
    p.samples.push_back({s.max, sweep.at(feature, s.max)});

    p.mean_marker = sweep.at(feature, s.mean);
    p.sigma_down = sweep.at(feature, lo);
    p.sigma_up = sweep.at(feature, hi);
    p.green = segment(sweep, feature, p.samples, x, hi);
    p.red = segment(sweep, feature, p.samples, lo, x);
    for (std::size_t k = 1; k < p.samples.size(); ++k) {
        p.relevance += (p.samples[k].position - p.samples[k - 1].position).norm();
    }
    return p;
}

}  // namespace detail

// Proline of feature i swept from the session's working point.
inline Proline build_proline(const Session& s, std::size_t feature, const StepPolicy& policy = {}) {
    return detail::build_proline(s.dataset(), s.model(), s.working_point(), feature, policy);
}

inline void sort_by_relevance(std::vector<Proline>& prolines, RelevanceMode mode) {
    std::stable_sort(prolines.begin(), prolines.end(), [mode](const Proline& a, const Proline& b) {
        const double ka = mode == RelevanceMode::path_length ? a.relevance : a.variance;
        const double kb = mode == RelevanceMode::path_length ? b.relevance : b.variance;
        return ka > kb;
    });
}

// One proline per feature, most relevant first (ties keep feature order).
inline std::vector<Proline> build_all_prolines(const Session& s, const StepPolicy& policy = {},
                                               RelevanceMode mode = RelevanceMode::path_length) {
    std::vector<Proline> out;
    out.reserve(s.dataset().cols());
    for (std::size_t i = 0; i < s.dataset().cols(); ++i) out.push_back(build_proline(s, i, policy));
    sort_by_relevance(out, mode);
    return out;
}

// Position on a proline for an arbitrary feature value: linear
// interpolation between the bracketing samples, extrapolation along the end
// segments outside [min, max].
inline Point2 position_on(const Proline& p, double value) {
    const auto& s = p.samples;
    if (s.size() == 1) return s.front().position;
    auto upper = std::upper_bound(s.begin(), s.end(), value,
                                  [](double v, const ProlineSample& sample) { return v < sample.value; });
    std::size_t hi = static_cast<std::size_t>(upper - s.begin());
    hi = std::clamp<std::size_t>(hi, 1, s.size() - 1);
    const auto& a = s[hi - 1];
    const auto& b = s[hi];
    const double t = (value - a.value) / (b.value - a.value);
    return a.position + t * (b.position - a.position);
}

enum class MarkDirection { increasing, decreasing, unchanged, violated };

inline const char* to_string(MarkDirection d) {
    switch (d) {
        case MarkDirection::increasing: return "increasing";
        case MarkDirection::decreasing: return "decreasing";
        case MarkDirection::unchanged: return "unchanged";
        case MarkDirection::violated: return "violated";
    }
    return "unknown";
}

struct ProjectionMark {
    std::size_t feature;
    Point2 position;
    MarkDirection direction;
    double value;
};

// Current feature values placed on the prolines of the selected point's
// original row, so marks travel along fixed guides while the point is edited.
inline std::vector<ProjectionMark> projection_marks(const Session& s, const StepPolicy& policy = {}) {
    const Vector original = s.original_point();
    const Vector& working = s.working_point();
    const auto violated = violated_features(s.constraints(), working, working);
    std::vector<bool> is_violated(working.size(), false);
    for (std::size_t i : violated) is_violated[i] = true;

    std::vector<ProjectionMark> marks;
    marks.reserve(s.dataset().cols());
    for (std::size_t i = 0; i < s.dataset().cols(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        const Proline p = detail::build_proline(s.dataset(), s.model(), original, i, policy);
        const double v = working(k);
        const double change = v - original(k);
        MarkDirection dir = MarkDirection::unchanged;
        if (is_violated[i]) {
            dir = MarkDirection::violated;
        } else if (std::abs(change) > 1e-12 * (1.0 + std::abs(original(k)))) {
            dir = change > 0.0 ? MarkDirection::increasing : MarkDirection::decreasing;
        }
        marks.push_back({i, position_on(p, v), dir, v});
    }
    return marks;
}

namespace detail {
inline nlohmann::json xy(const Point2& p) { return nlohmann::json::array({p.x(), p.y()}); }
}  // namespace detail

inline nlohmann::json to_json(const Proline& p) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : p.samples) samples.push_back({s.value, s.position.x(), s.position.y()});
    nlohmann::json green = nlohmann::json::array();
    for (const auto& q : p.green) green.push_back(detail::xy(q));
    nlohmann::json red = nlohmann::json::array();
    for (const auto& q : p.red) red.push_back(detail::xy(q));
    return {{"feature", p.feature},
            {"samples", std::move(samples)},
            {"mean", detail::xy(p.mean_marker)},
            {"sigma", {detail::xy(p.sigma_down), detail::xy(p.sigma_up)}},
            {"green", std::move(green)},
            {"red", std::move(red)},
            {"relevance", p.relevance},
            {"variance", p.variance},
            {"degenerate", p.degenerate}};
}

inline nlohmann::json to_json(const ProjectionMark& m) {
    return {{"feature", m.feature},
            {"position", detail::xy(m.position)},
            {"direction", to_string(m.direction)},
            {"value", m.value}};
}

}  // namespace dimwhatif
