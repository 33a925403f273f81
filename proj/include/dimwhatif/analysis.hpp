#pragma once

#include <Eigen/QR>

#include <array>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dimwhatif/feasibility.hpp"
#include "dimwhatif/prolines.hpp"
#include "dimwhatif/rng.hpp"

namespace dimwhatif {

// ---------------------------------------------------------------------------
// Synthetic data

// Random SPD covariance: a random rotation of a diagonal whose eigenvalues
// are log-uniform in [0.25, 4].
inline Matrix random_covariance(std::size_t d, Rng& rng) {
    const auto n = static_cast<Eigen::Index>(d);
    Matrix g(n, n);
    for (Eigen::Index c = 0; c < n; ++c) {
        for (Eigen::Index r = 0; r < n; ++r) g(r, c) = rng.normal();
    }
    const Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    // Sign fix makes the rotation Haar-distributed.
    for (Eigen::Index c = 0; c < n; ++c) {
        if (qr.matrixQR()(c, c) < 0.0) q.col(c) *= -1.0;
    }
    Vector eigenvalues(n);
    for (Eigen::Index i = 0; i < n; ++i) eigenvalues(i) = std::exp(rng.uniform(std::log(0.25), std::log(4.0)));
    return q * eigenvalues.asDiagonal() * q.transpose();
}

// n zero-mean samples with the given covariance; rows "r<k>", features
// "f<k>".
inline Dataset sample_gaussian(std::size_t n, const Matrix& covariance, Rng& rng) {
    const Eigen::LLT<Matrix> llt(covariance);
    require(llt.info() == Eigen::Success, "invalid_covariance", "covariance must be symmetric positive definite");
    const Matrix l = llt.matrixL();
    const auto d = covariance.rows();
    Matrix z(d, static_cast<Eigen::Index>(n));
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
        for (Eigen::Index r = 0; r < d; ++r) z(r, c) = rng.normal();
    }
    Matrix values = (l * z).transpose();
    std::vector<std::string> ids;
    std::vector<std::string> names;
    for (std::size_t i = 0; i < n; ++i) ids.push_back("r" + std::to_string(i));
    for (Eigen::Index i = 0; i < d; ++i) names.push_back("f" + std::to_string(i));
    return Dataset(std::move(ids), std::move(names), std::move(values));
}

inline Dataset gen_gaussian(std::size_t n, std::size_t d, std::uint64_t seed) {
    require(n >= 2 && d >= 2, "invalid_size", "gaussian data needs n >= 2 and d >= 2");
    Rng rng(seed);
    const Matrix cov = random_covariance(d, rng);
    return sample_gaussian(n, cov, rng);
}

// The covariance gen_gaussian(n, d, seed) samples from.
inline Matrix gen_gaussian_covariance(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    return random_covariance(d, rng);
}

// ---------------------------------------------------------------------------
// Neighborhood correlation

struct NeighborhoodReport {
    double c_e = 0.0;  // shared fraction
    double c_o = 0.0;  // concordant-pair fraction among shared elements
    double c_n = 0.0;  // c_e * c_o
    std::size_t n = 0;
};

// The n rows closest to `point` (excluded), nearest first; ties by row index.
inline std::vector<std::size_t> nearest_rows(const Matrix& positions, std::size_t point, std::size_t n) {
    const auto rows = static_cast<std::size_t>(positions.rows());
    require(point < rows, "index_out_of_range", "point index out of range");
    require(n >= 1 && n < rows, "n_out_of_range", "neighborhood size must be in [1, rows)");
    const Point2 p = positions.row(static_cast<Eigen::Index>(point)).transpose();
    std::vector<std::pair<double, std::size_t>> dist;
    dist.reserve(rows - 1);
    for (std::size_t r = 0; r < rows; ++r) {
        if (r == point) continue;
        dist.emplace_back((positions.row(static_cast<Eigen::Index>(r)).transpose() - p).squaredNorm(), r);
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(n), dist.end());
    std::vector<std::size_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = dist[i].second;
    return out;
}

// Compares two ranked neighborhoods of equal size. c_o counts, over every
// pair of elements present in both, whether the two rankings order the pair
// the same way. With a single shared element c_o = 1; with none, 0.
inline NeighborhoodReport neighborhood_correlation(const std::vector<std::size_t>& ranked_a,
                                                   const std::vector<std::size_t>& ranked_b) {
    require(!ranked_a.empty() && ranked_a.size() == ranked_b.size(), "n_out_of_range",
            "neighborhoods must be non-empty and of equal size");
    NeighborhoodReport r;
    r.n = ranked_a.size();
    std::vector<std::pair<std::size_t, std::size_t>> common;  // (rank in a, rank in b)
    for (std::size_t i = 0; i < ranked_a.size(); ++i) {
        for (std::size_t j = 0; j < ranked_b.size(); ++j) {
            if (ranked_a[i] == ranked_b[j]) {
                common.emplace_back(i, j);
                break;
            }
        }
    }
    r.c_e = static_cast<double>(common.size()) / static_cast<double>(r.n);
    if (common.size() < 2) {
        r.c_o = common.empty() ? 0.0 : 1.0;
    } else {
        std::size_t concordant = 0;
        std::size_t pairs = 0;
        for (std::size_t u = 0; u < common.size(); ++u) {
            for (std::size_t v = u + 1; v < common.size(); ++v) {
                ++pairs;
                // `common` is in a-order, so the pair is concordant when b
                // agrees.
                if (common[u].second < common[v].second) ++concordant;
            }
        }
        r.c_o = static_cast<double>(concordant) / static_cast<double>(pairs);
    }
    r.c_n = r.c_e * r.c_o;
    return r;
}

inline NeighborhoodReport neighborhood_correlation(const Layout& a, const Layout& b, std::size_t point, std::size_t n) {
    require(a.size() == b.size(), "dimension_mismatch", "layouts must share row indexing");
    return neighborhood_correlation(nearest_rows(a.positions, point, n), nearest_rows(b.positions, point, n));
}

// ---------------------------------------------------------------------------
// Refit after a single-row change

// Keeps the data moments so that the PCA of the dataset with one row
// modified can be recomputed exactly without another pass over all rows.
class PcaRefitter {
public:
    explicit PcaRefitter(const Dataset& ds) : values_(ds.values()) {
        const auto n = static_cast<double>(values_.rows());
        mean_ = values_.colwise().mean().transpose();
        const Matrix centered = values_.rowwise() - mean_.transpose();
        scatter_ = centered.transpose() * centered;
        base_ = detail::pca_from_covariance(mean_, scatter_ / n, false, Vector::Ones(mean_.size()));
    }

    const PcaModel& base_model() const { return base_; }

    // PCA of the data with row k replaced by x_k + delta, component signs
    // aligned to the base model.
    PcaModel refit(std::size_t k, const Vector& delta) const {
        const auto n = static_cast<double>(values_.rows());
        const Vector c = values_.row(static_cast<Eigen::Index>(k)).transpose() - mean_;
        Matrix scatter = scatter_ + c * delta.transpose() + delta * c.transpose() + (1.0 - 1.0 / n) * delta * delta.transpose();
        PcaModel m = detail::pca_from_covariance(mean_ + delta / n, scatter / n, false, Vector::Ones(mean_.size()));
        align_signs(m, base_);
        return m;
    }

    // Layout of the modified data under `model`.
    Layout project_modified(const PcaModel& model, std::size_t k, const Vector& delta) const {
        Matrix centered = values_.rowwise() - model.mean.transpose();
        centered.row(static_cast<Eigen::Index>(k)) += delta.transpose();
        return make_layout(centered * model.components);
    }

private:
    const Matrix& values_;
    Vector mean_;
    Matrix scatter_;
    PcaModel base_;
};

// ---------------------------------------------------------------------------
// Sweep harness

struct SweepConfig {
    std::vector<std::size_t> sample_counts{100, 250, 500};
    std::vector<std::size_t> dimension_counts{10, 50, 100};
    std::size_t fixed_dimensions = 10;  // d while sweeping sample counts
    std::size_t fixed_samples = 500;    // n while sweeping dimension counts
    std::vector<double> fp_deltas{1.0 / 8, 1.0 / 4, 1.0 / 2, 1.0};      // multiples of sigma_i
    std::vector<double> bp_deltas{1.0 / 80, 1.0 / 40, 1.0 / 20, 1.0 / 10};  // multiples of width m
    std::size_t bp_directions = 8;
    std::size_t iterations = 1;
    std::size_t points_per_iteration = 20;  // 0 = every row
    std::size_t features_per_point = 8;     // 0 = every feature
    std::size_t neighborhood = 10;
    std::size_t proline_samples = 5;
    std::size_t map_resolution = 10;  // per axis; 10 x 10 = 100 backward projections
    std::size_t map_trials = 2;
    std::uint64_t seed = 20170901;
};

struct SweepRow {
    std::string axis;  // "samples" or "dimensions"
    std::size_t axis_value = 0;
    double delta = 0.0;
    std::string op;  // fp, bp, prolines, fmap
    double mean_cn = 0.0;
    double sd_cn = 0.0;
    double mean_time_us = 0.0;
    double sd_time_us = 0.0;
    std::size_t trials = 0;
    std::size_t samples = 0;
    std::size_t dimensions = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;
    nlohmann::json environment;
};

namespace detail {

struct Accumulator {
    std::vector<double> values;
    void add(double v) { values.push_back(v); }
    double mean() const {
        return values.empty() ? 0.0 : std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    }
    double sd() const {
        if (values.size() < 2) return 0.0;
        const double m = mean();
        double s = 0.0;
        for (double v : values) s += (v - m) * (v - m);
        return std::sqrt(s / static_cast<double>(values.size()));
    }
};

template <typename F>
double time_us(F&& f) {
    const auto start = std::chrono::steady_clock::now();
    f();
    const auto stop = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::micro>(stop - start).count();
}

// Keeps the optimizer from discarding timed work.
inline volatile double sink = 0.0;

inline std::vector<std::size_t> pick(std::size_t total, std::size_t count, Rng& rng) {
    std::vector<std::size_t> all(total);
    std::iota(all.begin(), all.end(), std::size_t{0});
    if (count == 0 || count >= total) return all;
    rng.shuffle(all.begin(), all.end());
    all.resize(count);
    std::sort(all.begin(), all.end());
    return all;
}

inline std::vector<Point2> compass(std::size_t count) {
    std::vector<Point2> dirs;
    for (std::size_t k = 0; k < count; ++k) {
        const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(count);
        dirs.emplace_back(std::cos(angle), std::sin(angle));
    }
    return dirs;
}

inline void run_cell(const SweepConfig& cfg, const std::string& axis, std::size_t axis_value, std::size_t n,
                     std::size_t d, Rng rng, std::vector<SweepRow>& out) {
    std::vector<Accumulator> fp_cn(cfg.fp_deltas.size()), fp_t(cfg.fp_deltas.size());
    std::vector<Accumulator> bp_cn(cfg.bp_deltas.size()), bp_t(cfg.bp_deltas.size());
    Accumulator proline_t, map_t;
    const auto dirs = compass(cfg.bp_directions);

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        Rng data_rng = rng.split(it);
        const Matrix cov = random_covariance(d, data_rng);
        auto data = std::make_shared<const Dataset>(sample_gaussian(n, cov, data_rng));
        const PcaRefitter refitter(*data);
        const PcaModel& model = refitter.base_model();
        const Layout base = project_all(model, *data);
        const auto stats = data->all_stats();
        const auto points = pick(n, cfg.points_per_iteration, data_rng);

        for (std::size_t k : points) {
            const auto features = pick(d, cfg.features_per_point, data_rng);
            for (std::size_t di = 0; di < cfg.fp_deltas.size(); ++di) {
                for (std::size_t i : features) {
                    Vector delta = Vector::Zero(static_cast<Eigen::Index>(d));
                    delta(static_cast<Eigen::Index>(i)) = cfg.fp_deltas[di] * stats[i].std;
                    Point2 dy;
                    fp_t[di].add(time_us([&] { dy = forward_project(model, delta); }));
                    Layout shortcut = base;
                    shortcut.positions.row(static_cast<Eigen::Index>(k)) += dy.transpose();
                    const PcaModel refit = refitter.refit(k, delta);
                    const Layout truth = refitter.project_modified(refit, k, delta);
                    fp_cn[di].add(neighborhood_correlation(shortcut, truth, k, cfg.neighborhood).c_n);
                }
            }
            for (std::size_t di = 0; di < cfg.bp_deltas.size(); ++di) {
                for (const Point2& dir : dirs) {
                    const Point2 dy = dir * (cfg.bp_deltas[di] * base.width);
                    Vector delta;
                    bp_t[di].add(time_us([&] { delta = backward_unconstrained(model, dy); }));
                    Layout shortcut = base;
                    shortcut.positions.row(static_cast<Eigen::Index>(k)) += dy.transpose();
                    const PcaModel refit = refitter.refit(k, delta);
                    const Layout truth = refitter.project_modified(refit, k, delta);
                    bp_cn[di].add(neighborhood_correlation(shortcut, truth, k, cfg.neighborhood).c_n);
                }
            }
        }

        auto shared_model = std::make_shared<const DrModel>(model);
        Session session(data, shared_model);
        for (std::size_t k : points) {
            session.select(k);
            proline_t.add(time_us([&] {
                const auto prolines = build_all_prolines(session, StepPolicy::sample_count(cfg.proline_samples));
                sink = prolines.front().relevance;
            }));
        }
        for (std::size_t t = 0; t < std::min(cfg.map_trials, points.size()); ++t) {
            session.select(points[t]);
            // Half-plane constraint: the first feature may not decrease.
            ConstraintSet cs(d);
            cs.bound(0, session.working_point()(0), std::nullopt);
            session.set_constraints(cs);
            map_t.add(time_us([&] {
                const auto map = compute_map(session, cfg.map_resolution, cfg.map_resolution);
                sink = static_cast<double>(map.solver_calls);
            }));
            session.set_constraints(ConstraintSet(d));
        }
    }

    const auto emit = [&](const std::string& op, double delta, const Accumulator& cn, const Accumulator& t) {
        SweepRow row;
        row.axis = axis;
        row.axis_value = axis_value;
        row.delta = delta;
        row.op = op;
        row.mean_cn = cn.mean();
        row.sd_cn = cn.sd();
        row.mean_time_us = t.mean();
        row.sd_time_us = t.sd();
        row.trials = t.values.size();
        row.samples = n;
        row.dimensions = d;
        out.push_back(row);
    };
    for (std::size_t di = 0; di < cfg.fp_deltas.size(); ++di) emit("fp", cfg.fp_deltas[di], fp_cn[di], fp_t[di]);
    for (std::size_t di = 0; di < cfg.bp_deltas.size(); ++di) emit("bp", cfg.bp_deltas[di], bp_cn[di], bp_t[di]);
    emit("prolines", 0.0, {}, proline_t);
    emit("fmap", 0.0, {}, map_t);
}

}  // namespace detail

inline nlohmann::json environment_fingerprint() {
    nlohmann::json env;
#if defined(__clang__)
    env["compiler"] = std::string("clang ") + __clang_version__;
#elif defined(__GNUC__)
    env["compiler"] = std::string("gcc ") + __VERSION__;
#else
    env["compiler"] = "unknown";
#endif
#ifdef NDEBUG
    env["optimized"] = true;
#else
    env["optimized"] = false;
#endif
    env["hardware_threads"] = std::thread::hardware_concurrency();
    env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                   std::to_string(EIGEN_MINOR_VERSION);
    return env;
}

inline void validate(const SweepConfig& cfg) {
    for (auto v : cfg.sample_counts) require(v >= 2, "invalid_sweep", "sample counts must be >= 2");
    for (auto v : cfg.dimension_counts) require(v >= 2, "invalid_sweep", "dimension counts must be >= 2");
    require(cfg.fixed_dimensions >= 2 && cfg.fixed_samples >= 2, "invalid_sweep", "fixed counts must be >= 2");
    for (auto v : cfg.fp_deltas) require(v > 0.0, "invalid_sweep", "deltas must be positive");
    for (auto v : cfg.bp_deltas) require(v > 0.0, "invalid_sweep", "deltas must be positive");
    require(cfg.iterations >= 1 && cfg.bp_directions >= 1 && cfg.proline_samples >= 2, "invalid_sweep",
            "iterations, directions and proline samples must be positive");
    for (auto v : cfg.sample_counts) {
        require(cfg.neighborhood >= 1 && cfg.neighborhood < v, "invalid_sweep", "neighborhood must be < samples");
    }
    require(cfg.neighborhood < cfg.fixed_samples, "invalid_sweep", "neighborhood must be < samples");
}

// Accuracy (c_n against a full refit) and timing of the interactive
// operations on seeded Gaussian data, sweeping sample count at fixed
// dimension and dimension at fixed sample count.
inline SweepReport run_sweep(const SweepConfig& cfg) {
    validate(cfg);
    SweepReport report;
    report.environment = environment_fingerprint();
    Rng root(cfg.seed);
    Rng samples_rng = root.split(1);
    Rng dims_rng = root.split(2);
    for (std::size_t i = 0; i < cfg.sample_counts.size(); ++i) {
        const std::size_t n = cfg.sample_counts[i];
        detail::run_cell(cfg, "samples", n, n, cfg.fixed_dimensions, samples_rng.split(i), report.rows);
    }
    for (std::size_t i = 0; i < cfg.dimension_counts.size(); ++i) {
        const std::size_t d = cfg.dimension_counts[i];
        detail::run_cell(cfg, "dimensions", d, cfg.fixed_samples, d, dims_rng.split(i), report.rows);
    }
    return report;
}

inline std::string to_csv(const SweepReport& r) {
    std::ostringstream out;
    out.precision(17);
    out << "axis,axis_value,delta,op,mean_cn,sd_cn,mean_time_us,sd_time_us,trials\n";
    for (const auto& row : r.rows) {
        out << row.axis << ',' << row.axis_value << ',' << row.delta << ',' << row.op << ',' << row.mean_cn << ','
            << row.sd_cn << ',' << row.mean_time_us << ',' << row.sd_time_us << ',' << row.trials << '\n';
    }
    return out.str();
}

inline nlohmann::json to_json(const SweepReport& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& row : r.rows) {
        rows.push_back({{"axis", row.axis},
                        {"axis_value", row.axis_value},
                        {"delta", row.delta},
                        {"op", row.op},
                        {"mean_cn", row.mean_cn},
                        {"sd_cn", row.sd_cn},
                        {"mean_time_us", row.mean_time_us},
                        {"sd_time_us", row.sd_time_us},
                        {"trials", row.trials},
                        {"samples", row.samples},
                        {"dimensions", row.dimensions}});
    }
    return {{"rows", std::move(rows)}, {"environment", r.environment}};
}

inline SweepConfig sweep_config_from_json(const nlohmann::json& j) {
    SweepConfig c;
    c.sample_counts = j.value("sample_counts", c.sample_counts);
    c.dimension_counts = j.value("dimension_counts", c.dimension_counts);
    c.fixed_dimensions = j.value("fixed_dimensions", c.fixed_dimensions);
    c.fixed_samples = j.value("fixed_samples", c.fixed_samples);
    c.fp_deltas = j.value("fp_deltas", c.fp_deltas);
    c.bp_deltas = j.value("bp_deltas", c.bp_deltas);
    c.bp_directions = j.value("bp_directions", c.bp_directions);
    c.iterations = j.value("iterations", c.iterations);
    c.points_per_iteration = j.value("points_per_iteration", c.points_per_iteration);
    c.features_per_point = j.value("features_per_point", c.features_per_point);
    c.neighborhood = j.value("neighborhood", c.neighborhood);
    c.proline_samples = j.value("proline_samples", c.proline_samples);
    c.map_resolution = j.value("map_resolution", c.map_resolution);
    c.map_trials = j.value("map_trials", c.map_trials);
    c.seed = j.value("seed", c.seed);
    return c;
}

}  // namespace dimwhatif
