#pragma once

#include <algorithm>
#include <deque>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

#include "dimwhatif/constraints.hpp"
#include "dimwhatif/model.hpp"

namespace dimwhatif {

struct SessionOptions {
    double ridge = 1e-6;
    // Residual tolerance for "target reached", as a fraction of the layout
    // width.
    double feasibility_tolerance = 1e-4;
    std::size_t history_capacity = 1024;
    std::size_t default_k = 5;
};

enum class EditKind { select, set_feature, drag, reset };

inline const char* to_string(EditKind k) {
    switch (k) {
        case EditKind::select: return "select";
        case EditKind::set_feature: return "set_feature";
        case EditKind::drag: return "drag";
        case EditKind::reset: return "reset";
    }
    return "unknown";
}

// One mutating operation and the state right after it.
struct HistoryEntry {
    EditKind kind = EditKind::select;
    std::size_t row = 0;
    std::size_t feature = 0;
    double value = 0.0;
    Point2 target = Point2::Zero();
    Vector working_point;
    Point2 position = Point2::Zero();
};

struct DragResult {
    Point2 requested = Point2::Zero();
    Point2 achieved = Point2::Zero();
    Vector delta_x;
    Vector working_point;  // feature vector after the drag
    QpStatus status = QpStatus::optimal;
    double residual = 0.0;
    bool reached = true;  // achieved within tolerance of requested
    bool applied = true;  // session state changed
    // Features whose constraint stops the point short of the target, or
    // whose value would break a constraint (autoencoder backend).
    std::vector<std::size_t> violated;
    double reach_gap = 0.0;  // autoencoder: ||encode(decode(y)) - y||
};

struct Neighbor {
    std::size_t row;
    double distance;
};

// What-if state for one selected point of a dataset under a fitted model.
// Single writer: callers serialize mutating calls.
class Session {
public:
    Session(std::shared_ptr<const Dataset> data, std::shared_ptr<const DrModel> model, SessionOptions options = {})
        : data_(std::move(data)), model_(std::move(model)), options_(options) {
        require(data_ && model_, "invalid_session", "session needs a dataset and a model");
        require(dims(*model_) == data_->cols(), "dimension_mismatch", "model and dataset feature counts differ");
        original_ = layout_of(*model_, *data_);
        layout_ = original_;
        constraints_ = ConstraintSet(data_->cols());
    }

    const Dataset& dataset() const { return *data_; }
    const DrModel& model() const { return *model_; }
    const std::shared_ptr<const Dataset>& dataset_ptr() const { return data_; }
    const std::shared_ptr<const DrModel>& model_ptr() const { return model_; }
    const SessionOptions& options() const { return options_; }

    const Layout& original_layout() const { return original_; }
    const Layout& layout() const { return layout_; }

    std::optional<std::size_t> selected() const { return selected_; }
    const Vector& working_point() const {
        require_selection();
        return working_;
    }
    Vector original_point() const {
        require_selection();
        return data_->row(*selected_);
    }
    Point2 position() const {
        require_selection();
        return layout_.position(*selected_);
    }
    Point2 original_position() const {
        require_selection();
        return original_.position(*selected_);
    }
    Point2 last_feasible() const {
        require_selection();
        return last_feasible_;
    }

    // Absolute residual tolerance for reaching a planar target.
    double reach_tolerance() const {
        return options_.feasibility_tolerance * (original_.width > 0.0 ? original_.width : 1.0);
    }

    const ConstraintSet& constraints() const { return constraints_; }
    void set_constraints(ConstraintSet cs) {
        require(cs.size() == data_->cols(), "dimension_mismatch", "constraint set size does not match features");
        cs.validate();
        constraints_ = std::move(cs);
    }

    const std::deque<HistoryEntry>& history() const { return history_; }

    // Selects a row; any edits of the previously selected row are dropped.
    void select(std::size_t row) {
        require(row < data_->rows(), "index_out_of_range", "row " + std::to_string(row) + " out of range");
        if (selected_) layout_.positions.row(static_cast<Eigen::Index>(*selected_)) = original_.positions.row(static_cast<Eigen::Index>(*selected_));
        selected_ = row;
        working_ = data_->row(row);
        last_feasible_ = original_.position(row);
        record(entry(EditKind::select, row));
    }

    void set_feature(std::size_t feature, double value) {
        require_selection();
        require(feature < data_->cols(), "index_out_of_range", "feature " + std::to_string(feature) + " out of range");
        require(std::isfinite(value), "non_finite_value", "feature value must be finite");
        const auto i = static_cast<Eigen::Index>(feature);
        Point2 pos = position();
        if (const auto* pca = std::get_if<PcaModel>(model_.get())) {
            Vector delta = Vector::Zero(working_.size());
            delta(i) = value - working_(i);
            pos += forward_project(*pca, delta);
            working_(i) = value;
        } else {
            working_(i) = value;
            pos = map_point(*model_, working_);
        }
        set_position(pos);
        last_feasible_ = pos;
        HistoryEntry e = entry(EditKind::set_feature, *selected_);
        e.feature = feature;
        e.value = value;
        record(std::move(e));
    }

    DragResult drag_point(const Point2& target) {
        require_selection();
        require(target.allFinite(), "non_finite_value", "drag target must be finite");
        DragResult r = is_linear(*model_) ? drag_linear(target) : drag_autoencoder(target);
        if (r.applied) {
            working_ = r.working_point;
            set_position(r.achieved);
            if (r.reached) last_feasible_ = r.achieved;
        }
        HistoryEntry e = entry(EditKind::drag, *selected_);
        e.target = target;
        record(std::move(e));
        return r;
    }

    // Constrained solve toward `target` from the current state without
    // changing it.
    DragResult evaluate_target(const Point2& target) const {
        require_selection();
        return is_linear(*model_) ? drag_linear(target) : drag_autoencoder(target);
    }

    void reset_point() {
        require_selection();
        working_ = data_->row(*selected_);
        set_position(original_.position(*selected_));
        last_feasible_ = original_.position(*selected_);
        record(entry(EditKind::reset, *selected_));
    }

    std::vector<Neighbor> nearest_neighbors(std::size_t k) const {
        require_selection();
        require(k >= 1 && k + 1 <= data_->rows(), "k_out_of_range",
                "k must be in [1, " + std::to_string(data_->rows() - 1) + "]");
        const Point2 p = position();
        std::vector<Neighbor> all;
        all.reserve(data_->rows() - 1);
        for (std::size_t r = 0; r < data_->rows(); ++r) {
            if (r == *selected_) continue;
            all.push_back({r, (layout_.position(r) - p).norm()});
        }
        std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end(),
                          [](const Neighbor& a, const Neighbor& b) {
                              return a.distance < b.distance || (a.distance == b.distance && a.row < b.row);
                          });
        all.resize(k);
        return all;
    }

    // Rebuilds a session by re-applying every recorded operation.
    static Session replay(std::shared_ptr<const Dataset> data, std::shared_ptr<const DrModel> model,
                          SessionOptions options, const ConstraintSet& constraints,
                          const std::deque<HistoryEntry>& history) {
        Session s(std::move(data), std::move(model), options);
        s.set_constraints(constraints);
        for (const auto& e : history) {
            switch (e.kind) {
                case EditKind::select: s.select(e.row); break;
                case EditKind::set_feature: s.set_feature(e.feature, e.value); break;
                case EditKind::drag: s.drag_point(e.target); break;
                case EditKind::reset: s.reset_point(); break;
            }
        }
        return s;
    }

private:
    void require_selection() const { require(selected_.has_value(), "no_selection", "no point is selected"); }

    void set_position(const Point2& p) { layout_.positions.row(static_cast<Eigen::Index>(*selected_)) = p.transpose(); }

    static HistoryEntry entry(EditKind kind, std::size_t row) {
        HistoryEntry e;
        e.kind = kind;
        e.row = row;
        return e;
    }

    void record(HistoryEntry e) {
        e.working_point = working_;
        e.position = selected_ ? position() : Point2::Zero();
        history_.push_back(std::move(e));
        while (history_.size() > options_.history_capacity) history_.pop_front();
    }

    DragResult drag_linear(const Point2& target) const {
        const auto& pca = std::get<PcaModel>(*model_);
        DragResult r;
        r.requested = target;
        const Point2 from = position();
        const Point2 delta_y = target - from;
        if (constraints_.empty()) {
            r.delta_x = backward_unconstrained(pca, delta_y);
            r.working_point = working_ + r.delta_x;
            r.achieved = target;
            return r;
        }
        const DeltaConstraints dc = to_delta(constraints_, working_);
        const QpSolution sol = solve(make_qp(pca, dc, delta_y, options_.ridge));
        r.status = sol.status;
        r.residual = sol.residual;
        if (sol.status != QpStatus::optimal) {
            r.delta_x = Vector::Zero(working_.size());
            r.working_point = working_;
            r.achieved = from;
            r.reached = false;
            r.applied = false;
            return r;
        }
        r.delta_x = sol.delta_x.cwiseProduct(pca.scale);
        r.working_point = working_ + r.delta_x;
        r.achieved = from + pca.components.transpose() * sol.delta_x;
        r.reached = sol.residual <= reach_tolerance();
        if (!r.reached) r.violated = binding_features(pca, dc, sol.delta_x, delta_y);
        return r;
    }

    // Constrained features that hold the solution back from the target: at a
    // bound (or locked) with the remaining planar gap pulling across it.
    std::vector<std::size_t> binding_features(const PcaModel& pca, const DeltaConstraints& dc, const Vector& z,
                                              const Point2& delta_y) const {
        const Point2 gap = delta_y - pca.components.transpose() * z;
        std::vector<bool> locked(working_.size(), false);
        for (std::size_t i : dc.locked) locked[i] = true;
        std::vector<std::size_t> out;
        for (Eigen::Index i = 0; i < z.size(); ++i) {
            const Point2 dir = pca.components.row(i).transpose();
            const double pull = gap.dot(dir);  // > 0: objective wants z_i larger
            const double threshold = 1e-3 * gap.norm() * dir.norm();
            if (dir.norm() == 0.0 || std::abs(pull) <= threshold) continue;
            const double lo = dc.lower(i) / pca.scale(i);
            const double hi = dc.upper(i) / pca.scale(i);
            const double tol = 1e-9 * (1.0 + std::abs(z(i)));
            const bool at_lower = std::isfinite(lo) && z(i) <= lo + tol;
            const bool at_upper = std::isfinite(hi) && z(i) >= hi - tol;
            if (locked[static_cast<std::size_t>(i)] || (at_lower && pull < 0.0) || (at_upper && pull > 0.0)) {
                out.push_back(static_cast<std::size_t>(i));
            }
        }
        return out;
    }

    DragResult drag_autoencoder(const Point2& target) const {
        const auto& ae = std::get<AutoencoderModel>(*model_);
        DragResult r;
        r.requested = target;
        const Vector decoded = decode(ae, target);
        r.delta_x = decoded - working_;
        r.working_point = decoded;
        r.achieved = encode(ae, decoded);
        r.reach_gap = (r.achieved - target).norm();
        r.residual = r.reach_gap;
        r.violated = violated_features(constraints_, decoded, working_);
        if (!r.violated.empty()) {
            r.status = QpStatus::infeasible;
            r.reached = false;
            r.applied = false;
            r.achieved = position();
            r.delta_x = Vector::Zero(working_.size());
            r.working_point = working_;
        }
        return r;
    }

    std::shared_ptr<const Dataset> data_;
    std::shared_ptr<const DrModel> model_;
    SessionOptions options_;
    Layout original_;
    Layout layout_;
    std::optional<std::size_t> selected_;
    Vector working_;
    Point2 last_feasible_ = Point2::Zero();
    ConstraintSet constraints_;
    std::deque<HistoryEntry> history_;
};

}  // namespace dimwhatif
