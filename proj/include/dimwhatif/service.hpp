#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dimwhatif/feasibility.hpp"
#include "dimwhatif/fit.hpp"
#include "dimwhatif/prolines.hpp"
#include "dimwhatif/session.hpp"

namespace dimwhatif {

// Transport-neutral request. `at_ms` is the wall-clock time the request was
// received; it drives idle eviction and creation stamps, and is logged so a
// replay sees the same clock.
struct Request {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::int64_t at_ms = 0;
};

struct Response {
    int status = 200;
    nlohmann::json body;
    std::string text;  // non-JSON payload (PGM)
    std::string content_type = "application/json";

    std::string serialized() const { return content_type == "application/json" ? body.dump() : text; }
};

inline nlohmann::json to_json(const Request& r) {
    return {{"method", r.method}, {"path", r.path}, {"query", r.query}, {"body", r.body}, {"at_ms", r.at_ms}};
}

inline Request request_from_json(const nlohmann::json& j) {
    Request r;
    r.method = j.at("method").get<std::string>();
    r.path = j.at("path").get<std::string>();
    r.query = j.value("query", std::map<std::string, std::string>{});
    r.body = j.value("body", std::string());
    r.at_ms = j.value("at_ms", std::int64_t{0});
    return r;
}

inline int http_status(const std::string& code) {
    if (code == "not_found" || code == "unknown_dataset" || code == "unknown_session") return 404;
    if (code == "method_not_allowed") return 405;
    if (code == "payload_too_large") return 413;
    if (code == "internal") return 500;
    return 400;
}

inline Response error_response(const std::string& code, const std::string& message) {
    Response r;
    r.status = http_status(code);
    r.body = {{"error", {{"code", code}, {"message", message}}}};
    return r;
}

// Response bodies shared by the service and the command-line tool.
namespace api {

inline nlohmann::json xy(const Point2& p) { return nlohmann::json::array({p.x(), p.y()}); }

inline nlohmann::json vec(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json dataset_summary(const Dataset& ds) {
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& s : ds.all_stats()) stats.push_back(to_json(s));
    return {{"n", ds.rows()},
            {"d", ds.cols()},
            {"row_ids", ds.row_ids()},
            {"feature_names", ds.feature_names()},
            {"stats", std::move(stats)}};
}

inline nlohmann::json layout(const Layout& l) {
    nlohmann::json positions = nlohmann::json::array();
    for (std::size_t r = 0; r < l.size(); ++r) positions.push_back(xy(l.position(r)));
    return {{"positions", std::move(positions)}, {"width", l.width}};
}

inline nlohmann::json marks(const Session& s) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& m : projection_marks(s)) out.push_back(to_json(m));
    return out;
}

inline nlohmann::json prolines(const Session& s, std::size_t top, const StepPolicy& policy, RelevanceMode mode) {
    auto all = build_all_prolines(s, policy, mode);
    if (top > 0 && top < all.size()) all.resize(top);
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : all) out.push_back(to_json(p));
    return out;
}

inline nlohmann::json selection(const Session& s) {
    const std::size_t row = *s.selected();
    nlohmann::json stats = nlohmann::json::array();
    for (const auto& st : s.dataset().all_stats()) stats.push_back(to_json(st));
    return {{"row", row},
            {"row_id", s.dataset().row_ids()[row]},
            {"values", vec(s.working_point())},
            {"original_values", vec(s.original_point())},
            {"stats", std::move(stats)},
            {"position", xy(s.position())},
            {"original_position", xy(s.original_position())},
            {"prolines", prolines(s, 0, {}, RelevanceMode::path_length)}};
}

inline nlohmann::json forward(const Session& s, const Point2& before) {
    return {{"position", xy(s.position())},
            {"delta_y", xy(s.position() - before)},
            {"values", vec(s.working_point())},
            {"marks", marks(s)}};
}

inline nlohmann::json drag(const Session& s, const DragResult& r) {
    return {{"requested", xy(r.requested)},
            {"achieved", xy(r.achieved)},
            {"position", xy(s.position())},
            {"delta_x", vec(r.delta_x)},
            {"values", vec(s.working_point())},
            {"status", to_string(r.status)},
            {"residual", r.residual},
            {"reached", r.reached},
            {"applied", r.applied},
            {"violated", r.violated},
            {"reach_gap", r.reach_gap},
            {"last_feasible", xy(s.last_feasible())},
            {"marks", marks(s)}};
}

inline nlohmann::json neighbors(const Session& s, std::size_t k) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& n : s.nearest_neighbors(k)) {
        out.push_back({{"row", n.row}, {"row_id", s.dataset().row_ids()[n.row]}, {"distance", n.distance}});
    }
    return out;
}

inline nlohmann::json constraint_summary(const Session& s) {
    nlohmann::json j{{"constraints", to_json(s.constraints())}, {"selected", s.selected().has_value()}};
    if (s.selected()) {
        j["feasible"] = check_position(s, s.position()).feasible;
        j["violated"] = violated_features(s.constraints(), s.working_point(), s.working_point());
    }
    return j;
}

inline nlohmann::json pristine(const Session& s) {
    return {{"position", xy(s.position())}, {"values", vec(s.working_point())}, {"marks", marks(s)}};
}

// Feature by name or zero-based index.
inline std::size_t resolve_feature(const Dataset& ds, const nlohmann::json& ref) {
    if (ref.is_string()) {
        const auto found = ds.find_feature(ref.get<std::string>());
        require(found.has_value(), "unknown_feature", "unknown feature '" + ref.get<std::string>() + "'");
        return *found;
    }
    require(ref.is_number_unsigned() || (ref.is_number_integer() && ref.get<long long>() >= 0), "bad_request",
            "feature must be a name or a non-negative index");
    const auto i = ref.get<std::size_t>();
    require(i < ds.cols(), "unknown_feature", "feature index " + std::to_string(i) + " out of range");
    return i;
}

inline std::size_t resolve_row(const Dataset& ds, const std::string& ref) {
    if (const auto found = ds.find_row(ref)) return *found;
    throw Error("unknown_row", "unknown row id '" + ref + "'");
}

}  // namespace api

struct ServiceOptions {
    std::size_t max_body_bytes = 10 * 1024 * 1024;
    std::int64_t idle_timeout_ms = 30 * 60 * 1000;
    SessionOptions session;
    // Every handled request is appended here as one JSON line.
    std::ostream* request_log = nullptr;
};

inline std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

// In-memory analytics server. Thread-safe: the registry has one lock and each
// session has its own, so requests on different sessions run in parallel and
// requests on one session are serialized.
class Service {
public:
    explicit Service(ServiceOptions options = {}) : options_(std::move(options)) {}

    const ServiceOptions& options() const { return options_; }

    Response handle(const Request& req) {
        log(req);
        try {
            return route(req);
        } catch (const Error& e) {
            return error_response(e.code(), e.what());
        } catch (const nlohmann::json::exception& e) {
            return error_response("bad_request", e.what());
        } catch (const std::bad_alloc&) {
            return error_response("internal", "out of memory");
        } catch (const std::exception& e) {
            return error_response("internal", e.what());
        }
    }

    // Drops sessions idle for longer than the timeout; returns how many.
    std::size_t evict_idle(std::int64_t at_ms) {
        std::lock_guard lock(registry_mutex_);
        std::size_t evicted = 0;
        for (auto it = sessions_.begin(); it != sessions_.end();) {
            if (at_ms - it->second->last_used.load() > options_.idle_timeout_ms) {
                it = sessions_.erase(it);
                ++evicted;
            } else {
                ++it;
            }
        }
        return evicted;
    }

    std::size_t session_count() const {
        std::lock_guard lock(registry_mutex_);
        return sessions_.size();
    }

private:
    struct SessionEntry {
        SessionEntry(Session s, std::string id, std::string dataset_id, std::int64_t at)
            : session(std::move(s)), id(std::move(id)), dataset_id(std::move(dataset_id)), created_at(at), last_used(at) {}

        std::mutex mutex;
        Session session;
        std::string id;
        std::string dataset_id;
        std::int64_t created_at;
        std::atomic<std::int64_t> last_used;
        std::uint64_t sequence = 0;
        bool has_drag = false;
        nlohmann::json last_drag;
    };

    void log(const Request& req) {
        if (!options_.request_log) return;
        std::lock_guard lock(log_mutex_);
        *options_.request_log << to_json(req).dump() << '\n';
        options_.request_log->flush();
    }

    static std::vector<std::string> split_path(const std::string& path) {
        std::vector<std::string> parts;
        std::stringstream ss(path);
        std::string part;
        while (std::getline(ss, part, '/')) {
            if (!part.empty()) parts.push_back(part);
        }
        return parts;
    }

    static nlohmann::json parse_body(const Request& req) {
        if (req.body.empty()) return nlohmann::json::object();
        try {
            return nlohmann::json::parse(req.body);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error("bad_request", std::string("request body is not valid JSON: ") + e.what());
        }
    }

    static std::size_t query_size(const Request& req, const std::string& key, std::size_t fallback) {
        const auto it = req.query.find(key);
        if (it == req.query.end()) return fallback;
        std::size_t pos = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(it->second, &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        require(pos == it->second.size() && pos > 0 && it->second[0] != '-', "bad_request",
                "query parameter '" + key + "' must be a non-negative integer");
        return static_cast<std::size_t>(v);
    }

    static double query_real(const Request& req, const std::string& key, double fallback) {
        const auto it = req.query.find(key);
        if (it == req.query.end()) return fallback;
        const auto v = detail::parse_real(it->second);
        require(v.has_value(), "bad_request", "query parameter '" + key + "' must be a finite number");
        return *v;
    }

    static void expect_method(const Request& req, std::initializer_list<const char*> allowed) {
        for (const char* m : allowed) {
            if (req.method == m) return;
        }
        throw Error("method_not_allowed", req.method + " not allowed on " + req.path);
    }

    Response route(const Request& req) {
        require(req.body.size() <= options_.max_body_bytes, "payload_too_large",
                "request body exceeds " + std::to_string(options_.max_body_bytes) + " bytes");
        evict_idle(req.at_ms);
        const auto parts = split_path(req.path);
        require(parts.size() >= 2 && parts[0] == "v1", "not_found", "no route for " + req.path);
        const std::string& collection = parts[1];
        if (collection == "health" && parts.size() == 2) {
            expect_method(req, {"GET"});
            return ok({{"status", "ok"}});
        }
        if (collection == "datasets") {
            if (parts.size() == 2) {
                expect_method(req, {"POST"});
                return create_dataset(req);
            }
            if (parts.size() == 3) {
                expect_method(req, {"GET"});
                return ok(with_id(api::dataset_summary(*find_dataset(parts[2])), "dataset_id", parts[2]));
            }
        }
        if (collection == "sessions") {
            if (parts.size() == 2) {
                expect_method(req, {"POST"});
                return create_session(req);
            }
            auto entry = find_session(parts[2]);
            entry->last_used = std::max(entry->last_used.load(), req.at_ms);
            std::lock_guard lock(entry->mutex);
            if (parts.size() == 3) {
                expect_method(req, {"GET", "DELETE"});
                if (req.method == "DELETE") return delete_session(parts[2]);
                return ok(session_info(*entry, false));
            }
            if (parts.size() == 4) return session_action(req, *entry, parts[3]);
        }
        throw Error("not_found", "no route for " + req.path);
    }

    static Response ok(nlohmann::json body) {
        Response r;
        r.body = std::move(body);
        return r;
    }

    static nlohmann::json with_id(nlohmann::json j, const char* key, const std::string& id) {
        j[key] = id;
        return j;
    }

    std::shared_ptr<const Dataset> find_dataset(const std::string& id) const {
        std::lock_guard lock(registry_mutex_);
        const auto it = datasets_.find(id);
        require(it != datasets_.end(), "unknown_dataset", "unknown dataset '" + id + "'");
        return it->second;
    }

    std::shared_ptr<SessionEntry> find_session(const std::string& id) const {
        std::lock_guard lock(registry_mutex_);
        const auto it = sessions_.find(id);
        require(it != sessions_.end(), "unknown_session", "unknown session '" + id + "'");
        return it->second;
    }

    Response create_dataset(const Request& req) {
        CsvOptions csv;
        if (const auto it = req.query.find("id_column"); it != req.query.end()) csv.id_column = it->second;
        auto ds = std::make_shared<const Dataset>(load_csv(req.body, csv));
        std::string id;
        {
            std::lock_guard lock(registry_mutex_);
            id = "d" + std::to_string(next_dataset_++);
            datasets_.emplace(id, ds);
        }
        Response r = ok(with_id(api::dataset_summary(*ds), "dataset_id", id));
        r.status = 201;
        return r;
    }

    Response create_session(const Request& req) {
        const auto body = parse_body(req);
        require(body.contains("dataset_id"), "bad_request", "dataset_id is required");
        const std::string dataset_id = body["dataset_id"].get<std::string>();
        auto ds = find_dataset(dataset_id);
        nlohmann::json fit_json = body.value("options", nlohmann::json::object());
        if (body.contains("backend")) fit_json["backend"] = body["backend"];
        const FitOptions fit = fit_options_from_json(fit_json);
        auto model = std::make_shared<const DrModel>(fit_model(*ds, fit));
        SessionOptions so = options_.session;
        if (const auto& o = body.value("options", nlohmann::json::object()); o.contains("ridge")) {
            so.ridge = o["ridge"].get<double>();
            require(so.ridge >= 0.0 && std::isfinite(so.ridge), "bad_request", "ridge must be non-negative");
        }
        std::shared_ptr<SessionEntry> entry;
        {
            std::lock_guard lock(registry_mutex_);
            const std::string id = "s" + std::to_string(next_session_++);
            entry = std::make_shared<SessionEntry>(Session(ds, model, so), id, dataset_id, req.at_ms);
            sessions_.emplace(id, entry);
        }
        std::lock_guard lock(entry->mutex);
        Response r = ok(session_info(*entry, true));
        r.status = 201;
        return r;
    }

    Response delete_session(const std::string& id) {
        std::lock_guard lock(registry_mutex_);
        sessions_.erase(id);
        return ok({{"session_id", id}, {"deleted", true}});
    }

    static nlohmann::json session_info(const SessionEntry& e, bool with_model) {
        const Session& s = e.session;
        nlohmann::json j{{"session_id", e.id},
                         {"dataset_id", e.dataset_id},
                         {"backend", backend_name(s.model())},
                         {"created_at", e.created_at},
                         {"sequence", e.sequence},
                         {"layout", api::layout(s.layout())}};
        j["selected"] = s.selected() ? nlohmann::json(*s.selected()) : nlohmann::json(nullptr);
        if (with_model) j["model"] = to_json(s.model());
        return j;
    }

    Response session_action(const Request& req, SessionEntry& e, const std::string& action) {
        Session& s = e.session;
        if (action == "select") {
            expect_method(req, {"POST"});
            const auto body = parse_body(req);
            std::size_t row = 0;
            if (body.contains("row_id")) {
                row = api::resolve_row(s.dataset(), body["row_id"].get<std::string>());
            } else {
                require(body.contains("row"), "bad_request", "row or row_id is required");
                require(body["row"].is_number_unsigned(), "bad_request", "row must be a non-negative index");
                row = body["row"].get<std::size_t>();
            }
            s.select(row);
            return ok(api::selection(s));
        }
        if (action == "forward" || action == "set_feature") {
            expect_method(req, {"POST"});
            const auto body = parse_body(req);
            require(body.contains("feature") && body.contains("value"), "bad_request", "feature and value are required");
            require(body["value"].is_number(), "bad_request", "value must be a number");
            const std::size_t feature = api::resolve_feature(s.dataset(), body["feature"]);
            const Point2 before = s.position();
            s.set_feature(feature, body["value"].get<double>());
            return ok(api::forward(s, before));
        }
        if (action == "drag") {
            expect_method(req, {"POST"});
            return drag(req, e);
        }
        if (action == "constraints") {
            expect_method(req, {"GET", "PUT", "POST"});
            if (req.method != "GET") {
                const auto body = parse_body(req);
                s.set_constraints(constraints_from_json(body.is_object() ? body.value("constraints", nlohmann::json::array())
                                                                         : body,
                                                        s.dataset()));
            }
            return ok(api::constraint_summary(s));
        }
        if (action == "prolines") {
            expect_method(req, {"GET"});
            const double step = query_real(req, "step", 1.0 / 8.0);
            require(step > 0.0, "bad_request", "step must be positive");
            const auto mode_it = req.query.find("relevance");
            RelevanceMode mode = RelevanceMode::path_length;
            if (mode_it != req.query.end()) {
                require(mode_it->second == "path_length" || mode_it->second == "variance", "bad_request",
                        "relevance must be path_length or variance");
                if (mode_it->second == "variance") mode = RelevanceMode::variance;
            }
            return ok(api::prolines(s, query_size(req, "top", 0), StepPolicy::sigma_fraction(step), mode));
        }
        if (action == "marks") {
            expect_method(req, {"GET"});
            return ok(api::marks(s));
        }
        if (action == "feasibility_map") {
            expect_method(req, {"GET"});
            const std::size_t res = query_size(req, "resolution", 10);
            const std::size_t nx = query_size(req, "nx", res), ny = query_size(req, "ny", res);
            require(nx * ny <= 1'000'000, "bad_request", "map resolution too large");
            const FeasibilityMap m = compute_map(s, nx, ny);
            if (const auto it = req.query.find("format"); it != req.query.end() && it->second == "pgm") {
                Response r;
                r.text = to_pgm(m);
                r.content_type = "image/x-portable-graymap";
                return r;
            }
            return ok(to_json(m));
        }
        if (action == "neighbors") {
            expect_method(req, {"GET"});
            return ok(api::neighbors(s, query_size(req, "k", s.options().default_k)));
        }
        if (action == "reset") {
            expect_method(req, {"POST"});
            s.reset_point();
            return ok(api::pristine(s));
        }
        throw Error("not_found", "no route for " + req.path);
    }

    // Sequence numbers order drags from one client: an older sequence is
    // answered as stale without touching state, a repeat of the latest one
    // returns the recorded response.
    Response drag(const Request& req, SessionEntry& e) {
        const auto body = parse_body(req);
        require(body.contains("target") && body["target"].is_array() && body["target"].size() == 2, "bad_request",
                "target must be [x, y]");
        const Point2 target(body["target"][0].get<double>(), body["target"][1].get<double>());
        std::uint64_t seq = e.has_drag ? e.sequence + 1 : e.sequence;
        if (body.contains("sequence")) {
            require(body["sequence"].is_number_unsigned(), "bad_request", "sequence must be a non-negative integer");
            seq = body["sequence"].get<std::uint64_t>();
        }
        if (e.has_drag && seq < e.sequence) {
            return ok({{"sequence", seq},
                       {"latest_sequence", e.sequence},
                       {"stale", true},
                       {"position", api::xy(e.session.position())}});
        }
        if (e.has_drag && seq == e.sequence) return ok(e.last_drag);
        const DragResult r = e.session.drag_point(target);
        nlohmann::json j = api::drag(e.session, r);
        j["sequence"] = seq;
        j["stale"] = false;
        e.sequence = seq;
        e.has_drag = true;
        e.last_drag = j;
        return ok(std::move(j));
    }

    ServiceOptions options_;
    mutable std::mutex registry_mutex_;
    std::mutex log_mutex_;
    std::map<std::string, std::shared_ptr<const Dataset>> datasets_;
    std::map<std::string, std::shared_ptr<SessionEntry>> sessions_;
    std::uint64_t next_dataset_ = 1;
    std::uint64_t next_session_ = 1;
};

// Feeds a recorded request log through a fresh service and returns one
// serialized response per request.
inline std::vector<std::string> replay_log(std::istream& log, ServiceOptions options = {}) {
    options.request_log = nullptr;
    Service service(std::move(options));
    std::vector<std::string> out;
    std::string line;
    while (std::getline(log, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        const Response r = service.handle(request_from_json(nlohmann::json::parse(line)));
        out.push_back(std::to_string(r.status) + " " + r.serialized());
    }
    return out;
}

}  // namespace dimwhatif
