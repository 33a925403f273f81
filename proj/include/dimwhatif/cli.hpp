#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dimwhatif/analysis.hpp"
#include "dimwhatif/api.hpp"
#include "dimwhatif/service.hpp"

namespace dimwhatif::cli {

enum ExitCode { ok = 0, usage = 2, data = 3, internal = 4 };

// JSON config files for CLI11: {"subcommand": {"flag": value, ...}}.
class JsonConfig : public CLI::Config {
public:
    std::string to_config(const CLI::App* app, bool default_also, bool, std::string) const override {
        nlohmann::json j;
        for (const CLI::Option* opt : app->get_options({})) {
            if (opt->get_configurable() && !opt->get_lnames().empty() && (default_also || opt->count() > 0)) {
                const auto results = opt->reduced_results();
                j[opt->get_lnames().front()] = results.size() == 1 ? nlohmann::json(results.front()) : nlohmann::json(results);
            }
        }
        for (const CLI::App* sub : app->get_subcommands({})) {
            j[sub->get_name()] = nlohmann::json::parse(to_config(sub, default_also, false, ""));
        }
        return j.dump(2);
    }

    std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
        nlohmann::json j;
        try {
            input >> j;
        } catch (const nlohmann::json::exception& e) {
            throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
        }
        if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
        std::vector<CLI::ConfigItem> items;
        collect(j, {}, items);
        return items;
    }

private:
    static std::string scalar(const nlohmann::json& v) {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw CLI::ConversionError("unsupported config value " + v.dump());
    }

    static void collect(const nlohmann::json& j, const std::vector<std::string>& parents,
                        std::vector<CLI::ConfigItem>& items) {
        for (const auto& [key, value] : j.items()) {
            if (value.is_object()) {
                auto nested = parents;
                nested.push_back(key);
                collect(value, nested, items);
                continue;
            }
            CLI::ConfigItem item;
            item.parents = parents;
            item.name = key;
            if (value.is_array()) {
                for (const auto& v : value) item.inputs.push_back(scalar(v));
            } else {
                item.inputs.push_back(scalar(value));
            }
            items.push_back(std::move(item));
        }
    }
};

namespace detail {

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), "io_error", "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), "io_error", "cannot write '" + path + "'");
    out << text;
    require(static_cast<bool>(out), "io_error", "failed writing '" + path + "'");
}

inline nlohmann::json parse_json(const std::string& text, const std::string& what) {
    try {
        return nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("invalid_json", what + " is not valid JSON: " + e.what());
    }
}

inline double parse_number(const std::string& s, const std::string& what) {
    const auto v = dimwhatif::detail::parse_real(s);
    require(v.has_value(), "bad_argument", what + " must be a finite number, got '" + s + "'");
    return *v;
}

// Feature by name, falling back to a zero-based index.
inline std::size_t feature_ref(const Dataset& ds, const std::string& ref) {
    if (const auto found = ds.find_feature(ref)) return *found;
    if (!ref.empty() && ref.find_first_not_of("0123456789") == std::string::npos) {
        return api::resolve_feature(ds, nlohmann::json(std::stoull(ref)));
    }
    throw Error("unknown_feature", "unknown feature '" + ref + "'");
}

// Row by id, falling back to a zero-based index.
inline std::size_t row_ref(const Dataset& ds, const std::string& ref) {
    if (const auto found = ds.find_row(ref)) return *found;
    if (!ref.empty() && ref.find_first_not_of("0123456789") == std::string::npos) {
        const auto i = std::stoull(ref);
        require(i < ds.rows(), "unknown_row", "row index " + ref + " out of range");
        return static_cast<std::size_t>(i);
    }
    throw Error("unknown_row", "unknown row id '" + ref + "'");
}

inline Point2 parse_pair(const std::string& s, const std::string& what) {
    const auto comma = s.find(',');
    require(comma != std::string::npos, "bad_argument", what + " must be x,y");
    return {parse_number(s.substr(0, comma), what), parse_number(s.substr(comma + 1), what)};
}

// --lock f or f=value; --bound f:lo:hi with either side optionally empty.
inline ConstraintSet build_constraints(const Dataset& ds, const std::vector<std::string>& locks, bool lock_all,
                                       const std::vector<std::string>& bounds) {
    ConstraintSet cs(ds.cols());
    if (lock_all) cs.lock_all();
    for (const auto& l : locks) {
        const auto eq = l.rfind('=');
        if (eq == std::string::npos) {
            cs.lock(feature_ref(ds, l));
        } else {
            cs.lock(feature_ref(ds, l.substr(0, eq)), parse_number(l.substr(eq + 1), "lock value"));
        }
    }
    for (const auto& b : bounds) {
        const auto hi_sep = b.rfind(':');
        const auto lo_sep = hi_sep == std::string::npos || hi_sep == 0 ? std::string::npos : b.rfind(':', hi_sep - 1);
        require(lo_sep != std::string::npos, "bad_argument", "bound must be feature:lo:hi, got '" + b + "'");
        const std::string lo = b.substr(lo_sep + 1, hi_sep - lo_sep - 1), hi = b.substr(hi_sep + 1);
        auto& f = cs[feature_ref(ds, b.substr(0, lo_sep))];
        if (!lo.empty()) f.lower = parse_number(lo, "lower bound");
        if (!hi.empty()) f.upper = parse_number(hi, "upper bound");
    }
    cs.validate();
    return cs;
}

inline Session open_session(const std::string& model_path, const std::string& point, double ridge) {
    const ModelBundle b = bundle_from_json(parse_json(read_file(model_path), "model file"));
    SessionOptions so;
    so.ridge = ridge;
    Session s(b.dataset, b.model, so);
    s.select(row_ref(s.dataset(), point));
    return s;
}

inline nlohmann::json located(const Session& s, nlohmann::json j) {
    j["row"] = *s.selected();
    j["row_id"] = s.dataset().row_ids()[*s.selected()];
    j["original_position"] = api::xy(s.original_position());
    return j;
}

inline std::string layout_csv(const Dataset& ds, const Layout& l) {
    std::ostringstream out;
    out << "id,x,y\n";
    for (std::size_t r = 0; r < l.size(); ++r) {
        const Point2 p = l.position(r);
        out << dimwhatif::detail::quote_csv(ds.row_ids()[r]) << ',' << dimwhatif::detail::format_real(p.x()) << ','
            << dimwhatif::detail::format_real(p.y()) << '\n';
    }
    return out.str();
}

inline std::string default_layout_path(const std::string& model_path) {
    const std::string ext = ".json";
    const bool has_ext = model_path.size() > ext.size() && model_path.ends_with(ext);
    return (has_ext ? model_path.substr(0, model_path.size() - ext.size()) : model_path) + ".layout.csv";
}

inline void emit(std::ostream& out, const nlohmann::json& j) { out << j.dump(2) << '\n'; }

}  // namespace detail

// Runs one command line (without the program name). Data goes to `out`,
// diagnostics to `err` as {"error": {"code", "message"}}.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"What-if analysis for dimensionality reductions", "dimwhatif"};
    app.config_formatter(std::make_shared<JsonConfig>());
    app.set_config("--config", "", "JSON file with flag values, grouped by subcommand");
    app.require_subcommand(1);

    // fit
    std::string fit_input, fit_out, fit_layout, fit_id_column;
    std::string fit_backend = "pca";
    bool fit_standardize = false;
    std::vector<std::size_t> fit_layers;
    TrainOptions fit_train;
    std::string fit_activation = "tanh";
    auto* fit = app.add_subcommand("fit", "Fit a model and write it with its layout");
    fit->add_option("input", fit_input, "CSV dataset")->required();
    fit->add_option("--out", fit_out, "Model file to write")->required();
    fit->add_option("--layout", fit_layout, "Layout CSV to write (default: next to the model)");
    fit->add_option("--backend", fit_backend, "pca or ae")->check(CLI::IsMember({"pca", "ae", "autoencoder"}));
    fit->add_flag("--standardize", fit_standardize, "Scale features to unit variance before PCA");
    fit->add_option("--id-column", fit_id_column, "Identifier column name (default: first column)");
    fit->add_option("--layers", fit_layers, "Autoencoder layer sizes")->delimiter(',');
    fit->add_option("--epochs", fit_train.epochs, "Autoencoder training epochs");
    fit->add_option("--batch", fit_train.batch, "Autoencoder mini-batch size");
    fit->add_option("--lr", fit_train.learning_rate, "Autoencoder learning rate");
    fit->add_option("--seed", fit_train.seed, "Autoencoder weight seed");
    fit->add_option("--activation", fit_activation, "Hidden activation")->check(CLI::IsMember({"tanh", "linear"}));

    // Shared by the point commands.
    std::string model_path, point;
    double ridge = SessionOptions{}.ridge;
    std::vector<std::string> locks, bounds;
    bool lock_all = false;
    const auto add_point_args = [&](CLI::App* sub) {
        sub->add_option("model", model_path, "Model file from fit")->required();
        sub->add_option("point", point, "Row id (or zero-based index)")->required();
    };
    const auto add_constraint_args = [&](CLI::App* sub) {
        sub->add_option("--lock", locks, "Lock a feature, optionally at a value: f or f=v");
        sub->add_flag("--lock-all", lock_all, "Lock every feature");
        sub->add_option("--bound", bounds, "Bound a feature: f:lo:hi (either side may be empty)");
        sub->add_option("--ridge", ridge, "Ridge weight on the feature change");
    };

    std::vector<std::string> edits;
    auto* fp = app.add_subcommand("fp", "Forward-project feature edits of one point");
    add_point_args(fp);
    fp->add_option("edits", edits, "feature=value pairs")->required();

    std::string to;
    auto* bp = app.add_subcommand("bp", "Backward-project a planar move of one point");
    add_point_args(bp);
    bp->add_option("--to", to, "Target position x,y")->required();
    add_constraint_args(bp);

    std::size_t top = 0;
    double step = 1.0 / 8.0;
    std::string relevance = "path_length";
    auto* pl = app.add_subcommand("prolines", "Prolines of one point, most relevant first");
    add_point_args(pl);
    pl->add_option("--top", top, "Keep only the k most relevant (0 = all)");
    pl->add_option("--step", step, "Sampling step as a fraction of sigma")->check(CLI::PositiveNumber);
    pl->add_option("--relevance", relevance, "path_length or variance")
        ->check(CLI::IsMember({"path_length", "variance"}));

    std::vector<std::size_t> res{10, 10};
    std::string pgm_path;
    auto* fm = app.add_subcommand("fmap", "Feasibility map around one point");
    add_point_args(fm);
    fm->add_option("--res", res, "Grid resolution nx,ny (or one value for both)")
        ->delimiter(',')
        ->expected(1, 2)
        ->check(CLI::PositiveNumber);
    fm->add_option("--pgm", pgm_path, "Write the mask as a P2 PGM image");
    add_constraint_args(fm);

    std::string sweep_path, bench_out, bench_json;
    auto* bench = app.add_subcommand("bench", "Run the model-analysis sweep");
    bench->add_option("--sweep", sweep_path, "Sweep config JSON (default: built-in sweep)");
    bench->add_option("--out", bench_out, "Write the CSV report here instead of stdout");
    bench->add_option("--json", bench_json, "Also write the JSON report");

    std::string listen = "127.0.0.1:8080", request_log;
    std::size_t max_body = ServiceOptions{}.max_body_bytes, threads = HttpOptions{}.threads;
    std::vector<std::string> cors;
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    serve->add_option("--listen", listen, "host:port")->envname("DIMWHATIF_LISTEN");
    serve->add_option("--max-body", max_body, "Maximum request body in bytes")->envname("DIMWHATIF_MAX_BODY");
    serve->add_option("--cors", cors, "Allowed browser origin (repeatable, * for any)")
        ->envname("DIMWHATIF_CORS")
        ->delimiter(',');
    serve->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
    serve->add_option("--request-log", request_log, "Append every request as a JSON line");

    std::string log_path;
    auto* replay = app.add_subcommand("replay", "Replay a service request log and print each response");
    replay->add_option("log", log_path, "Request log written by serve --request-log")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << error_response("usage", e.what()).body.dump() << '\n';
        return usage;
    }

    try {
        if (fit->parsed()) {
            CsvOptions csv;
            if (!fit_id_column.empty()) csv.id_column = fit_id_column;
            auto ds = std::make_shared<const Dataset>(load_csv(detail::read_file(fit_input), csv));
            FitOptions fo;
            fo.backend = fit_backend;
            fo.standardize = fit_standardize;
            fo.layers = fit_layers;
            fo.train = fit_train;
            fo.train.activation = activation_from_string(fit_activation);
            auto model = std::make_shared<const DrModel>(fit_model(*ds, fo));
            const std::string layout_path = fit_layout.empty() ? detail::default_layout_path(fit_out) : fit_layout;
            detail::write_file(fit_out, to_json(ModelBundle{ds, model}).dump() + "\n");
            const Layout l = layout_of(*model, *ds);
            detail::write_file(layout_path, detail::layout_csv(*ds, l));
            nlohmann::json summary{{"model", fit_out},
                                   {"layout", layout_path},
                                   {"backend", backend_name(*model)},
                                   {"n", ds->rows()},
                                   {"d", ds->cols()},
                                   {"width", l.width}};
            if (const auto* pca = std::get_if<PcaModel>(model.get())) {
                const Matrix gram = pca->components.transpose() * pca->components;
                summary["orthonormality_error"] = (gram - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff();
                summary["explained_variance"] = pca->explained_variance;
            } else {
                const auto& ae = std::get<AutoencoderModel>(*model);
                summary["initial_error"] = ae.report.initial_error;
                summary["final_error"] = ae.report.final_error;
                summary["epochs"] = ae.report.epochs;
            }
            detail::emit(out, summary);
        } else if (fp->parsed()) {
            Session s = detail::open_session(model_path, point, ridge);
            const Point2 before = s.position();
            for (const auto& e : edits) {
                const auto eq = e.rfind('=');
                require(eq != std::string::npos && eq > 0, "bad_argument", "edit must be feature=value, got '" + e + "'");
                s.set_feature(detail::feature_ref(s.dataset(), e.substr(0, eq)),
                              detail::parse_number(e.substr(eq + 1), "edit value"));
            }
            detail::emit(out, detail::located(s, api::forward(s, before)));
        } else if (bp->parsed()) {
            Session s = detail::open_session(model_path, point, ridge);
            s.set_constraints(detail::build_constraints(s.dataset(), locks, lock_all, bounds));
            const DragResult r = s.drag_point(detail::parse_pair(to, "--to"));
            detail::emit(out, detail::located(s, api::drag(s, r)));
        } else if (pl->parsed()) {
            const Session s = detail::open_session(model_path, point, ridge);
            const RelevanceMode mode = relevance == "variance" ? RelevanceMode::variance : RelevanceMode::path_length;
            detail::emit(out, api::prolines(s, top, StepPolicy::sigma_fraction(step), mode));
        } else if (fm->parsed()) {
            Session s = detail::open_session(model_path, point, ridge);
            s.set_constraints(detail::build_constraints(s.dataset(), locks, lock_all, bounds));
            const std::size_t nx = res.front(), ny = res.back();
            require(nx * ny <= 1'000'000, "bad_argument", "map resolution too large");
            const FeasibilityMap m = compute_map(s, nx, ny);
            if (!pgm_path.empty()) detail::write_file(pgm_path, to_pgm(m));
            detail::emit(out, to_json(m));
        } else if (bench->parsed()) {
            SweepConfig config;
            if (!sweep_path.empty()) {
                config = sweep_config_from_json(detail::parse_json(detail::read_file(sweep_path), "sweep config"));
            }
            const SweepReport report = run_sweep(config);
            if (!bench_json.empty()) detail::write_file(bench_json, to_json(report).dump(2) + "\n");
            if (bench_out.empty()) {
                out << to_csv(report);
            } else {
                detail::write_file(bench_out, to_csv(report));
            }
        } else if (serve->parsed()) {
            HttpOptions http;
            parse_listen(listen, http);
            http.cors_origins = cors;
            http.threads = threads;
            ServiceOptions so;
            so.max_body_bytes = max_body;
            std::ofstream log_file;
            if (!request_log.empty()) {
                log_file.open(request_log, std::ios::app);
                require(static_cast<bool>(log_file), "io_error", "cannot open '" + request_log + "'");
                so.request_log = &log_file;
            }
            Service service(so);
            HttpServer server(service, http);
            const int port = server.bind();
            err << nlohmann::json{{"listening", http.host + ":" + std::to_string(port)}}.dump() << std::endl;
            server.serve();
        } else if (replay->parsed()) {
            std::istringstream log(detail::read_file(log_path));
            for (const auto& line : replay_log(log)) out << line << '\n';
        }
    } catch (const Error& e) {
        err << error_response(e.code(), e.what()).body.dump() << '\n';
        return data;
    } catch (const nlohmann::json::exception& e) {
        err << error_response("invalid_json", e.what()).body.dump() << '\n';
        return data;
    } catch (const std::exception& e) {
        err << error_response("internal", e.what()).body.dump() << '\n';
        return internal;
    }
    return ok;
}

}  // namespace dimwhatif::cli
