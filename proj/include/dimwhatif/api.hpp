#pragma once

#include <algorithm>
#include <string>
#include <vector>

// Eigen first: <resolv.h>, pulled in by httplib, defines a _res macro.
#include "dimwhatif/service.hpp"

#include <httplib.h>

namespace dimwhatif {

struct HttpOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    // Origins allowed to call the API from a browser; "*" allows any.
    std::vector<std::string> cors_origins;
    std::size_t threads = 8;
};

// Parses "host:port", "[v6]:port" or ":port".
inline void parse_listen(const std::string& addr, HttpOptions& out) {
    const auto colon = addr.rfind(':');
    require(colon != std::string::npos, "bad_listen_address", "listen address must be host:port, got '" + addr + "'");
    std::string host = addr.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    const std::string port = addr.substr(colon + 1);
    std::size_t pos = 0;
    int p = -1;
    try {
        p = std::stoi(port, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    require(pos == port.size() && p >= 0 && p <= 65535, "bad_listen_address", "invalid port in '" + addr + "'");
    out.host = host.empty() ? "0.0.0.0" : host;
    out.port = p;
}

// Binds a Service to cpp-httplib. Routes everything under /v1 to
// Service::handle.
class HttpServer {
public:
    HttpServer(Service& service, HttpOptions options) : service_(service), options_(std::move(options)) {
        server_.new_task_queue = [threads = options_.threads] { return new httplib::ThreadPool(threads); };
        server_.set_payload_max_length(service_.options().max_body_bytes);
        const auto handler = [this](const httplib::Request& req, httplib::Response& res) { dispatch(req, res); };
        const std::string pattern = R"(/v1(/.*)?)";
        server_.Get(pattern, handler);
        server_.Post(pattern, handler);
        server_.Put(pattern, handler);
        server_.Delete(pattern, handler);
        server_.Options(pattern, [this](const httplib::Request& req, httplib::Response& res) {
            apply_cors(req, res);
            res.set_header("Access-Control-Allow-Methods", "GET, POST, PUT, DELETE, OPTIONS");
            res.set_header("Access-Control-Allow-Headers", "Content-Type");
            res.status = 204;
        });
        server_.set_error_handler([this](const httplib::Request& req, httplib::Response& res) {
            if (!res.body.empty()) return;
            const std::string code = res.status == 413 ? "payload_too_large"
                                     : res.status == 404 ? "not_found"
                                                         : "bad_request";
            apply_cors(req, res);
            res.set_content(error_response(code, "HTTP " + std::to_string(res.status)).body.dump(), "application/json");
        });
    }

    // Binds the configured address; port 0 picks a free port. Returns the
    // bound port.
    int bind() {
        if (options_.port == 0) {
            const int port = server_.bind_to_any_port(options_.host);
            require(port > 0, "bind_failed", "cannot bind " + options_.host);
            return options_.port = port;
        }
        require(server_.bind_to_port(options_.host, options_.port), "bind_failed",
                "cannot bind " + options_.host + ":" + std::to_string(options_.port));
        return options_.port;
    }

    // Blocks until stop().
    bool serve() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }
    int port() const { return options_.port; }

private:
    void apply_cors(const httplib::Request& req, httplib::Response& res) const {
        const auto origin = req.get_header_value("Origin");
        if (origin.empty()) return;
        const auto& allowed = options_.cors_origins;
        if (std::find(allowed.begin(), allowed.end(), "*") != allowed.end()) {
            res.set_header("Access-Control-Allow-Origin", "*");
        } else if (std::find(allowed.begin(), allowed.end(), origin) != allowed.end()) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Vary", "Origin");
        }
    }

    void dispatch(const httplib::Request& req, httplib::Response& res) {
        Request r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query.emplace(k, v);
        r.body = req.body;
        r.at_ms = now_ms();
        const Response out = service_.handle(r);
        apply_cors(req, res);
        res.status = out.status;
        res.set_content(out.serialized(), out.content_type);
    }

    Service& service_;
    HttpOptions options_;
    httplib::Server server_;
};

}  // namespace dimwhatif
