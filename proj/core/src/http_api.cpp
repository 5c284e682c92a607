// SPDX-License-Identifier: Apache-2.0
#include "testgenie/http_api.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <thread>
#include <vector>

namespace testgenie {

namespace {

ApiResponse error_response(int status, std::string message)
{
    Json j = Json::object();
    j["error"] = std::move(message);
    return {status, std::move(j)};
}

std::vector<std::string_view> segments(std::string_view path)
{
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos < path.size()) {
        if (path[pos] == '/') {
            ++pos;
            continue;
        }
        const auto end = path.find('/', pos);
        const auto stop = end == std::string_view::npos ? path.size() : end;
        out.push_back(path.substr(pos, stop - pos));
        pos = stop;
    }
    return out;
}

Json parse_body(std::string_view body)
{
    if (body.empty()) {
        return Json::object();
    }
    Json j = Json::parse(body);
    if (!j.is_object()) {
        throw PreconditionError("request body must be a JSON object");
    }
    return j;
}

std::string required_string(const Json& body, const char* key)
{
    const auto it = body.find(key);
    if (it == body.end() || !it->is_string()) {
        throw PreconditionError(std::string{"field '"} + key + "' is required and must be a string");
    }
    return it->get<std::string>();
}

std::size_t required_count(const Json& body, const char* key)
{
    const auto it = body.find(key);
    if (it == body.end() || !it->is_number_unsigned()) {
        throw PreconditionError(std::string{"field '"} + key + "' is required and must be a positive integer");
    }
    return it->get<std::size_t>();
}

Json session_view(SessionService& service, const Session& s)
{
    Json j = s.to_json();
    const auto& spec = service.catalog().get(s.spec_name).spec;
    j["spec_tokens"] = spec.simplified_tokens;
    j["token_mode"] = to_string(spec.token_mode);
    return j;
}

ApiResponse route(SessionService& service, std::string_view method, std::string_view path,
                  const std::map<std::string, std::string>& query, std::string_view raw_body)
{
    const auto seg = segments(path);
    if (seg.size() < 2 || seg[0] != "api") {
        return error_response(404, "no such endpoint: " + std::string{path});
    }
    auto method_not_allowed = [&] {
        return error_response(405, std::string{method} + " not allowed on " + std::string{path});
    };

    if (seg.size() == 2 && seg[1] == "specs") {
        if (method != "GET") {
            return method_not_allowed();
        }
        return {200, service.catalog().list_json()};
    }
    if (seg.size() == 2 && seg[1] == "metrics") {
        if (method != "GET") {
            return method_not_allowed();
        }
        const auto it = query.find("k");
        return {200, service.metrics(parse_ks(it == query.end() ? "1" : it->second))};
    }
    if (seg[1] != "sessions") {
        return error_response(404, "no such endpoint: " + std::string{path});
    }
    if (seg.size() == 2) {
        if (method == "GET") {
            return {200, Json(service.list())};
        }
        if (method != "POST") {
            return method_not_allowed();
        }
        const Json body = parse_body(raw_body);
        std::optional<ApiMode> mode;
        if (const auto it = body.find("mode"); it != body.end() && !it->is_null()) {
            const auto text = it->get<std::string>();
            if (text != "auto" && !text.empty()) {
                mode = api_mode_from_string(text);
            }
        }
        const Session s = service.create_session(required_string(body, "spec"),
                                                 required_string(body, "requirement"), mode,
                                                 required_string(body, "model"));
        return {201, session_view(service, s)};
    }

    const std::string id{seg[2]};
    if (seg.size() == 3) {
        if (method != "GET") {
            return method_not_allowed();
        }
        return {200, session_view(service, service.get(id))};
    }
    if (seg.size() != 4) {
        return error_response(404, "no such endpoint: " + std::string{path});
    }
    if (method != "POST") {
        return method_not_allowed();
    }
    const Json body = parse_body(raw_body);
    const auto action = seg[3];
    if (action == "generate") {
        return {200, service.generate(id).to_json()};
    }
    if (action == "execute") {
        return {200, service.execute(id, required_count(body, "attempt")).to_json()};
    }
    if (action == "refactor") {
        const std::string instruction = body.value("instruction", "");
        return {200, service.refactor(id, instruction).to_json()};
    }
    if (action == "tree") {
        Json out = Json::array();
        for (const auto& r : service.run_tree(id, required_count(body, "attempts"))) {
            out.push_back(r.to_json());
        }
        return {200, out};
    }
    if (action == "annotate") {
        std::optional<SemanticSub> sub;
        if (const auto it = body.find("semantic_sub"); it != body.end() && it->is_string()) {
            sub = semantic_sub_from_string(it->get<std::string>());
        }
        const ErrorLabel label = ErrorLabel::make(error_kind_from_string(required_string(body, "label")), sub);
        std::optional<PromptLevel> level;
        if (const auto it = body.find("prompt_level"); it != body.end() && it->is_string()) {
            level = prompt_level_from_string(it->get<std::string>());
        }
        return {200, service.annotate(id, required_count(body, "attempt"), label, level).to_json()};
    }
    return error_response(404, "no such endpoint: " + std::string{path});
}

} // namespace

ApiResponse handle_api(SessionService& service, std::string_view method, std::string_view path,
                       const std::map<std::string, std::string>& query, std::string_view body)
{
    try {
        return route(service, method, path, query, body);
    } catch (const NotFoundError& e) {
        return error_response(404, e.what());
    } catch (const NeedsLabelError& e) {
        return error_response(409, e.what());
    } catch (const PreconditionError& e) {
        return error_response(400, e.what());
    } catch (const DocumentParseError& e) {
        return error_response(400, e.what());
    } catch (const Json::exception& e) {
        return error_response(400, std::string{"bad request body: "} + e.what());
    } catch (const std::exception& e) {
        spdlog::error("{} {} failed: {}", method, path, e.what());
        return error_response(500, e.what());
    }
}

struct ApiServer::Impl {
    explicit Impl(SessionService& s) : service(s) {}
    SessionService& service;
    httplib::Server server;
    std::thread thread;
};

ApiServer::ApiServer(SessionService& service, std::optional<std::filesystem::path> static_dir)
    : impl_(std::make_unique<Impl>(service))
{
    auto handler = [this](const httplib::Request& req, httplib::Response& res) {
        std::map<std::string, std::string> query;
        for (const auto& [k, v] : req.params) {
            query.emplace(k, v);
        }
        const ApiResponse r = handle_api(impl_->service, req.method, req.path, query, req.body);
        res.status = r.status;
        res.set_content(r.body.dump(), "application/json");
    };
    impl_->server.Get("/api/.*", handler);
    impl_->server.Post("/api/.*", handler);
    impl_->server.Put("/api/.*", handler);
    impl_->server.Delete("/api/.*", handler);
    if (static_dir) {
        if (!impl_->server.set_mount_point("/", static_dir->string())) {
            throw PreconditionError("static directory does not exist: " + static_dir->string());
        }
    }
}

ApiServer::~ApiServer()
{
    stop();
}

int ApiServer::bind(const std::string& host, int port)
{
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) {
            throw Error("cannot bind " + host);
        }
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error("cannot bind " + host + ":" + std::to_string(port));
    }
    return port;
}

void ApiServer::listen()
{
    impl_->server.listen_after_bind();
}

int ApiServer::start(const std::string& host, int port)
{
    const int bound = bind(host, port);
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void ApiServer::stop()
{
    impl_->server.stop();
    if (impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

} // namespace testgenie
