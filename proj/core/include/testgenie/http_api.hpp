// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "testgenie/json_text.hpp"
#include "testgenie/session_service.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

namespace testgenie {

struct ApiResponse {
    int status = 200;
    Json body;
};

/// Routes one request of the session HTTP API. Errors come back as
/// `{"error": message}` with 400, 404, 405, 409 or 500.
ApiResponse handle_api(SessionService& service, std::string_view method, std::string_view path,
                       const std::map<std::string, std::string>& query, std::string_view body);

/// httplib server over handle_api, optionally serving static files at "/".
class ApiServer {
public:
    explicit ApiServer(SessionService& service,
                       std::optional<std::filesystem::path> static_dir = std::nullopt);
    ~ApiServer();
    ApiServer(const ApiServer&) = delete;
    ApiServer& operator=(const ApiServer&) = delete;

    /// Binds to host:port (0 picks a free port); returns the bound port.
    int bind(const std::string& host, int port);
    /// Serves until stop(); bind() must have succeeded.
    void listen();
    /// Binds and serves on a background thread.
    int start(const std::string& host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace testgenie
