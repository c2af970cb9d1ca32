#pragma once

#include <memory>
#include <string>

#include "ces/service/api.hpp"

namespace httplib {
class Server;
}

namespace ces::tools {

// Routes every request to `api`; bearer tokens come from the Authorization
// header. The server is not started.
std::unique_ptr<httplib::Server> make_http_server(service::Api& api);

// Blocks until the server stops.
bool serve(service::Api& api, const std::string& host, int port);

}  // namespace ces::tools
