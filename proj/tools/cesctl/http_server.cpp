#include "http_server.hpp"

#include <httplib.h>

namespace ces::tools {

namespace {

void forward(service::Api& api, const httplib::Request& req, httplib::Response& res) {
  service::Request r;
  r.method = req.method;
  r.path = req.path;
  r.body = req.body;
  for (const auto& [k, v] : req.params) r.query[k] = v;
  const auto auth = req.get_header_value("Authorization");
  constexpr std::string_view kBearer = "Bearer ";
  if (auth.rfind(kBearer, 0) == 0) r.bearer = auth.substr(kBearer.size());
  const auto out = api.handle(r);
  res.status = out.status;
  res.set_content(out.body.dump(), "application/json");
}

}  // namespace

std::unique_ptr<httplib::Server> make_http_server(service::Api& api) {
  auto server = std::make_unique<httplib::Server>();
  auto handler = [&api](const httplib::Request& req, httplib::Response& res) { forward(api, req, res); };
  server->Get(".*", handler);
  server->Post(".*", handler);
  return server;
}

bool serve(service::Api& api, const std::string& host, int port) {
  auto server = make_http_server(api);
  return server->listen(host, port);
}

}  // namespace ces::tools
