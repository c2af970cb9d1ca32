#pragma once

#include <map>
#include <mutex>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>

#include "ces/common/error.hpp"
#include "ces/service/session.hpp"

namespace ces::service {

struct Request {
  std::string method;  // "GET" or "POST"
  std::string path;    // without the query string
  std::map<std::string, std::string> query;
  std::string body;
  std::optional<std::string> bearer;
};

struct Response {
  int status = 200;
  nlohmann::json body;
};

int http_status(ErrorCode code);
// {"error": code, "message": text}
nlohmann::json error_document(ErrorCode code, const std::string& message);

// Transport-independent endpoint dispatch over one Session. Requests are
// serialized by an internal mutex.
class Api {
 public:
  // A random operator token is issued unless one is supplied.
  explicit Api(Session& session, std::optional<std::string> operator_token = std::nullopt);

  const std::string& operator_token() const { return operator_token_; }
  Response handle(const Request& request);

 private:
  Response dispatch(const Request& request, const std::string& who);
  std::string authenticate(const Request& request) const;

  Session& session_;
  std::string operator_token_;
  std::map<std::string, std::string> tokens_;  // token -> identity id
  std::mutex mutex_;
};

}  // namespace ces::service
