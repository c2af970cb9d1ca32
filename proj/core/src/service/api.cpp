#include "ces/service/api.hpp"

#include <charconv>
#include <sstream>
#include <vector>

#include "common/json_util.hpp"

namespace ces::service {

using nlohmann::json;

namespace {

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  std::istringstream in(path);
  while (std::getline(in, cur, '/')) {
    if (!cur.empty()) parts.push_back(cur);
  }
  return parts;
}

int int_param(const Request& r, const std::string& name) {
  auto it = r.query.find(name);
  if (it == r.query.end()) throw Error(ErrorCode::kMalformedDocument, "missing query parameter '" + name + "'");
  int v = 0;
  const auto& s = it->second;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorCode::kMalformedDocument, "query parameter '" + name + "' must be an integer");
  }
  return v;
}

std::optional<int> opt_int_param(const Request& r, const std::string& name) {
  if (!r.query.count(name)) return std::nullopt;
  return int_param(r, name);
}

json parse_body(const Request& r) {
  if (r.body.empty()) return json::object();
  try {
    return json::parse(r.body);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedDocument, std::string("request body does not parse: ") + e.what());
  }
}

json identity_json(const ledger::Identity& id, double balance) {
  json j = ledger::to_json(id);
  j["balance"] = balance;
  return j;
}

json seller_json(const market::SellerOutcome& s, int hour) {
  return {{"hour", hour},         {"bus", s.bus},         {"willing", s.willing},
          {"p_ni", s.p_ni},       {"lambda_eq", s.lambda_eq}, {"lambda_a", s.lambda_a},
          {"b", s.b},             {"final_price", s.final_price}};
}

json commit_json(const Session& s) {
  const auto& b = s.ledger().chain().back();
  json ids = json::array();
  for (const auto& tx : b.txs) ids.push_back(tx.tx_id);
  return {{"height", b.header.height}, {"block_hash", ledger::to_hex(b.header.hash())}, {"tx_ids", ids}};
}

void require_operator(const Session& s, const std::string& who) {
  if (s.identity(who)->role != ledger::Role::kOperator) {
    throw Error(ErrorCode::kPermissionDenied, "operator-only endpoint");
  }
}

}  // namespace

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kUnauthenticated: return 401;
    case ErrorCode::kPermissionDenied:
    case ErrorCode::kNotCt2: return 403;
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict:
    case ErrorCode::kDuplicateId:
    case ErrorCode::kOrdering:
    case ErrorCode::kStaleNonce: return 409;
    case ErrorCode::kInfeasible:
    case ErrorCode::kSolverFailure:
    case ErrorCode::kReplicationFault: return 500;
    default: return 422;
  }
}

json error_document(ErrorCode code, const std::string& message) {
  return {{"error", std::string(to_string(code))}, {"message", message}};
}

Api::Api(Session& session, std::optional<std::string> operator_token)
    : session_(session), operator_token_(operator_token ? *operator_token : ledger::random_hex(24)) {
  if (operator_token_.empty()) throw Error(ErrorCode::kInvalidArgument, "operator token must be non-empty");
  tokens_[operator_token_] = Session::kOperatorId;
}

std::string Api::authenticate(const Request& r) const {
  if (!r.bearer) throw Error(ErrorCode::kUnauthenticated, "missing bearer token");
  auto it = tokens_.find(*r.bearer);
  if (it == tokens_.end()) throw Error(ErrorCode::kUnauthenticated, "unknown bearer token");
  return it->second;
}

Response Api::handle(const Request& request) {
  std::lock_guard lock(mutex_);
  try {
    return dispatch(request, authenticate(request));
  } catch (const Error& e) {
    return {http_status(e.code()), error_document(e.code(), e.what())};
  } catch (const json::exception& e) {
    return {422, error_document(ErrorCode::kMalformedDocument, e.what())};
  } catch (const std::exception& e) {
    return {500, error_document(ErrorCode::kSolverFailure, e.what())};
  }
}

Response Api::dispatch(const Request& r, const std::string& who) {
  const auto parts = split_path(r.path);
  const bool post = r.method == "POST", get = r.method == "GET";
  auto is = [&](std::initializer_list<const char*> want) {
    if (parts.size() != want.size()) return false;
    std::size_t i = 0;
    for (const char* w : want) {
      if (std::string(w) != "*" && parts[i] != w) return false;
      ++i;
    }
    return true;
  };

  if (post && is({"identities"})) {
    require_operator(session_, who);
    const json body = parse_body(r);
    detail::require_keys(body, {"bus"}, {}, "identity request");
    const auto id = session_.enroll(detail::integer(body["bus"], "bus"));
    const std::string token = ledger::random_hex(24);
    tokens_[token] = id.id;
    json out = identity_json(id, 0.0);
    out["token"] = token;
    out["commit"] = commit_json(session_);
    return {201, out};
  }
  if (post && is({"preferences"})) {
    session_.submit_preferences(who, ders::preferences_from_json(parse_body(r)));
    return {200, {{"commit", commit_json(session_)}}};
  }
  if (post && is({"trades"})) {
    const auto trade = ders::trade_from_json(parse_body(r));
    session_.offer_trade(who, trade);
    return {201, {{"trade", ders::to_json(trade)}, {"commit", commit_json(session_)}}};
  }
  if (post && is({"trades", "*", "accept"})) {
    const json body = parse_body(r);
    detail::require_keys(body, {}, {"price"}, "accept request");
    std::optional<double> price;
    if (body.contains("price")) price = detail::number(body["price"], "price");
    session_.accept_trade(who, parts[1], price);
    return {200, {{"trade_id", parts[1]}, {"commit", commit_json(session_)}}};
  }
  if (post && is({"market", "phase1"})) {
    require_operator(session_, who);
    const auto& eq = session_.run_phase1(who);
    return {200,
            {{"status", std::string(convex::to_string(eq.status))},
             {"objective", eq.objective},
             {"p_g", eq.p_g},
             {"trade_prices", session_.trade_prices()},
             {"max_relaxation_gap", eq.diagnostics.max_relaxation_gap},
             {"commit", commit_json(session_)}}};
  }
  if (post && is({"market", "phase2"})) {
    require_operator(session_, who);
    const int hour = int_param(r, "hour");
    const auto& out = session_.run_phase2(hour, who);
    json sellers = json::array();
    for (const auto& s : out.ct2) sellers.push_back(seller_json(s, hour));
    return {200,
            {{"hour", hour},
             {"p_g", out.p_g},
             {"b_total", out.b_total},
             {"fallback", out.fallback},
             {"sellers", sellers},
             {"commit", commit_json(session_)}}};
  }
  if (get && is({"market", "dlmp"})) {
    const auto& eq = session_.equilibrium();
    const auto bus = opt_int_param(r, "bus");
    const auto hour = opt_int_param(r, "hour");
    const auto& s = session_.scenario();
    if (bus && !s.feeder.has_bus(*bus)) throw Error(ErrorCode::kUnknownBus, "unknown bus");
    if (hour && (*hour < 0 || *hour >= static_cast<int>(s.horizon))) throw Error(ErrorCode::kOutOfRange, "hour out of range");
    json rows = json::array();
    for (const auto& b : s.feeder.buses) {
      if (bus && b.id != *bus) continue;
      for (int t = 0; t < static_cast<int>(s.horizon); ++t) {
        if (hour && t != *hour) continue;
        rows.push_back({{"bus", b.id}, {"hour", t}, {"dlmp", eq.dlmp_at(b.id, t)}});
      }
    }
    if (bus && hour) return {200, rows[0]};
    return {200, {{"dlmp", rows}}};
  }
  if (get && is({"market", "incentives"})) {
    const auto bus = opt_int_param(r, "bus");
    json rows = json::array();
    for (const auto& [hour, o] : session_.incentives()) {
      for (const auto& s : o.ct2) {
        if (!bus || s.bus == *bus) rows.push_back(seller_json(s, hour));
      }
    }
    return {200, {{"incentives", rows}}};
  }
  if (get && is({"ledger", "blocks"})) {
    const int from = opt_int_param(r, "from").value_or(0);
    if (from < 0) throw Error(ErrorCode::kOutOfRange, "from must be non-negative");
    json blocks = json::array();
    for (const auto& b : session_.ledger().chain()) {
      if (b.header.height < static_cast<std::uint64_t>(from)) continue;
      blocks.push_back({{"hash", ledger::to_hex(b.header.hash())}, {"block", ledger::to_json(b)}});
    }
    return {200, {{"height", session_.ledger().height()}, {"blocks", blocks}}};
  }
  if (get && is({"ledger", "verify"})) {
    const auto check = session_.ledger().orderer().validate_chain();
    json out = {{"ok", check.ok}, {"reason", check.reason}, {"state_hash", check.state_hash}};
    out["first_bad_height"] = check.first_bad_height ? json(*check.first_bad_height) : json(nullptr);
    return {200, out};
  }
  if (get && parts.size() >= 3 && parts[0] == "ledger" && parts[1] == "state") {
    std::string key = parts[2];
    for (std::size_t i = 3; i < parts.size(); ++i) key += "/" + parts[i];
    const auto* v = session_.ledger().state().find(key);
    if (!v) throw Error(ErrorCode::kNotFound, "no state entry '" + key + "'");
    return {200, {{"key", key}, {"value", *v}}};
  }
  if (get && is({"accounts", "*"})) {
    const auto me = session_.identity(who);
    if (me->role != ledger::Role::kOperator && parts[1] != who) {
      throw Error(ErrorCode::kPermissionDenied, "crowdsourcees may only read their own account");
    }
    const auto id = session_.identity(parts[1]);
    if (!id) throw Error(ErrorCode::kNotFound, "no identity '" + parts[1] + "'");
    return {200, identity_json(*id, session_.ledger().balance(parts[1]))};
  }
  throw Error(ErrorCode::kNotFound, "no route " + r.method + " " + r.path);
}

}  // namespace ces::service
