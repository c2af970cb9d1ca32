#include <gtest/gtest.h>

#include <algorithm>

#include "ces/service/api.hpp"

using namespace ces;
using namespace ces::service;
using nlohmann::json;

namespace {

RunConfig quick_config() {
  RunConfig c;
  c.hours = 3;
  return c;
}

class ApiTest : public ::testing::Test {
 protected:
  ApiTest() : session(quick_config()), api(session, "op-token") {}

  Response call(const std::string& method, const std::string& path, const std::string& token, json body = nullptr,
                std::map<std::string, std::string> query = {}) {
    Request r;
    r.method = method;
    r.path = path;
    r.query = std::move(query);
    if (!body.is_null()) r.body = body.dump();
    if (!token.empty()) r.bearer = token;
    return api.handle(r);
  }

  std::string enroll(int bus) {
    auto r = call("POST", "/identities", "op-token", {{"bus", bus}});
    EXPECT_EQ(r.status, 201) << r.body.dump();
    return r.body.value("token", "");
  }

  static json trade(const std::string& id, int seller, std::optional<int> buyer, const char* type = "B") {
    json t = {{"id", id}, {"seller_bus", seller}, {"ett_type", type}, {"window", {9, 14}}, {"energy", 0.1}};
    if (buyer) t["buyer_bus"] = *buyer;
    return t;
  }

  Session session;
  Api api;
};

}  // namespace

TEST(HttpStatus, Mapping) {
  EXPECT_EQ(http_status(ErrorCode::kUnauthenticated), 401);
  EXPECT_EQ(http_status(ErrorCode::kPermissionDenied), 403);
  EXPECT_EQ(http_status(ErrorCode::kNotCt2), 403);
  EXPECT_EQ(http_status(ErrorCode::kConflict), 409);
  EXPECT_EQ(http_status(ErrorCode::kOrdering), 409);
  EXPECT_EQ(http_status(ErrorCode::kMalformedDocument), 422);
  EXPECT_EQ(http_status(ErrorCode::kNotFound), 404);
}

TEST_F(ApiTest, MissingOrUnknownTokenIs401) {
  EXPECT_EQ(call("GET", "/ledger/blocks", "").status, 401);
  EXPECT_EQ(call("GET", "/ledger/blocks", "nope").status, 401);
  EXPECT_EQ(call("POST", "/identities", "nope", {{"bus", 2}}).status, 401);
  EXPECT_EQ(call("GET", "/ledger/blocks", "op-token").status, 200);
}

TEST_F(ApiTest, EnrollmentIssuesTokensAndRejectsBadBuses) {
  const auto before = session.ledger().height();
  auto r = call("POST", "/identities", "op-token", {{"bus", 53}});
  ASSERT_EQ(r.status, 201);
  EXPECT_EQ(r.body["role"], "crowdsourcee");
  EXPECT_EQ(r.body["ct_class"], "CT2");
  EXPECT_EQ(session.ledger().height(), before + 1);
  EXPECT_EQ(call("POST", "/identities", "op-token", {{"bus", 53}}).status, 409);
  EXPECT_EQ(call("POST", "/identities", "op-token", {{"bus", 999}}).status, 422);
  EXPECT_EQ(call("POST", "/identities", "op-token", {{"bus", "x"}}).status, 422);
  EXPECT_EQ(session.ledger().height(), before + 1);
  const auto user = r.body["token"].get<std::string>();
  EXPECT_EQ(call("POST", "/identities", user, {{"bus", 7}}).status, 403);
}

TEST_F(ApiTest, Ct1TypeBTradeIs403WithTypeRule) {
  const auto ct1 = enroll(4);
  enroll(43);
  auto r = call("POST", "/trades", ct1, trade("t", 4, 43));
  EXPECT_EQ(r.status, 403);
  EXPECT_NE(r.body["message"].get<std::string>().find("CT2"), std::string::npos);
}

TEST_F(ApiTest, TradeOfferAcceptAndConflicts) {
  const auto seller = enroll(53);
  const auto buyer = enroll(43);
  const auto other = enroll(2);
  EXPECT_EQ(call("POST", "/trades", seller, trade("t1", 53, 43)).status, 201);
  EXPECT_EQ(call("POST", "/trades", seller, trade("t1", 53, 43)).status, 409);
  EXPECT_EQ(call("POST", "/trades", other, trade("t2", 53, 43)).status, 403);
  EXPECT_EQ(call("POST", "/trades/t1/accept", other).status, 403);
  EXPECT_EQ(call("POST", "/trades/none/accept", buyer).status, 404);
  EXPECT_EQ(call("POST", "/trades/t1/accept", buyer, {{"price", 42.0}}).status, 200);
  EXPECT_EQ(call("POST", "/trades/t1/accept", buyer).status, 409);
  auto c = call("GET", "/ledger/state/contract/t1", buyer);
  ASSERT_EQ(c.status, 200);
  EXPECT_EQ(c.body["value"]["price"], 42.0);
  ASSERT_EQ(session.scenario().trades.size(), 1u);

  auto a = call("POST", "/trades", other, trade("sell-2", 2, std::nullopt, "A"));
  ASSERT_EQ(a.status, 201) << a.body.dump();
  EXPECT_TRUE(session.scenario().crowdsourcees.at(2).preferences.sell_to_utility[9]);
  EXPECT_EQ(call("POST", "/trades/sell-2/accept", other).status, 403);
  EXPECT_EQ(call("POST", "/trades/sell-2/accept", "op-token").status, 200);
  EXPECT_EQ(session.scenario().trades.size(), 1u);
}

TEST_F(ApiTest, PhaseOrderingAndReadThrough) {
  EXPECT_EQ(call("POST", "/market/phase2", "op-token", nullptr, {{"hour", "3"}}).status, 409);
  EXPECT_EQ(call("GET", "/market/dlmp", "op-token", nullptr, {{"bus", "1"}, {"hour", "12"}}).status, 409);
  const auto user = enroll(2);
  EXPECT_EQ(call("POST", "/market/phase1", user).status, 403);
  auto p1 = call("POST", "/market/phase1", "op-token");
  ASSERT_EQ(p1.status, 200) << p1.body.dump();
  EXPECT_EQ(call("POST", "/market/phase1", "op-token").status, 409);

  auto d = call("GET", "/market/dlmp", user, nullptr, {{"bus", "1"}, {"hour", "12"}});
  ASSERT_EQ(d.status, 200);
  EXPECT_EQ(d.body["dlmp"].get<double>(), session.equilibrium().dlmp_at(1, 12));
  EXPECT_EQ(call("GET", "/market/dlmp", user, nullptr, {{"bus", "1"}}).body["dlmp"].size(), 24u);
  EXPECT_EQ(call("GET", "/market/dlmp", user, nullptr, {{"bus", "99"}}).status, 422);

  EXPECT_EQ(call("POST", "/market/phase2", "op-token", nullptr, {{"hour", "25"}}).status, 422);
  EXPECT_EQ(call("POST", "/market/phase2", "op-token").status, 422);
  auto p2 = call("POST", "/market/phase2", "op-token", nullptr, {{"hour", "12"}});
  ASSERT_EQ(p2.status, 200) << p2.body.dump();
  EXPECT_EQ(call("POST", "/market/phase2", "op-token", nullptr, {{"hour", "12"}}).status, 409);
  auto inc = call("GET", "/market/incentives", user, nullptr, {{"bus", "2"}});
  ASSERT_EQ(inc.status, 200);
  ASSERT_EQ(inc.body["incentives"].size(), 1u);
  EXPECT_EQ(inc.body["incentives"][0]["hour"], 12);

}

TEST_F(ApiTest, LateTypeBOfferIs409) {
  const auto seller = enroll(53);
  enroll(43);
  ASSERT_EQ(call("POST", "/market/phase1", "op-token").status, 200);
  EXPECT_EQ(call("POST", "/trades", seller, trade("late", 53, 43)).status, 409);
}

TEST_F(ApiTest, OperatorOnlyEndpointsRejectEveryCrowdsourcee) {
  std::vector<std::string> users;
  for (int bus : {2, 3, 4, 6, 43, 53}) users.push_back(enroll(bus));
  ASSERT_EQ(call("POST", "/market/phase1", "op-token").status, 200);
  const auto height = session.ledger().height();
  for (const auto& u : users) {
    EXPECT_EQ(call("POST", "/identities", u, {{"bus", 8}}).status, 403);
    EXPECT_EQ(call("POST", "/market/phase1", u).status, 403);
    EXPECT_EQ(call("POST", "/market/phase2", u, nullptr, {{"hour", "1"}}).status, 403);
    EXPECT_EQ(call("POST", "/trades/x/accept", u).status, 404);
    EXPECT_EQ(call("GET", "/accounts/operator", u).status, 403);
  }
  EXPECT_EQ(session.ledger().height(), height);
}

TEST_F(ApiTest, AccountsAndPreferences) {
  const auto u = enroll(2);
  const auto v = enroll(3);
  auto me = call("GET", "/accounts/bus-2", u);
  ASSERT_EQ(me.status, 200);
  EXPECT_EQ(me.body["bus"], 2);
  EXPECT_EQ(call("GET", "/accounts/bus-3", u).status, 403);
  EXPECT_EQ(call("GET", "/accounts/bus-3", "op-token").status, 200);
  EXPECT_EQ(call("GET", "/accounts/ghost", "op-token").status, 404);
  EXPECT_DOUBLE_EQ(call("GET", "/accounts/operator", "op-token").body["balance"].get<double>(), 1e6);

  json prefs = {{"sell_to_utility", std::vector<bool>(24, true)}};
  const auto h = session.ledger().height();
  ASSERT_EQ(call("POST", "/preferences", v, prefs).status, 200);
  EXPECT_EQ(session.ledger().height(), h + 1);
  EXPECT_TRUE(session.scenario().crowdsourcees.at(3).preferences.sell_to_utility[5]);
  auto st = call("GET", "/ledger/state/pref/3/0", u);
  ASSERT_EQ(st.status, 200);
  EXPECT_EQ(st.body["value"]["sell_to_utility"].size(), 24u);
  EXPECT_EQ(call("POST", "/preferences", v, {{"sell_to_utility", {true}}}).status, 422);
  EXPECT_EQ(call("POST", "/preferences", v, {{"bogus", 1}}).status, 422);
  EXPECT_EQ(call("POST", "/preferences", "op-token", prefs).status, 403);
  Request raw;
  raw.method = "POST";
  raw.path = "/preferences";
  raw.body = "{not json";
  raw.bearer = v;
  EXPECT_EQ(api.handle(raw).status, 422);
  EXPECT_EQ(session.ledger().height(), h + 1);
}

TEST_F(ApiTest, EveryAcceptedMutationCommitsExactlyOneTransaction) {
  const auto seller = enroll(53);
  const auto buyer = enroll(43);
  struct Step {
    std::string method, path, token;
    json body;
    std::map<std::string, std::string> query;
  };
  const std::vector<Step> steps = {
      {"POST", "/trades", seller, trade("t", 53, 43), {}},
      {"POST", "/trades/t/accept", buyer, nullptr, {}},
      {"POST", "/preferences", buyer, {{"urgency", 0.5}}, {}},
      {"POST", "/market/phase1", "op-token", nullptr, {}},
      {"POST", "/market/phase2", "op-token", nullptr, {{"hour", "10"}}},
  };
  for (const auto& s : steps) {
    const auto h = session.ledger().height();
    auto r = call(s.method, s.path, s.token, s.body, s.query);
    ASSERT_LT(r.status, 300) << s.path << " " << r.body.dump();
    ASSERT_EQ(session.ledger().height(), h + 1) << s.path;
    EXPECT_EQ(session.ledger().chain().back().txs.size(), 1u);
    EXPECT_EQ(r.body["commit"]["tx_ids"][0], session.ledger().chain().back().txs[0].tx_id);
    auto blocks = call("GET", "/ledger/blocks", buyer, nullptr, {{"from", std::to_string(h + 1)}});
    ASSERT_EQ(blocks.body["blocks"].size(), 1u);
  }
  EXPECT_TRUE(call("GET", "/ledger/verify", buyer).body["ok"].get<bool>());
}

TEST_F(ApiTest, RepeatedReadsAreIdentical) {
  const auto u = enroll(2);
  ASSERT_EQ(call("POST", "/market/phase1", "op-token").status, 200);
  for (const char* path : {"/ledger/blocks", "/market/dlmp", "/market/incentives", "/accounts/bus-2"}) {
    auto a = call("GET", path, u), b = call("GET", path, u);
    EXPECT_EQ(a.status, 200) << path;
    EXPECT_EQ(a.body.dump(), b.body.dump()) << path;
  }
  EXPECT_EQ(call("GET", "/nowhere", u).status, 404);
  EXPECT_EQ(call("GET", "/ledger/state/none", u).status, 404);
}

TEST(RunDay, ChainLayoutAndSettlementConservation) {
  RunConfig c;
  Session s(c);
  const auto r = run_day(s);
  int phase1 = 0, phase2 = 0;
  double paid = 0.0;
  for (const auto& b : s.ledger().chain()) {
    if (b.header.label == "phase1") ++phase1;
    if (b.header.label.rfind("phase2:", 0) == 0) {
      ++phase2;
      for (const auto& p : b.txs.at(0).payload["payments"]) paid += p["amount"].get<double>();
    }
  }
  EXPECT_EQ(phase1, 1);
  EXPECT_EQ(phase2, 24);
  EXPECT_EQ(r.height, s.ledger().height());
  EXPECT_NEAR(s.ledger().balance("operator"), c.operator_funds - paid, 1e-6);
  double credited = 0.0;
  for (const auto& [bus, cs] : s.scenario().crowdsourcees) credited += s.ledger().balance(Session::bus_identity(bus));
  EXPECT_NEAR(credited, paid, 1e-9);
  EXPECT_TRUE(s.ledger().orderer().validate_chain().ok);
  for (const auto& p : s.ledger().peers()) EXPECT_EQ(p.state().hash(), s.ledger().state().hash());

  ASSERT_EQ(s.trade_prices().size(), 1u);
  const auto& [id, price] = *s.trade_prices().begin();
  const auto* contract = s.ledger().state().find(ledger::contract_key(id));
  ASSERT_TRUE(contract);
  const auto& tr = s.scenario().trades.front();
  double expect = 0.0;
  for (int h = tr.window_start; h < tr.window_end; ++h) {
    expect += 0.5 * (s.equilibrium().dlmp_at(53, h) + s.equilibrium().dlmp_at(43, h));
  }
  EXPECT_NEAR(price, expect / (tr.window_end - tr.window_start), 1e-9);

  for (const char* name : {"generation.csv", "dlmp.csv", "battery.csv", "shapeable.csv", "incentives.csv", "trades.csv"}) {
    ASSERT_TRUE(r.tables.count(name)) << name;
  }
  EXPECT_EQ(r.tables.at("generation.csv").rfind("hour,p_g,q_g,p_g_baseline,p_g_phase2\n", 0), 0u);
  EXPECT_EQ(std::count(r.tables.at("dlmp.csv").begin(), r.tables.at("dlmp.csv").end(), '\n'), 1 + 56 * 24);
  EXPECT_EQ(r.manifest["ledger"]["height"], r.height);
  EXPECT_EQ(r.manifest["phases"]["phase1"], s.ledger().height() - 24);
}

TEST(RunDay, ConfigValidation) {
  RunConfig c;
  c.hours = 25;
  EXPECT_THROW(Session{c}, Error);
  c.hours = 0;
  c.tol = -1.0;
  EXPECT_THROW(Session{c}, Error);
}
