#include <gtest/gtest.h>

#include <random>

#include "ces/ledger/ledger.hpp"
#include "ledger_fixtures.hpp"

using namespace ces;
using namespace ces::ledger;
using ces::testing::LedgerFixture;
using ces::testing::type_b_trade;
using nlohmann::json;

namespace {

ErrorCode code_of(const ExecResult& r) { return r.rejection ? r.rejection->code : ErrorCode::kInvalidArgument; }

}  // namespace

TEST(Crypto, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST(Crypto, SignVerifyAndHexRoundTrip) {
  auto k = keypair_from_seed("x");
  auto sig = sign("message", k);
  EXPECT_TRUE(verify("message", sig, k.public_key));
  EXPECT_FALSE(verify("messagf", sig, k.public_key));
  EXPECT_FALSE(verify("message", sig, keypair_from_seed("y").public_key));
  EXPECT_EQ(from_hex_fixed<32>(to_hex(k.public_key)), k.public_key);
  EXPECT_THROW(from_hex("abc"), Error);
  EXPECT_THROW(from_hex("zz"), Error);
  EXPECT_EQ(keypair_from_seed("x").public_key, k.public_key);
}

TEST(Identity, RegisterAndRejectDuplicatesAndUnknownBus) {
  LedgerFixture f;
  Network net(f.genesis, f.orderer_key);
  auto alice = f.user("alice", 2, feeder::CtClass::kCt2);
  ASSERT_TRUE(net.submit(f.enroll(net, alice)).ok());
  net.cut_block(1);
  auto stored = net.identity("alice");
  ASSERT_TRUE(stored);
  EXPECT_EQ(stored->role, Role::kCrowdsourcee);
  EXPECT_EQ(*stored->bus, 2);
  EXPECT_EQ(net.identity_of_bus(2), std::optional<std::string>("alice"));

  auto again = net.submit(f.enroll(net, alice));
  EXPECT_EQ(code_of(again), ErrorCode::kDuplicateId);

  auto far = f.user("far", 999, feeder::CtClass::kCt1);
  EXPECT_EQ(code_of(net.submit(f.enroll(net, far))), ErrorCode::kUnknownBus);

  auto squatter = f.user("squatter", 2, feeder::CtClass::kCt1);
  EXPECT_EQ(code_of(net.submit(f.enroll(net, squatter))), ErrorCode::kDuplicateId);
}

TEST(Identity, OnlyOperatorEnrolls) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto mallory = f.user("mallory", 5, feeder::CtClass::kCt2);
  auto tx = register_identity(*net.identity("a"), f.keys.at("a"), net.next_nonce("a"), mallory);
  EXPECT_EQ(code_of(net.submit(tx)), ErrorCode::kPermissionDenied);
}

TEST(Execute, PreferenceWriteSetAndPurity) {
  LedgerFixture f;
  Network net = f.standard_network();
  const json prefs = {{"sell_to_utility", std::vector<bool>(24, false)}, {"p2p_trades", json::array()}};
  auto tx = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 0}, {"preferences", prefs}});
  const auto before = net.state().hash();
  auto r = execute(tx, net.state(), net.genesis());
  ASSERT_TRUE(r.ok());
  EXPECT_EQ(net.state().hash(), before);
  ASSERT_TRUE(r.writes.count(preference_key(2, 0)));
  EXPECT_EQ(r.writes.at(preference_key(2, 0)), prefs);
  EXPECT_EQ(r.writes.size(), 2u);  // preference and nonce
  EXPECT_TRUE(r.reads.count(identity_key("a")));
}

TEST(Execute, PreferenceOnlyForOwnBus) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto tx = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 3}, {"day", 0}, {"preferences", json::object()}});
  EXPECT_EQ(code_of(net.submit(tx)), ErrorCode::kPermissionDenied);
  auto bad = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 0}, {"preferences", {{"x", 1}}}});
  EXPECT_EQ(code_of(net.submit(bad)), ErrorCode::kMalformedDocument);
}

TEST(Execute, TypeBRequiresCt2OnBothEnds) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto from_ct1 = f.tx(net, TxKind::kTradeOffer, "c", {{"day", 0}, {"trade", type_b_trade("t1", 4, 2)}});
  EXPECT_EQ(code_of(net.submit(from_ct1)), ErrorCode::kNotCt2);
  auto to_ct1 = f.tx(net, TxKind::kTradeOffer, "a", {{"day", 0}, {"trade", type_b_trade("t2", 2, 4)}});
  EXPECT_EQ(code_of(net.submit(to_ct1)), ErrorCode::kNotCt2);
  auto not_mine = f.tx(net, TxKind::kTradeOffer, "a", {{"day", 0}, {"trade", type_b_trade("t3", 3, 2)}});
  EXPECT_EQ(code_of(net.submit(not_mine)), ErrorCode::kPermissionDenied);
  auto good = f.tx(net, TxKind::kTradeOffer, "a", {{"day", 0}, {"trade", type_b_trade("t4", 2, 3)}});
  EXPECT_TRUE(net.submit(good).ok());
}

TEST(Execute, CommitBindsOpenOfferForNamedBuyer) {
  LedgerFixture f;
  Network net = f.standard_network();
  ASSERT_TRUE(net.submit(f.tx(net, TxKind::kTradeOffer, "a", {{"day", 0}, {"trade", type_b_trade("t", 2, 3)}})).ok());
  net.cut_block(2);
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kContractCommit, "c", {{"offer_id", "t"}}))),
            ErrorCode::kPermissionDenied);
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kContractCommit, "b", {{"offer_id", "nope"}}))),
            ErrorCode::kNotFound);
  ASSERT_TRUE(net.submit(f.tx(net, TxKind::kContractCommit, "b", {{"offer_id", "t"}, {"price", 55.0}})).ok());
  net.cut_block(3);
  EXPECT_EQ((*net.state().find(offer_key("t")))["status"], "committed");
  EXPECT_EQ((*net.state().find(contract_key("t")))["price"], 55.0);
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kContractCommit, "b", {{"offer_id", "t"}}))), ErrorCode::kConflict);
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kTradeOffer, "a", {{"day", 0}, {"trade", type_b_trade("t", 2, 3)}}))),
            ErrorCode::kConflict);
}

TEST(Execute, SettleOnlyFromOperatorAndConservesBalance) {
  LedgerFixture f;
  Network net = f.standard_network();
  const json pay = {{"day", 0}, {"hour", 12}, {"payments", {{{"bus", 2}, {"amount", 4.5}}, {{"bus", 3}, {"amount", 1.5}}}}};
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kSettleIncentive, "a", pay))), ErrorCode::kPermissionDenied);
  ASSERT_TRUE(net.submit(f.tx(net, TxKind::kSettleIncentive, "operator", pay)).ok());
  net.cut_block(2);
  EXPECT_DOUBLE_EQ(net.balance("a"), 4.5);
  EXPECT_DOUBLE_EQ(net.balance("b"), 1.5);
  EXPECT_DOUBLE_EQ(net.balance("operator"), 994.0);
  EXPECT_DOUBLE_EQ(net.balance("a") + net.balance("b") + net.balance("c") + net.balance("operator"), 1000.0);
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kSettleIncentive, "operator", pay))), ErrorCode::kConflict);
  json negative = pay;
  negative["hour"] = 13;
  negative["payments"][0]["amount"] = -1.0;
  EXPECT_EQ(code_of(net.submit(f.tx(net, TxKind::kSettleIncentive, "operator", negative))),
            ErrorCode::kInvalidArgument);
}

TEST(Execute, SignatureNonceAndEnrollmentChecks) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto tx = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 0}, {"preferences", json::object()}});
  Transaction forged = tx;
  forged.payload["day"] = 1;
  EXPECT_EQ(code_of(execute(forged, net.state(), net.genesis())), ErrorCode::kUnauthenticated);
  Transaction wrong_key = make_transaction(tx.kind, tx.payload, "a", tx.nonce, keypair_from_seed("intruder"));
  EXPECT_EQ(code_of(execute(wrong_key, net.state(), net.genesis())), ErrorCode::kUnauthenticated);
  Transaction ghost = make_transaction(tx.kind, tx.payload, "ghost", 1, keypair_from_seed("ghost"));
  EXPECT_EQ(code_of(execute(ghost, net.state(), net.genesis())), ErrorCode::kUnauthenticated);
  Transaction bad_id = tx;
  bad_id.tx_id = std::string(64, '0');
  EXPECT_EQ(code_of(execute(bad_id, net.state(), net.genesis())), ErrorCode::kMalformedDocument);
  ASSERT_TRUE(net.submit(tx).ok());
  net.cut_block(2);
  EXPECT_EQ(code_of(net.submit(tx)), ErrorCode::kStaleNonce);
}

TEST(OrderAndCommit, NonConflictingBothApplied) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto t1 = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 0}, {"preferences", json::object()}});
  auto t2 = f.tx(net, TxKind::kRegisterPreference, "b", {{"bus", 3}, {"day", 0}, {"preferences", json::object()}});
  auto b = order_and_commit({t2, t1}, net.state(), net.genesis(), net.chain().back().header, 9, "",
                            f.orderer_key);
  ASSERT_EQ(b.txs.size(), 2u);
  EXPECT_EQ(b.txs[0].submitter, "a");
  EXPECT_TRUE(b.outcomes[0].valid);
  EXPECT_TRUE(b.outcomes[1].valid);
  EXPECT_EQ(b.header.height, net.height() + 1);
  EXPECT_EQ(b.header.prev_hash, net.chain().back().header.hash());
}

TEST(OrderAndCommit, WriteConflictFirstWins) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto t1 = f.tx(net, TxKind::kTradeOffer, "a", {{"day", 0}, {"trade", type_b_trade("same", 2, 3)}});
  auto t2 = f.tx(net, TxKind::kTradeOffer, "b", {{"day", 0}, {"trade", type_b_trade("same", 3, 2)}});
  auto b = order_and_commit({t2, t1}, net.state(), net.genesis(), net.chain().back().header, 9, "",
                            f.orderer_key);
  ASSERT_EQ(b.txs.size(), 2u);
  EXPECT_EQ(b.txs[0].submitter, "a");
  EXPECT_TRUE(b.outcomes[0].valid);
  EXPECT_FALSE(b.outcomes[1].valid);
  EXPECT_NE(b.outcomes[1].reason.find("conflict"), std::string::npos);
  // Peers reproduce the same outcome and state.
  auto report = replicate(b, net.peers());
  EXPECT_TRUE(report.ok());
}

TEST(OrderAndCommit, SameSubmitterSequentialNoncesAndEmptyPool) {
  LedgerFixture f;
  Network net = f.standard_network();
  auto t1 = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 0}, {"preferences", json::object()}});
  ASSERT_TRUE(net.submit(t1).ok());
  auto t2 = f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 1}, {"preferences", json::object()}});
  ASSERT_TRUE(net.submit(t2).ok());
  const auto& b = net.cut_block(2);
  EXPECT_TRUE(b.outcomes[0].valid);
  EXPECT_TRUE(b.outcomes[1].valid);
  EXPECT_TRUE(net.state().find(preference_key(2, 1)));
  EXPECT_THROW(net.cut_block(3), Error);
  // Two txs reusing one nonce: only the first in order survives.
  const auto n = net.next_nonce("a");
  auto x = make_transaction(TxKind::kRegisterPreference, {{"bus", 2}, {"day", 5}, {"preferences", json::object()}}, "a",
                            n, f.keys.at("a"));
  auto y = make_transaction(TxKind::kRegisterPreference, {{"bus", 2}, {"day", 6}, {"preferences", json::object()}}, "a",
                            n, f.keys.at("a"));
  ASSERT_TRUE(net.submit(x).ok());
  EXPECT_FALSE(net.submit(y).ok());
  auto both = order_and_commit({x, y}, net.state(), net.genesis(), net.chain().back().header, 4, "", f.orderer_key);
  ASSERT_EQ(both.outcomes.size(), 2u);
  EXPECT_NE(both.outcomes[0].valid, both.outcomes[1].valid);
}

TEST(Chain, UntouchedChainValidates) {
  LedgerFixture f;
  Network net = f.standard_network();
  for (int day = 0; day < 9; ++day) {
    ASSERT_TRUE(net.submit(f.tx(net, TxKind::kRegisterPreference, "a",
                                {{"bus", 2}, {"day", day}, {"preferences", json::object()}}))
                    .ok());
    net.cut_block(day + 2);
  }
  EXPECT_EQ(net.height(), 10u);
  for (const auto& peer : net.peers()) {
    auto check = peer.validate_chain();
    EXPECT_TRUE(check.ok) << check.reason;
    EXPECT_EQ(check.state_hash, to_hex(net.state().hash()));
  }
}

TEST(Chain, PayloadTamperDetectedAtItsHeight) {
  LedgerFixture f;
  Network net = f.standard_network();
  for (int day = 0; day < 9; ++day) {
    net.submit(f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", day}, {"preferences", json::object()}}));
    net.cut_block(day + 2);
  }
  Peer copy = net.peers().front();
  copy.mutable_chain()[4].txs[0].payload["day"] = 77;
  auto check = copy.validate_chain();
  EXPECT_FALSE(check.ok);
  ASSERT_TRUE(check.first_bad_height);
  EXPECT_EQ(*check.first_bad_height, 4u);
}

TEST(Chain, ResignedByOutsiderDetected) {
  LedgerFixture f;
  Network net = f.standard_network();
  for (int day = 0; day < 5; ++day) {
    net.submit(f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", day}, {"preferences", json::object()}}));
    net.cut_block(day + 2);
  }
  Peer copy = net.peers().front();
  auto& tx = copy.mutable_chain()[3].txs[0];
  tx = make_transaction(tx.kind, tx.payload, tx.submitter, tx.nonce, keypair_from_seed("outsider"));
  auto check = copy.validate_chain();
  EXPECT_FALSE(check.ok);
  EXPECT_EQ(check.first_bad_height, std::optional<std::uint64_t>(3));
}

TEST(Chain, HeaderAndOutcomeTamperDetected) {
  LedgerFixture f;
  Network net = f.standard_network();
  for (int day = 0; day < 3; ++day) {
    net.submit(f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", day}, {"preferences", json::object()}}));
    net.cut_block(day + 2);
  }
  {
    Peer copy = net.peers().front();
    copy.mutable_chain()[2].header.timestamp += 1;
    EXPECT_EQ(copy.validate_chain().first_bad_height, std::optional<std::uint64_t>(2));
  }
  {
    Peer copy = net.peers().front();
    copy.mutable_chain()[2].outcomes[0].valid = false;
    EXPECT_EQ(copy.validate_chain().first_bad_height, std::optional<std::uint64_t>(2));
  }
  {
    Peer copy = net.peers().front();
    copy.mutable_chain().erase(copy.mutable_chain().begin() + 2);
    EXPECT_FALSE(copy.validate_chain().ok);
  }
}

TEST(Replication, FourPeersAgreeAndTamperedGenesisIsNamed) {
  LedgerFixture f;
  Network net = f.standard_network();
  ASSERT_EQ(net.peers().size(), 4u);
  for (const auto& p : net.peers()) EXPECT_EQ(p.state().hash(), net.state().hash());

  std::vector<Peer> peers;
  for (int i = 0; i < 4; ++i) peers.emplace_back("p" + std::to_string(i), f.genesis);
  Genesis bad = f.genesis;
  bad.initial_balances["operator"] = 1e9;
  peers[2] = Peer("p2", bad);
  Network fresh(f.genesis, f.orderer_key, 0);
  fresh.submit(f.enroll(fresh, f.user("a", 2, feeder::CtClass::kCt2)));
  const Block& b = fresh.cut_block(1);
  auto report = replicate(b, peers);
  EXPECT_FALSE(report.ok());
  ASSERT_EQ(report.divergent.size(), 1u);
  EXPECT_EQ(report.divergent[0], "p2");
  EXPECT_EQ(report.hashes[0].second, report.hashes[1].second);
  EXPECT_NE(report.hashes[2].second, report.hashes[0].second);
}

TEST(Export, RoundTripAndCanonicalText) {
  LedgerFixture f;
  Network net = f.standard_network();
  net.submit(f.tx(net, TxKind::kRegisterPreference, "a", {{"bus", 2}, {"day", 0}, {"preferences", json::object()}}));
  net.cut_block(2);
  const std::string text = export_chain_text(net.peers().front());
  Peer back = import_chain_text(text);
  auto check = back.validate_chain();
  EXPECT_TRUE(check.ok) << check.reason;
  EXPECT_EQ(check.state_hash, to_hex(net.state().hash()));
  EXPECT_THROW(import_chain_text(text + " "), Error);
  EXPECT_EQ(genesis_from_json(to_json(f.genesis)).registrar.id, "operator");
}
