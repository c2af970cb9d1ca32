#pragma once

#include <cstdint>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ces/common/error.hpp"
#include "ces/feeder/feeder.hpp"
#include "ces/ledger/crypto.hpp"

namespace ces::ledger {

enum class Role { kOperator, kCrowdsourcee };
std::string_view to_string(Role role);
Role parse_role(std::string_view text);

struct Identity {
  std::string id;
  Role role = Role::kCrowdsourcee;
  std::optional<int> bus;
  std::optional<feeder::CtClass> ct_class;
  PublicKey public_key{};
  std::int64_t enrolled_at = 0;
};

nlohmann::json to_json(const Identity& identity);
Identity identity_from_json(const nlohmann::json& doc);

enum class TxKind { kEnroll, kRegisterPreference, kTradeOffer, kContractCommit, kSettleIncentive };
std::string_view to_string(TxKind kind);
TxKind parse_tx_kind(std::string_view text);

// Payloads by kind:
//   Enroll             {id, role, bus?, ct_class?, public_key}        operator only
//   RegisterPreference {bus, day, preferences}                       the bus owner
//   TradeOffer         {day, trade}                                  the seller, CT2
//   ContractCommit     {offer_id, price?}                           buyer (B) / operator (A)
//   SettleIncentive    {day, hour?, payments: [{bus, amount}], record?}  operator only
struct Transaction {
  TxKind kind = TxKind::kRegisterPreference;
  std::string submitter;
  std::uint64_t nonce = 0;
  nlohmann::json payload;
  Signature signature{};
  std::string tx_id;  // hex digest over the signed body and signature

  // Canonical text that the signature covers.
  std::string signing_body() const;
  std::string compute_id() const;
};

Transaction make_transaction(TxKind kind, nlohmann::json payload, const std::string& submitter,
                             std::uint64_t nonce, const KeyPair& key);
nlohmann::json to_json(const Transaction& tx);
Transaction transaction_from_json(const nlohmann::json& doc);

// Ordered key-value store; values are structured documents.
struct WorldState {
  std::map<std::string, nlohmann::json> entries;

  const nlohmann::json* find(const std::string& key) const;
  Digest hash() const;
  nlohmann::json to_json() const;
};

struct Rejection {
  ErrorCode code = ErrorCode::kInvalidArgument;
  std::string message;
};

// Reads and proposed writes of one transaction against a fixed state. A null
// write value deletes the key.
struct ExecResult {
  std::optional<Rejection> rejection;
  std::set<std::string> reads;
  std::map<std::string, nlohmann::json> writes;

  bool ok() const { return !rejection; }
};

struct Genesis {
  std::string chain_id = "ces";
  Identity registrar;  // the operator
  PublicKey orderer_key{};
  std::map<std::string, double> initial_balances;
  std::vector<int> buses;

  WorldState initial_state() const;
};

nlohmann::json to_json(const Genesis& genesis);
Genesis genesis_from_json(const nlohmann::json& doc);

// Pure: validates signature, nonce and kind rules against `state`.
ExecResult execute(const Transaction& tx, const WorldState& state, const Genesis& genesis);

struct TxOutcome {
  bool valid = true;
  std::string reason;  // rejection code and message when invalid
};

struct BlockHeader {
  std::uint64_t height = 0;
  Digest prev_hash{};
  Digest tx_root{};
  Digest state_hash{};
  std::int64_t timestamp = 0;
  std::string label;  // orchestration tag, e.g. "phase1" or "phase2:13"

  Digest hash() const;
};

struct Block {
  BlockHeader header;
  std::vector<Transaction> txs;
  std::vector<TxOutcome> outcomes;
  Signature orderer_signature{};
};

// Binary hash tree over (tx, outcome) leaves; odd nodes are paired with
// themselves, the empty list hashes to zero.
Digest tx_root(const std::vector<Transaction>& txs, const std::vector<TxOutcome>& outcomes);

nlohmann::json to_json(const Block& block);
Block block_from_json(const nlohmann::json& doc);

struct ChainCheck {
  bool ok = true;
  std::optional<std::uint64_t> first_bad_height;
  std::string reason;
  std::string state_hash;  // hex, final re-derived world state when ok
};

// One validating replica: its own copy of the chain and world state.
class Peer {
 public:
  Peer(std::string id, Genesis genesis);

  const std::string& id() const { return id_; }
  const Genesis& genesis() const { return genesis_; }
  const std::vector<Block>& chain() const { return chain_; }
  std::vector<Block>& mutable_chain() { return chain_; }
  const WorldState& state() const { return state_; }
  std::uint64_t height() const { return chain_.back().header.height; }
  Digest head_hash() const { return chain_.back().header.hash(); }

  // Re-executes and applies the block to the local state; returns the local
  // state hash. Mismatches with the header are recorded, not thrown.
  Digest apply(const Block& block);
  const std::vector<std::string>& faults() const { return faults_; }

  // Full recomputation from genesis.
  ChainCheck validate_chain() const;

 private:
  std::string id_;
  Genesis genesis_;
  std::vector<Block> chain_;
  WorldState state_;
  std::vector<std::string> faults_;
};

struct ReplicationReport {
  std::vector<std::pair<std::string, std::string>> hashes;  // peer id, hex state hash
  std::vector<std::string> divergent;

  bool ok() const { return divergent.empty(); }
};

ReplicationReport replicate(const Block& block, std::vector<Peer>& peers);

// Single ordering service plus replicated peers. Writes serialize through
// submit / cut_block.
class Network {
 public:
  Network(Genesis genesis, const KeyPair& orderer, std::size_t num_peers = 4);

  const Genesis& genesis() const { return genesis_; }
  const WorldState& state() const { return orderer_.state(); }
  const std::vector<Block>& chain() const { return orderer_.chain(); }
  std::uint64_t height() const { return orderer_.height(); }
  std::vector<Peer>& peers() { return peers_; }
  const std::vector<Peer>& peers() const { return peers_; }
  std::size_t pending() const { return pending_.size(); }
  void discard_pending() { pending_.clear(); }
  const Peer& orderer() const { return orderer_; }

  // Execute phase against the committed head; accepted txs join the pool.
  ExecResult submit(const Transaction& tx);
  // Ordering + validation; throws Error{kOrdering} when the pool is empty
  // and Error{kReplicationFault} when peers disagree.
  const Block& cut_block(std::int64_t timestamp, const std::string& label = "");

  // Next unused nonce for the submitter, counting pooled txs.
  std::uint64_t next_nonce(const std::string& submitter) const;
  std::optional<Identity> identity(const std::string& id) const;
  std::optional<std::string> identity_of_bus(int bus) const;
  double balance(const std::string& id) const;

 private:
  Genesis genesis_;
  KeyPair orderer_key_;
  Peer orderer_;
  std::vector<Peer> peers_;
  std::vector<Transaction> pending_;
};

// Deterministic ordering and first-wins validation of a pending list
// against `state`; signs the header with the orderer key.
Block order_and_commit(std::vector<Transaction> pending, const WorldState& state, const Genesis& genesis,
                       const BlockHeader& prev, std::int64_t timestamp, const std::string& label,
                       const KeyPair& orderer);

// Builds the signed Enroll transaction; the registrar key must be the
// genesis operator key for it to validate.
Transaction register_identity(const Identity& registrar, const KeyPair& registrar_key, std::uint64_t nonce,
                              const Identity& identity);

nlohmann::json export_chain(const Peer& peer);
// Replays an exported chain into a fresh peer without trusting it; use
// validate_chain on the result.
Peer import_chain(const nlohmann::json& doc, const std::string& peer_id = "import");
// Text form; anything but the canonical rendering is rejected so that no
// byte of an export can change without detection.
std::string export_chain_text(const Peer& peer);
Peer import_chain_text(const std::string& text, const std::string& peer_id = "import");

// State keys.
std::string identity_key(const std::string& id);
std::string bus_key(int bus);
std::string nonce_key(const std::string& id);
std::string balance_key(const std::string& id);
std::string preference_key(int bus, int day);
std::string offer_key(const std::string& offer_id);
std::string contract_key(const std::string& offer_id);
std::string settlement_key(int day, std::optional<int> hour);

}  // namespace ces::ledger
