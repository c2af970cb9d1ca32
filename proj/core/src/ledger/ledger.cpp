#include "ces/ledger/ledger.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "../common/json_util.hpp"
#include "ces/ders/registry.hpp"

namespace ces::ledger {

using nlohmann::json;

namespace {

constexpr Digest kZero{};

std::string hex(const Digest& d) { return to_hex(d); }

Rejection reject(ErrorCode code, std::string message) { return Rejection{code, std::move(message)}; }

std::string describe(const Rejection& r) { return std::string(to_string(r.code)) + ": " + r.message; }

bool is_nonce_key(const std::string& key) { return key.rfind("nonce/", 0) == 0; }

std::uint64_t stored_nonce(const WorldState& state, const std::string& id) {
  const auto* v = state.find(nonce_key(id));
  return v ? v->get<std::uint64_t>() : 0;
}

double stored_balance(const WorldState& state, const std::string& id) {
  const auto* v = state.find(balance_key(id));
  return v ? v->get<double>() : 0.0;
}

std::optional<Identity> stored_identity(const WorldState& state, const std::string& id) {
  const auto* v = state.find(identity_key(id));
  if (!v) return std::nullopt;
  return identity_from_json(*v);
}

std::optional<Identity> owner_of(const WorldState& state, int bus, ExecResult& out) {
  out.reads.insert(bus_key(bus));
  const auto* v = state.find(bus_key(bus));
  if (!v) return std::nullopt;
  out.reads.insert(identity_key(v->get<std::string>()));
  return stored_identity(state, v->get<std::string>());
}

// Kind-specific rules; fills reads/writes or returns a rejection.
std::optional<Rejection> run_kind(const Transaction& tx, const Identity& who, const WorldState& state,
                                  const Genesis& genesis, ExecResult& out) {
  const json& p = tx.payload;
  const std::string where = std::string(to_string(tx.kind)) + " payload";
  switch (tx.kind) {
    case TxKind::kEnroll: {
      if (who.role != Role::kOperator) return reject(ErrorCode::kPermissionDenied, "only the operator enrolls identities");
      detail::require_keys(p, {"id", "role", "public_key"}, {"bus", "ct_class", "enrolled_at"}, where);
      Identity id;
      id.id = detail::string(p["id"], where + ".id");
      if (id.id.empty()) return reject(ErrorCode::kMalformedDocument, "identity id must be non-empty");
      id.role = parse_role(detail::string(p["role"], where + ".role"));
      id.public_key = from_hex_fixed<32>(detail::string(p["public_key"], where + ".public_key"));
      if (p.contains("enrolled_at")) id.enrolled_at = p["enrolled_at"].get<std::int64_t>();
      out.reads.insert(identity_key(id.id));
      if (state.find(identity_key(id.id))) return reject(ErrorCode::kDuplicateId, "identity '" + id.id + "' already enrolled");
      if (p.contains("bus")) id.bus = detail::integer(p["bus"], where + ".bus");
      if (p.contains("ct_class")) id.ct_class = feeder::parse_ct_class(detail::string(p["ct_class"], where + ".ct_class"));
      if (id.role == Role::kCrowdsourcee) {
        if (!id.bus || !id.ct_class) {
          return reject(ErrorCode::kMalformedDocument, "crowdsourcee enrollment needs bus and ct_class");
        }
        if (std::find(genesis.buses.begin(), genesis.buses.end(), *id.bus) == genesis.buses.end()) {
          return reject(ErrorCode::kUnknownBus, "bus " + std::to_string(*id.bus) + " is not on the feeder");
        }
        out.reads.insert(bus_key(*id.bus));
        if (state.find(bus_key(*id.bus))) {
          return reject(ErrorCode::kDuplicateId, "bus " + std::to_string(*id.bus) + " already has an identity");
        }
        out.writes[bus_key(*id.bus)] = id.id;
      }
      out.writes[identity_key(id.id)] = to_json(id);
      return std::nullopt;
    }
    case TxKind::kRegisterPreference: {
      detail::require_keys(p, {"bus", "day", "preferences"}, {}, where);
      const int bus = detail::integer(p["bus"], where + ".bus");
      const int day = detail::integer(p["day"], where + ".day");
      if (who.role != Role::kCrowdsourcee || !who.bus || *who.bus != bus) {
        return reject(ErrorCode::kPermissionDenied, "preferences may only be registered by the bus owner");
      }
      ders::preferences_from_json(p["preferences"]);
      out.writes[preference_key(bus, day)] = p["preferences"];
      return std::nullopt;
    }
    case TxKind::kTradeOffer: {
      detail::require_keys(p, {"day", "trade"}, {}, where);
      const int day = detail::integer(p["day"], where + ".day");
      const auto trade = ders::trade_from_json(p["trade"]);
      if (trade.id.empty()) return reject(ErrorCode::kMalformedDocument, "offers need a trade id");
      if (!(trade.energy > 0.0) || trade.window_start < 0 || trade.window_end <= trade.window_start) {
        return reject(ErrorCode::kInvalidArgument, "offer needs positive energy and a non-empty window");
      }
      if (who.role != Role::kCrowdsourcee || !who.bus || *who.bus != trade.seller_bus) {
        return reject(ErrorCode::kPermissionDenied, "offers may only be submitted by the selling bus owner");
      }
      if (who.ct_class != feeder::CtClass::kCt2) {
        return reject(ErrorCode::kNotCt2, "energy trading transactions require a CT2 seller");
      }
      if (trade.ett_type == ders::EttType::kB) {
        if (!trade.buyer_bus || *trade.buyer_bus == trade.seller_bus) {
          return reject(ErrorCode::kInvalidArgument, "Type B offers need a distinct buyer bus");
        }
        const auto buyer = owner_of(state, *trade.buyer_bus, out);
        if (!buyer) return reject(ErrorCode::kUnknownBus, "buyer bus has no enrolled identity");
        if (buyer->ct_class != feeder::CtClass::kCt2) {
          return reject(ErrorCode::kNotCt2, "Type B trades only occur between CT2 crowdsourcees");
        }
      }
      out.reads.insert(offer_key(trade.id));
      if (state.find(offer_key(trade.id))) return reject(ErrorCode::kConflict, "offer '" + trade.id + "' already exists");
      out.writes[offer_key(trade.id)] = json{{"day", day}, {"trade", p["trade"]}, {"status", "open"}, {"seller", who.id}};
      return std::nullopt;
    }
    case TxKind::kContractCommit: {
      detail::require_keys(p, {"offer_id"}, {"price"}, where);
      const std::string offer_id = detail::string(p["offer_id"], where + ".offer_id");
      out.reads.insert(offer_key(offer_id));
      const auto* offer = state.find(offer_key(offer_id));
      if (!offer) return reject(ErrorCode::kNotFound, "no offer '" + offer_id + "'");
      if ((*offer)["status"] != "open") return reject(ErrorCode::kConflict, "offer '" + offer_id + "' is already committed");
      const auto trade = ders::trade_from_json((*offer)["trade"]);
      if (trade.ett_type == ders::EttType::kB) {
        if (who.role != Role::kCrowdsourcee || !who.bus || *who.bus != *trade.buyer_bus) {
          return reject(ErrorCode::kPermissionDenied, "only the named buyer accepts a Type B offer");
        }
      } else if (who.role != Role::kOperator) {
        return reject(ErrorCode::kPermissionDenied, "only the operator accepts a Type A offer");
      }
      json contract = {{"day", (*offer)["day"]}, {"trade", (*offer)["trade"]}, {"buyer", who.id}};
      if (p.contains("price")) {
        const double price = detail::number(p["price"], where + ".price");
        contract["price"] = price;
      } else if (trade.price) {
        contract["price"] = *trade.price;
      }
      json updated = *offer;
      updated["status"] = "committed";
      out.writes[offer_key(offer_id)] = std::move(updated);
      out.writes[contract_key(offer_id)] = std::move(contract);
      return std::nullopt;
    }
    case TxKind::kSettleIncentive: {
      if (who.role != Role::kOperator) return reject(ErrorCode::kPermissionDenied, "only the operator settles incentives");
      detail::require_keys(p, {"day", "payments"}, {"hour", "record"}, where);
      const int day = detail::integer(p["day"], where + ".day");
      std::optional<int> hour;
      if (p.contains("hour")) hour = detail::integer(p["hour"], where + ".hour");
      const std::string key = settlement_key(day, hour);
      out.reads.insert(key);
      if (state.find(key)) return reject(ErrorCode::kConflict, "settlement '" + key + "' already recorded");
      if (!p["payments"].is_array()) return reject(ErrorCode::kMalformedDocument, where + ".payments must be an array");
      std::map<std::string, double> credit;
      double total = 0.0;
      for (const auto& pay : p["payments"]) {
        detail::require_keys(pay, {"bus", "amount"}, {}, where + ".payments[]");
        const int bus = detail::integer(pay["bus"], where + ".payments[].bus");
        const double amount = detail::number(pay["amount"], where + ".payments[].amount");
        if (amount < 0.0) return reject(ErrorCode::kInvalidArgument, "payments must be non-negative");
        const auto owner = owner_of(state, bus, out);
        if (!owner) return reject(ErrorCode::kUnknownBus, "bus " + std::to_string(bus) + " has no enrolled identity");
        credit[owner->id] += amount;
        total += amount;
      }
      credit[who.id] -= total;
      for (const auto& [id, delta] : credit) {
        out.reads.insert(balance_key(id));
        out.writes[balance_key(id)] = stored_balance(state, id) + delta;
      }
      out.writes[key] = p;
      return std::nullopt;
    }
  }
  return reject(ErrorCode::kInvalidArgument, "unknown transaction kind");
}

// Validate phase: sequential nonce check and first-wins write conflicts.
std::vector<TxOutcome> validate_and_apply(const std::vector<Transaction>& txs, WorldState& state,
                                          const Genesis& genesis) {
  const WorldState before = state;
  std::vector<TxOutcome> outcomes;
  std::set<std::string> written;
  std::map<std::string, std::uint64_t> last_nonce;
  for (const auto& tx : txs) {
    ExecResult r = execute(tx, before, genesis);
    TxOutcome o;
    if (!r.ok()) {
      o = {false, describe(*r.rejection)};
    } else {
      auto [it, fresh] = last_nonce.emplace(tx.submitter, stored_nonce(before, tx.submitter));
      if (tx.nonce <= it->second) {
        o = {false, std::string(to_string(ErrorCode::kStaleNonce)) + ": nonce already used in this block"};
      } else {
        for (const auto& [key, value] : r.writes) {
          if (!is_nonce_key(key) && written.count(key)) {
            o = {false, std::string(to_string(ErrorCode::kConflict)) + ": write conflict on '" + key + "'"};
            break;
          }
        }
      }
      if (o.valid) {
        it->second = tx.nonce;
        for (auto& [key, value] : r.writes) {
          if (!is_nonce_key(key)) written.insert(key);
          if (value.is_null()) {
            state.entries.erase(key);
          } else {
            state.entries[key] = value;
          }
        }
      }
    }
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

bool tx_order(const Transaction& a, const Transaction& b) {
  return std::tie(a.submitter, a.nonce, a.tx_id) < std::tie(b.submitter, b.nonce, b.tx_id);
}

Block genesis_block(const Genesis& g) {
  Block b;
  b.header.height = 0;
  b.header.prev_hash = kZero;
  b.header.tx_root = kZero;
  b.header.state_hash = g.initial_state().hash();
  b.header.timestamp = 0;
  b.header.label = "genesis:" + g.chain_id;
  return b;
}

json header_json(const BlockHeader& h) {
  return {{"height", h.height},       {"prev_hash", hex(h.prev_hash)}, {"tx_root", hex(h.tx_root)},
          {"state_hash", hex(h.state_hash)}, {"timestamp", h.timestamp},   {"label", h.label}};
}

bool same_header(const BlockHeader& a, const BlockHeader& b) { return header_json(a) == header_json(b); }

// Checks one non-genesis block against the previous header and the state
// before it; applies it to `state`. Returns an empty string when sound.
std::string check_block(const Block& block, const BlockHeader& prev, WorldState& state, const Genesis& genesis) {
  const auto& h = block.header;
  if (h.height != prev.height + 1) return "height does not follow the previous block";
  if (h.prev_hash != prev.hash()) return "prev_hash does not match the previous header";
  const auto hh = h.hash();
  if (!verify(std::string_view(reinterpret_cast<const char*>(hh.data()), hh.size()), block.orderer_signature,
              genesis.orderer_key)) {
    return "orderer signature does not verify";
  }
  if (block.outcomes.size() != block.txs.size()) return "outcome count differs from transaction count";
  if (!std::is_sorted(block.txs.begin(), block.txs.end(), tx_order)) return "transactions are not in canonical order";
  if (tx_root(block.txs, block.outcomes) != h.tx_root) return "tx_root does not match the transactions";
  const auto outcomes = validate_and_apply(block.txs, state, genesis);
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (outcomes[i].valid != block.outcomes[i].valid || outcomes[i].reason != block.outcomes[i].reason) {
      return "re-validation of transaction " + block.txs[i].tx_id + " disagrees with the recorded outcome";
    }
  }
  if (state.hash() != h.state_hash) return "state_hash does not match the re-derived world state";
  return {};
}

template <std::size_t N>
std::array<std::uint8_t, N> hex_field(const json& doc, const char* key, const std::string& where) {
  return from_hex_fixed<N>(detail::string(doc.at(key), where + "." + key));
}

}  // namespace

std::string_view to_string(Role role) { return role == Role::kOperator ? "operator" : "crowdsourcee"; }

Role parse_role(std::string_view text) {
  if (text == "operator") return Role::kOperator;
  if (text == "crowdsourcee") return Role::kCrowdsourcee;
  throw Error(ErrorCode::kMalformedDocument, "unknown role '" + std::string(text) + "'");
}

std::string_view to_string(TxKind kind) {
  switch (kind) {
    case TxKind::kEnroll: return "Enroll";
    case TxKind::kRegisterPreference: return "RegisterPreference";
    case TxKind::kTradeOffer: return "TradeOffer";
    case TxKind::kContractCommit: return "ContractCommit";
    case TxKind::kSettleIncentive: return "SettleIncentive";
  }
  return "unknown";
}

TxKind parse_tx_kind(std::string_view text) {
  for (auto k : {TxKind::kEnroll, TxKind::kRegisterPreference, TxKind::kTradeOffer, TxKind::kContractCommit,
                 TxKind::kSettleIncentive}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::kMalformedDocument, "unknown transaction kind '" + std::string(text) + "'");
}

json to_json(const Identity& id) {
  json j = {{"id", id.id}, {"role", to_string(id.role)}, {"public_key", to_hex(id.public_key)},
            {"enrolled_at", id.enrolled_at}};
  if (id.bus) j["bus"] = *id.bus;
  if (id.ct_class) j["ct_class"] = feeder::to_string(*id.ct_class);
  return j;
}

Identity identity_from_json(const json& doc) {
  const std::string where = "identity";
  detail::require_keys(doc, {"id", "role", "public_key", "enrolled_at"}, {"bus", "ct_class"}, where);
  Identity id;
  id.id = detail::string(doc["id"], where + ".id");
  id.role = parse_role(detail::string(doc["role"], where + ".role"));
  id.public_key = hex_field<32>(doc, "public_key", where);
  if (!doc["enrolled_at"].is_number_integer()) throw Error(ErrorCode::kMalformedDocument, "identity.enrolled_at must be an integer");
  id.enrolled_at = doc["enrolled_at"].get<std::int64_t>();
  if (doc.contains("bus")) id.bus = detail::integer(doc["bus"], where + ".bus");
  if (doc.contains("ct_class")) id.ct_class = feeder::parse_ct_class(detail::string(doc["ct_class"], where + ".ct_class"));
  return id;
}

std::string Transaction::signing_body() const {
  return json{{"kind", to_string(kind)}, {"payload", payload}, {"submitter", submitter}, {"nonce", nonce}}.dump();
}

std::string Transaction::compute_id() const { return sha256_hex(signing_body() + to_hex(signature)); }

Transaction make_transaction(TxKind kind, json payload, const std::string& submitter, std::uint64_t nonce,
                             const KeyPair& key) {
  Transaction tx;
  tx.kind = kind;
  tx.payload = std::move(payload);
  tx.submitter = submitter;
  tx.nonce = nonce;
  tx.signature = sign(tx.signing_body(), key);
  tx.tx_id = tx.compute_id();
  return tx;
}

json to_json(const Transaction& tx) {
  return {{"tx_id", tx.tx_id},   {"kind", to_string(tx.kind)}, {"submitter", tx.submitter},
          {"nonce", tx.nonce},   {"payload", tx.payload},      {"signature", to_hex(tx.signature)}};
}

Transaction transaction_from_json(const json& doc) {
  const std::string where = "transaction";
  detail::require_keys(doc, {"tx_id", "kind", "submitter", "nonce", "payload", "signature"}, {}, where);
  Transaction tx;
  tx.tx_id = detail::string(doc["tx_id"], where + ".tx_id");
  tx.kind = parse_tx_kind(detail::string(doc["kind"], where + ".kind"));
  tx.submitter = detail::string(doc["submitter"], where + ".submitter");
  if (!doc["nonce"].is_number_unsigned()) throw Error(ErrorCode::kMalformedDocument, "transaction.nonce must be unsigned");
  tx.nonce = doc["nonce"].get<std::uint64_t>();
  tx.payload = doc["payload"];
  tx.signature = hex_field<64>(doc, "signature", where);
  return tx;
}

const json* WorldState::find(const std::string& key) const {
  auto it = entries.find(key);
  return it == entries.end() ? nullptr : &it->second;
}

json WorldState::to_json() const {
  json j = json::object();
  for (const auto& [k, v] : entries) j[k] = v;
  return j;
}

Digest WorldState::hash() const { return sha256(to_json().dump()); }

WorldState Genesis::initial_state() const {
  WorldState s;
  s.entries[identity_key(registrar.id)] = ledger::to_json(registrar);
  for (const auto& [id, amount] : initial_balances) s.entries[balance_key(id)] = amount;
  s.entries["meta/chain_id"] = chain_id;
  s.entries["meta/buses"] = buses;
  s.entries["meta/orderer_key"] = to_hex(orderer_key);
  return s;
}

json to_json(const Genesis& g) {
  json balances = json::object();
  for (const auto& [id, amount] : g.initial_balances) balances[id] = amount;
  return {{"chain_id", g.chain_id},
          {"registrar", to_json(g.registrar)},
          {"orderer_key", to_hex(g.orderer_key)},
          {"initial_balances", balances},
          {"buses", g.buses}};
}

Genesis genesis_from_json(const json& doc) {
  const std::string where = "genesis";
  detail::require_keys(doc, {"chain_id", "registrar", "orderer_key", "initial_balances", "buses"}, {}, where);
  Genesis g;
  g.chain_id = detail::string(doc["chain_id"], where + ".chain_id");
  g.registrar = identity_from_json(doc["registrar"]);
  if (g.registrar.role != Role::kOperator) throw Error(ErrorCode::kMalformedDocument, "genesis registrar must be an operator");
  g.orderer_key = hex_field<32>(doc, "orderer_key", where);
  if (!doc["initial_balances"].is_object()) throw Error(ErrorCode::kMalformedDocument, "genesis.initial_balances must be an object");
  for (const auto& item : doc["initial_balances"].items()) {
    g.initial_balances[item.key()] = detail::number(item.value(), where + ".initial_balances");
  }
  if (!doc["buses"].is_array()) throw Error(ErrorCode::kMalformedDocument, "genesis.buses must be an array");
  for (const auto& b : doc["buses"]) g.buses.push_back(detail::integer(b, where + ".buses[]"));
  return g;
}

ExecResult execute(const Transaction& tx, const WorldState& state, const Genesis& genesis) {
  ExecResult out;
  out.reads.insert(identity_key(tx.submitter));
  out.reads.insert(nonce_key(tx.submitter));
  const auto who = stored_identity(state, tx.submitter);
  if (!who) {
    out.rejection = reject(ErrorCode::kUnauthenticated, "submitter '" + tx.submitter + "' is not enrolled");
    return out;
  }
  if (!verify(tx.signing_body(), tx.signature, who->public_key)) {
    out.rejection = reject(ErrorCode::kUnauthenticated, "signature does not verify for '" + tx.submitter + "'");
    return out;
  }
  if (tx.tx_id != tx.compute_id()) {
    out.rejection = reject(ErrorCode::kMalformedDocument, "tx_id does not match the transaction content");
    return out;
  }
  if (tx.nonce <= stored_nonce(state, tx.submitter)) {
    out.rejection = reject(ErrorCode::kStaleNonce, "nonce " + std::to_string(tx.nonce) + " already used");
    return out;
  }
  try {
    if (auto r = run_kind(tx, *who, state, genesis, out)) {
      out.rejection = std::move(r);
      out.writes.clear();
      return out;
    }
  } catch (const Error& e) {
    out.rejection = reject(e.code(), e.what());
    out.writes.clear();
    return out;
  } catch (const json::exception& e) {
    out.rejection = reject(ErrorCode::kMalformedDocument, e.what());
    out.writes.clear();
    return out;
  }
  out.writes[nonce_key(tx.submitter)] = tx.nonce;
  return out;
}

Digest BlockHeader::hash() const { return sha256(header_json(*this).dump()); }

Digest tx_root(const std::vector<Transaction>& txs, const std::vector<TxOutcome>& outcomes) {
  if (txs.empty()) return kZero;
  std::vector<Digest> level;
  level.reserve(txs.size());
  for (std::size_t i = 0; i < txs.size(); ++i) {
    json leaf = {{"tx", to_json(txs[i])}};
    if (i < outcomes.size()) leaf["outcome"] = {{"valid", outcomes[i].valid}, {"reason", outcomes[i].reason}};
    level.push_back(sha256(leaf.dump()));
  }
  while (level.size() > 1) {
    std::vector<Digest> next;
    for (std::size_t i = 0; i < level.size(); i += 2) {
      next.push_back(sha256(level[i], i + 1 < level.size() ? level[i + 1] : level[i]));
    }
    level = std::move(next);
  }
  return level.front();
}

json to_json(const Block& b) {
  json txs = json::array(), outcomes = json::array();
  for (const auto& tx : b.txs) txs.push_back(to_json(tx));
  for (const auto& o : b.outcomes) outcomes.push_back({{"valid", o.valid}, {"reason", o.reason}});
  return {{"header", header_json(b.header)},
          {"txs", txs},
          {"outcomes", outcomes},
          {"orderer_signature", to_hex(b.orderer_signature)}};
}

Block block_from_json(const json& doc) {
  const std::string where = "block";
  detail::require_keys(doc, {"header", "txs", "outcomes", "orderer_signature"}, {}, where);
  Block b;
  const auto& h = doc["header"];
  detail::require_keys(h, {"height", "prev_hash", "tx_root", "state_hash", "timestamp", "label"}, {}, where + ".header");
  if (!h["height"].is_number_unsigned() || !h["timestamp"].is_number_integer()) {
    throw Error(ErrorCode::kMalformedDocument, "block.header height/timestamp must be integers");
  }
  b.header.height = h["height"].get<std::uint64_t>();
  b.header.prev_hash = hex_field<32>(h, "prev_hash", where);
  b.header.tx_root = hex_field<32>(h, "tx_root", where);
  b.header.state_hash = hex_field<32>(h, "state_hash", where);
  b.header.timestamp = h["timestamp"].get<std::int64_t>();
  b.header.label = detail::string(h["label"], where + ".label");
  if (!doc["txs"].is_array() || !doc["outcomes"].is_array()) {
    throw Error(ErrorCode::kMalformedDocument, "block txs/outcomes must be arrays");
  }
  for (const auto& t : doc["txs"]) b.txs.push_back(transaction_from_json(t));
  for (const auto& o : doc["outcomes"]) {
    detail::require_keys(o, {"valid", "reason"}, {}, where + ".outcomes[]");
    b.outcomes.push_back({detail::boolean(o["valid"], where + ".valid"), detail::string(o["reason"], where + ".reason")});
  }
  b.orderer_signature = hex_field<64>(doc, "orderer_signature", where);
  return b;
}

Block order_and_commit(std::vector<Transaction> pending, const WorldState& state, const Genesis& genesis,
                       const BlockHeader& prev, std::int64_t timestamp, const std::string& label,
                       const KeyPair& orderer) {
  if (pending.empty()) throw Error(ErrorCode::kOrdering, "no pending transactions to order");
  std::sort(pending.begin(), pending.end(), tx_order);
  WorldState next = state;
  Block b;
  b.outcomes = validate_and_apply(pending, next, genesis);
  b.txs = std::move(pending);
  b.header.height = prev.height + 1;
  b.header.prev_hash = prev.hash();
  b.header.tx_root = tx_root(b.txs, b.outcomes);
  b.header.state_hash = next.hash();
  b.header.timestamp = timestamp;
  b.header.label = label;
  const auto hh = b.header.hash();
  b.orderer_signature = sign(std::string_view(reinterpret_cast<const char*>(hh.data()), hh.size()), orderer);
  return b;
}

Peer::Peer(std::string id, Genesis genesis)
    : id_(std::move(id)), genesis_(std::move(genesis)), state_(genesis_.initial_state()) {
  chain_.push_back(genesis_block(genesis_));
}

Digest Peer::apply(const Block& block) {
  WorldState next = state_;
  std::string problem = check_block(block, chain_.back().header, next, genesis_);
  if (!problem.empty()) {
    faults_.push_back("height " + std::to_string(block.header.height) + ": " + problem);
    // Apply regardless so the divergence shows in the state hash.
    next = state_;
    validate_and_apply(block.txs, next, genesis_);
  }
  state_ = std::move(next);
  chain_.push_back(block);
  return state_.hash();
}

ChainCheck Peer::validate_chain() const {
  ChainCheck check;
  auto fail = [&](std::uint64_t h, std::string why) {
    check.ok = false;
    check.first_bad_height = h;
    check.reason = std::move(why);
    return check;
  };
  if (chain_.empty()) return fail(0, "chain is empty");
  const Block expected = genesis_block(genesis_);
  const Block& g = chain_.front();
  if (!same_header(g.header, expected.header) || !g.txs.empty() || !g.outcomes.empty() ||
      g.orderer_signature != expected.orderer_signature) {
    return fail(0, "genesis block does not match the genesis document");
  }
  WorldState state = genesis_.initial_state();
  for (std::size_t i = 1; i < chain_.size(); ++i) {
    std::string problem = check_block(chain_[i], chain_[i - 1].header, state, genesis_);
    if (!problem.empty()) return fail(chain_[i].header.height, problem);
  }
  check.state_hash = to_hex(state.hash());
  return check;
}

ReplicationReport replicate(const Block& block, std::vector<Peer>& peers) {
  ReplicationReport report;
  for (auto& peer : peers) {
    const std::size_t faults_before = peer.faults().size();
    const Digest h = peer.apply(block);
    report.hashes.emplace_back(peer.id(), to_hex(h));
    // A peer whose own validation failed is divergent even if hashes agree.
    if (h != block.header.state_hash || peer.faults().size() > faults_before) report.divergent.push_back(peer.id());
  }
  return report;
}

Network::Network(Genesis genesis, const KeyPair& orderer, std::size_t num_peers)
    : genesis_(std::move(genesis)), orderer_key_(orderer), orderer_("orderer", genesis_) {
  if (orderer.public_key != genesis_.orderer_key) {
    throw Error(ErrorCode::kInvalidArgument, "orderer key does not match the genesis document");
  }
  for (std::size_t i = 0; i < num_peers; ++i) peers_.emplace_back("peer-" + std::to_string(i), genesis_);
}

ExecResult Network::submit(const Transaction& tx) {
  ExecResult r = execute(tx, orderer_.state(), genesis_);
  if (!r.ok()) return r;
  for (const auto& p : pending_) {
    if (p.submitter == tx.submitter && p.nonce == tx.nonce) {
      r.rejection = reject(ErrorCode::kStaleNonce, "nonce " + std::to_string(tx.nonce) + " already pending");
      return r;
    }
    for (const auto& [key, value] : execute(p, orderer_.state(), genesis_).writes) {
      if (!is_nonce_key(key) && r.writes.count(key)) {
        r.rejection = reject(ErrorCode::kConflict, "pending transaction already writes '" + key + "'");
        return r;
      }
    }
  }
  pending_.push_back(tx);
  return r;
}

const Block& Network::cut_block(std::int64_t timestamp, const std::string& label) {
  Block b = order_and_commit(pending_, orderer_.state(), genesis_, orderer_.chain().back().header, timestamp, label,
                             orderer_key_);
  pending_.clear();
  orderer_.apply(b);
  const auto report = replicate(b, peers_);
  if (!report.ok()) {
    std::string who;
    for (const auto& id : report.divergent) who += (who.empty() ? "" : ", ") + id;
    throw Error(ErrorCode::kReplicationFault, "peers diverged at height " + std::to_string(b.header.height) + ": " + who);
  }
  return orderer_.chain().back();
}

std::uint64_t Network::next_nonce(const std::string& submitter) const {
  std::uint64_t n = stored_nonce(orderer_.state(), submitter);
  for (const auto& p : pending_) {
    if (p.submitter == submitter) n = std::max(n, p.nonce);
  }
  return n + 1;
}

std::optional<Identity> Network::identity(const std::string& id) const { return stored_identity(orderer_.state(), id); }

std::optional<std::string> Network::identity_of_bus(int bus) const {
  const auto* v = orderer_.state().find(bus_key(bus));
  if (!v) return std::nullopt;
  return v->get<std::string>();
}

double Network::balance(const std::string& id) const { return stored_balance(orderer_.state(), id); }

Transaction register_identity(const Identity& registrar, const KeyPair& registrar_key, std::uint64_t nonce,
                              const Identity& identity) {
  json payload = {{"id", identity.id}, {"role", to_string(identity.role)}, {"public_key", to_hex(identity.public_key)},
                  {"enrolled_at", identity.enrolled_at}};
  if (identity.bus) payload["bus"] = *identity.bus;
  if (identity.ct_class) payload["ct_class"] = feeder::to_string(*identity.ct_class);
  return make_transaction(TxKind::kEnroll, std::move(payload), registrar.id, nonce, registrar_key);
}

json export_chain(const Peer& peer) {
  json blocks = json::array();
  for (const auto& b : peer.chain()) blocks.push_back(to_json(b));
  return {{"genesis", to_json(peer.genesis())}, {"blocks", blocks}};
}

Peer import_chain(const json& doc, const std::string& peer_id) {
  detail::require_keys(doc, {"genesis", "blocks"}, {}, "chain export");
  if (!doc["blocks"].is_array()) throw Error(ErrorCode::kMalformedDocument, "chain export blocks must be an array");
  Peer peer(peer_id, genesis_from_json(doc["genesis"]));
  auto& chain = peer.mutable_chain();
  chain.clear();
  for (const auto& b : doc["blocks"]) chain.push_back(block_from_json(b));
  return peer;
}

std::string export_chain_text(const Peer& peer) { return export_chain(peer).dump(2); }

Peer import_chain_text(const std::string& text, const std::string& peer_id) {
  json doc;
  std::string canonical;
  try {
    doc = json::parse(text);
    canonical = doc.dump(2);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kMalformedDocument, std::string("chain export does not parse: ") + e.what());
  }
  if (canonical != text) throw Error(ErrorCode::kMalformedDocument, "chain export is not in canonical form");
  return import_chain(doc, peer_id);
}

std::string identity_key(const std::string& id) { return "identity/" + id; }
std::string bus_key(int bus) { return "bus/" + std::to_string(bus); }
std::string nonce_key(const std::string& id) { return "nonce/" + id; }
std::string balance_key(const std::string& id) { return "balance/" + id; }
std::string preference_key(int bus, int day) { return "pref/" + std::to_string(bus) + "/" + std::to_string(day); }
std::string offer_key(const std::string& offer_id) { return "offer/" + offer_id; }
std::string contract_key(const std::string& offer_id) { return "contract/" + offer_id; }
std::string settlement_key(int day, std::optional<int> hour) {
  return "settle/" + std::to_string(day) + (hour ? "/" + std::to_string(*hour) : std::string());
}

}  // namespace ces::ledger
