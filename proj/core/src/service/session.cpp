#include "ces/service/session.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "common/json_util.hpp"

namespace ces::service {

using nlohmann::json;

namespace {

std::string chain_id_for(const RunConfig& c) {
  return "ces-" + std::filesystem::path(c.recipe.feeder).stem().string() + "-d" + std::to_string(c.day) + "-s" +
         std::to_string(c.recipe.seed) + (c.islanded ? "-island" : "");
}

ledger::KeyPair derive_key(const std::string& chain_id, const std::string& who, std::uint64_t seed) {
  return ledger::keypair_from_seed(chain_id + "/" + who + "/" + std::to_string(seed));
}

market::Scenario make_scenario(const RunConfig& c, std::optional<scenario::IslandedCase>& islanded) {
  market::Scenario s = scenario::build_case_study(c.recipe);
  if (c.islanded) {
    islanded = scenario::islanded_variant(s);
    s = islanded->scenario;
  }
  if (c.tol) {
    if (!(*c.tol > 0.0)) throw Error(ErrorCode::kInvalidArgument, "tolerance must be positive");
    s.options.solver.tol = *c.tol;
  }
  s.options.lindistflow = c.lindistflow;
  return s;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v == 0.0 ? 0.0 : v);
  return buf;
}

const ledger::Block& check_block(const ledger::Block& block) {
  for (std::size_t i = 0; i < block.outcomes.size(); ++i) {
    if (!block.outcomes[i].valid) {
      throw Error(ErrorCode::kConflict, "transaction invalidated in block: " + block.outcomes[i].reason);
    }
  }
  return block;
}

}  // namespace

json to_json(const RunConfig& c) {
  json j = {{"recipe", scenario::to_json(c.recipe)}, {"lindistflow", c.lindistflow}, {"islanded", c.islanded},
            {"hours", c.hours},  {"peers", c.peers},   {"day", c.day},
            {"operator_funds", c.operator_funds}};
  j["tol"] = c.tol ? json(*c.tol) : json(nullptr);
  return j;
}

ledger::Genesis make_genesis(const market::Scenario& scenario, const ledger::KeyPair& operator_key,
                             const ledger::KeyPair& orderer_key, double funds, const std::string& chain_id) {
  ledger::Genesis g;
  g.chain_id = chain_id;
  g.registrar.id = Session::kOperatorId;
  g.registrar.role = ledger::Role::kOperator;
  g.registrar.public_key = operator_key.public_key;
  g.orderer_key = orderer_key.public_key;
  g.initial_balances[Session::kOperatorId] = funds;
  for (const auto& b : scenario.feeder.buses) g.buses.push_back(b.id);
  return g;
}

Session::Session(RunConfig config)
    : config_(std::move(config)),
      islanded_(),
      scenario_(make_scenario(config_, islanded_)),
      network_([&] {
        if (config_.hours < 0 || config_.hours > static_cast<int>(scenario_.horizon)) {
          throw Error(ErrorCode::kOutOfRange, "hours must lie in [0, " + std::to_string(scenario_.horizon) + "]");
        }
        const std::string chain = chain_id_for(config_);
        keys_[kOperatorId] = derive_key(chain, kOperatorId, config_.recipe.seed);
        const auto orderer = derive_key(chain, "orderer", config_.recipe.seed);
        return ledger::Network(make_genesis(scenario_, keys_[kOperatorId], orderer, config_.operator_funds, chain),
                               orderer, config_.peers);
      }()) {
  // Trades become binding only through the ledger.
  for (const auto& t : scenario_.trades) offers_[t.id] = t;
  scenario_.trades.clear();
  for (auto& [bus, c] : scenario_.crowdsourcees) c.preferences.p2p_trades.clear();
}

std::string Session::bus_identity(int bus) { return "bus-" + std::to_string(bus); }

const ledger::KeyPair& Session::key_of(const std::string& who) const {
  auto it = keys_.find(who);
  if (it == keys_.end()) throw Error(ErrorCode::kUnauthenticated, "no key for identity '" + who + "'");
  return it->second;
}

void Session::require_role(const std::string& who, ledger::Role role) const {
  auto id = network_.identity(who);
  if (!id) throw Error(ErrorCode::kUnauthenticated, "unknown identity '" + who + "'");
  if (id->role != role) throw Error(ErrorCode::kPermissionDenied, "operation not permitted for '" + who + "'");
}

ledger::Transaction Session::sign(const std::string& who, ledger::TxKind kind, json payload) {
  return ledger::make_transaction(kind, std::move(payload), who, network_.next_nonce(who), key_of(who));
}

const ledger::Block& Session::commit(const std::vector<ledger::Transaction>& txs, const std::string& label,
                                     std::int64_t timestamp) {
  for (const auto& tx : txs) {
    auto r = network_.submit(tx);
    if (!r.ok()) {
      // Drop the partial pool so a failed request leaves no trace.
      if (network_.pending() > 0) network_.discard_pending();
      throw Error(r.rejection->code, r.rejection->message);
    }
  }
  const auto& block = check_block(network_.cut_block(timestamp, label));
  phase_heights_[label] = static_cast<int>(block.header.height);
  return block;
}

ledger::Identity Session::enroll(int bus) {
  ledger::Identity id;
  id.id = bus_identity(bus);
  id.role = ledger::Role::kCrowdsourcee;
  id.bus = bus;
  if (auto ct = scenario_.ct_class(bus)) id.ct_class = *ct;
  else throw Error(ErrorCode::kUnknownBus, "bus " + std::to_string(bus) + " has no crowdsourcee");
  const auto key = derive_key(network_.genesis().chain_id, id.id, config_.recipe.seed);
  id.public_key = key.public_key;
  id.enrolled_at = config_.day * 24;
  auto tx = ledger::register_identity(network_.genesis().registrar, key_of(kOperatorId),
                                      network_.next_nonce(kOperatorId), id);
  keys_.emplace(id.id, key);
  try {
    commit({tx}, "enroll:" + id.id, config_.day * 24);
  } catch (...) {
    if (!network_.identity(id.id)) keys_.erase(id.id);
    throw;
  }
  return id;
}

void Session::enroll_all() {
  std::vector<ledger::Transaction> txs;
  auto nonce = network_.next_nonce(kOperatorId);
  for (const auto& [bus, c] : scenario_.crowdsourcees) {
    ledger::Identity id;
    id.id = bus_identity(bus);
    id.role = ledger::Role::kCrowdsourcee;
    id.bus = bus;
    id.ct_class = c.ct_class;
    const auto key = derive_key(network_.genesis().chain_id, id.id, config_.recipe.seed);
    id.public_key = key.public_key;
    id.enrolled_at = config_.day * 24;
    keys_.emplace(id.id, key);
    txs.push_back(ledger::register_identity(network_.genesis().registrar, key_of(kOperatorId), nonce++, id));
  }
  commit(txs, "setup", config_.day * 24);
}

void Session::submit_preferences(const std::string& who, const ders::PreferenceSet& prefs) {
  require_role(who, ledger::Role::kCrowdsourcee);
  const int bus = *network_.identity(who)->bus;
  auto& c = scenario_.crowdsourcees.at(bus);
  ders::Crowdsourcee updated = c;
  updated.preferences = prefs;
  updated.preferences.p2p_trades = c.preferences.p2p_trades;
  if (!prefs.p2p_trades.empty()) {
    throw Error(ErrorCode::kMalformedDocument, "trades are offered through TradeOffer, not preferences");
  }
  if (!prefs.sell_to_utility.empty() && prefs.sell_to_utility.size() != scenario_.horizon) {
    throw Error(ErrorCode::kMalformedDocument, "sell_to_utility needs one flag per hour");
  }
  commit({sign(who, ledger::TxKind::kRegisterPreference,
               {{"bus", bus}, {"day", config_.day}, {"preferences", ders::to_json(prefs)}})},
         "preferences:" + who, config_.day * 24);
  c = std::move(updated);
}

void Session::offer_trade(const std::string& who, const ders::TradeRequest& trade) {
  require_role(who, ledger::Role::kCrowdsourcee);
  ders::validate_trade(trade, scenario_.crowdsourcees, scenario_.horizon);
  if (trade.ett_type == ders::EttType::kB && phase1_done()) {
    throw Error(ErrorCode::kConflict, "Type B offers close when Phase I clears");
  }
  if (trade.ett_type == ders::EttType::kA) {
    for (int t = trade.window_start; t < trade.window_end; ++t) {
      if (incentives_.count(t)) throw Error(ErrorCode::kConflict, "hour " + std::to_string(t) + " is already settled");
    }
  }
  commit({sign(who, ledger::TxKind::kTradeOffer, {{"day", config_.day}, {"trade", ders::to_json(trade)}})},
         "offer:" + trade.id, config_.day * 24);
  offers_[trade.id] = trade;
  if (trade.ett_type == ders::EttType::kA) {
    auto& flags = scenario_.crowdsourcees.at(trade.seller_bus).preferences.sell_to_utility;
    flags.resize(scenario_.horizon, false);
    for (int t = trade.window_start; t < trade.window_end; ++t) flags[t] = true;
  }
}

void Session::accept_trade(const std::string& who, const std::string& trade_id, std::optional<double> price) {
  auto it = offers_.find(trade_id);
  const auto* stored = network_.state().find(ledger::offer_key(trade_id));
  if (!stored) throw Error(ErrorCode::kNotFound, "no offer '" + trade_id + "'");
  if (it == offers_.end()) offers_[trade_id] = ders::trade_from_json((*stored)["trade"]);
  ders::TradeRequest trade = offers_.at(trade_id);
  if (trade.ett_type == ders::EttType::kB && phase1_done()) {
    throw Error(ErrorCode::kConflict, "Type B contracts close when Phase I clears");
  }
  json payload = {{"offer_id", trade_id}};
  if (price) payload["price"] = *price;
  commit({sign(who, ledger::TxKind::kContractCommit, payload)}, "contract:" + trade_id, config_.day * 24);
  if (price) trade.price = *price;
  if (trade.ett_type == ders::EttType::kB) {
    scenario_.trades.push_back(trade);
    scenario_.crowdsourcees.at(trade.seller_bus).preferences.p2p_trades.push_back(trade);
  }
}

const market::Equilibrium& Session::run_phase1(const std::string& who) {
  require_role(who, ledger::Role::kOperator);
  if (phase1_done()) throw Error(ErrorCode::kConflict, "Phase I already cleared for this day");
  market::Equilibrium eq = market::solve_phase1(scenario_);
  std::map<std::string, double> prices;
  for (const auto& t : scenario_.trades) {
    if (t.price) {
      prices[t.id] = *t.price;
      continue;
    }
    double sum = 0.0;
    for (int h = t.window_start; h < t.window_end; ++h) {
      sum += 0.5 * (eq.dlmp_at(t.seller_bus, h) + eq.dlmp_at(*t.buyer_bus, h));
    }
    prices[t.id] = sum / (t.window_end - t.window_start);
  }
  const auto recipe_manifest = scenario::manifest(scenario_, config_.recipe);
  json record = {{"phase", "phase1"},
                 {"scenario_hash", recipe_manifest["scenario_hash"]},
                 {"manifest_hash", ledger::sha256_hex(recipe_manifest.dump())},
                 {"objective", eq.objective},
                 {"p_g", eq.p_g},
                 {"trade_prices", prices}};
  commit({sign(who, ledger::TxKind::kSettleIncentive,
               {{"day", config_.day}, {"payments", json::array()}, {"record", record}})},
         "phase1", config_.day * 24);
  trade_prices_ = std::move(prices);
  equilibrium_ = std::move(eq);
  return *equilibrium_;
}

const market::IncentiveOutcome& Session::run_phase2(int hour, const std::string& who) {
  require_role(who, ledger::Role::kOperator);
  if (hour < 0 || hour >= static_cast<int>(scenario_.horizon)) {
    throw Error(ErrorCode::kOutOfRange, "hour must lie in [0, " + std::to_string(scenario_.horizon) + ")");
  }
  if (!phase1_done()) throw Error(ErrorCode::kOrdering, "Phase II requires a cleared Phase I");
  if (incentives_.count(hour)) throw Error(ErrorCode::kConflict, "hour " + std::to_string(hour) + " already settled");
  const auto forecast = scenario::hour_ahead(scenario_, hour, config_.recipe.forecast_noise, config_.recipe.seed);
  auto out = market::solve_phase2(scenario_, *equilibrium_, forecast, hour);
  json payments = json::array(), sellers = json::array(), unclaimed = json::array();
  for (const auto& s : out.ct2) {
    const double b = std::max(0.0, s.b);
    // Buses without an enrolled identity cannot be credited; the operator
    // keeps those amounts and the record lists them.
    if (b > 0.0) (network_.identity_of_bus(s.bus) ? payments : unclaimed).push_back({{"bus", s.bus}, {"amount", b}});
    sellers.push_back({{"bus", s.bus},
                       {"willing", s.willing},
                       {"p_ni", s.p_ni},
                       {"lambda_eq", s.lambda_eq},
                       {"lambda_a", s.lambda_a},
                       {"final_price", s.final_price},
                       {"b", s.b}});
  }
  json record = {{"phase", "phase2"}, {"p_g", out.p_g},       {"b_total", out.b_total},
                 {"fallback", out.fallback}, {"sellers", sellers}, {"unclaimed", unclaimed}};
  commit({sign(who, ledger::TxKind::kSettleIncentive,
               {{"day", config_.day}, {"hour", hour}, {"payments", payments}, {"record", record}})},
         "phase2:" + std::to_string(hour), config_.day * 24 + hour);
  return incentives_.emplace(hour, std::move(out)).first->second;
}

const market::Equilibrium& Session::equilibrium() const {
  if (!equilibrium_) throw Error(ErrorCode::kOrdering, "Phase I has not cleared");
  return *equilibrium_;
}

json Session::manifest() const {
  json m;
  m["config"] = to_json(config_);
  m["scenario"] = scenario::manifest(scenario_, config_.recipe);
  const auto& o = scenario_.options.solver;
  m["solver"] = {{"tol", o.tol},
                 {"max_iter", o.max_iter},
                 {"regularization", o.regularization},
                 {"refinement_steps", o.refinement_steps},
                 {"lindistflow", scenario_.options.lindistflow},
                 {"loss_price", scenario_.loss_price()}};
  if (islanded_) m["islanded"] = {{"solar_scale", islanded_->solar_scale}, {"battery_scale", islanded_->battery_scale}};
  m["phases"] = phase_heights_;
  m["ledger"] = {{"chain_id", network_.genesis().chain_id},
                 {"height", network_.height()},
                 {"state_hash", ledger::to_hex(network_.state().hash())},
                 {"head_hash", ledger::to_hex(network_.chain().back().header.hash())}};
  m["run_id"] = ledger::sha256_hex(m["config"].dump() + m["scenario"]["scenario_hash"].get<std::string>())
                    .substr(0, 16);
  return m;
}

Tables day_tables(const Session& session, const market::Equilibrium* baseline) {
  const auto& s = session.scenario();
  const auto& eq = session.equilibrium();
  const auto& inc = session.incentives();
  Tables out;
  std::ostringstream gen;
  gen << "hour,p_g,q_g" << (baseline ? ",p_g_baseline" : "") << ",p_g_phase2\n";
  for (std::size_t t = 0; t < s.horizon; ++t) {
    gen << t << ',' << num(eq.p_g[t]) << ',' << num(eq.q_g[t]);
    if (baseline) gen << ',' << num(baseline->p_g[t]);
    auto it = inc.find(static_cast<int>(t));
    gen << ',' << (it == inc.end() ? std::string() : num(it->second.p_g)) << '\n';
  }
  out["generation.csv"] = gen.str();

  std::ostringstream dl;
  dl << "bus,hour,dlmp" << (baseline ? ",dlmp_baseline" : "") << '\n';
  for (const auto& b : s.feeder.buses) {
    for (std::size_t t = 0; t < s.horizon; ++t) {
      dl << b.id << ',' << t << ',' << num(eq.dlmp_at(b.id, static_cast<int>(t)));
      if (baseline) dl << ',' << num(baseline->dlmp_at(b.id, static_cast<int>(t)));
      dl << '\n';
    }
  }
  out["dlmp.csv"] = dl.str();

  std::ostringstream bat;
  bat << "bus,hour,energy,charge,discharge\n";
  for (const auto& [bus, tr] : eq.batteries) {
    for (std::size_t t = 0; t < s.horizon; ++t) {
      bat << bus << ',' << t << ',' << num(tr.e[t]) << ',' << num(tr.h[t]) << ',' << num(tr.d[t]) << '\n';
    }
  }
  out["battery.csv"] = bat.str();

  std::ostringstream sh;
  sh << "bus,hour,power\n";
  for (const auto& [bus, v] : eq.shapeable) {
    for (std::size_t t = 0; t < s.horizon; ++t) sh << bus << ',' << t << ',' << num(v[t]) << '\n';
  }
  out["shapeable.csv"] = sh.str();

  std::ostringstream ic;
  ic << "hour,bus,willing,p_ni,lambda_eq,lambda_a,final_price,b,fallback\n";
  for (const auto& [hour, o] : inc) {
    for (const auto& c : o.ct2) {
      ic << hour << ',' << c.bus << ',' << (c.willing ? 1 : 0) << ',' << num(c.p_ni) << ',' << num(c.lambda_eq) << ','
         << num(c.lambda_a) << ',' << num(c.final_price) << ',' << num(c.b) << ',' << (o.fallback ? 1 : 0) << '\n';
    }
  }
  out["incentives.csv"] = ic.str();

  std::ostringstream tp;
  tp << "trade,price\n";
  for (const auto& [id, price] : session.trade_prices()) tp << id << ',' << num(price) << '\n';
  out["trades.csv"] = tp.str();
  return out;
}

DayResult run_day(Session& session) {
  const auto& s = session.scenario();
  const int day = session.config_.day;
  session.enroll_all();
  // Crowdsourcees publish their preference sets in one block.
  std::vector<ledger::Transaction> prefs;
  for (const auto& [bus, c] : s.crowdsourcees) {
    prefs.push_back(session.sign(Session::bus_identity(bus), ledger::TxKind::kRegisterPreference,
                                 {{"bus", bus}, {"day", day}, {"preferences", ders::to_json(c.preferences)}}));
  }
  session.commit(prefs, "preferences", day * 24);
  const auto initial = session.offers_;
  for (const auto& [id, t] : initial) {
    session.offer_trade(Session::bus_identity(t.seller_bus), t);
    const std::string acceptor = t.buyer_bus ? Session::bus_identity(*t.buyer_bus) : Session::kOperatorId;
    session.accept_trade(acceptor, id, t.price);
  }
  session.run_phase1();
  for (int h = 0; h < session.config_.hours; ++h) session.run_phase2(h);

  DayResult out;
  if (!session.config_.islanded) out.baseline = market::solve_phase1(market::baseline_scenario(s));
  out.tables = day_tables(session, out.baseline ? &*out.baseline : nullptr);
  out.manifest = session.manifest();
  json files = json::array();
  for (const auto& [name, text] : out.tables) files.push_back(name);
  files.push_back("chain.json");
  out.manifest["result_files"] = files;
  out.final_state_hash = ledger::to_hex(session.ledger().state().hash());
  out.height = session.ledger().height();
  return out;
}

DayResult run_day(const RunConfig& config) {
  Session session(config);
  return run_day(session);
}

void write_outputs(const DayResult& result, const Session& session, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(dir) / name, std::ios::binary);
    if (!f) throw Error(ErrorCode::kInvalidArgument, "cannot write " + (fs::path(dir) / name).string());
    f << text;
  };
  for (const auto& [name, text] : result.tables) write(name, text);
  write("manifest.json", result.manifest.dump(2) + "\n");
  write("chain.json", ledger::export_chain_text(session.ledger().peers().empty() ? session.ledger().orderer()
                                                                                   : session.ledger().peers().front()));
}

}  // namespace ces::service
