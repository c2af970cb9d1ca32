#pragma once

#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "ces/ledger/ledger.hpp"
#include "ces/market/phase1.hpp"
#include "ces/market/phase2.hpp"
#include "ces/scenario/case_study.hpp"

namespace ces::service {

struct RunConfig {
  scenario::ScenarioRecipe recipe;
  std::optional<double> tol;  // solver tolerance override
  bool lindistflow = false;
  bool islanded = false;
  int hours = 24;  // Phase II hours run by run_day, starting at 0
  std::size_t peers = 4;
  int day = 0;
  double operator_funds = 1e6;  // $ at genesis
};

nlohmann::json to_json(const RunConfig& config);

struct DayResult;

// One market day bound to a ledger. The server custodies every identity's
// signing key (keys are derived from the chain id and the seed); callers
// act through identity ids. Each mutating call commits exactly one block.
class Session {
 public:
  explicit Session(RunConfig config);

  const RunConfig& config() const { return config_; }
  const market::Scenario& scenario() const { return scenario_; }
  const std::optional<scenario::IslandedCase>& islanded() const { return islanded_; }
  ledger::Network& ledger() { return network_; }
  const ledger::Network& ledger() const { return network_; }
  static constexpr const char* kOperatorId = "operator";

  // Crowdsourcee id for a bus, e.g. "bus-7".
  static std::string bus_identity(int bus);

  ledger::Identity enroll(int bus);
  // Enrolls every registry bus in one block.
  void enroll_all();

  // Each throws Error with the ledger rejection code on failure.
  void submit_preferences(const std::string& who, const ders::PreferenceSet& prefs);
  void offer_trade(const std::string& who, const ders::TradeRequest& trade);
  void accept_trade(const std::string& who, const std::string& trade_id, std::optional<double> price);

  // Operator only. Phase I runs once per day; Phase II needs Phase I and
  // runs once per hour.
  const market::Equilibrium& run_phase1(const std::string& who = kOperatorId);
  const market::IncentiveOutcome& run_phase2(int hour, const std::string& who = kOperatorId);

  bool phase1_done() const { return equilibrium_.has_value(); }
  const market::Equilibrium& equilibrium() const;
  const std::map<int, market::IncentiveOutcome>& incentives() const { return incentives_; }
  // Negotiated or default (mean window DLMP of both ends) Type B prices.
  const std::map<std::string, double>& trade_prices() const { return trade_prices_; }

  // Committed role of an identity; nullopt when unknown.
  std::optional<ledger::Identity> identity(const std::string& id) const { return network_.identity(id); }

  // Scenario and solver echo plus ledger coordinates; logical times only.
  nlohmann::json manifest() const;

 private:
  friend DayResult run_day(Session& session);

  ledger::Transaction sign(const std::string& who, ledger::TxKind kind, nlohmann::json payload);
  const ledger::Block& commit(const std::vector<ledger::Transaction>& txs, const std::string& label,
                              std::int64_t timestamp);
  const ledger::KeyPair& key_of(const std::string& who) const;
  void require_role(const std::string& who, ledger::Role role) const;

  RunConfig config_;
  std::optional<scenario::IslandedCase> islanded_;  // set while building scenario_
  market::Scenario scenario_;
  std::map<std::string, ledger::KeyPair> keys_;
  ledger::Network network_;
  std::optional<market::Equilibrium> equilibrium_;
  std::map<int, market::IncentiveOutcome> incentives_;
  std::map<std::string, double> trade_prices_;
  std::map<std::string, ders::TradeRequest> offers_;
  std::map<std::string, int> phase_heights_;  // label -> block height
};

ledger::Genesis make_genesis(const market::Scenario& scenario, const ledger::KeyPair& operator_key,
                             const ledger::KeyPair& orderer_key, double funds, const std::string& chain_id);

// Delimiter-separated result tables keyed by file name.
using Tables = std::map<std::string, std::string>;

struct DayResult {
  Tables tables;
  nlohmann::json manifest;
  std::string final_state_hash;  // hex
  std::uint64_t height = 0;
  std::optional<market::Equilibrium> baseline;
};

// Full day: enrollment, preferences and offers, contract commits, one
// Phase I block and one Phase II block per hour.
DayResult run_day(Session& session);
DayResult run_day(const RunConfig& config);

// Phase I tables (generation, dlmp, battery, shapeable) plus incentives
// when Phase II hours exist. `baseline` adds the no-DER columns.
Tables day_tables(const Session& session, const market::Equilibrium* baseline);

// Writes tables, manifest.json and chain.json under `dir`.
void write_outputs(const DayResult& result, const Session& session, const std::string& dir);

}  // namespace ces::service
