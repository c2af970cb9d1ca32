#include <benchmark/benchmark.h>

#include "ces/ledger/ledger.hpp"
#include "ces/market/phase1.hpp"
#include "ces/market/phase2.hpp"
#include "ces/scenario/case_study.hpp"

using namespace ces;

namespace {

const market::Scenario& case_study() {
  static const market::Scenario s = scenario::build_case_study(scenario::ScenarioRecipe{});
  return s;
}

void BM_BuildCaseStudy(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(scenario::build_case_study(scenario::ScenarioRecipe{}));
}
BENCHMARK(BM_BuildCaseStudy)->Unit(benchmark::kMillisecond);

void BM_Phase1(benchmark::State& state) {
  auto s = case_study();
  s.options.lindistflow = state.range(0) != 0;
  for (auto _ : state) benchmark::DoNotOptimize(market::solve_phase1(s));
}
BENCHMARK(BM_Phase1)->Arg(0)->Arg(1)->ArgNames({"lindistflow"})->Unit(benchmark::kMillisecond);

void BM_Phase2Hour(benchmark::State& state) {
  const auto& s = case_study();
  const auto eq = market::solve_phase1(s);
  const int hour = static_cast<int>(state.range(0));
  const auto forecast = scenario::hour_ahead(s, hour, 0.02, 7);
  for (auto _ : state) benchmark::DoNotOptimize(market::solve_phase2(s, eq, forecast, hour));
}
BENCHMARK(BM_Phase2Hour)->Arg(3)->Arg(12)->Unit(benchmark::kMillisecond);

void BM_SignVerify(benchmark::State& state) {
  const auto key = ledger::keypair_from_seed("bench");
  const std::string msg(256, 'x');
  for (auto _ : state) {
    auto sig = ledger::sign(msg, key);
    benchmark::DoNotOptimize(ledger::verify(msg, sig, key.public_key));
  }
}
BENCHMARK(BM_SignVerify);

void BM_CommitBlock(benchmark::State& state) {
  const auto op = ledger::keypair_from_seed("operator"), orderer = ledger::keypair_from_seed("orderer");
  ledger::Genesis g;
  g.registrar.id = "operator";
  g.registrar.role = ledger::Role::kOperator;
  g.registrar.public_key = op.public_key;
  g.orderer_key = orderer.public_key;
  g.initial_balances["operator"] = 1e9;
  for (int b = 1; b <= 56; ++b) g.buses.push_back(b);
  ledger::Network net(g, orderer, static_cast<std::size_t>(state.range(0)));
  std::int64_t ts = 0;
  for (auto _ : state) {
    net.submit(ledger::make_transaction(ledger::TxKind::kSettleIncentive,
                                        {{"day", static_cast<int>(ts)}, {"payments", nlohmann::json::array()}},
                                        "operator", net.next_nonce("operator"), op));
    benchmark::DoNotOptimize(net.cut_block(++ts));
  }
}
BENCHMARK(BM_CommitBlock)->Arg(0)->Arg(4)->ArgNames({"peers"});

}  // namespace
BENCHMARK_MAIN();
