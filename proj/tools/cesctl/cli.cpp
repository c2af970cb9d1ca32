#include "cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ces/service/api.hpp"
#include "ces/service/session.hpp"
#include "http_server.hpp"

namespace ces::tools {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Common {
  std::string scenario = "sce56";
  std::uint64_t seed = 7;
  double tol = 0.0;
  bool lindistflow = false;
  int hours = 24;
  std::string out_dir = "out";
  std::size_t peers = 4;
  CLI::Option* tol_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--scenario", c.scenario, "builtin scenario name or recipe document path");
  cmd->add_option("--seed", c.seed, "scenario and forecast seed");
  c.tol_opt = cmd->add_option("--tol", c.tol, "solver tolerance")->check(CLI::PositiveNumber);
  cmd->add_flag("--lindistflow", c.lindistflow, "use the linearized branch-flow model");
  cmd->add_option("--hours", c.hours, "Phase II hours to run")->check(CLI::Range(0, 24));
  cmd->add_option("--out-dir", c.out_dir, "directory for tables, manifest and chain export");
  cmd->add_option("--peers", c.peers, "validating peers")->check(CLI::Range(0, 64));
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::kNotFound, "cannot read " + path);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

service::RunConfig to_config(const Common& c) {
  service::RunConfig cfg;
  if (fs::path(c.scenario).extension() == ".json") {
    cfg.recipe = scenario::recipe_from_json(json::parse(read_file(c.scenario)));
  } else {
    cfg.recipe.feeder = c.scenario;
    cfg.recipe.loads = c.scenario;
  }
  cfg.recipe.seed = c.seed;
  if (c.tol_opt && c.tol_opt->count() > 0) cfg.tol = c.tol;
  cfg.lindistflow = c.lindistflow;
  cfg.hours = c.hours;
  cfg.peers = c.peers;
  return cfg;
}

json summary(const service::DayResult& r, const std::string& dir) {
  return {{"run_id", r.manifest["run_id"]},
          {"height", r.height},
          {"state_hash", r.final_state_hash},
          {"out_dir", dir}};
}

void print_error(std::ostream& err, ErrorCode code, const std::string& message) {
  err << service::error_document(code, message).dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Crowdsourced energy market operations"};
  app.require_subcommand(1);
  Common c;

  auto* run_day = app.add_subcommand("run-day", "full day: Phase I, every Phase II hour, ledger export");
  add_common(run_day, c);
  auto* phase1 = app.add_subcommand("phase1", "day-ahead clearing only");
  add_common(phase1, c);
  int hour = 0;
  auto* phase2 = app.add_subcommand("phase2", "Phase I followed by a single Phase II hour");
  add_common(phase2, c);
  phase2->add_option("--hour", hour, "hour index")->required()->check(CLI::Range(0, 23));
  auto* island = app.add_subcommand("island", "islanded microgrid day-ahead run");
  add_common(island, c);

  auto* ledger_cmd = app.add_subcommand("ledger", "ledger tools");
  ledger_cmd->require_subcommand(1);
  std::string chain_file;
  auto* verify = ledger_cmd->add_subcommand("verify", "re-derive and check an exported chain");
  verify->add_option("--chain", chain_file, "chain export (default <out-dir>/chain.json)");
  verify->add_option("--out-dir", c.out_dir, "run directory");

  auto* export_cmd = app.add_subcommand("export", "write the world state derived from an exported chain");
  export_cmd->add_option("--chain", chain_file, "chain export (default <out-dir>/chain.json)");
  export_cmd->add_option("--out-dir", c.out_dir, "run directory; state.json is written here");

  std::string host = "127.0.0.1";
  int port = 8080;
  std::string token;
  auto* serve_cmd = app.add_subcommand("serve", "HTTP API over a fresh session");
  add_common(serve_cmd, c);
  serve_cmd->add_option("--host", host, "bind address");
  serve_cmd->add_option("--port", port, "port")->check(CLI::Range(1, 65535));
  serve_cmd->add_option("--token", token, "operator bearer token (random when omitted)");

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << json{{"error", "usage"}, {"message", e.what()}}.dump() << '\n';
    return 2;
  }

  try {
    if (*run_day || *phase1 || *phase2 || *island) {
      auto cfg = to_config(c);
      if (*phase1 || *phase2 || *island) cfg.hours = 0;
      cfg.islanded = static_cast<bool>(*island);
      service::Session session(cfg);
      auto result = service::run_day(session);
      json extra;
      if (*phase2) {
        const auto& o = session.run_phase2(hour);
        result.tables = service::day_tables(session, result.baseline ? &*result.baseline : nullptr);
        result.manifest = session.manifest();
        result.final_state_hash = ledger::to_hex(session.ledger().state().hash());
        result.height = session.ledger().height();
        json sellers = json::array();
        for (const auto& s : o.ct2) {
          sellers.push_back({{"bus", s.bus}, {"p_ni", s.p_ni}, {"lambda_a", s.lambda_a}, {"b", s.b},
                             {"final_price", s.final_price}});
        }
        extra = {{"hour", hour}, {"p_g", o.p_g}, {"b_total", o.b_total}, {"fallback", o.fallback},
                 {"sellers", sellers}};
      }
      if (*phase1 || *island) {
        const auto& eq = session.equilibrium();
        double pg = 0.0;
        for (double v : eq.p_g) pg += v;
        extra = {{"objective", eq.objective}, {"sum_p_g", pg},
                 {"max_relaxation_gap", eq.diagnostics.max_relaxation_gap}};
        if (session.islanded()) {
          extra["solar_scale"] = session.islanded()->solar_scale;
          extra["battery_scale"] = session.islanded()->battery_scale;
        }
      }
      service::write_outputs(result, session, c.out_dir);
      json s = summary(result, c.out_dir);
      if (!extra.is_null()) s["result"] = extra;
      out << s.dump(2) << '\n';
      return 0;
    }
    if (*verify || *export_cmd) {
      const std::string path = chain_file.empty() ? (fs::path(c.out_dir) / "chain.json").string() : chain_file;
      const auto peer = ledger::import_chain_text(read_file(path));
      const auto check = peer.validate_chain();
      json doc = {{"chain", path}, {"ok", check.ok}, {"blocks", peer.chain().size()}};
      if (!check.ok) {
        doc["error"] = "chain-invalid";
        doc["first_bad_height"] = check.first_bad_height ? json(*check.first_bad_height) : json(nullptr);
        doc["reason"] = check.reason;
        err << doc.dump() << '\n';
        return 1;
      }
      doc["state_hash"] = check.state_hash;
      doc["head_hash"] = ledger::to_hex(peer.head_hash());
      if (*export_cmd) {
        // Replaying the verified chain yields the world state.
        ledger::Peer replica("export", peer.genesis());
        for (std::size_t i = 1; i < peer.chain().size(); ++i) replica.apply(peer.chain()[i]);
        fs::create_directories(c.out_dir);
        const auto state_path = fs::path(c.out_dir) / "state.json";
        std::ofstream(state_path, std::ios::binary) << replica.state().to_json().dump(2) << '\n';
        doc["state"] = state_path.string();
      }
      out << doc.dump(2) << '\n';
      return 0;
    }
    if (*serve_cmd) {
      service::Session session(to_config(c));
      service::Api api(session, token.empty() ? std::nullopt : std::optional<std::string>(token));
      out << json{{"listening", host + ":" + std::to_string(port)}, {"operator_token", api.operator_token()}}.dump()
          << std::endl;
      if (!serve(api, host, port)) {
        print_error(err, ErrorCode::kInvalidArgument, "cannot listen on " + host + ":" + std::to_string(port));
        return 1;
      }
      return 0;
    }
  } catch (const Error& e) {
    print_error(err, e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error(err, ErrorCode::kInvalidArgument, e.what());
    return 1;
  }
  return 2;
}

}  // namespace ces::tools
