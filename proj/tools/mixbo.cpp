// Command-line front end: campaign lifecycle, simulation, validation,
// diagnostics and the HTTP service.
#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "mixbo/campaign.hpp"
#include "mixbo/diagnostics.hpp"
#include "mixbo/error.hpp"
#include "mixbo/oracle.hpp"
#include "mixbo/service.hpp"

using namespace mixbo;

namespace {

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::NotFound, "cannot read " + path, {{"path", path}});
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, path + ": " + e.what(), {{"path", path}});
  }
}

bool is_log_path(const std::string& ref) {
  return ref.find('/') != std::string::npos || ref.ends_with(".jsonl");
}

// A campaign addressed either by store id or by event-log path.
struct Target {
  CampaignStore store;
  std::string ref;

  CampaignState load() const { return load_campaign(store, ref); }
  void save(const CampaignState& before, const CampaignState& after) const {
    if (!is_log_path(ref)) {
      store.append(ref, before, after);
      return;
    }
    std::ofstream out(ref, std::ios::binary | std::ios::app);
    for (std::size_t i = before.events.size(); i < after.events.size(); ++i) out << after.events[i].dump() << '\n';
    if (!out) throw Error(ErrorKind::Internal, "could not append to " + ref);
  }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorKind::Internal, "could not write " + path);
}

void print_batch_csv(const CampaignState& state) {
  std::vector<Experiment> open;
  for (const auto* e : state.open_batch()) open.push_back(*e);
  write_experiments_csv(std::cout, open);
}

std::vector<ResultEntry> read_results(const std::string& path) {
  if (path.ends_with(".json")) return results_from_json(read_json_file(path));
  const auto rows = read_experiments_csv_file(path);
  std::vector<ResultEntry> out;
  for (const auto& r : rows) {
    if (r.measured) out.emplace_back(r.id, *r.measured);
  }
  return out;
}

int fail(const Error& e) {
  std::cerr << error_envelope(e).dump() << '\n';
  return exit_code(api_code(e.kind()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained batch Bayesian optimization for compound mixture design"};
  app.require_subcommand(1);
  std::string state_dir = CampaignStore::default_dir().string();
  app.add_option("--state-dir", state_dir, "Directory holding campaign event logs (default $MIXBO_STATE_DIR)");

  std::string config_path, id, campaign, results_path, out_path, oracle_path, strategy, data_path;
  std::string method = "holdout", feature_map = "plain_4d", listen = "127.0.0.1:8080", token, label;
  std::uint64_t seed = 0;
  double train_fraction = 0.85;
  bool as_json = false;
  std::vector<std::string> refs;

  auto* init = app.add_subcommand("init", "Create a campaign from a config file");
  init->add_option("--config", config_path, "Campaign config JSON")->required();
  init->add_option("--id", id, "Campaign id (derived from the label when omitted)");

  auto* propose = app.add_subcommand("propose", "Propose the next batch and print it as CSV");
  propose->add_option("--campaign", campaign, "Campaign id or event-log path")->required();

  auto* record = app.add_subcommand("record", "Record measured results for the open batch");
  record->add_option("--campaign", campaign, "Campaign id or event-log path")->required();
  record->add_option("--results", results_path, "Experiments CSV (or JSON) with the open batch measured")->required();

  auto* evaluate = app.add_subcommand("evaluate", "Answer the open batch with the campaign's oracle");
  evaluate->add_option("--campaign", campaign, "Campaign id or event-log path")->required();

  auto* simulate = app.add_subcommand("simulate", "Closed-loop campaign against an oracle");
  simulate->add_option("--config", config_path, "Campaign config JSON");
  simulate->add_option("--strategy", strategy, "run1 | run2 | run3 | run4")
      ->check(CLI::IsMember({"run1", "run2", "run3", "run4"}));
  auto* seed_opt = simulate->add_option("--seed", seed, "Campaign seed");
  simulate->add_option("--oracle", oracle_path, "Oracle spec JSON");
  simulate->add_option("--label", label, "Campaign label");
  simulate->add_option("--out", out_path, "Write the event log here");
  simulate->add_option("--id", id, "Also store the campaign under this id");

  auto* validate = app.add_subcommand("validate", "Fit a data-trained oracle on a CSV and report RMSE");
  validate->add_option("--data", data_path, "Experiments CSV")->required();
  validate->add_option("--method", method, "loo | holdout")->check(CLI::IsMember({"loo", "holdout"}));
  validate->add_option("--train-fraction", train_fraction, "Holdout train share");
  validate->add_option("--feature-map", feature_map, "plain_4d | augmented")
      ->check(CLI::IsMember({"plain_4d", "augmented"}));
  validate->add_option("--seed", seed, "Split and fit seed");
  validate->add_option("--out", out_path, "Write the oracle spec (with fitted models) here");

  auto* diagnose = app.add_subcommand("diagnose", "Diagnostics report for a campaign");
  diagnose->add_option("--campaign", campaign, "Campaign id or event-log path")->required();

  auto* summary = app.add_subcommand("summary", "Campaign summary JSON");
  summary->add_option("--campaign", campaign, "Campaign id or event-log path")->required();

  auto* compare = app.add_subcommand("compare", "Compare campaigns side by side");
  compare->add_option("campaigns", refs, "Campaign ids or event-log paths")->required();
  compare->add_flag("--json", as_json, "Emit JSON instead of a text table");

  auto* plot = app.add_subcommand("export-plot-data", "Per-batch metric traces as CSV");
  plot->add_option("--campaign", campaign, "Campaign id or event-log path")->required();
  plot->add_option("--out", out_path, "Output CSV (stdout when omitted)");

  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  serve->add_option("--listen", listen, "host:port");
  serve->add_option("--token", token, "Static bearer token");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << error_envelope(ApiCode::InvalidInput, e.what()).dump() << '\n';
    return exit_code(ApiCode::InvalidInput);
  }

  try {
    const CampaignStore store(state_dir);
    const Target target{store, campaign};

    if (*init) {
      const auto config = CampaignConfig::from_json(read_json_file(config_path));
      const auto state = create_campaign(config);
      const std::string cid = id.empty() ? store.next_id(config.label) : id;
      CampaignStore(state_dir).create(cid, state);
      std::cout << nlohmann::json{{"id", cid}, {"log", store.log_path(cid).string()}}.dump() << '\n';
    } else if (*propose) {
      const auto before = target.load();
      const auto after = propose_batch(before);
      target.save(before, after);
      print_batch_csv(after);
    } else if (*record) {
      const auto before = target.load();
      const auto after = record_results(before, read_results(results_path));
      target.save(before, after);
      std::cout << nlohmann::json{{"status", to_string(after.status)}, {"next_batch", after.next_batch}}.dump()
                << '\n';
    } else if (*evaluate) {
      const auto before = target.load();
      const auto after = evaluate_with_oracle(before, campaign_oracle(before.config));
      target.save(before, after);
      std::cout << nlohmann::json{{"status", to_string(after.status)}, {"next_batch", after.next_batch}}.dump()
                << '\n';
    } else if (*simulate) {
      nlohmann::json cfg = config_path.empty() ? nlohmann::json::object() : read_json_file(config_path);
      if (!strategy.empty()) cfg["strategy"] = strategy;
      if (seed_opt->count() > 0) cfg["seed"] = seed;
      if (!oracle_path.empty()) cfg["oracle"] = read_json_file(oracle_path);
      if (!label.empty()) cfg["label"] = label;
      const auto config = CampaignConfig::from_json(cfg);
      const auto oracle = campaign_oracle(config);
      CampaignState state = create_campaign(config, &oracle);
      const auto persist = [&]() {
        if (!out_path.empty()) write_file(out_path, event_log(state));
        if (!id.empty()) CampaignStore(state_dir).create(id, state);
      };
      try {
        run_simulation(state, oracle);
      } catch (const Error&) {
        persist();
        throw;
      }
      persist();
      std::cout << campaign_summary(state).to_json().dump(2) << '\n';
    } else if (*validate) {
      const auto rows = read_experiments_csv_file(data_path);
      ValidationSpec spec;
      spec.method = method == "loo" ? ValidationSpec::Method::Loo : ValidationSpec::Method::Holdout;
      spec.train_fraction = train_fraction;
      gp::FitOptions fit;
      fit.seed = seed;
      const DomainSpec domain = DomainSpec().with_feature_map(feature_map_from_string(feature_map));
      auto oracle = build_data_oracle(rows, domain, spec, fit);
      oracle.oracle.dataset = data_path;
      if (!out_path.empty()) write_file(out_path, oracle.oracle.to_json().dump(2) + "\n");
      std::cout << oracle.report.to_json().dump(2) << '\n';
    } else if (*diagnose) {
      std::cout << diagnose_campaign(target.load()).to_json().dump(2) << '\n';
    } else if (*summary) {
      std::cout << campaign_summary(target.load()).to_json().dump(2) << '\n';
    } else if (*compare) {
      if (refs.size() < 2) throw Error(ErrorKind::InvalidArgument, "compare needs at least two campaigns");
      std::vector<CampaignSummary> summaries;
      for (const auto& r : refs) summaries.push_back(campaign_summary(load_campaign(store, r)));
      const auto table = compare_runs(summaries);
      std::cout << (as_json ? table.to_json().dump(2) + "\n" : table.to_text());
    } else if (*plot) {
      const auto state = target.load();
      if (out_path.empty()) {
        write_plot_data_csv(std::cout, state);
      } else {
        std::ostringstream os;
        write_plot_data_csv(os, state);
        write_file(out_path, os.str());
      }
    } else if (*serve) {
      const auto colon = listen.rfind(':');
      if (colon == std::string::npos) throw Error(ErrorKind::InvalidArgument, "--listen expects host:port");
      const std::string host = listen.substr(0, colon);
      int port = 0;
      try {
        port = std::stoi(listen.substr(colon + 1));
      } catch (const std::exception&) {
        throw Error(ErrorKind::InvalidArgument, "--listen expects host:port");
      }
      CampaignService service({state_dir, token});
      std::cerr << "listening on " << listen << " (state in " << state_dir << ")\n";
      if (!service.serve(host, port)) throw Error(ErrorKind::Internal, "could not bind " + listen);
    }
    return 0;
  } catch (const Error& e) {
    return fail(e);
  } catch (const std::exception& e) {
    std::cerr << error_envelope(ApiCode::Internal, e.what()).dump() << '\n';
    return exit_code(ApiCode::Internal);
  }
}
