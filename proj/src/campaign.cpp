#include "mixbo/campaign.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "mixbo/diagnostics.hpp"
#include "mixbo/error.hpp"

namespace mixbo {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix(splitmix(seed ^ splitmix(a)) ^ splitmix(b + 0x51ed27ULL));
}

std::string experiment_id(int batch, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "B%d-%02d", batch + 1, index + 1);
  return buf;
}

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<double> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

}  // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Run1Vanilla: return "run1";
    case Strategy::Run2Relaxation: return "run2";
    case Strategy::Run3Reformulated: return "run3";
    case Strategy::Run4Simplified: return "run4";
  }
  return "run4";
}

Strategy strategy_from_string(std::string_view s) {
  if (s == "run1" || s == "run1_vanilla") return Strategy::Run1Vanilla;
  if (s == "run2" || s == "run2_relaxation") return Strategy::Run2Relaxation;
  if (s == "run3" || s == "run3_reformulated") return Strategy::Run3Reformulated;
  if (s == "run4" || s == "run4_simplified") return Strategy::Run4Simplified;
  throw Error(ErrorKind::InvalidArgument, "unknown strategy: " + std::string(s));
}

std::string_view to_string(CampaignStatus s) {
  switch (s) {
    case CampaignStatus::AwaitingResults: return "awaiting_results";
    case CampaignStatus::ReadyToPropose: return "ready_to_propose";
    case CampaignStatus::Complete: return "complete";
  }
  return "complete";
}

// ---- configuration --------------------------------------------------------

nlohmann::json HistoricalDataConfig::to_json() const {
  switch (source) {
    case Source::None: return {{"source", "none"}};
    case Source::Csv: return {{"source", "csv"}, {"path", path}};
    case Source::ScarceSynthetic:
      return {{"source", "scarce_synthetic"},
              {"count", count},
              {"impact_feasible", impact_feasible},
              {"seed", seed}};
  }
  return {{"source", "none"}};
}

HistoricalDataConfig HistoricalDataConfig::from_json(const nlohmann::json& j) {
  HistoricalDataConfig h;
  const auto src = j.value("source", std::string("none"));
  if (src == "none") {
    h.source = Source::None;
  } else if (src == "csv") {
    h.source = Source::Csv;
    h.path = j.at("path").get<std::string>();
  } else if (src == "scarce_synthetic") {
    h.source = Source::ScarceSynthetic;
    h.count = j.value("count", h.count);
    h.impact_feasible = j.value("impact_feasible", h.impact_feasible);
    h.seed = j.value("seed", h.seed);
  } else {
    throw Error(ErrorKind::SchemaError, "unknown historical data source: " + src);
  }
  return h;
}

FeatureMapKind CampaignConfig::effective_feature_map() const {
  if (feature_map) return *feature_map;
  return strategy == Strategy::Run4Simplified ? FeatureMapKind::Plain4d : FeatureMapKind::Augmented;
}

bool CampaignConfig::effective_refit() const {
  if (refit_each_batch) return *refit_each_batch;
  return strategy == Strategy::Run4Simplified;
}

int CampaignConfig::total_experiments() const {
  int total = 0;
  for (int s : schedule) total += s;
  return total;
}

void CampaignConfig::validate() const {
  if (schedule.empty()) throw Error(ErrorKind::InvalidArgument, "schedule must not be empty");
  for (int s : schedule) {
    if (s < 1) throw Error(ErrorKind::InvalidArgument, "batch sizes must be positive");
  }
  if (max_relaxation_level < 0 || max_relaxation_level > 9) {
    throw Error(ErrorKind::InvalidArgument, "max_relaxation_level must lie in [0, 9]");
  }
  if (mc_samples < 16) throw Error(ErrorKind::InvalidArgument, "mc_samples must be at least 16");
  if (optimizer.starts < 1 || optimizer.raw_samples < optimizer.starts || optimizer.iterations < 0) {
    throw Error(ErrorKind::InvalidArgument, "invalid optimizer settings");
  }
  if (fit.restarts < 1 || fit.max_iterations < 1) {
    throw Error(ErrorKind::InvalidArgument, "invalid fit settings");
  }
  if (historical.source == HistoricalDataConfig::Source::ScarceSynthetic &&
      (historical.count < 2 || historical.impact_feasible < 0 ||
       historical.impact_feasible > historical.count)) {
    throw Error(ErrorKind::InvalidArgument, "invalid scarce_synthetic historical settings");
  }
  problem.validate();
}

nlohmann::json CampaignConfig::to_json() const {
  nlohmann::json j{{"label", label},
                   {"strategy", to_string(strategy)},
                   {"seed", seed},
                   {"schedule", schedule},
                   {"problem", problem.to_json()},
                   {"domain", domain.to_json()},
                   {"run3_final_objective",
                    run3_final_mfr_distance ? "mfr_distance" : "impact_strength"},
                   {"max_relaxation_level", max_relaxation_level},
                   {"historical", historical.to_json()},
                   {"optimizer",
                    {{"starts", optimizer.starts},
                     {"raw_samples", optimizer.raw_samples},
                     {"iterations", optimizer.iterations},
                     {"fd_step", optimizer.fd_step},
                     {"mc_samples", mc_samples}}},
                   {"fit", {{"restarts", fit.restarts}, {"max_iterations", fit.max_iterations}}}};
  j["domain"].erase("feature_map");
  if (feature_map) j["feature_map"] = to_string(*feature_map);
  if (refit_each_batch) j["refit_each_batch"] = *refit_each_batch;
  if (oracle) j["oracle"] = *oracle;
  return j;
}

CampaignConfig CampaignConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorKind::SchemaError, "campaign config must be a JSON object");
  try {
    CampaignConfig c;
    c.label = j.value("label", c.label);
    c.strategy = strategy_from_string(j.value("strategy", std::string("run4")));
    c.seed = j.value("seed", c.seed);
    if (j.contains("schedule")) c.schedule = j.at("schedule").get<std::vector<int>>();
    if (j.contains("problem")) c.problem = ProblemSpec::from_json(j.at("problem"));
    if (j.contains("domain")) {
      c.domain = DomainSpec::from_json(j.at("domain"));
      if (j.at("domain").contains("feature_map")) c.feature_map = c.domain.feature_map();
    }
    if (j.contains("feature_map")) {
      c.feature_map = feature_map_from_string(j.at("feature_map").get<std::string>());
    }
    if (j.contains("refit_each_batch")) c.refit_each_batch = j.at("refit_each_batch").get<bool>();
    const auto final_objective = j.value("run3_final_objective", std::string("impact_strength"));
    if (final_objective != "impact_strength" && final_objective != "mfr_distance") {
      throw Error(ErrorKind::SchemaError, "run3_final_objective must be impact_strength or mfr_distance");
    }
    c.run3_final_mfr_distance = final_objective == "mfr_distance";
    c.max_relaxation_level = j.value("max_relaxation_level", c.max_relaxation_level);
    if (j.contains("historical")) c.historical = HistoricalDataConfig::from_json(j.at("historical"));
    if (j.contains("oracle") && !j.at("oracle").is_null()) c.oracle = j.at("oracle");
    if (j.contains("optimizer")) {
      const auto& o = j.at("optimizer");
      c.optimizer.starts = o.value("starts", c.optimizer.starts);
      c.optimizer.raw_samples = o.value("raw_samples", std::max(c.optimizer.raw_samples, c.optimizer.starts));
      c.optimizer.iterations = o.value("iterations", c.optimizer.iterations);
      c.optimizer.fd_step = o.value("fd_step", c.optimizer.fd_step);
      c.mc_samples = o.value("mc_samples", c.mc_samples);
    }
    if (j.contains("fit")) {
      c.fit.restarts = j.at("fit").value("restarts", c.fit.restarts);
      c.fit.max_iterations = j.at("fit").value("max_iterations", c.fit.max_iterations);
    }
    c.domain = c.domain.with_feature_map(c.effective_feature_map());
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("campaign config: ") + e.what());
  }
}

nlohmann::json FrozenModels::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    const int k = static_cast<int>(m);
    j[std::string(to_string(m))] = {{"hyperparams", gp::to_json(hyperparams[k])},
                                    {"scaling", gp::to_json(scaling[k])}};
  }
  return j;
}

FrozenModels FrozenModels::from_json(const nlohmann::json& j) {
  FrozenModels f;
  for (Metric m : kAllMetrics) {
    const int k = static_cast<int>(m);
    const auto& item = j.at(std::string(to_string(m)));
    f.hyperparams[k] = gp::hyperparams_from_json(item.at("hyperparams"));
    f.scaling[k] = gp::scaling_from_json(item.at("scaling"));
  }
  return f;
}

// ---- state ----------------------------------------------------------------

std::vector<const Experiment*> CampaignState::open_batch() const {
  std::vector<const Experiment*> open;
  for (const auto& e : history) {
    if (!e.completed()) open.push_back(&e);
  }
  return open;
}

std::vector<Experiment> CampaignState::completed_campaign_experiments() const {
  std::vector<Experiment> out;
  for (const auto& e : history) {
    if (e.completed()) out.push_back(e);
  }
  return out;
}

nlohmann::json CampaignState::to_json() const {
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : history) hist.push_back(mixbo::to_json(e));
  nlohmann::json prior = nlohmann::json::array();
  for (const auto& e : historical) prior.push_back(mixbo::to_json(e));
  nlohmann::json j{{"config", config.to_json()},
                   {"status", to_string(status)},
                   {"next_batch", next_batch},
                   {"relaxation_level",
                    {{"youngs_modulus", relaxation_level[0]}, {"impact_strength", relaxation_level[1]}}},
                   {"history", hist},
                   {"historical", prior},
                   {"events", events.size()}};
  j["frozen_models"] = frozen ? frozen->to_json() : nlohmann::json(nullptr);
  return j;
}

OracleSpec campaign_oracle(const CampaignConfig& config) {
  if (config.oracle) return OracleSpec::from_json(*config.oracle);
  return make_synthetic_oracle(SyntheticParams{}, config.domain, config.problem);
}

CampaignState create_campaign(const CampaignConfig& config) {
  if (config.historical.source == HistoricalDataConfig::Source::ScarceSynthetic) {
    const auto oracle = campaign_oracle(config);
    return create_campaign(config, &oracle);
  }
  return create_campaign(config, nullptr);
}

CampaignState create_campaign(const CampaignConfig& config, const OracleSpec* oracle) {
  config.validate();
  std::vector<Experiment> historical;
  switch (config.historical.source) {
    case HistoricalDataConfig::Source::None: break;
    case HistoricalDataConfig::Source::Csv:
      historical = read_experiments_csv_file(config.historical.path);
      break;
    case HistoricalDataConfig::Source::ScarceSynthetic:
      if (!oracle) throw Error(ErrorKind::InvalidArgument, "scarce_synthetic history needs an oracle");
      historical = scarce_feasible_dataset(*oracle, config.domain, config.problem,
                                           config.historical.count,
                                           config.historical.impact_feasible, config.historical.seed);
      break;
  }
  nlohmann::json rows = nlohmann::json::array();
  for (auto& e : historical) {
    if (!e.completed()) continue;
    config.domain.validate(e.recipe);
    e.measured->validate();
    e.provenance = Provenance::Historical;
    e.batch_index = -1;
    rows.push_back(to_json(e));
  }
  CampaignState state;
  apply_event(state, {{"event", "created"}, {"config", config.to_json()}, {"historical", rows}});
  return state;
}

void apply_event(CampaignState& state, const nlohmann::json& event) {
  try {
    const auto type = event.at("event").get<std::string>();
    if (type == "created") {
      if (!state.events.empty()) throw Error(ErrorKind::SchemaError, "created must be the first event");
      state.config = CampaignConfig::from_json(event.at("config"));
      state.historical.clear();
      for (const auto& row : event.at("historical")) state.historical.push_back(experiment_from_json(row));
      state.status = CampaignStatus::ReadyToPropose;
    } else if (state.events.empty()) {
      throw Error(ErrorKind::SchemaError, "event log must start with a created event");
    } else if (type == "proposed") {
      const int batch = event.at("batch").get<int>();
      if (state.status != CampaignStatus::ReadyToPropose || batch != state.next_batch) {
        throw Error(ErrorKind::SchemaError, "proposed event out of sequence");
      }
      for (const auto& e : event.at("experiments")) state.history.push_back(experiment_from_json(e));
      const auto& lv = event.at("relaxation_level");
      state.relaxation_level = {lv.at(0).get<int>(), lv.at(1).get<int>()};
      if (event.contains("models")) state.frozen = FrozenModels::from_json(event.at("models"));
      state.status = CampaignStatus::AwaitingResults;
    } else if (type == "relaxed") {
      const auto& lv = event.at("relaxation_level");
      state.relaxation_level = {lv.at(0).get<int>(), lv.at(1).get<int>()};
    } else if (type == "recorded") {
      if (state.status != CampaignStatus::AwaitingResults) {
        throw Error(ErrorKind::SchemaError, "recorded event out of sequence");
      }
      for (const auto& r : event.at("results")) {
        const auto id = r.at("id").get<std::string>();
        auto it = std::find_if(state.history.begin(), state.history.end(),
                               [&](const Experiment& e) { return e.id == id; });
        if (it == state.history.end()) throw Error(ErrorKind::SchemaError, "recorded unknown id " + id);
        it->measured = metrics_from_json(r.at("metrics"));
      }
      ++state.next_batch;
      state.status = CampaignStatus::ReadyToPropose;
    } else if (type == "completed") {
      state.status = CampaignStatus::Complete;
    } else {
      throw Error(ErrorKind::SchemaError, "unknown event type: " + type);
    }
    state.events.push_back(event);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("event log: ") + e.what());
  }
}

CampaignState replay(const std::vector<nlohmann::json>& events) {
  CampaignState state;
  for (const auto& e : events) apply_event(state, e);
  if (state.events.empty()) throw Error(ErrorKind::SchemaError, "empty event log");
  return state;
}

std::string event_log(const CampaignState& state) {
  std::string out;
  for (const auto& e : state.events) {
    out += e.dump();
    out += '\n';
  }
  return out;
}

std::vector<nlohmann::json> parse_event_log(std::string_view text) {
  std::vector<nlohmann::json> events;
  std::size_t pos = 0;
  int line = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto chunk = text.substr(pos, end - pos);
    ++line;
    if (chunk.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        events.push_back(nlohmann::json::parse(chunk));
      } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::SchemaError, "event log line " + std::to_string(line) + ": " + e.what());
      }
    }
    pos = end + 1;
  }
  return events;
}

// ---- modelling --------------------------------------------------------------

namespace {

std::vector<Experiment> training_rows(const CampaignState& state) {
  std::vector<Experiment> rows;
  if (state.config.strategy != Strategy::Run4Simplified) {
    for (const auto& e : state.historical) {
      if (e.completed()) rows.push_back(e);
    }
  }
  for (const auto& e : state.history) {
    if (e.completed()) rows.push_back(e);
  }
  return rows;
}

FrozenModels fit_frozen(const CampaignState& state) {
  const auto rows = training_rows(state);
  if (rows.size() < 2) {
    throw Error(ErrorKind::InvalidState,
                "strategy needs prior data to fit its model; configure historical data",
                {{"rows", rows.size()}});
  }
  const DomainSpec domain = state.config.model_domain();
  std::vector<MixtureRecipe> recipes;
  for (const auto& r : rows) recipes.push_back(r.recipe);
  const Eigen::MatrixXd x = domain.features(recipes);
  FrozenModels frozen;
  for (Metric m : kAllMetrics) {
    const int k = static_cast<int>(m);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = rows[i].measured->get(m);
    gp::FitOptions options = state.config.fit;
    options.seed = derive_seed(state.config.seed, 0xf17, static_cast<std::uint64_t>(k));
    const auto model = gp::fit(x, y, domain.feature_scaling(), options);
    frozen.hyperparams[k] = model.hyperparams;
    frozen.scaling[k] = model.scaling;
  }
  return frozen;
}

}  // namespace

MetricModels build_models(const CampaignState& state) {
  const auto rows = training_rows(state);
  if (rows.size() < 2) {
    throw Error(ErrorKind::InvalidState, "at least two completed experiments are needed to model",
                {{"rows", rows.size()}});
  }
  const DomainSpec domain = state.config.model_domain();
  std::vector<MixtureRecipe> recipes;
  for (const auto& r : rows) recipes.push_back(r.recipe);
  const Eigen::MatrixXd x = domain.features(recipes);
  MetricModels models;
  for (Metric m : kAllMetrics) {
    const int k = static_cast<int>(m);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) y(static_cast<Eigen::Index>(i)) = rows[i].measured->get(m);
    if (state.config.effective_refit()) {
      gp::FitOptions options = state.config.fit;
      options.seed = derive_seed(state.config.seed, static_cast<std::uint64_t>(state.next_batch) + 0x100,
                                 static_cast<std::uint64_t>(k));
      models.at(m) = gp::fit(x, y, domain.feature_scaling(), options);
    } else {
      if (!state.frozen) throw Error(ErrorKind::InvalidState, "frozen hyperparameters are missing");
      models.at(m) = gp::condition(state.frozen->hyperparams[k], state.frozen->scaling[k], x, y);
    }
  }
  return models;
}

// ---- proposal -------------------------------------------------------------

namespace {

AcquisitionSpec acquisition_for(const CampaignState& state, int batch, std::array<int, 2> levels) {
  const auto& cfg = state.config;
  const auto& problem = cfg.problem;
  const bool final_batch = batch == state.batches() - 1;
  AcquisitionSpec spec;
  spec.mc_samples = cfg.mc_samples;
  spec.base_sample_seed = derive_seed(cfg.seed, 0xac9, static_cast<std::uint64_t>(batch));
  switch (cfg.strategy) {
    case Strategy::Run1Vanilla:
    case Strategy::Run4Simplified:
      spec.objective = problem.mfr_objective();
      spec.constraints = problem.output_constraints();
      break;
    case Strategy::Run2Relaxation:
      spec.objective = problem.mfr_objective();
      spec.constraints = problem.output_constraints(levels[0], levels[1]);
      break;
    case Strategy::Run3Reformulated:
      if (!final_batch) {
        spec.objective = ObjectiveSpec::maximize(Metric::ImpactStrength);
      } else {
        spec.objective = cfg.run3_final_mfr_distance ? problem.mfr_objective()
                                                     : ObjectiveSpec::maximize(Metric::ImpactStrength);
        spec.constraints = {ConstraintSpec::at_least(Metric::YoungsModulus, problem.youngs_min),
                            problem.mfr_corridor()};
      }
      break;
  }
  return spec;
}

nlohmann::json levels_json(std::array<int, 2> levels) { return nlohmann::json::array({levels[0], levels[1]}); }

}  // namespace

CampaignState propose_batch(const CampaignState& input) {
  if (input.status != CampaignStatus::ReadyToPropose) {
    throw Error(ErrorKind::InvalidState,
                "campaign is not ready to propose (status " + std::string(to_string(input.status)) + ")",
                {{"status", to_string(input.status)}});
  }
  CampaignState state = input;
  const auto& cfg = state.config;
  const int batch = state.next_batch;
  if (batch >= state.batches()) throw Error(ErrorKind::InvalidState, "schedule exhausted");
  const int size = cfg.schedule[static_cast<std::size_t>(batch)];

  std::vector<MixtureRecipe> recipes;
  Provenance provenance = Provenance::BoProposal;
  std::array<int, 2> levels{0, 0};
  std::optional<FrozenModels> new_frozen;
  nlohmann::json acquisition_values = nlohmann::json::array();

  if (cfg.strategy == Strategy::Run4Simplified && batch == 0) {
    recipes = sample_dirichlet_rejection(cfg.domain, size, derive_seed(cfg.seed, 0xd1)).recipes;
    provenance = Provenance::RandomInit;
  } else {
    if (!cfg.effective_refit() && !state.frozen) {
      new_frozen = fit_frozen(state);
      state.frozen = new_frozen;
    }
    const MetricModels models = build_models(state);
    const bool relaxable = cfg.strategy == Strategy::Run2Relaxation && batch < state.batches() - 1;
    if (relaxable) levels = state.relaxation_level;
    OptimizerOptions options = cfg.optimizer;
    options.batch_size = size;
    options.seed = derive_seed(cfg.seed, 0x0b7, static_cast<std::uint64_t>(batch));
    const DomainSpec domain = cfg.model_domain();
    for (;;) {
      try {
        const auto proposal = optimize_acquisition(models, acquisition_for(state, batch, levels), domain, options);
        recipes = proposal.recipes;
        for (double v : proposal.acquisition_values) acquisition_values.push_back(v);
        break;
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::AllStartsInfeasible || !relaxable) throw;
        if (levels[0] + 1 > cfg.max_relaxation_level) {
          throw Error(ErrorKind::RelaxationExhausted,
                      "constraints relaxed to the maximum level without a feasible proposal",
                      {{"batch", batch}, {"relaxation_level", levels_json(levels)}, {"last", e.detail()}});
        }
        levels = {levels[0] + 1, levels[1] + 1};
        apply_event(state, {{"event", "relaxed"},
                            {"batch", batch},
                            {"relaxation_level", levels_json(levels)},
                            {"infeasibility", e.detail()}});
      }
    }
  }

  nlohmann::json experiments = nlohmann::json::array();
  for (int i = 0; i < static_cast<int>(recipes.size()); ++i) {
    Experiment e;
    e.id = experiment_id(batch, i);
    e.batch_index = batch;
    e.recipe = recipes[static_cast<std::size_t>(i)];
    e.provenance = provenance;
    cfg.domain.validate(e.recipe);
    experiments.push_back(to_json(e));
  }
  nlohmann::json event{{"event", "proposed"},
                       {"batch", batch},
                       {"relaxation_level", levels_json(levels)},
                       {"experiments", experiments},
                       {"acquisition_values", acquisition_values}};
  if (new_frozen) event["models"] = new_frozen->to_json();
  state.frozen = input.frozen;
  apply_event(state, event);
  return state;
}

CampaignState record_results(const CampaignState& input, const std::vector<ResultEntry>& results) {
  if (input.status != CampaignStatus::AwaitingResults) {
    throw Error(ErrorKind::InvalidState,
                "campaign is not awaiting results (status " + std::string(to_string(input.status)) + ")",
                {{"status", to_string(input.status)}});
  }
  const auto open = input.open_batch();
  std::vector<std::string> seen;
  for (const auto& [id, metrics] : results) {
    const bool known = std::any_of(open.begin(), open.end(), [&](const Experiment* e) { return e->id == id; });
    if (!known) throw Error(ErrorKind::UnknownExperiment, "experiment " + id + " is not in the open batch", {{"id", id}});
    if (std::find(seen.begin(), seen.end(), id) != seen.end()) {
      throw Error(ErrorKind::InvalidArgument, "experiment " + id + " appears twice", {{"id", id}});
    }
    try {
      metrics.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::NonPositiveMetric, e.what(), {{"id", id}});
    }
    seen.push_back(id);
  }
  if (seen.size() != open.size()) {
    nlohmann::json missing = nlohmann::json::array();
    for (const auto* e : open) {
      if (std::find(seen.begin(), seen.end(), e->id) == seen.end()) missing.push_back(e->id);
    }
    throw Error(ErrorKind::IncompleteBatch, "results must cover the whole open batch", {{"missing", missing}});
  }
  CampaignState state = input;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto* e : open) {
    const auto it = std::find_if(results.begin(), results.end(), [&](const ResultEntry& r) { return r.first == e->id; });
    rows.push_back({{"id", e->id}, {"metrics", to_json(it->second)}});
  }
  apply_event(state, {{"event", "recorded"}, {"batch", state.next_batch}, {"results", rows}});
  if (state.next_batch >= state.batches()) apply_event(state, {{"event", "completed"}});
  return state;
}

CampaignState evaluate_with_oracle(const CampaignState& state, const OracleSpec& oracle) {
  if (state.status != CampaignStatus::AwaitingResults) {
    throw Error(ErrorKind::InvalidState, "campaign is not awaiting results");
  }
  std::vector<ResultEntry> results;
  for (const auto* e : state.open_batch()) {
    try {
      results.emplace_back(e->id, query(oracle, e->recipe, e->id));
    } catch (const Error& err) {
      nlohmann::json detail = err.detail();
      detail["id"] = e->id;
      throw Error(err.kind(), "oracle query for " + e->id + ": " + err.what(), detail);
    }
  }
  return record_results(state, results);
}

void run_simulation(CampaignState& state, const OracleSpec& oracle) {
  while (state.status != CampaignStatus::Complete) {
    if (state.status == CampaignStatus::ReadyToPropose) state = propose_batch(state);
    state = evaluate_with_oracle(state, oracle);
  }
}

// ---- summary ----------------------------------------------------------------

nlohmann::json CampaignSummary::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (const auto& b : batches) {
    per.push_back({{"batch", b.batch},
                   {"size", b.size},
                   {"completed", b.completed},
                   {"feasible", b.feasible},
                   {"best_mfr_distance", optional_json(b.best_mfr_distance)},
                   {"relaxation_level", b.relaxation_level},
                   {"ids", b.ids},
                   {"mfr", b.mfr},
                   {"youngs_modulus", b.youngs_modulus},
                   {"impact_strength", b.impact_strength}});
  }
  return {{"label", label},
          {"strategy", to_string(strategy)},
          {"status", to_string(status)},
          {"experiments", experiments},
          {"completed", completed},
          {"feasible_count", feasible_count},
          {"best_mfr_distance", optional_json(best_mfr_distance)},
          {"best_mfr", optional_json(best_mfr)},
          {"best_experiment", best_experiment},
          {"boundary_fraction", optional_json(boundary_fraction)},
          {"relaxation_level", relaxation_level},
          {"batches", per}};
}

CampaignSummary CampaignSummary::from_json(const nlohmann::json& j) {
  try {
    CampaignSummary s;
    s.label = j.at("label").get<std::string>();
    s.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    const auto status = j.value("status", std::string("complete"));
    s.status = status == "awaiting_results" ? CampaignStatus::AwaitingResults
               : status == "ready_to_propose" ? CampaignStatus::ReadyToPropose
                                              : CampaignStatus::Complete;
    s.experiments = j.value("experiments", 0);
    s.completed = j.value("completed", 0);
    s.feasible_count = j.value("feasible_count", 0);
    s.best_mfr_distance = optional_from(j, "best_mfr_distance");
    s.best_mfr = optional_from(j, "best_mfr");
    s.best_experiment = j.value("best_experiment", std::string());
    s.boundary_fraction = optional_from(j, "boundary_fraction");
    if (j.contains("relaxation_level")) s.relaxation_level = j.at("relaxation_level").get<std::array<int, 2>>();
    if (j.contains("batches")) {
      for (const auto& b : j.at("batches")) {
        BatchTrace t;
        t.batch = b.value("batch", 0);
        t.size = b.value("size", 0);
        t.completed = b.value("completed", 0);
        t.feasible = b.value("feasible", 0);
        t.best_mfr_distance = optional_from(b, "best_mfr_distance");
        if (b.contains("relaxation_level")) t.relaxation_level = b.at("relaxation_level").get<std::array<int, 2>>();
        t.ids = b.value("ids", std::vector<std::string>{});
        t.mfr = b.value("mfr", std::vector<double>{});
        t.youngs_modulus = b.value("youngs_modulus", std::vector<double>{});
        t.impact_strength = b.value("impact_strength", std::vector<double>{});
        s.batches.push_back(std::move(t));
      }
    }
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("campaign summary: ") + e.what());
  }
}

CampaignSummary campaign_summary(const CampaignState& state) {
  CampaignSummary s;
  const auto& problem = state.config.problem;
  s.label = state.config.label;
  s.strategy = state.config.strategy;
  s.status = state.status;
  s.relaxation_level = state.relaxation_level;
  s.experiments = static_cast<int>(state.history.size());

  std::vector<std::array<int, 2>> batch_levels(static_cast<std::size_t>(state.batches()), {0, 0});
  for (const auto& e : state.events) {
    if (e.at("event") == "proposed") {
      const int b = e.at("batch").get<int>();
      if (b >= 0 && b < state.batches()) {
        batch_levels[static_cast<std::size_t>(b)] = e.at("relaxation_level").get<std::array<int, 2>>();
      }
    }
  }
  for (int b = 0; b < state.batches(); ++b) {
    BatchTrace t;
    t.batch = b;
    t.size = state.config.schedule[static_cast<std::size_t>(b)];
    t.relaxation_level = batch_levels[static_cast<std::size_t>(b)];
    s.batches.push_back(t);
  }

  std::vector<MixtureRecipe> bo;
  for (const auto& e : state.history) {
    if (e.provenance == Provenance::BoProposal) bo.push_back(e.recipe);
    if (!e.completed()) continue;
    auto& t = s.batches[static_cast<std::size_t>(e.batch_index)];
    ++s.completed;
    ++t.completed;
    t.ids.push_back(e.id);
    t.mfr.push_back(e.measured->mfr);
    t.youngs_modulus.push_back(e.measured->youngs_modulus);
    t.impact_strength.push_back(e.measured->impact_strength);
    if (!problem.feasible(*e.measured)) continue;
    const double d = std::abs(e.measured->mfr - problem.mfr_target);
    ++s.feasible_count;
    ++t.feasible;
    if (!t.best_mfr_distance || d < *t.best_mfr_distance) t.best_mfr_distance = d;
    if (!s.best_mfr_distance || d < *s.best_mfr_distance) {
      s.best_mfr_distance = d;
      s.best_mfr = e.measured->mfr;
      s.best_experiment = e.id;
    }
  }
  if (!bo.empty()) s.boundary_fraction = boundary_fraction(bo, state.config.domain);
  return s;
}

void write_plot_data_csv(std::ostream& out, const CampaignState& state) {
  const auto& p = state.config.problem;
  out << "campaign,strategy,batch,experiment,index,metric,value,threshold,feasible\n";
  int index = 0;
  for (const auto& e : state.history) {
    if (!e.completed()) continue;
    ++index;
    const bool feasible = p.feasible(*e.measured);
    for (Metric m : kAllMetrics) {
      const double threshold = m == Metric::Mfr ? p.mfr_target
                               : m == Metric::YoungsModulus ? p.youngs_min
                                                            : p.impact_min;
      std::ostringstream value;
      value << std::setprecision(17) << e.measured->get(m);
      out << state.config.label << ',' << to_string(state.config.strategy) << ',' << e.batch_index << ','
          << e.id << ',' << index << ',' << to_string(m) << ',' << value.str() << ',' << threshold << ','
          << (feasible ? 1 : 0) << '\n';
    }
  }
}

}  // namespace mixbo
