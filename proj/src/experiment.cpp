#include "taxirl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace taxirl {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<PolicyKind, std::string_view>, 5> kPolicyNames{{
    {PolicyKind::random, "random"},
    {PolicyKind::greedy, "greedy"},
    {PolicyKind::demand_based, "demand_based"},
    {PolicyKind::qlearning, "qlearning"},
    {PolicyKind::amdqn, "amdqn"},
}};

constexpr std::array<std::string_view, 7> kDayNames{
    "monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"};

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

std::string format_optional(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string("NA");
}

}  // namespace

std::string_view to_string(PolicyKind kind) {
  for (auto [k, name] : kPolicyNames) {
    if (k == kind) return name;
  }
  return "unknown";
}

PolicyKind parse_policy(std::string_view name) {
  for (auto [k, n] : kPolicyNames) {
    if (n == name) return k;
  }
  throw ConfigError("unknown policy '" + std::string(name) + "'");
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream));
}

std::uint64_t decision_seed(std::uint64_t base, DriverId driver, Minute cycle) {
  const std::uint64_t h = splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(driver)));
  return splitmix64(h ^ static_cast<std::uint64_t>(cycle));
}

void QLearningController::end_cycle(const StepOutcome& outcome, bool final_cycle) {
  if (!learning_ || final_cycle) return;
  for (const Decision& d : outcome.decisions) {
    qlearning_update(*table_, {d.state, d.action, d.reward, d.next_state, d.elapsed},
                     alpha_q_, gamma_);
  }
}

MetricsReport run_episode(Simulator& sim, Controller& controller, Minute cycles,
                          const StepObserver& observer) {
  for (Minute c = 0; c < cycles; ++c) {
    controller.begin_cycle(sim);
    Simulator::ActionMap actions;
    for (DriverId d : sim.vacant_drivers()) {
      actions.emplace(d, controller.choose(d, sim.observe_state(d)));
    }
    const StepOutcome outcome = sim.step(actions);
    controller.end_cycle(outcome, c + 1 == cycles);
    if (observer) observer(sim, outcome);
  }
  return sim.metrics();
}

// ---------------------------------------------------------------------------
// Configuration

void ExperimentConfig::validate() const {
  if (network_path.empty()) throw ConfigError("config: 'network' is required");
  if (policies.empty()) throw ConfigError("config: at least one policy is required");
  if (seeds.empty()) throw ConfigError("config: at least one seed is required");
  if (patience.empty()) throw ConfigError("config: at least one patience value is required");
  if (horizon < 1) throw ConfigError("config: horizon must be >= 1");
  if (taxis_per_zone < 0) throw ConfigError("config: taxis_per_zone must be >= 0");
  if (train_episodes < 0) throw ConfigError("config: train_episodes must be >= 0");
  if (!std::isfinite(reward_scale)) throw ConfigError("config: reward_scale must be finite");
  for (Minute p : patience) {
    if (p < 0) throw ConfigError("config: patience values must be >= 0");
  }
  if (!(qlearning_alpha >= 0 && qlearning_alpha <= 1)) {
    throw ConfigError("config: qlearning.alpha must lie in [0,1]");
  }
  if (!(qlearning_epsilon >= 0 && qlearning_epsilon <= 1)) {
    throw ConfigError("config: qlearning.epsilon must lie in [0,1]");
  }
  try {
    hyperparams.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: hyperparams: ") + e.what());
  }
}

namespace {

void check_keys(const json& obj, std::initializer_list<std::string_view> allowed,
                std::string_view where) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
    }
  }
}

template <typename T>
T get(const json& obj, const char* key, std::string_view where) {
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string(where) + "." + key + ": " + e.what());
  }
}

Weekday parse_day(const json& v) {
  if (v.is_number_integer()) {
    const auto d = v.get<int>();
    if (d < 0 || d > 6) throw ConfigError("config: start_day must lie in 0..6");
    return static_cast<Weekday>(d);
  }
  if (v.is_string()) {
    const auto name = v.get<std::string>();
    for (std::size_t i = 0; i < kDayNames.size(); ++i) {
      if (kDayNames[i] == name) return static_cast<Weekday>(i);
    }
  }
  throw ConfigError("config: start_day must be a weekday name or 0..6");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

Hyperparams parse_hyperparams(const json& obj) {
  check_keys(obj,
             {"gamma", "alpha", "replay_capacity", "minibatch", "sync_period", "epsilon",
              "lambda", "hidden", "discount_by_duration"},
             "hyperparams");
  Hyperparams hp;
  const char* where = "hyperparams";
  if (obj.contains("gamma")) hp.gamma = get<double>(obj, "gamma", where);
  if (obj.contains("alpha")) hp.alpha = get<double>(obj, "alpha", where);
  if (obj.contains("replay_capacity")) {
    hp.replay_capacity = get<std::size_t>(obj, "replay_capacity", where);
  }
  if (obj.contains("minibatch")) hp.minibatch = get<std::size_t>(obj, "minibatch", where);
  if (obj.contains("sync_period")) hp.sync_period = get<std::int64_t>(obj, "sync_period", where);
  if (obj.contains("epsilon")) hp.epsilon = get<double>(obj, "epsilon", where);
  if (obj.contains("lambda")) hp.lambda = get<double>(obj, "lambda", where);
  if (obj.contains("hidden")) hp.hidden = get<int>(obj, "hidden", where);
  if (obj.contains("discount_by_duration")) {
    hp.discount_by_duration = get<bool>(obj, "discount_by_duration", where);
  }
  return hp;
}

TripSource parse_trip_source(const json& obj, const std::filesystem::path& base) {
  check_keys(obj, {"path", "columns", "episode_start"}, "demand.trips");
  TripSource src;
  src.path = resolve(base, get<std::string>(obj, "path", "demand.trips"));
  if (obj.contains("columns")) {
    const json& c = obj.at("columns");
    check_keys(c, {"start_timestamp", "pickup_area", "dropoff_area", "trip_seconds"},
               "demand.trips.columns");
    auto& cols = src.options.columns;
    const char* where = "demand.trips.columns";
    if (c.contains("start_timestamp")) cols.start_timestamp = get<std::string>(c, "start_timestamp", where);
    if (c.contains("pickup_area")) cols.pickup_area = get<std::string>(c, "pickup_area", where);
    if (c.contains("dropoff_area")) cols.dropoff_area = get<std::string>(c, "dropoff_area", where);
    if (c.contains("trip_seconds")) cols.trip_seconds = get<std::string>(c, "trip_seconds", where);
  }
  if (obj.contains("episode_start")) {
    auto text = get<std::string>(obj, "episode_start", "demand.trips");
    auto t = parse_timestamp(text);
    if (!t) throw ConfigError("demand.trips.episode_start: cannot parse '" + text + "'");
    src.options.episode_start = *t;
  }
  return src;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

DemandConfig parse_synthetic_demand(std::string_view json_text, const ZoneNetwork& net,
                                    Minute horizon) {
  json obj;
  try {
    obj = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("synthetic demand: ") + e.what());
  }
  check_keys(obj, {"default_rate", "rates", "destinations", "trip_duration"},
             "demand.synthetic");
  DemandConfig cfg = DemandConfig::uniform(net, horizon);
  const char* where = "demand.synthetic";
  if (obj.contains("default_rate")) {
    std::fill(cfg.rates.begin(), cfg.rates.end(), get<double>(obj, "default_rate", where));
  }
  auto zone_of = [&](const std::string& key) {
    ExternalZoneId id = 0;
    auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), id);
    if (ec != std::errc{} || ptr != key.data() + key.size()) {
      throw ConfigError(std::string(where) + ": bad zone key '" + key + "'");
    }
    auto z = net.find(id);
    if (!z) throw ConfigError(std::string(where) + ": zone " + key + " not in network");
    return static_cast<std::size_t>(*z);
  };
  if (obj.contains("rates")) {
    const json& rates = obj.at("rates");
    if (!rates.is_object()) throw ConfigError(std::string(where) + ".rates: expected object");
    for (const auto& [key, v] : rates.items()) {
      if (!v.is_number()) throw ConfigError(std::string(where) + ".rates: non-numeric rate");
      cfg.rates[zone_of(key)] = v.get<double>();
    }
  }
  if (obj.contains("destinations")) {
    const json& d = obj.at("destinations");
    if (d.is_string() && d.get<std::string>() == "uniform") {
      // already uniform
    } else if (d.is_object()) {
      for (const auto& [src, row] : d.items()) {
        if (!row.is_object()) {
          throw ConfigError(std::string(where) + ".destinations: rows must be objects");
        }
        auto& out = cfg.destinations[zone_of(src)];
        std::fill(out.begin(), out.end(), 0.0);
        for (const auto& [dst, w] : row.items()) {
          if (!w.is_number()) {
            throw ConfigError(std::string(where) + ".destinations: non-numeric weight");
          }
          out[zone_of(dst)] = w.get<double>();
        }
      }
    } else {
      throw ConfigError(std::string(where) + ".destinations: expected \"uniform\" or object");
    }
  }
  if (obj.contains("trip_duration")) {
    const json& td = obj.at("trip_duration");
    check_keys(td, {"min", "max"}, "demand.synthetic.trip_duration");
    cfg.trip_min = get<Minute>(td, "min", "demand.synthetic.trip_duration");
    cfg.trip_max = get<Minute>(td, "max", "demand.synthetic.trip_duration");
  }
  try {
    cfg.validate();
  } catch (const DemandError& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

namespace {

// Synthetic demand stays as JSON text until the network is loaded, since its
// tables are keyed by external zone ID.
struct ParsedConfig {
  ExperimentConfig cfg;
  std::optional<std::string> synthetic_json;
};

ParsedConfig parse_config_json(std::string_view json_text,
                               const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  check_keys(root,
             {"network", "demand", "policies", "hyperparams", "qlearning", "taxis_per_zone",
              "horizon", "start_day", "patience", "seeds", "train_episodes", "reward_scale",
              "output_dir", "event_log"},
             "config");
  ParsedConfig out;
  ExperimentConfig& cfg = out.cfg;
  const char* where = "config";
  cfg.network_path = resolve(base_dir, get<std::string>(root, "network", where));
  for (const auto& name : get<std::vector<std::string>>(root, "policies", where)) {
    cfg.policies.push_back(parse_policy(name));
  }
  if (root.contains("hyperparams")) cfg.hyperparams = parse_hyperparams(root.at("hyperparams"));
  if (root.contains("qlearning")) {
    const json& q = root.at("qlearning");
    check_keys(q, {"alpha", "epsilon"}, "qlearning");
    if (q.contains("alpha")) cfg.qlearning_alpha = get<double>(q, "alpha", "qlearning");
    if (q.contains("epsilon")) cfg.qlearning_epsilon = get<double>(q, "epsilon", "qlearning");
  }
  if (root.contains("taxis_per_zone")) cfg.taxis_per_zone = get<int>(root, "taxis_per_zone", where);
  if (root.contains("horizon")) cfg.horizon = get<Minute>(root, "horizon", where);
  if (root.contains("start_day")) cfg.start_day = parse_day(root.at("start_day"));
  cfg.patience = get<std::vector<Minute>>(root, "patience", where);
  cfg.seeds = get<std::vector<std::uint64_t>>(root, "seeds", where);
  if (root.contains("train_episodes")) cfg.train_episodes = get<int>(root, "train_episodes", where);
  if (root.contains("reward_scale")) cfg.reward_scale = get<double>(root, "reward_scale", where);
  if (root.contains("output_dir")) {
    cfg.output_dir = resolve(base_dir, get<std::string>(root, "output_dir", where));
  }
  if (root.contains("event_log")) cfg.event_log = get<bool>(root, "event_log", where);

  const json& demand = root.at("demand");
  check_keys(demand, {"synthetic", "trips"}, "demand");
  if (demand.size() != 1) throw ConfigError("demand: give exactly one of 'synthetic' or 'trips'");
  if (demand.contains("trips")) {
    cfg.demand = parse_trip_source(demand.at("trips"), base_dir);
  } else {
    const json& syn = demand.at("synthetic");
    if (syn.is_string()) {
      out.synthetic_json = read_file(resolve(base_dir, syn.get<std::string>()));
    } else {
      out.synthetic_json = syn.dump();
    }
    cfg.demand = DemandConfig{};
  }
  cfg.validate();
  return out;
}

}  // namespace

ExperimentConfig parse_config(std::string_view json_text, const std::filesystem::path& base_dir) {
  ParsedConfig parsed = parse_config_json(json_text, base_dir);
  if (parsed.synthetic_json) {
    try {
      const ZoneNetwork net = ZoneNetwork::load(parsed.cfg.network_path);
      parsed.cfg.demand =
          parse_synthetic_demand(*parsed.synthetic_json, net, parsed.cfg.horizon);
    } catch (const NetworkError& e) {
      throw ConfigError(e.what());
    }
  }
  return parsed.cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path), path.parent_path());
}

// ---------------------------------------------------------------------------
// Runs

Experiment::Experiment(ExperimentConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  try {
    network_ = std::make_unique<ZoneNetwork>(ZoneNetwork::load(cfg_.network_path));
    network_->max_degree();
  } catch (const NetworkError& e) {
    throw ConfigError(e.what());
  }
  if (auto* syn = std::get_if<DemandConfig>(&cfg_.demand)) {
    syn->horizon = cfg_.horizon;
    if (syn->rates.size() != static_cast<std::size_t>(network_->zone_count())) {
      throw ConfigError("synthetic demand does not match the zone network");
    }
    try {
      syn->validate();
    } catch (const DemandError& e) {
      throw ConfigError(e.what());
    }
  } else {
    auto& src = std::get<TripSource>(cfg_.demand);
    std::ifstream in(src.path);
    if (!in) throw ConfigError("cannot open trip file " + src.path.string());
    TripParseOptions options = src.options;
    options.horizon = cfg_.horizon;
    try {
      trip_orders_ = parse_trip_records(in, *network_, options).orders;
    } catch (const DemandError& e) {
      throw ConfigError(src.path.string() + ": " + e.what());
    }
  }
}

std::vector<Order> Experiment::orders_for(Minute patience, std::uint64_t seed) const {
  if (const auto* syn = std::get_if<DemandConfig>(&cfg_.demand)) {
    DemandConfig d = *syn;
    d.patience = patience;
    return synth_orders(d, derive_seed(seed, Stream::demand));
  }
  std::vector<Order> orders = trip_orders_;
  for (Order& o : orders) o.patience = patience;
  return orders;
}

namespace {

std::string run_stem(PolicyKind policy, Minute patience, std::uint64_t seed) {
  return std::string(to_string(policy)) + "_p" + std::to_string(patience) + "_s" +
         std::to_string(seed);
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

}  // namespace

RunRow Experiment::run_one(PolicyKind policy, Minute patience, std::uint64_t seed) const {
  const ZoneNetwork& net = *network_;
  const std::vector<Order> orders = orders_for(patience, seed);
  const std::uint64_t policy_seed = derive_seed(seed, Stream::policy);
  const std::string stem = run_stem(policy, patience, seed);
  auto fresh_sim = [&] {
    return Simulator(net, orders, cfg_.taxis_per_zone, cfg_.start_day, cfg_.reward_scale);
  };

  std::unique_ptr<Controller> controller;
  std::optional<QTable> table;
  std::optional<AmDqnAgent> agent;
  switch (policy) {
    case PolicyKind::random:
      controller = std::make_unique<RandomController>(net, policy_seed);
      break;
    case PolicyKind::greedy:
      controller = std::make_unique<GreedyController>(net);
      break;
    case PolicyKind::demand_based:
      controller = std::make_unique<DemandBasedController>(net, policy_seed);
      break;
    case PolicyKind::qlearning: {
      table.emplace(net);
      QLearningController learner(*table, cfg_.qlearning_epsilon, policy_seed, true,
                                  cfg_.qlearning_alpha, cfg_.hyperparams.gamma);
      for (int ep = 0; ep < cfg_.train_episodes; ++ep) {
        Simulator sim = fresh_sim();
        run_episode(sim, learner, cfg_.horizon);
      }
      controller = std::make_unique<QLearningController>(
          *table, cfg_.qlearning_epsilon, derive_seed(policy_seed, Stream::policy), false,
          cfg_.qlearning_alpha, cfg_.hyperparams.gamma);
      break;
    }
    case PolicyKind::amdqn: {
      agent.emplace(net, cfg_.hyperparams, derive_seed(seed, Stream::init), policy_seed);
      std::vector<CurvePoint> curve;
      for (int ep = 0; ep < cfg_.train_episodes; ++ep) {
        Simulator sim = fresh_sim();
        auto part = agent->train(sim, cfg_.horizon);
        curve.insert(curve.end(), part.begin(), part.end());
      }
      if (!cfg_.output_dir.empty()) {
        auto out = open_output(cfg_.output_dir / "curves" / (stem + ".csv"));
        write_learning_curve(out, curve);
      }
      controller = std::make_unique<AmDqnController>(*agent, cfg_.hyperparams.epsilon);
      break;
    }
  }

  Simulator sim = fresh_sim();
  std::ofstream events;
  StepObserver observer;
  if (cfg_.event_log && !cfg_.output_dir.empty()) {
    events = open_output(cfg_.output_dir / "events" / (stem + ".jsonl"));
    observer = [&](const Simulator&, const StepOutcome& o) { write_event_log(events, o); };
  }
  RunRow row{policy, patience, seed, run_episode(sim, *controller, cfg_.horizon, observer)};
  if (events.is_open() && !events) throw std::runtime_error("event log write failed");
  return row;
}

SweepReport Experiment::run() const {
  SweepReport report;
  for (PolicyKind policy : cfg_.policies) {
    for (Minute patience : cfg_.patience) {
      for (std::uint64_t seed : cfg_.seeds) {
        report.runs.push_back(run_one(policy, patience, seed));
      }
    }
  }
  report.aggregates = aggregate(report.runs);
  return report;
}

SweepReport run_experiment(const ExperimentConfig& cfg) { return Experiment(cfg).run(); }

SweepReport sweep_patience(ExperimentConfig cfg, const std::vector<Minute>& patience_list) {
  if (patience_list.empty()) throw ConfigError("patience sweep needs at least one value");
  cfg.patience = patience_list;
  return run_experiment(cfg);
}

// ---------------------------------------------------------------------------
// Reports

Summary summarize(const std::vector<std::optional<double>>& values) {
  Summary s;
  double sum = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++s.count;
  }
  if (s.count == 0) return s;
  const double mean = sum / static_cast<double>(s.count);
  double ss = 0;
  for (const auto& v : values) {
    if (v) ss += (*v - mean) * (*v - mean);
  }
  s.mean = mean;
  s.stddev = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  return s;
}

std::vector<AggregateRow> aggregate(const std::vector<RunRow>& runs) {
  std::vector<AggregateRow> out;
  std::vector<std::pair<PolicyKind, Minute>> keys;
  for (const RunRow& r : runs) {
    std::pair key{r.policy, r.patience};
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) keys.push_back(key);
  }
  for (auto [policy, patience] : keys) {
    std::vector<std::optional<double>> fr, wait, idle;
    for (const RunRow& r : runs) {
      if (r.policy != policy || r.patience != patience) continue;
      fr.push_back(r.metrics.failure_rate());
      wait.push_back(r.metrics.avg_waiting_time());
      idle.push_back(r.metrics.avg_idle_search_time());
    }
    out.push_back({policy, patience, fr.size(), summarize(fr), summarize(wait), summarize(idle)});
  }
  return out;
}

std::string format_runs_csv(const SweepReport& report) {
  std::string out = "policy,patience,seed,failure_rate,avg_wait,avg_idle,served,failed,total\n";
  for (const RunRow& r : report.runs) {
    const MetricsReport& m = r.metrics;
    out += std::string(to_string(r.policy)) + ',' + std::to_string(r.patience) + ',' +
           std::to_string(r.seed) + ',' + format_optional(m.failure_rate()) + ',' +
           format_optional(m.avg_waiting_time()) + ',' +
           format_optional(m.avg_idle_search_time()) + ',' + std::to_string(m.served) + ',' +
           std::to_string(m.failed) + ',' + std::to_string(m.total()) + '\n';
  }
  return out;
}

std::string format_aggregate_csv(const SweepReport& report) {
  std::string out =
      "policy,patience,runs,fr_mean,fr_std,wait_mean,wait_std,idle_mean,idle_std\n";
  for (const AggregateRow& a : report.aggregates) {
    out += std::string(to_string(a.policy)) + ',' + std::to_string(a.patience) + ',' +
           std::to_string(a.runs);
    for (const Summary* s : {&a.failure_rate, &a.waiting_time, &a.idle_search_time}) {
      out += ',' + format_optional(s->mean) + ',' + format_optional(s->stddev);
    }
    out += '\n';
  }
  return out;
}

void emit_report(const SweepReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
  for (auto [name, text] : {std::pair{"runs.csv", format_runs_csv(report)},
                            std::pair{"aggregate.csv", format_aggregate_csv(report)}}) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }
}

}  // namespace taxirl
