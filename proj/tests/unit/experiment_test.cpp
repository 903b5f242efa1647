#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "taxirl/experiment.hpp"

using namespace taxirl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("taxirl_experiment_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ExperimentConfig config_from(const std::string& json) {
  return parse_config(json, testing::source_dir() / "configs");
}

const char* kSmall = R"({
  "network": "seven_zone_edges.txt",
  "demand": { "synthetic": { "default_rate": 0.1, "trip_duration": { "min": 2, "max": 5 } } },
  "policies": ["random", "greedy"],
  "taxis_per_zone": 1,
  "horizon": 120,
  "patience": [1, 4, 8],
  "seeds": [3, 4]
})";

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("policy names and seed streams") {
  for (auto kind : {PolicyKind::random, PolicyKind::greedy, PolicyKind::demand_based,
                    PolicyKind::qlearning, PolicyKind::amdqn}) {
    CHECK(parse_policy(to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(parse_policy("dqn"), ConfigError);
  CHECK(derive_seed(1, Stream::demand) != derive_seed(1, Stream::policy));
  CHECK(derive_seed(1, Stream::demand) != derive_seed(2, Stream::demand));
  CHECK(derive_seed(7, Stream::init) == derive_seed(7, Stream::init));
}

TEST_CASE("config parsing") {
  const auto cfg = load_config(testing::config_path("desk.json"));
  CHECK(cfg.policies.size() == 5);
  CHECK(cfg.patience == std::vector<Minute>{1, 2, 5, 10, 15});
  CHECK(cfg.seeds.size() == 5);
  CHECK(cfg.hyperparams.gamma == 0.99);  // untouched default
  CHECK(cfg.hyperparams.sync_period == 500);
  const auto& syn = std::get<DemandConfig>(cfg.demand);
  CHECK(syn.rates.size() == 7);
  CHECK(syn.rates[6] == 0.8);
  CHECK(syn.rates[0] == 0.02);
  CHECK(syn.trip_min == 3);

  CHECK_NOTHROW(config_from(kSmall));
  std::string typo = kSmall;
  typo.replace(typo.find("\"horizon\""), 9, "\"horizn\"");
  CHECK_THROWS_AS(config_from(typo), ConfigError);

  std::string nested = kSmall;
  nested.replace(nested.find("\"min\""), 5, "\"mn\"");
  CHECK_THROWS_AS(config_from(nested), ConfigError);

  std::string no_seeds = kSmall;
  no_seeds.replace(no_seeds.find("[3, 4]"), 6, "[]");
  CHECK_THROWS_AS(config_from(no_seeds), ConfigError);

  std::string bad_policy = kSmall;
  bad_policy.replace(bad_policy.find("\"greedy\""), 8, "\"greeedy\"");
  CHECK_THROWS_AS(config_from(bad_policy), ConfigError);

  std::string negative = kSmall;
  negative.replace(negative.find("[1, 4, 8]"), 9, "[1, -4]");
  CHECK_THROWS_AS(config_from(negative), ConfigError);

  std::string zero_horizon = kSmall;
  zero_horizon.replace(zero_horizon.find("120"), 3, "0");
  CHECK_THROWS_AS(config_from(zero_horizon), ConfigError);

  std::string bad_hp = kSmall;
  bad_hp.replace(bad_hp.find("\"taxis_per_zone\""), 0, R"("hyperparams": {"gamma": 2},)");
  CHECK_THROWS_AS(config_from(bad_hp), ConfigError);

  std::string missing_net = kSmall;
  missing_net.replace(missing_net.find("seven_zone_edges.txt"), 15, "nowhere.txt");
  CHECK_THROWS_AS(config_from(missing_net), ConfigError);

  CHECK_THROWS_AS(config_from("{ not json"), ConfigError);
}

TEST_CASE("zero demand leaves the ratios undefined") {
  auto cfg = config_from(kSmall);
  std::get<DemandConfig>(cfg.demand).rates.assign(7, 0.0);
  cfg.policies = {PolicyKind::random};
  cfg.patience = {5};
  cfg.seeds = {1};
  const auto report = run_experiment(cfg);
  REQUIRE(report.runs.size() == 1);
  CHECK(report.runs[0].metrics.total() == 0);
  CHECK_FALSE(report.runs[0].metrics.failure_rate());
  const auto lines = split_lines(format_runs_csv(report));
  REQUIRE(lines.size() == 2);
  CHECK(lines[1] == "random,5,1,NA,NA,NA,0,0,0");
  CHECK(split_lines(format_aggregate_csv(report))[1] == "random,5,1,NA,NA,NA,NA,NA,NA");
}

TEST_CASE("one zone, one driver, one order") {
  const auto dir = scratch("lone");
  {
    std::ofstream(dir / "lone.txt") << "# a single zone\n7\n";
    std::ofstream(dir / "trips.csv")
        << "Trip Start Timestamp,Trip Seconds,Pickup Community Area,Dropoff Community Area\n"
        << "08/01/2019 12:03:00 AM,120,7,7\n";
  }
  const auto cfg = parse_config(R"({
    "network": "lone.txt",
    "demand": { "trips": { "path": "trips.csv" } },
    "policies": ["random", "greedy", "demand_based", "qlearning", "amdqn"],
    "hyperparams": { "hidden": 4, "minibatch": 2 },
    "horizon": 20,
    "patience": [0, 3],
    "seeds": [1]
  })", dir);
  const auto report = run_experiment(cfg);
  REQUIRE(report.runs.size() == 10);
  for (const RunRow& r : report.runs) {
    CHECK(r.metrics.served == 1);
    CHECK(*r.metrics.failure_rate() == 0.0);
    CHECK(*r.metrics.avg_waiting_time() == 0.0);
    CHECK(*r.metrics.avg_idle_search_time() == 3.0);
  }
}

TEST_CASE("report shape and aggregate recomputation") {
  const auto report = run_experiment(config_from(kSmall));
  REQUIRE(report.runs.size() == 12);
  REQUIRE(report.aggregates.size() == 6);
  CHECK(split_lines(format_runs_csv(report)).size() == 13);
  CHECK(split_lines(format_aggregate_csv(report)).size() == 7);
  CHECK(split_lines(format_runs_csv(report))[0] ==
        "policy,patience,seed,failure_rate,avg_wait,avg_idle,served,failed,total");

  for (const RunRow& r : report.runs) {
    const auto fr = r.metrics.failure_rate();
    REQUIRE(fr);
    CHECK(*fr >= 0.0);
    CHECK(*fr <= 1.0);
  }
  for (const AggregateRow& a : report.aggregates) {
    std::vector<double> fr;
    for (const RunRow& r : report.runs) {
      if (r.policy == a.policy && r.patience == a.patience) fr.push_back(*r.metrics.failure_rate());
    }
    REQUIRE(fr.size() == 2);
    const double mean = (fr[0] + fr[1]) / 2;
    const double sd = std::sqrt(((fr[0] - mean) * (fr[0] - mean) + (fr[1] - mean) * (fr[1] - mean)) / 1);
    CHECK(a.runs == 2);
    CHECK(*a.failure_rate.mean == doctest::Approx(mean).epsilon(1e-15));
    CHECK(*a.failure_rate.stddev == doctest::Approx(sd).epsilon(1e-12));
  }

  const Summary one = summarize({0.4});
  CHECK(*one.mean == 0.4);
  CHECK(*one.stddev == 0.0);
  const Summary gaps = summarize({std::nullopt, 1.0, 3.0});
  CHECK(gaps.count == 2);
  CHECK(*gaps.mean == 2.0);
  CHECK(*gaps.stddev == doctest::Approx(std::sqrt(2.0)));
  CHECK_FALSE(summarize({std::nullopt}).mean);
}

TEST_CASE("reports are byte-identical across repeated runs") {
  auto cfg = config_from(kSmall);
  cfg.policies = {PolicyKind::random, PolicyKind::demand_based, PolicyKind::qlearning,
                  PolicyKind::amdqn};
  cfg.hyperparams.hidden = 8;
  cfg.patience = {3};
  cfg.event_log = true;
  const auto a = scratch("det_a"), b = scratch("det_b");
  cfg.output_dir = a;
  emit_report(run_experiment(cfg), a);
  cfg.output_dir = b;
  emit_report(run_experiment(cfg), b);
  for (const char* f : {"runs.csv", "aggregate.csv", "curves/amdqn_p3_s3.csv",
                        "events/qlearning_p3_s4.jsonl"}) {
    const auto text = slurp(a / f);
    CHECK_FALSE(text.empty());
    CHECK(text == slurp(b / f));
  }
  // Re-emitting the same report is stable too.
  const auto report = run_experiment(config_from(kSmall));
  const auto c = scratch("det_c");
  emit_report(report, c);
  const auto first = slurp(c / "runs.csv");
  emit_report(report, c);
  CHECK(slurp(c / "runs.csv") == first);
}

TEST_CASE("patience sweeps") {
  auto cfg = config_from(kSmall);
  cfg.policies = {PolicyKind::random};
  CHECK_THROWS_AS(sweep_patience(cfg, {}), ConfigError);
  const auto single = sweep_patience(cfg, {4});
  cfg.patience = {4};
  CHECK(format_runs_csv(single) == format_runs_csv(run_experiment(cfg)));

  // Same seed: same demand realization, only patience differs.
  const Experiment exp(cfg);
  const auto short_wait = exp.orders_for(2, 3);
  const auto long_wait = exp.orders_for(10, 3);
  REQUIRE(short_wait.size() == long_wait.size());
  for (std::size_t i = 0; i < short_wait.size(); ++i) {
    CHECK(short_wait[i].request_time == long_wait[i].request_time);
    CHECK(short_wait[i].source == long_wait[i].source);
  }
}

TEST_CASE("command-line tool") {
  const char* cli = std::getenv("TAXIRL_CLI");
  if (cli == nullptr) {
    MESSAGE("TAXIRL_CLI not set; skipping");
    return;
  }
  const auto dir = scratch("cli");
  {
    std::ofstream(dir / "cfg.json") << R"({
      "network": ")" << (testing::source_dir() / "configs" / "seven_zone_edges.txt").string() << R"(",
      "demand": { "synthetic": { "default_rate": 0.1 } },
      "policies": ["greedy"],
      "horizon": 60,
      "patience": [2],
      "seeds": [1]
    })";
    std::ofstream(dir / "typo.json") << R"({ "netwrk": "x" })";
  }
  const std::string exe = std::string("\"") + cli + "\"";
  const std::string quiet = " > " + (dir / "log.txt").string() + " 2>&1";
  CHECK(std::system((exe + " validate -c " + (dir / "cfg.json").string() + quiet).c_str()) == 0);
  CHECK(std::system((exe + " validate -c " + (dir / "typo.json").string() + quiet).c_str()) != 0);
  CHECK(std::system((exe + " run -c " + (dir / "cfg.json").string() + quiet).c_str()) != 0);
  const auto out = dir / "out";
  CHECK(std::system((exe + " sweep -c " + (dir / "cfg.json").string() + " -o " + out.string() +
                     " -p 1,5 -s 2" + quiet)
                        .c_str()) == 0);
  const auto lines = split_lines(slurp(out / "runs.csv"));
  REQUIRE(lines.size() == 3);
  CHECK(lines[1].rfind("greedy,1,2,", 0) == 0);
  CHECK(lines[2].rfind("greedy,5,2,", 0) == 0);
}
