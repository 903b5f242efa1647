#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "taxirl/amdqn_agent.hpp"
#include "taxirl/baselines.hpp"
#include "taxirl/demand_stream.hpp"
#include "taxirl/simulator.hpp"
#include "taxirl/zone_graph.hpp"

namespace taxirl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class PolicyKind { random, greedy, demand_based, qlearning, amdqn };

std::string_view to_string(PolicyKind kind);
PolicyKind parse_policy(std::string_view name);

/// Independent random stream for (seed, purpose).
enum class Stream : std::uint64_t { demand = 1, policy = 2, init = 3 };
std::uint64_t derive_seed(std::uint64_t seed, Stream stream);
/// Seed for one driver's decision in one cycle. Runs that share `base` draw
/// the same numbers for the same (driver, cycle), however their trajectories
/// differ elsewhere.
std::uint64_t decision_seed(std::uint64_t base, DriverId driver, Minute cycle);

// ---------------------------------------------------------------------------
// Controllers: one repositioning decision per vacant driver per cycle.

class Controller {
 public:
  virtual ~Controller() = default;
  /// Called once per cycle before any decision.
  virtual void begin_cycle(const Simulator&) {}
  virtual ActionIndex choose(DriverId d, const MdpState& s) = 0;
  virtual void end_cycle(const StepOutcome&, bool /*final_cycle*/) {}
};

class RandomController : public Controller {
 public:
  RandomController(const ZoneNetwork& net, std::uint64_t seed) : net_(&net), seed_(seed) {}
  void begin_cycle(const Simulator& sim) override { cycle_ = sim.clock(); }
  ActionIndex choose(DriverId d, const MdpState& s) override {
    Rng rng(decision_seed(seed_, d, cycle_));
    return random_policy(s.zone, *net_, rng);
  }

 private:
  const ZoneNetwork* net_;
  std::uint64_t seed_;
  Minute cycle_ = 0;
};

/// Snapshot taken at the start of each cycle, before anyone moves.
class GreedyController : public Controller {
 public:
  explicit GreedyController(const ZoneNetwork& net) : net_(&net) {}
  void begin_cycle(const Simulator& sim) override { snap_ = sim.snapshot(); }
  ActionIndex choose(DriverId, const MdpState& s) override {
    return greedy_policy(s.zone, *net_, snap_);
  }

 private:
  const ZoneNetwork* net_;
  DemandSnapshot snap_;
};

class DemandBasedController : public Controller {
 public:
  DemandBasedController(const ZoneNetwork& net, std::uint64_t seed) : net_(&net), seed_(seed) {}
  void begin_cycle(const Simulator& sim) override {
    snap_ = sim.snapshot();
    cycle_ = sim.clock();
  }
  ActionIndex choose(DriverId d, const MdpState& s) override {
    Rng rng(decision_seed(seed_, d, cycle_));
    return demand_based_policy(s.zone, *net_, snap_, rng);
  }

 private:
  const ZoneNetwork* net_;
  std::uint64_t seed_;
  DemandSnapshot snap_;
  Minute cycle_ = 0;
};

/// ε-greedy over a Q-table; learns from every decision when `learning`.
class QLearningController : public Controller {
 public:
  QLearningController(QTable& table, double epsilon, std::uint64_t seed, bool learning,
                      double alpha_q, double gamma)
      : table_(&table), epsilon_(epsilon), rng_(seed), learning_(learning),
        alpha_q_(alpha_q), gamma_(gamma) {}
  ActionIndex choose(DriverId, const MdpState& s) override {
    return qlearning_policy(*table_, s, epsilon_, rng_);
  }
  void end_cycle(const StepOutcome& outcome, bool final_cycle) override;

 private:
  QTable* table_;
  double epsilon_;
  Rng rng_;
  bool learning_;
  double alpha_q_;
  double gamma_;
};

/// Fixed exploration probability over a trained agent.
class AmDqnController : public Controller {
 public:
  AmDqnController(AmDqnAgent& agent, double threshold) : agent_(&agent), threshold_(threshold) {}
  ActionIndex choose(DriverId, const MdpState& s) override { return agent_->act(s, threshold_); }

 private:
  AmDqnAgent* agent_;
  double threshold_;
};

using StepObserver = std::function<void(const Simulator&, const StepOutcome&)>;

/// Drives `sim` for `cycles` cycles under `controller`.
MetricsReport run_episode(Simulator& sim, Controller& controller, Minute cycles,
                          const StepObserver& observer = {});

// ---------------------------------------------------------------------------
// Configuration

struct TripSource {
  std::filesystem::path path;
  TripParseOptions options;
};

struct ExperimentConfig {
  std::filesystem::path network_path;
  /// Synthetic demand (patience filled per run) or a trip-record file.
  std::variant<DemandConfig, TripSource> demand;
  std::vector<PolicyKind> policies;
  Hyperparams hyperparams;
  double qlearning_alpha = 0.1;
  double qlearning_epsilon = 0.1;
  int taxis_per_zone = 1;
  Minute horizon = 1440;
  Weekday start_day = Weekday::monday;
  std::vector<Minute> patience;
  std::vector<std::uint64_t> seeds;
  int train_episodes = 1;
  double reward_scale = 1.0;
  std::filesystem::path output_dir;
  bool event_log = false;

  /// Throws ConfigError on the first violated constraint.
  void validate() const;
};

/// Parses the JSON config. Relative paths resolve against `base_dir`.
/// Unknown keys are errors.
ExperimentConfig parse_config(std::string_view json_text,
                              const std::filesystem::path& base_dir);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Synthetic demand tables keyed by external zone ID, as a JSON object.
DemandConfig parse_synthetic_demand(std::string_view json_text, const ZoneNetwork& net,
                                    Minute horizon);

// ---------------------------------------------------------------------------
// Runs and reports

struct RunRow {
  PolicyKind policy = PolicyKind::random;
  Minute patience = 0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
};

struct Summary {
  std::size_t count = 0;  // runs with a defined value
  std::optional<double> mean;
  std::optional<double> stddev;  // sample standard deviation; 0 for one run
};

struct AggregateRow {
  PolicyKind policy = PolicyKind::random;
  Minute patience = 0;
  std::size_t runs = 0;
  Summary failure_rate;
  Summary waiting_time;
  Summary idle_search_time;
};

struct SweepReport {
  std::vector<RunRow> runs;
  std::vector<AggregateRow> aggregates;
};

Summary summarize(const std::vector<std::optional<double>>& values);
/// One aggregate row per (policy, patience), in first-appearance order.
std::vector<AggregateRow> aggregate(const std::vector<RunRow>& runs);

/// Network and demand loaded once, shared by every run of an experiment.
class Experiment {
 public:
  /// Loads and validates all inputs; throws before anything runs.
  explicit Experiment(ExperimentConfig cfg);

  const ExperimentConfig& config() const { return cfg_; }
  const ZoneNetwork& network() const { return *network_; }

  std::vector<Order> orders_for(Minute patience, std::uint64_t seed) const;
  RunRow run_one(PolicyKind policy, Minute patience, std::uint64_t seed) const;
  SweepReport run() const;

 private:
  ExperimentConfig cfg_;
  std::unique_ptr<ZoneNetwork> network_;
  std::vector<Order> trip_orders_;  // trip-file demand only
};

SweepReport run_experiment(const ExperimentConfig& cfg);
/// Runs every patience value of `patience_list` against paired seeds.
SweepReport sweep_patience(ExperimentConfig cfg, const std::vector<Minute>& patience_list);

/// Writes runs.csv and aggregate.csv into `dir`.
void emit_report(const SweepReport& report, const std::filesystem::path& dir);
std::string format_runs_csv(const SweepReport& report);
std::string format_aggregate_csv(const SweepReport& report);

}  // namespace taxirl
