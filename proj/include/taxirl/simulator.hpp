#pragma once

#include <compare>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "taxirl/demand_stream.hpp"
#include "taxirl/zone_graph.hpp"

namespace taxirl {

using DriverId = int;

inline constexpr int kMinutesPerDay = 1440;
inline constexpr int kDaysPerWeek = 7;

class SimulationError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Monday is 0.
enum class Weekday : int { monday = 0, tuesday, wednesday, thursday, friday, saturday, sunday };

/// Decision state (minute of day, day of week, zone).
struct MdpState {
  int minute = 0;
  int day = 0;
  ZoneId zone = 0;

  auto operator<=>(const MdpState&) const = default;
};

struct Driver {
  DriverId id = 0;
  ZoneId zone = 0;
  bool busy = false;
  Minute busy_until = 0;      // valid when busy
  Minute idle_since = 0;      // valid when vacant
  ZoneId pending_dropoff = 0; // valid when busy
};

enum class OrderStatus : std::uint8_t { pending, waiting, served, failed };

/// One vacant driver's decision in one cycle.
struct Decision {
  DriverId driver = 0;
  MdpState state;
  ActionIndex action = 0;
  ZoneId moved_to = 0;
  double reward = 0;
  std::optional<OrderId> order;
  /// Next decision state: one cycle later at `moved_to`, or at the dropoff
  /// zone after the trip when matched.
  MdpState next_state;
  /// Minutes until `next_state` (1, or the trip duration when matched).
  Minute elapsed = 1;
};

struct StepOutcome {
  Minute cycle = 0;
  std::vector<Decision> decisions;  // ascending driver ID
  std::vector<OrderId> expired;
};

/// Supply and demand counts per zone at one instant.
struct DemandSnapshot {
  std::vector<int> waiting;
  std::vector<int> vacant;
};

struct MetricsReport {
  std::int64_t served = 0;
  std::int64_t failed = 0;
  std::int64_t waiting = 0;
  std::int64_t injected = 0;
  std::int64_t total_wait = 0;
  std::int64_t total_idle = 0;
  std::int64_t idle_intervals = 0;

  /// Decided orders, served + failed.
  std::int64_t total() const { return served + failed; }
  std::optional<double> failure_rate() const;
  std::optional<double> avg_waiting_time() const;
  std::optional<double> avg_idle_search_time() const;

  bool operator==(const MetricsReport&) const = default;
};

/// Reward for a pickup, (p_o - t_w) * scale. Throws when the pickup falls
/// outside the patience window.
double compute_reward(const Order& order, Minute pickup_time, double scale = 1.0);

/// One-minute-cycle ride-hailing world. Keeps a reference to `network`, which
/// must outlive the simulator.
class Simulator {
 public:
  using ActionMap = std::map<DriverId, ActionIndex>;

  Simulator(const ZoneNetwork& network, std::vector<Order> orders, int taxis_per_zone,
            Weekday start_day = Weekday::monday, double reward_scale = 1.0);
  /// One driver per entry of `driver_zones`, IDs in list order.
  Simulator(const ZoneNetwork& network, std::vector<Order> orders,
            const std::vector<ZoneId>& driver_zones, Weekday start_day = Weekday::monday,
            double reward_scale = 1.0);

  Minute clock() const { return clock_; }
  const ZoneNetwork& network() const { return *network_; }
  std::span<const Driver> drivers() const { return drivers_; }
  std::vector<DriverId> vacant_drivers() const;
  std::span<const Order> orders() const { return orders_; }
  OrderStatus status(std::size_t order_index) const { return status_[order_index]; }

  MdpState observe_state(DriverId d) const;
  /// State at absolute minute `at` for `zone`.
  MdpState state_at(Minute at, ZoneId zone) const;
  DemandSnapshot snapshot() const;

  /// Advances one cycle. Every vacant driver needs exactly one unmasked
  /// action; busy drivers must be absent.
  StepOutcome step(const ActionMap& actions);

  MetricsReport metrics() const { return metrics_; }

 private:
  void inject_arrivals();

  const ZoneNetwork* network_;
  std::vector<Order> orders_;
  std::vector<OrderStatus> status_;
  std::vector<Driver> drivers_;
  std::vector<std::deque<std::size_t>> waiting_;  // order indices per zone
  std::size_t next_arrival_ = 0;
  Minute clock_ = 0;
  Weekday start_day_;
  double reward_scale_;
  MetricsReport metrics_;
};

/// Writes one JSON line per decision of the outcome.
void write_event_log(std::ostream& out, const StepOutcome& outcome);

}  // namespace taxirl
