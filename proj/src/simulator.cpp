#include "taxirl/simulator.hpp"

#include <algorithm>
#include <ostream>
#include <string>

namespace taxirl {

std::optional<double> MetricsReport::failure_rate() const {
  if (total() == 0) return std::nullopt;
  return static_cast<double>(failed) / static_cast<double>(total());
}

std::optional<double> MetricsReport::avg_waiting_time() const {
  if (served == 0) return std::nullopt;
  return static_cast<double>(total_wait) / static_cast<double>(served);
}

std::optional<double> MetricsReport::avg_idle_search_time() const {
  if (idle_intervals == 0) return std::nullopt;
  return static_cast<double>(total_idle) / static_cast<double>(idle_intervals);
}

double compute_reward(const Order& order, Minute pickup_time, double scale) {
  const Minute wait = pickup_time - order.request_time;
  if (wait < 0 || wait > order.patience) {
    throw SimulationError("pickup of order " + std::to_string(order.id) +
                          " outside its patience window");
  }
  return static_cast<double>(order.patience - wait) * scale;
}

namespace {

std::vector<ZoneId> even_placement(const ZoneNetwork& network, int taxis_per_zone) {
  if (taxis_per_zone < 0) throw SimulationError("taxis_per_zone must be >= 0");
  std::vector<ZoneId> zones;
  for (ZoneId z = 0; z < network.zone_count(); ++z) zones.insert(zones.end(), taxis_per_zone, z);
  return zones;
}

}  // namespace

Simulator::Simulator(const ZoneNetwork& network, std::vector<Order> orders,
                     int taxis_per_zone, Weekday start_day, double reward_scale)
    : Simulator(network, std::move(orders), even_placement(network, taxis_per_zone), start_day,
                reward_scale) {}

Simulator::Simulator(const ZoneNetwork& network, std::vector<Order> orders,
                     const std::vector<ZoneId>& driver_zones, Weekday start_day,
                     double reward_scale)
    : network_(&network),
      orders_(std::move(orders)),
      start_day_(start_day),
      reward_scale_(reward_scale) {
  const int zones = network.zone_count();
  for (const Order& o : orders_) {
    if (o.source < 0 || o.source >= zones || o.destination < 0 ||
        o.destination >= zones) {
      throw SimulationError("order " + std::to_string(o.id) + " references unknown zone");
    }
    if (o.request_time < 0 || o.patience < 0 || o.trip_duration < 1) {
      throw SimulationError("order " + std::to_string(o.id) + " has invalid timing");
    }
  }
  std::stable_sort(orders_.begin(), orders_.end(), arrives_before);
  status_.assign(orders_.size(), OrderStatus::pending);
  waiting_.resize(static_cast<std::size_t>(zones));

  for (ZoneId z : driver_zones) {
    if (z < 0 || z >= zones) throw SimulationError("driver placed in unknown zone");
    Driver d;
    d.id = static_cast<DriverId>(drivers_.size());
    d.zone = z;
    drivers_.push_back(d);
  }
}

std::vector<DriverId> Simulator::vacant_drivers() const {
  std::vector<DriverId> out;
  for (const Driver& d : drivers_) {
    if (!d.busy) out.push_back(d.id);
  }
  return out;
}

MdpState Simulator::state_at(Minute at, ZoneId zone) const {
  MdpState s;
  s.minute = static_cast<int>(at % kMinutesPerDay);
  s.day = static_cast<int>((static_cast<Minute>(start_day_) + at / kMinutesPerDay) %
                           kDaysPerWeek);
  s.zone = zone;
  return s;
}

MdpState Simulator::observe_state(DriverId d) const {
  if (d < 0 || d >= static_cast<DriverId>(drivers_.size())) {
    throw SimulationError("unknown driver " + std::to_string(d));
  }
  const Driver& driver = drivers_[static_cast<std::size_t>(d)];
  if (driver.busy) {
    throw SimulationError("driver " + std::to_string(d) + " is busy and has no decision");
  }
  return state_at(clock_, driver.zone);
}

DemandSnapshot Simulator::snapshot() const {
  DemandSnapshot snap;
  snap.waiting.resize(waiting_.size());
  snap.vacant.assign(waiting_.size(), 0);
  for (std::size_t z = 0; z < waiting_.size(); ++z) {
    snap.waiting[z] = static_cast<int>(waiting_[z].size());
  }
  for (const Driver& d : drivers_) {
    if (!d.busy) ++snap.vacant[static_cast<std::size_t>(d.zone)];
  }
  return snap;
}

void Simulator::inject_arrivals() {
  while (next_arrival_ < orders_.size() &&
         orders_[next_arrival_].request_time <= clock_) {
    const Order& o = orders_[next_arrival_];
    // Orders whose request time already passed (not possible when stepping
    // from minute 0) are never injected.
    if (o.request_time == clock_) {
      waiting_[static_cast<std::size_t>(o.source)].push_back(next_arrival_);
      status_[next_arrival_] = OrderStatus::waiting;
      ++metrics_.waiting;
      ++metrics_.injected;
    }
    ++next_arrival_;
  }
}

StepOutcome Simulator::step(const ActionMap& actions) {
  StepOutcome outcome;
  outcome.cycle = clock_;

  for (auto [id, action] : actions) {
    if (id < 0 || id >= static_cast<DriverId>(drivers_.size())) {
      throw SimulationError("action for unknown driver " + std::to_string(id));
    }
    const Driver& d = drivers_[static_cast<std::size_t>(id)];
    if (d.busy) {
      throw SimulationError("action given for busy driver " + std::to_string(id));
    }
    if (!network_->action_mask(d.zone).passes(action)) {
      throw SimulationError("driver " + std::to_string(id) + " chose masked action " +
                            std::to_string(action));
    }
  }
  for (const Driver& d : drivers_) {
    if (!d.busy && !actions.contains(d.id)) {
      throw SimulationError("no action for vacant driver " + std::to_string(d.id));
    }
  }

  inject_arrivals();

  // Move.
  outcome.decisions.reserve(actions.size());
  for (auto [id, action] : actions) {
    Driver& d = drivers_[static_cast<std::size_t>(id)];
    Decision dec;
    dec.driver = id;
    dec.state = state_at(clock_, d.zone);
    dec.action = action;
    d.zone = network_->resolve_action(d.zone, action);
    dec.moved_to = d.zone;
    dec.next_state = {static_cast<int>((clock_ + 1) % kMinutesPerDay), dec.state.day,
                      d.zone};
    outcome.decisions.push_back(dec);
  }

  // Match, zone by zone. Drivers queue by idle_since then ID; decisions are
  // already in ID order.
  std::vector<std::vector<std::size_t>> by_zone(waiting_.size());
  for (std::size_t i = 0; i < outcome.decisions.size(); ++i) {
    by_zone[static_cast<std::size_t>(outcome.decisions[i].moved_to)].push_back(i);
  }
  for (std::size_t z = 0; z < waiting_.size(); ++z) {
    auto& queue = waiting_[z];
    auto& candidates = by_zone[z];
    if (queue.empty() || candidates.empty()) continue;
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      return drivers_[static_cast<std::size_t>(outcome.decisions[a].driver)].idle_since <
             drivers_[static_cast<std::size_t>(outcome.decisions[b].driver)].idle_since;
    });
    for (std::size_t i : candidates) {
      if (queue.empty()) break;
      const std::size_t oi = queue.front();
      queue.pop_front();
      const Order& o = orders_[oi];
      Decision& dec = outcome.decisions[i];
      Driver& d = drivers_[static_cast<std::size_t>(dec.driver)];

      dec.reward = compute_reward(o, clock_, reward_scale_);
      dec.order = o.id;
      dec.elapsed = o.trip_duration;
      dec.next_state = {static_cast<int>((clock_ + o.trip_duration) % kMinutesPerDay),
                        dec.state.day, o.destination};

      status_[oi] = OrderStatus::served;
      --metrics_.waiting;
      ++metrics_.served;
      metrics_.total_wait += clock_ - o.request_time;
      metrics_.total_idle += clock_ - d.idle_since;
      ++metrics_.idle_intervals;

      d.busy = true;
      d.busy_until = clock_ + o.trip_duration;
      d.pending_dropoff = o.destination;
    }
  }

  // Expire orders whose patience runs out this cycle.
  for (auto& queue : waiting_) {
    std::erase_if(queue, [&](std::size_t oi) {
      const Order& o = orders_[oi];
      if (clock_ < o.request_time + o.patience) return false;
      status_[oi] = OrderStatus::failed;
      outcome.expired.push_back(o.id);
      --metrics_.waiting;
      ++metrics_.failed;
      return true;
    });
  }

  // Complete trips ending at the start of the next cycle.
  for (Driver& d : drivers_) {
    if (d.busy && d.busy_until == clock_ + 1) {
      d.busy = false;
      d.zone = d.pending_dropoff;
      d.idle_since = d.busy_until;
    }
  }

  ++clock_;
  return outcome;
}

void write_event_log(std::ostream& out, const StepOutcome& outcome) {
  for (const Decision& d : outcome.decisions) {
    out << "{\"cycle\":" << outcome.cycle << ",\"driver\":" << d.driver
        << ",\"zone\":" << d.state.zone << ",\"action\":" << d.action
        << ",\"to\":" << d.moved_to << ",\"reward\":" << d.reward << ",\"order\":";
    if (d.order) {
      out << *d.order;
    } else {
      out << "null";
    }
    out << "}\n";
  }
}

}  // namespace taxirl
