#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "taxirl/zone_graph.hpp"

namespace taxirl {

/// Simulation time in one-minute cycles from the start of the episode.
using Minute = std::int64_t;
using OrderId = std::int64_t;

class DemandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Order {
  OrderId id = 0;
  Minute request_time = 0;
  ZoneId source = 0;
  ZoneId destination = 0;
  Minute patience = 0;
  Minute trip_duration = 1;

  bool operator==(const Order&) const = default;
};

/// Orders are ordered by request time, then by ID.
bool arrives_before(const Order& a, const Order& b);

// ---------------------------------------------------------------------------
// Trip-record ingestion

struct TripColumns {
  std::string start_timestamp = "Trip Start Timestamp";
  std::string pickup_area = "Pickup Community Area";
  std::string dropoff_area = "Dropoff Community Area";
  std::string trip_seconds = "Trip Seconds";
};

struct TripParseOptions {
  TripColumns columns;
  /// Minute zero of the episode. Defaults to midnight of the earliest record.
  std::optional<std::chrono::sys_seconds> episode_start;
  /// Records at or beyond this many minutes after the start are dropped.
  std::optional<Minute> horizon;
  Minute patience = 0;
};

struct TripParseResult {
  std::vector<Order> orders;
  std::chrono::sys_seconds episode_start{};
  std::size_t missing_area = 0;
  std::size_t unknown_zone = 0;
  std::size_t unparseable = 0;
  std::size_t out_of_window = 0;
};

/// Accepts `MM/DD/YYYY hh:mm:ss AM|PM` and `YYYY-MM-DDTHH:MM:SS[.fff]`.
std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view text);

/// Splits one CSV record, honoring double-quoted fields.
std::vector<std::string> split_csv_line(std::string_view line);

/// Reads comma-separated trip records with a header row. Zones are matched by
/// external ID against `network`. Order IDs are assigned after sorting.
TripParseResult parse_trip_records(std::istream& in, const ZoneNetwork& network,
                                   const TripParseOptions& options = {});

// ---------------------------------------------------------------------------
// Synthetic demand

struct DemandConfig {
  Minute horizon = 0;
  /// Poisson arrival rate per dense zone, orders per minute.
  std::vector<double> rates;
  /// destinations[source][dest], each row summing to one.
  std::vector<std::vector<double>> destinations;
  Minute trip_min = 1;
  Minute trip_max = 1;
  Minute patience = 0;

  /// Uniform destinations over all zones, zero rates.
  static DemandConfig uniform(const ZoneNetwork& network, Minute horizon);

  /// Throws DemandError naming the first violated constraint.
  void validate() const;
};

/// Per zone and minute, draws a Poisson count of orders with the configured
/// rate, then a destination and a uniform trip duration for each. Same seed
/// gives the same list.
std::vector<Order> synth_orders(const DemandConfig& cfg, std::uint64_t seed);

/// Single-consumer cursor over a time-sorted order list.
class ArrivalCursor {
 public:
  explicit ArrivalCursor(std::span<const Order> orders);

  /// Orders with request_time == t. Throws if t is below a previous call.
  std::span<const Order> arriving(Minute t);

 private:
  std::span<const Order> orders_;
  std::size_t next_ = 0;
  std::size_t last_begin_ = 0;
  std::optional<Minute> last_t_;
};

}  // namespace taxirl
