#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "taxirl/demand_stream.hpp"

using namespace taxirl;

namespace {

const char* kHeader =
    "Trip ID,Trip Start Timestamp,Trip Seconds,Pickup Community Area,Dropoff Community Area\n";

}  // namespace

TEST_CASE("timestamps in portal and ISO formats") {
  using namespace std::chrono;
  const auto midnight = sys_days{year{2019} / August / 1};
  CHECK(parse_timestamp("08/01/2019 12:00:00 AM") == midnight);
  CHECK(parse_timestamp("08/01/2019 12:15:00 PM") == midnight + hours{12} + minutes{15});
  CHECK(parse_timestamp("08/01/2019 01:45:30 PM") ==
        midnight + hours{13} + minutes{45} + seconds{30});
  CHECK(parse_timestamp("2019-08-01T13:45:00.000") == midnight + hours{13} + minutes{45});
  CHECK_FALSE(parse_timestamp("08/01/2019 13:00:00 PM"));
  CHECK_FALSE(parse_timestamp("2019-02-30T00:00:00"));
  CHECK_FALSE(parse_timestamp("yesterday"));
}

TEST_CASE("csv splitting honors quotes") {
  CHECK(split_csv_line("a,\"b,c\",d") == std::vector<std::string>{"a", "b,c", "d"});
  CHECK(split_csv_line("\"say \"\"hi\"\"\",,x\r") ==
        std::vector<std::string>{"say \"hi\"", "", "x"});
}

TEST_CASE("trip records become minute-quantized orders") {
  const auto net = testing::seven_zone_network();
  std::istringstream in(std::string(kHeader) +
                        "a,08/01/2019 12:30:00 AM,300,1,3\n"
                        "b,08/01/2019 12:00:00 AM,30,2,2\n"
                        "c,08/01/2019 12:15:00 AM,\"1,020\",7,5\n"
                        "d,08/01/2019 12:15:00 AM,400,,5\n"
                        "e,garbage,400,1,5\n"
                        "f,08/01/2019 12:15:00 AM,400,1,42\n");
  TripParseOptions opts;
  opts.patience = 5;
  const auto r = parse_trip_records(in, net, opts);
  REQUIRE(r.orders.size() == 3);
  CHECK(r.missing_area == 1);
  CHECK(r.unparseable == 1);
  CHECK(r.unknown_zone == 1);

  CHECK(r.orders[0].request_time == 0);
  CHECK(r.orders[0].trip_duration == 1);  // 30 s rounds up to one minute
  CHECK(r.orders[0].source == net.dense_id(2));
  CHECK(r.orders[1].request_time == 15);
  CHECK(r.orders[1].trip_duration == 17);  // 1020 s
  CHECK(r.orders[2].request_time == 30);
  CHECK(r.orders[2].trip_duration == 5);  // 300 s
  CHECK(r.orders[2].destination == net.dense_id(3));
  for (std::size_t i = 0; i < r.orders.size(); ++i) {
    CHECK(r.orders[i].id == static_cast<OrderId>(i));
    CHECK(r.orders[i].patience == 5);
  }
}

TEST_CASE("a month of records spans minutes [0, 44640)") {
  const auto net = testing::seven_zone_network();
  std::istringstream in(std::string(kHeader) +
                        "a,08/31/2019 11:59:00 PM,60,1,2\n"
                        "b,08/01/2019 12:00:00 AM,60,1,2\n"
                        "c,09/01/2019 12:00:00 AM,60,1,2\n");
  TripParseOptions opts;
  opts.horizon = 44640;
  const auto r = parse_trip_records(in, net, opts);
  REQUIRE(r.orders.size() == 2);
  CHECK(r.orders.front().request_time == 0);
  CHECK(r.orders.back().request_time == 44639);
  CHECK(r.out_of_window == 1);
}

TEST_CASE("custom column names and missing columns") {
  const auto net = testing::seven_zone_network();
  SUBCASE("renamed columns") {
    std::istringstream in("start,secs,from,to\n2019-08-01T00:05:00,120,4,6\n");
    TripParseOptions opts;
    opts.columns = {"start", "from", "to", "secs"};
    const auto r = parse_trip_records(in, net, opts);
    REQUIRE(r.orders.size() == 1);
    CHECK(r.orders[0].request_time == 5);
    CHECK(r.orders[0].trip_duration == 2);
  }
  SUBCASE("missing column is rejected") {
    std::istringstream in("Trip Start Timestamp,Trip Seconds,Pickup Community Area\n");
    CHECK_THROWS_AS(parse_trip_records(in, net), DemandError);
  }
  SUBCASE("empty file is rejected") {
    std::istringstream in("");
    CHECK_THROWS_AS(parse_trip_records(in, net), DemandError);
  }
}

TEST_CASE("synthetic demand") {
  const auto net = testing::seven_zone_network();

  SUBCASE("zero rates give no orders") {
    auto cfg = DemandConfig::uniform(net, 500);
    cfg.trip_min = 1;
    cfg.trip_max = 4;
    CHECK(synth_orders(cfg, 1).empty());
  }

  auto cfg = DemandConfig::uniform(net, 300);
  std::fill(cfg.rates.begin(), cfg.rates.end(), 0.3);
  cfg.trip_min = 2;
  cfg.trip_max = 9;
  cfg.patience = 4;

  SUBCASE("deterministic per seed") {
    CHECK(synth_orders(cfg, 11) == synth_orders(cfg, 11));
    CHECK(synth_orders(cfg, 11) != synth_orders(cfg, 12));
  }

  SUBCASE("orders are valid and time-ordered") {
    const auto orders = synth_orders(cfg, 3);
    REQUIRE_FALSE(orders.empty());
    for (std::size_t i = 0; i < orders.size(); ++i) {
      const Order& o = orders[i];
      CHECK(o.source >= 0);
      CHECK(o.source < net.zone_count());
      CHECK(o.destination >= 0);
      CHECK(o.destination < net.zone_count());
      CHECK(o.trip_duration >= 2);
      CHECK(o.trip_duration <= 9);
      CHECK(o.patience == 4);
      CHECK(o.request_time < 300);
      if (i > 0) CHECK(arrives_before(orders[i - 1], o));
    }
  }

  SUBCASE("arrival count matches the Poisson mean") {
    // One active zone at 0.5/min for 1000 minutes: mean 500, sd sqrt(500).
    auto one = DemandConfig::uniform(net, 1000);
    one.rates[0] = 0.5;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
      const auto n = static_cast<double>(synth_orders(one, seed).size());
      CHECK(std::abs(n - 500.0) <= 3.0 * std::sqrt(500.0));
    }
  }

  SUBCASE("invalid parameters are rejected") {
    auto bad = cfg;
    bad.rates[2] = -1;
    CHECK_THROWS_AS(synth_orders(bad, 1), DemandError);
    bad = cfg;
    bad.destinations[1][0] += 0.1;
    CHECK_THROWS_AS(synth_orders(bad, 1), DemandError);
    bad = cfg;
    bad.trip_min = 0;
    CHECK_THROWS_AS(synth_orders(bad, 1), DemandError);
    bad = cfg;
    bad.trip_max = 1;
    CHECK_THROWS_AS(synth_orders(bad, 1), DemandError);
  }
}

TEST_CASE("arrival cursor") {
  std::vector<Order> orders{{0, 3, 0, 0, 1, 1}, {1, 7, 0, 0, 1, 1}, {2, 7, 1, 0, 1, 1},
                            {3, 9, 0, 1, 1, 1}};
  ArrivalCursor cursor(orders);
  CHECK(cursor.arriving(0).empty());
  CHECK(cursor.arriving(3).size() == 1);
  const auto at7 = cursor.arriving(7);
  REQUIRE(at7.size() == 2);
  CHECK(at7[0].id == 1);
  CHECK(at7[1].id == 2);
  CHECK(cursor.arriving(7).size() == 2);
  CHECK_THROWS_AS(cursor.arriving(6), DemandError);
}

TEST_CASE("property: concatenated arrivals reproduce the order list") {
  const auto net = testing::seven_zone_network();
  auto cfg = DemandConfig::uniform(net, 200);
  std::fill(cfg.rates.begin(), cfg.rates.end(), 0.4);
  cfg.trip_max = 5;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto orders = synth_orders(cfg, seed);
    ArrivalCursor cursor(orders);
    std::vector<Order> replay;
    for (Minute t = 0; t < cfg.horizon; ++t) {
      const auto batch = cursor.arriving(t);
      replay.insert(replay.end(), batch.begin(), batch.end());
    }
    CHECK(replay == orders);
  }
}
