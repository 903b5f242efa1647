#include "taxirl/demand_stream.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <random>

namespace taxirl {

bool arrives_before(const Order& a, const Order& b) {
  if (a.request_time != b.request_time) return a.request_time < b.request_time;
  return a.id < b.id;
}

namespace {

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  if (s.empty()) return std::nullopt;
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<int> fixed_digits(std::string_view s, std::size_t pos, std::size_t n) {
  if (pos + n > s.size()) return std::nullopt;
  int v = 0;
  for (std::size_t i = pos; i < pos + n; ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    v = v * 10 + (s[i] - '0');
  }
  return v;
}

std::optional<std::chrono::sys_seconds> make_time(int y, int mo, int d, int h, int mi,
                                                  int sec) {
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                     day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h < 0 || h > 23 || mi < 0 || mi > 59 || sec < 0 || sec > 60) {
    return std::nullopt;
  }
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{sec};
}

}  // namespace

std::optional<std::chrono::sys_seconds> parse_timestamp(std::string_view t) {
  while (!t.empty() && (t.back() == ' ' || t.back() == '\r')) t.remove_suffix(1);
  while (!t.empty() && t.front() == ' ') t.remove_prefix(1);

  // 2019-08-01T13:45:00[.000]
  if (t.size() >= 19 && t[4] == '-' && t[7] == '-' && (t[10] == 'T' || t[10] == ' ') &&
      t[13] == ':' && t[16] == ':') {
    auto y = fixed_digits(t, 0, 4), mo = fixed_digits(t, 5, 2), d = fixed_digits(t, 8, 2);
    auto h = fixed_digits(t, 11, 2), mi = fixed_digits(t, 14, 2), s = fixed_digits(t, 17, 2);
    if (!y || !mo || !d || !h || !mi || !s) return std::nullopt;
    return make_time(*y, *mo, *d, *h, *mi, *s);
  }

  // 08/01/2019 01:45:00 PM
  if (t.size() == 22 && t[2] == '/' && t[5] == '/' && t[10] == ' ' && t[13] == ':' &&
      t[16] == ':' && t[19] == ' ') {
    auto mo = fixed_digits(t, 0, 2), d = fixed_digits(t, 3, 2), y = fixed_digits(t, 6, 4);
    auto h = fixed_digits(t, 11, 2), mi = fixed_digits(t, 14, 2), s = fixed_digits(t, 17, 2);
    if (!y || !mo || !d || !h || !mi || !s || *h < 1 || *h > 12) return std::nullopt;
    auto suffix = t.substr(20);
    int hour = *h % 12;
    if (suffix == "PM") {
      hour += 12;
    } else if (suffix != "AM") {
      return std::nullopt;
    }
    return make_time(*y, *mo, *d, hour, *mi, *s);
  }
  return std::nullopt;
}

std::vector<std::string> split_csv_line(std::string_view line) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

TripParseResult parse_trip_records(std::istream& in, const ZoneNetwork& network,
                                   const TripParseOptions& options) {
  std::string line;
  if (!std::getline(in, line)) throw DemandError("trip file: missing header row");
  auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DemandError("trip file: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t c_time = column(options.columns.start_timestamp);
  const std::size_t c_pick = column(options.columns.pickup_area);
  const std::size_t c_drop = column(options.columns.dropoff_area);
  const std::size_t c_secs = column(options.columns.trip_seconds);
  const std::size_t needed = std::max({c_time, c_pick, c_drop, c_secs}) + 1;

  struct Raw {
    std::chrono::sys_seconds start;
    ZoneId source;
    ZoneId destination;
    Minute duration;
  };
  std::vector<Raw> raws;
  TripParseResult result;

  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto f = split_csv_line(line);
    if (f.size() < needed) {
      ++result.unparseable;
      continue;
    }
    if (f[c_pick].empty() || f[c_drop].empty()) {
      ++result.missing_area;
      continue;
    }
    auto start = parse_timestamp(f[c_time]);
    auto pick = parse_number<ExternalZoneId>(f[c_pick]);
    auto drop = parse_number<ExternalZoneId>(f[c_drop]);
    std::string secs_text = f[c_secs];
    std::erase(secs_text, ',');
    auto secs = parse_number<double>(secs_text);
    if (!start || !pick || !drop || !secs || !std::isfinite(*secs) || *secs < 0) {
      ++result.unparseable;
      continue;
    }
    auto src = network.find(*pick);
    auto dst = network.find(*drop);
    if (!src || !dst) {
      ++result.unknown_zone;
      continue;
    }
    auto minutes = static_cast<Minute>(std::ceil(*secs / 60.0));
    raws.push_back({*start, *src, *dst, std::max<Minute>(1, minutes)});
  }

  if (options.episode_start) {
    result.episode_start = *options.episode_start;
  } else if (!raws.empty()) {
    auto earliest = std::min_element(raws.begin(), raws.end(), [](auto& a, auto& b) {
                      return a.start < b.start;
                    })->start;
    result.episode_start = std::chrono::floor<std::chrono::days>(earliest);
  }

  for (const Raw& r : raws) {
    auto offset =
        std::chrono::floor<std::chrono::minutes>(r.start - result.episode_start).count();
    if (offset < 0 || (options.horizon && offset >= *options.horizon)) {
      ++result.out_of_window;
      continue;
    }
    result.orders.push_back(
        {0, static_cast<Minute>(offset), r.source, r.destination, options.patience,
         r.duration});
  }
  std::stable_sort(result.orders.begin(), result.orders.end(),
                   [](const Order& a, const Order& b) {
                     return a.request_time < b.request_time;
                   });
  for (std::size_t i = 0; i < result.orders.size(); ++i) {
    result.orders[i].id = static_cast<OrderId>(i);
  }
  return result;
}

DemandConfig DemandConfig::uniform(const ZoneNetwork& network, Minute horizon) {
  const auto n = static_cast<std::size_t>(network.zone_count());
  DemandConfig cfg;
  cfg.horizon = horizon;
  cfg.rates.assign(n, 0.0);
  cfg.destinations.assign(n, std::vector<double>(n, 1.0 / static_cast<double>(n)));
  return cfg;
}

void DemandConfig::validate() const {
  if (horizon < 0) throw DemandError("demand: horizon must be >= 0");
  if (patience < 0) throw DemandError("demand: patience must be >= 0");
  if (trip_min < 1 || trip_max < trip_min) {
    throw DemandError("demand: trip duration range must satisfy 1 <= min <= max");
  }
  if (destinations.size() != rates.size()) {
    throw DemandError("demand: destination table must have one row per zone");
  }
  for (std::size_t z = 0; z < rates.size(); ++z) {
    if (!std::isfinite(rates[z]) || rates[z] < 0) {
      throw DemandError("demand: rate of zone " + std::to_string(z) + " must be >= 0");
    }
    const auto& row = destinations[z];
    if (row.size() != rates.size()) {
      throw DemandError("demand: destination row " + std::to_string(z) +
                        " has wrong length");
    }
    double sum = 0;
    for (double p : row) {
      if (!std::isfinite(p) || p < 0) {
        throw DemandError("demand: negative destination weight in row " +
                          std::to_string(z));
      }
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw DemandError("demand: destination row " + std::to_string(z) +
                        " does not sum to 1");
    }
  }
}

std::vector<Order> synth_orders(const DemandConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  std::vector<std::discrete_distribution<int>> dest;
  std::vector<std::poisson_distribution<int>> counts;
  for (std::size_t z = 0; z < cfg.rates.size(); ++z) {
    dest.emplace_back(cfg.destinations[z].begin(), cfg.destinations[z].end());
    counts.emplace_back(cfg.rates[z] > 0 ? cfg.rates[z] : 1.0);
  }
  std::uniform_int_distribution<Minute> duration(cfg.trip_min, cfg.trip_max);

  std::vector<Order> orders;
  OrderId next_id = 0;
  for (Minute t = 0; t < cfg.horizon; ++t) {
    for (std::size_t z = 0; z < cfg.rates.size(); ++z) {
      if (cfg.rates[z] <= 0) continue;
      const int n = counts[z](rng);
      for (int i = 0; i < n; ++i) {
        Order o;
        o.id = next_id++;
        o.request_time = t;
        o.source = static_cast<ZoneId>(z);
        o.destination = dest[z](rng);
        o.patience = cfg.patience;
        o.trip_duration = duration(rng);
        orders.push_back(o);
      }
    }
  }
  return orders;
}

ArrivalCursor::ArrivalCursor(std::span<const Order> orders) : orders_(orders) {}

std::span<const Order> ArrivalCursor::arriving(Minute t) {
  if (last_t_) {
    if (t < *last_t_) {
      throw DemandError("arrival cursor moved backwards from " + std::to_string(*last_t_) +
                        " to " + std::to_string(t));
    }
    if (t == *last_t_) return orders_.subspan(last_begin_, next_ - last_begin_);
  }
  while (next_ < orders_.size() && orders_[next_].request_time < t) ++next_;
  const std::size_t begin = next_;
  while (next_ < orders_.size() && orders_[next_].request_time == t) ++next_;
  last_t_ = t;
  last_begin_ = begin;
  return orders_.subspan(begin, next_ - begin);
}

}  // namespace taxirl
