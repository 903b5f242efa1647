#include "taxirl/baselines.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace taxirl {

namespace {

void check_snapshot(const ZoneNetwork& net, const DemandSnapshot& snap) {
  const auto n = static_cast<std::size_t>(net.zone_count());
  if (snap.waiting.size() != n || snap.vacant.size() != n) {
    throw std::invalid_argument("demand snapshot does not cover every zone");
  }
}

}  // namespace

ActionIndex random_policy(ZoneId z, const ZoneNetwork& net, Rng& rng) {
  std::uniform_int_distribution<ActionIndex> pick(0, net.degree(z));
  return pick(rng);
}

ActionIndex greedy_policy(ZoneId z, const ZoneNetwork& net, const DemandSnapshot& snap) {
  check_snapshot(net, snap);
  const auto demand = [&](ZoneId w) { return snap.waiting[static_cast<std::size_t>(w)]; };
  ActionIndex best = 0;
  int best_demand = demand(z);
  const auto adj = net.neighbors(z);
  for (std::size_t k = 0; k < adj.size(); ++k) {
    if (demand(adj[k]) > best_demand) {
      best = static_cast<ActionIndex>(k + 1);
      best_demand = demand(adj[k]);
    }
  }
  return best;
}

std::vector<double> demand_based_probabilities(ZoneId z, const ZoneNetwork& net,
                                               const DemandSnapshot& snap) {
  check_snapshot(net, snap);
  const auto zones = net.action_space(z);
  std::vector<double> p(zones.size());
  double total = 0;
  for (std::size_t k = 0; k < zones.size(); ++k) {
    const auto w = static_cast<std::size_t>(zones[k]);
    p[k] = std::max(0, snap.waiting[w] - snap.vacant[w]);
    total += p[k];
  }
  if (total == 0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(p.size()));
  } else {
    for (double& v : p) v /= total;
  }
  return p;
}

ActionIndex demand_based_policy(ZoneId z, const ZoneNetwork& net, const DemandSnapshot& snap,
                                Rng& rng) {
  const auto p = demand_based_probabilities(z, net, snap);
  std::discrete_distribution<ActionIndex> pick(p.begin(), p.end());
  return pick(rng);
}

std::vector<double>& QTable::mutable_row(const MdpState& s) {
  auto it = rows_.find(s);
  if (it == rows_.end()) {
    it = rows_.emplace(s, std::vector<double>(
                              static_cast<std::size_t>(network_->degree(s.zone) + 1), 0.0))
             .first;
  }
  return it->second;
}

const std::vector<double>& QTable::row(const MdpState& s) { return mutable_row(s); }

std::vector<double> QTable::values(const MdpState& s) const {
  if (auto it = rows_.find(s); it != rows_.end()) return it->second;
  return std::vector<double>(static_cast<std::size_t>(network_->degree(s.zone) + 1), 0.0);
}

void qlearning_update(QTable& table, const Transition& tr, double alpha_q, double gamma) {
  const std::vector<double> next = table.values(tr.next);
  std::vector<double>& row = table.mutable_row(tr.state);
  if (tr.action < 0 || tr.action >= static_cast<ActionIndex>(row.size())) {
    throw std::out_of_range("action " + std::to_string(tr.action) +
                            " outside the zone's action space");
  }
  const double best_next = *std::max_element(next.begin(), next.end());
  double& q = row[static_cast<std::size_t>(tr.action)];
  q += alpha_q * (tr.reward + gamma * best_next - q);
}

ActionIndex qlearning_policy(const QTable& table, const MdpState& s, double epsilon,
                             Rng& rng) {
  const std::vector<double> row = table.values(s);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  if (coin(rng) < epsilon) {
    std::uniform_int_distribution<ActionIndex> pick(0, static_cast<ActionIndex>(row.size()) - 1);
    return pick(rng);
  }
  return static_cast<ActionIndex>(std::max_element(row.begin(), row.end()) - row.begin());
}

namespace {

bool all_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0; });
}

bool covered_by(const std::map<MdpState, std::vector<double>>& a,
                const std::map<MdpState, std::vector<double>>& b) {
  for (const auto& [s, values] : a) {
    if (all_zero(values)) continue;
    auto it = b.find(s);
    if (it == b.end() || it->second != values) return false;
  }
  return true;
}

}  // namespace

bool QTable::operator==(const QTable& other) const {
  return covered_by(rows_, other.rows_) && covered_by(other.rows_, rows_);
}

void QTable::save(std::ostream& out) const {
  out << "taxirl-qtable 1\n";
  char buf[32];
  for (const auto& [s, values] : rows_) {
    if (all_zero(values)) continue;
    out << s.minute << ' ' << s.day << ' ' << s.zone;
    for (double v : values) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
      out.put(' ');
      out.write(buf, end - buf);
    }
    out.put('\n');
  }
  if (!out) throw std::runtime_error("q-table write failed");
}

QTable QTable::load(std::istream& in, const ZoneNetwork& net) {
  std::string line;
  if (!std::getline(in, line) || line != "taxirl-qtable 1") {
    throw std::runtime_error("not a q-table checkpoint");
  }
  QTable table(net);
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    MdpState s;
    if (!(fields >> s.minute >> s.day >> s.zone) || s.zone < 0 ||
        s.zone >= net.zone_count()) {
      throw std::runtime_error("q-table line " + std::to_string(line_no) + ": bad state");
    }
    std::vector<double>& row = table.mutable_row(s);
    std::string token;
    std::size_t k = 0;
    while (fields >> token) {
      if (k >= row.size()) {
        throw std::runtime_error("q-table line " + std::to_string(line_no) + ": too many values");
      }
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), row[k]);
      if (ec != std::errc{} || ptr != token.data() + token.size()) {
        throw std::runtime_error("q-table line " + std::to_string(line_no) + ": bad value");
      }
      ++k;
    }
    if (k != row.size()) {
      throw std::runtime_error("q-table line " + std::to_string(line_no) + ": too few values");
    }
  }
  return table;
}

}  // namespace taxirl
