#include <cmath>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "taxirl/baselines.hpp"

using namespace taxirl;

namespace {

DemandSnapshot snap(std::vector<int> waiting, std::vector<int> vacant = {}) {
  if (vacant.empty()) vacant.assign(waiting.size(), 0);
  return {std::move(waiting), std::move(vacant)};
}

}  // namespace

TEST_CASE("random policy") {
  const auto net = testing::seven_zone_network();
  const ZoneId z1 = net.dense_id(1);  // degree 2
  Rng rng(8);
  std::vector<int> counts(3, 0);
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(random_policy(z1, net, rng))];
  const double sd = std::sqrt(draws * (1.0 / 3) * (2.0 / 3));
  for (int c : counts) CHECK(std::abs(c - draws / 3.0) < 3 * sd);

  const std::vector<ExternalZoneId> lone{9};
  const std::vector<std::pair<ExternalZoneId, ExternalZoneId>> edge{{1, 2}};
  const auto iso = ZoneNetwork::from_edges(edge, lone);
  for (int i = 0; i < 100; ++i) CHECK(random_policy(iso.dense_id(9), iso, rng) == 0);

  Rng a(3), b(3);
  for (int i = 0; i < 100; ++i) CHECK(random_policy(2, net, a) == random_policy(2, net, b));
}

TEST_CASE("greedy policy") {
  const auto net = testing::seven_zone_network();
  const ZoneId z1 = net.dense_id(1);  // neighbors 2, 3
  CHECK(greedy_policy(z1, net, snap({2, 5, 0, 0, 0, 0, 0})) == 1);
  CHECK(greedy_policy(z1, net, snap({0, 0, 0, 0, 0, 0, 0})) == 0);
  CHECK(greedy_policy(z1, net, snap({4, 3, 3, 0, 0, 0, 0})) == 0);
  CHECK(greedy_policy(z1, net, snap({4, 4, 9, 0, 0, 0, 0})) == 2);
  CHECK(greedy_policy(z1, net, snap({1, 6, 6, 0, 0, 0, 0})) == 1);  // lowest zone ID wins
  CHECK(greedy_policy(z1, net, snap({6, 6, 6, 0, 0, 0, 0})) == 0);  // stay when tied
  CHECK(greedy_policy(z1, net, snap({0, 0, 0, 0, 0, 0, 50})) == 0);  // zone 7 is not adjacent
  CHECK_THROWS(greedy_policy(z1, net, snap({1, 2})));
}

TEST_CASE("demand-based policy") {
  const auto net = testing::seven_zone_network();
  const ZoneId z1 = net.dense_id(1);
  auto p = demand_based_probabilities(z1, net, snap({3, 1, 0, 0, 0, 0, 0}));
  CHECK(p == std::vector<double>{0.75, 0.25, 0.0});

  p = demand_based_probabilities(z1, net, snap({1, 2, 0, 9, 9, 9, 9}, {4, 2, 1, 0, 0, 0, 0}));
  for (double v : p) CHECK(v == doctest::Approx(1.0 / 3));

  p = demand_based_probabilities(z1, net, snap({1, 0, 5, 0, 0, 0, 0}, {3, 0, 1, 0, 0, 0, 0}));
  CHECK(p == std::vector<double>{0.0, 0.0, 1.0});

  Rng rng(4);
  const auto s = snap({3, 1, 0, 0, 0, 0, 0});
  std::vector<int> counts(3, 0);
  for (int i = 0; i < 40000; ++i) {
    ++counts[static_cast<std::size_t>(demand_based_policy(z1, net, s, rng))];
  }
  CHECK(counts[2] == 0);
  CHECK(std::abs(counts[0] - 30000) < 3 * std::sqrt(40000 * 0.75 * 0.25));
}

TEST_CASE("q-learning update examples") {
  const auto net = testing::seven_zone_network();
  QTable table(net);
  const MdpState s{10, 1, 0}, next{11, 1, 1};
  qlearning_update(table, {s, 1, 1.0, next, 1}, 0.5, 0.9);
  CHECK(table.values(s) == std::vector<double>{0.0, 0.5, 0.0});
  CHECK(table.values(next) == std::vector<double>{0.0, 0.0, 0.0});
  CHECK(table.row(next).size() == 3);

  // Fixed point: Q(s,a) = r + γ·max Q(s',·) does not move.
  QTable fixed(net);
  qlearning_update(fixed, {next, 0, 2.0, next, 1}, 1.0, 0.0);  // Q(next,0) = 2
  const MdpState t{5, 0, 2};
  qlearning_update(fixed, {t, 3, 1.0, next, 1}, 1.0, 0.5);  // 1 + 0.5·2
  const auto before = fixed.values(t);
  CHECK(before[3] == 2.0);
  qlearning_update(fixed, {t, 3, 2.0, next, 1}, 0.3, 0.0);
  CHECK(fixed.values(t) == before);

  CHECK_THROWS_AS(qlearning_update(table, {s, 3, 1.0, next, 1}, 0.5, 0.9), std::out_of_range);
  CHECK_THROWS_AS(qlearning_update(table, {s, -1, 1.0, next, 1}, 0.5, 0.9), std::out_of_range);
}

TEST_CASE("q-learning converges to value iteration on a two-state chain") {
  // Zones A and B joined by one edge. Action 0 stays, action 1 crosses.
  const std::vector<std::pair<ExternalZoneId, ExternalZoneId>> edge{{1, 2}};
  const auto net = ZoneNetwork::from_edges(edge);
  const double gamma = 0.9;
  const double reward[2][2] = {{0.0, 1.0}, {2.0, 0.0}};
  const auto next_zone = [](int z, int a) { return a == 0 ? z : 1 - z; };

  double q[2][2] = {};
  for (int iter = 0; iter < 100000; ++iter) {
    double next[2][2];
    double delta = 0;
    for (int z = 0; z < 2; ++z) {
      for (int a = 0; a < 2; ++a) {
        const int w = next_zone(z, a);
        next[z][a] = reward[z][a] + gamma * std::max(q[w][0], q[w][1]);
        delta = std::max(delta, std::abs(next[z][a] - q[z][a]));
      }
    }
    std::copy(&next[0][0], &next[0][0] + 4, &q[0][0]);
    if (delta == 0) break;
  }
  CHECK(q[1][0] == doctest::Approx(20.0));
  CHECK(q[0][1] == doctest::Approx(19.0));

  QTable table(net);
  int updates = 0;
  while (updates < 10000) {
    for (int z = 0; z < 2; ++z) {
      for (int a = 0; a < 2; ++a) {
        qlearning_update(table,
                         {{0, 0, z}, a, reward[z][a], {0, 0, next_zone(z, a)}, 1}, 0.5, gamma);
        ++updates;
      }
    }
  }
  CHECK(updates <= 10000);
  for (int z = 0; z < 2; ++z) {
    const auto row = table.values({0, 0, z});
    for (int a = 0; a < 2; ++a) CHECK(std::abs(row[static_cast<std::size_t>(a)] - q[z][a]) < 1e-6);
  }
}

TEST_CASE("q-learning policy") {
  const auto net = testing::seven_zone_network();
  QTable table(net);
  const MdpState s{0, 0, net.dense_id(3)};  // five actions
  qlearning_update(table, {s, 2, 4.0, s, 1}, 1.0, 0.0);
  qlearning_update(table, {s, 3, 4.0, s, 1}, 1.0, 0.0);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) CHECK(qlearning_policy(table, s, 0.0, rng) == 2);
  CHECK(qlearning_policy(table, {0, 0, 0}, 0.0, rng) == 0);

  std::vector<int> counts(5, 0);
  for (int i = 0; i < 50000; ++i) ++counts[static_cast<std::size_t>(qlearning_policy(table, s, 1.0, rng))];
  for (int c : counts) CHECK(std::abs(c - 10000) < 3 * std::sqrt(50000 * 0.2 * 0.8));

  // With ε = 0.1, a non-greedy index appears with probability 0.1·4/5.
  const int draws = 100000;
  int off = 0;
  for (int i = 0; i < draws; ++i) off += qlearning_policy(table, s, 0.1, rng) != 2;
  const double p = 0.08;
  CHECK(std::abs(off - draws * p) < 3 * std::sqrt(draws * p * (1 - p)));
}

TEST_CASE("property: baselines pick PASS actions only") {
  const auto net = testing::seventy_seven_zone_network();
  Rng rng(10);
  std::uniform_int_distribution<int> count(0, 4);
  QTable table(net);
  for (int trial = 0; trial < 3000; ++trial) {
    DemandSnapshot s;
    for (int z = 0; z < net.zone_count(); ++z) {
      s.waiting.push_back(count(rng));
      s.vacant.push_back(count(rng));
    }
    const ZoneId z = trial % net.zone_count();
    const auto& mask = net.action_mask(z);
    CHECK(mask.passes(random_policy(z, net, rng)));
    CHECK(mask.passes(greedy_policy(z, net, s)));
    CHECK(mask.passes(demand_based_policy(z, net, s, rng)));
    CHECK(mask.passes(qlearning_policy(table, {trial % 1440, 0, z}, 0.5, rng)));
  }
}

TEST_CASE("q-table checkpoint round-trip") {
  const auto net = testing::seven_zone_network();
  QTable table(net);
  qlearning_update(table, {{1, 2, 3}, 1, 1.0 / 3.0, {2, 2, 4}, 1}, 0.7, 0.9);
  qlearning_update(table, {{2, 2, 4}, 0, -1e-310, {3, 2, 4}, 1}, 1.0, 0.9);
  table.row({9, 9 % 7, 5});  // zero row, dropped on save
  std::stringstream buf;
  table.save(buf);
  const auto loaded = QTable::load(buf, net);
  CHECK(loaded == table);
  CHECK(loaded.values({1, 2, 3}) == table.values({1, 2, 3}));
  CHECK(loaded.values({2, 2, 4}) == table.values({2, 2, 4}));

  std::istringstream bad("taxirl-qtable 1\n0 0 0 1 2 3 4 5 6\n");
  CHECK_THROWS(QTable::load(bad, net));
  std::istringstream header("nope\n");
  CHECK_THROWS(QTable::load(header, net));
}
