#pragma once

#include <iosfwd>
#include <map>
#include <vector>

#include "taxirl/amdqn_agent.hpp"
#include "taxirl/simulator.hpp"
#include "taxirl/zone_graph.hpp"

namespace taxirl {

/// Uniform over the zone's actions.
ActionIndex random_policy(ZoneId z, const ZoneNetwork& net, Rng& rng);

/// Moves toward the candidate zone with the most waiting orders. Stays when
/// the current zone ties for the maximum, otherwise the lowest zone ID wins.
ActionIndex greedy_policy(ZoneId z, const ZoneNetwork& net, const DemandSnapshot& snap);

/// Selection probabilities over the zone's actions: max(0, waiting - vacant)
/// normalized, or uniform when every deficit is zero.
std::vector<double> demand_based_probabilities(ZoneId z, const ZoneNetwork& net,
                                               const DemandSnapshot& snap);
ActionIndex demand_based_policy(ZoneId z, const ZoneNetwork& net, const DemandSnapshot& snap,
                                Rng& rng);

/// Tabular action values keyed by decision state. Rows are created on first
/// touch with one zero per action of the state's zone.
class QTable {
 public:
  explicit QTable(const ZoneNetwork& net) : network_(&net) {}

  const std::vector<double>& row(const MdpState& s);
  /// Zeros for states never touched.
  std::vector<double> values(const MdpState& s) const;
  std::size_t size() const { return rows_.size(); }

  /// Equal when every state maps to the same values; untouched and all-zero
  /// rows are interchangeable.
  bool operator==(const QTable& other) const;

  /// Text dump of the rows holding a nonzero value.
  void save(std::ostream& out) const;
  static QTable load(std::istream& in, const ZoneNetwork& net);

 private:
  friend void qlearning_update(QTable&, const Transition&, double, double);

  std::vector<double>& mutable_row(const MdpState& s);

  const ZoneNetwork* network_;
  std::map<MdpState, std::vector<double>> rows_;
};

/// Q(s,a) += alpha_q·(r + γ·max Q(s',·) - Q(s,a)).
void qlearning_update(QTable& table, const Transition& tr, double alpha_q, double gamma);

/// ε-greedy over the table row; ties go to the lowest index.
ActionIndex qlearning_policy(const QTable& table, const MdpState& s, double epsilon,
                             Rng& rng);

}  // namespace taxirl
