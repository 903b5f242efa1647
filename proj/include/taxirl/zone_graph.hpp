#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace taxirl {

/// Dense zone index in [0, zone_count). External IDs (e.g. community area
/// numbers) are kept on the network for reporting.
using ZoneId = int;
using ExternalZoneId = std::int64_t;

/// Index into a zone's action space: 0 is "stay", k >= 1 moves to the k-th
/// smallest neighbor.
using ActionIndex = int;

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MaskEntry : std::uint8_t { pass, block };

/// Fixed-width action filter for one zone. The first deg(z)+1 entries pass,
/// the remaining Δ(G)-deg(z) entries block.
class ActionMask {
 public:
  ActionMask(ZoneId zone, int degree, int max_degree);

  ZoneId zone() const { return zone_; }
  std::size_t size() const { return entries_.size(); }
  int pass_count() const { return pass_count_; }
  bool passes(ActionIndex a) const {
    return a >= 0 && a < static_cast<int>(entries_.size()) &&
           entries_[static_cast<std::size_t>(a)] == MaskEntry::pass;
  }
  std::span<const MaskEntry> entries() const { return entries_; }

 private:
  ZoneId zone_;
  int pass_count_;
  std::vector<MaskEntry> entries_;
};

/// Undirected zone adjacency graph. Immutable once built.
class ZoneNetwork {
 public:
  /// Builds from external-ID pairs. `extra_zones` declares zones that may have
  /// no edges. External IDs are sorted and remapped to dense indices, so the
  /// dense order matches the external order.
  static ZoneNetwork from_edges(
      std::span<const std::pair<ExternalZoneId, ExternalZoneId>> edges,
      std::span<const ExternalZoneId> extra_zones = {});

  /// Parses an edge list: one `a,b` pair per line, `#` starts a comment.
  /// A line holding a single ID declares an isolated zone.
  static ZoneNetwork parse(std::istream& in);
  static ZoneNetwork load(const std::filesystem::path& path);

  int zone_count() const { return static_cast<int>(adjacency_.size()); }
  std::size_t edge_count() const { return edge_count_; }

  int degree(ZoneId z) const;
  std::span<const ZoneId> neighbors(ZoneId z) const;
  bool adjacent(ZoneId a, ZoneId b) const;

  /// Δ(G). Throws on an empty network.
  int max_degree() const;
  /// Width of the Q-network output head, Δ(G)+1.
  int head_width() const { return max_degree() + 1; }

  /// Destination zones in canonical action order: stay first, then neighbors
  /// ascending.
  std::vector<ZoneId> action_space(ZoneId z) const;
  const ActionMask& action_mask(ZoneId z) const;
  /// Throws NetworkError for an index the zone's mask blocks.
  ZoneId resolve_action(ZoneId z, ActionIndex a) const;

  ExternalZoneId external_id(ZoneId z) const;
  std::optional<ZoneId> find(ExternalZoneId external) const;
  ZoneId dense_id(ExternalZoneId external) const;

 private:
  ZoneNetwork() = default;
  void check_zone(ZoneId z) const;

  std::vector<ExternalZoneId> external_ids_;
  std::vector<std::vector<ZoneId>> adjacency_;
  std::vector<ActionMask> masks_;
  std::size_t edge_count_ = 0;
  int max_degree_ = 0;
};

}  // namespace taxirl
