#pragma once

#include <cstdlib>
#include <filesystem>
#include <utility>
#include <vector>

#include "taxirl/zone_graph.hpp"

namespace taxirl::testing {

inline std::filesystem::path source_dir() {
  if (const char* dir = std::getenv("TAXIRL_SOURCE_DIR")) return dir;
  return std::filesystem::path(__FILE__).parent_path().parent_path().parent_path();
}

inline std::filesystem::path config_path(const char* name) {
  return source_dir() / "configs" / name;
}

/// The shipped seven-zone network (external IDs 1..7, dense 0..6).
inline ZoneNetwork seven_zone_network() {
  const std::vector<std::pair<ExternalZoneId, ExternalZoneId>> edges{
      {1, 2}, {1, 3}, {2, 3}, {3, 4}, {3, 5}, {4, 6}, {5, 6}, {5, 7}};
  return ZoneNetwork::from_edges(edges);
}

/// 77 zones on a ring with chords, plus one hub of degree 9: Δ = 9.
inline ZoneNetwork seventy_seven_zone_network() {
  std::vector<std::pair<ExternalZoneId, ExternalZoneId>> edges;
  for (ExternalZoneId z = 1; z <= 77; ++z) edges.emplace_back(z, z % 77 + 1);
  for (ExternalZoneId z = 1; z <= 70; z += 3) edges.emplace_back(z, z + 5);
  for (ExternalZoneId k = 0; k < 6; ++k) edges.emplace_back(40, 50 + 3 * k);
  return ZoneNetwork::from_edges(edges);
}

}  // namespace taxirl::testing
